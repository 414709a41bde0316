#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "aggfolio/data.hpp"
#include "aggfolio/month.hpp"

namespace aggfolio {

/// Linear model trained on the Huber loss plus an L1 penalty by full-batch
/// gradient descent. `subsample_fraction < 1` fits on a uniform subsample of
/// the rows drawn without replacement from `seed`.
struct LinearHuberSpec {
  double xi = 0.999;
  double learning_rate = 0.1;
  int epochs = 500;
  double l1_penalty = 0.0;
  double subsample_fraction = 1.0;
  std::uint64_t seed = 0;
};

/// Piecewise-constant noise level: `initial` until the first change point.
struct NoiseSchedule {
  double initial = 0.0;
  std::vector<std::pair<Month, double>> changes;

  double at(Month month) const;
};

struct NoisyOracleSpec {
  NoiseSchedule noise;
  std::uint64_t seed = 0;
};

struct ConstantSpec {
  double value = 0.0;
};

struct ExternalSpec {
  std::filesystem::path path;
};

struct ExpertSpec {
  std::string name;
  std::variant<ExternalSpec, LinearHuberSpec, NoisyOracleSpec, ConstantSpec> kind;

  bool trainable() const { return std::holds_alternative<LinearHuberSpec>(kind); }
};

/// (expert, asset, month) -> forecast.
class ForecastPanel {
 public:
  using AssetMap = std::map<AssetId, double>;
  using MonthMap = std::map<Month, AssetMap>;

  /// Throws Error(Data) naming the key when it is already present.
  void insert(const std::string& expert, AssetId asset, Month month, double forecast);

  std::optional<double> find(const std::string& expert, AssetId asset, Month month) const;
  const AssetMap* month_of(const std::string& expert, Month month) const;

  std::size_t size() const { return size_; }
  bool contains_expert(const std::string& expert) const { return entries_.contains(expert); }
  std::vector<std::string> experts() const;
  const std::map<std::string, MonthMap>& entries() const { return entries_; }

  /// Adds every entry of `other`; duplicates are rejected.
  void merge(const ForecastPanel& other);

  bool operator==(const ForecastPanel& other) const;

 private:
  std::map<std::string, MonthMap> entries_;
  std::size_t size_ = 0;
};

/// Reads `expert,asset_id,date,forecast`.
ForecastPanel ingest_forecasts(const std::filesystem::path& path);
void export_forecasts(const ForecastPanel& panel, const std::filesystem::path& path);
void write_forecasts(const ForecastPanel& panel, std::ostream& out);

struct FittedLinear {
  Eigen::VectorXd coefficients;
  double intercept = 0.0;
};

/// mean_i H(y_i - x_i' beta - b; xi) + l1 * |beta|_1
double linear_huber_objective(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets,
                              const FittedLinear& point, double xi, double l1_penalty);

/// Gradient of linear_huber_objective; the L1 term contributes l1 * sign(beta).
FittedLinear linear_huber_gradient(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets,
                                   const FittedLinear& point, double xi, double l1_penalty);

/// Sorted indices of round(fraction * n) rows drawn without replacement.
std::vector<Eigen::Index> subsample_rows(Eigen::Index n, double fraction, std::uint64_t seed);

FittedLinear train_linear_huber(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets,
                                const LinearHuberSpec& spec);

double predict(const FittedLinear& model, const Eigen::Ref<const Eigen::VectorXd>& features);
Eigen::VectorXd predict_rows(const FittedLinear& model, const Eigen::MatrixXd& features);

/// K' replicas of a trainable expert named `<base>_0 .. <base>_{K'-1}`, each
/// with its own seed split from `master_seed` and the given subsample fraction.
std::vector<ExpertSpec> bag_experts(const ExpertSpec& base, int count, double fraction, std::uint64_t master_seed);

/// forecast = realized + sigma(month) * N(0, 1), drawn in (month, asset) order.
ForecastPanel synth_noisy_oracle(const RawPanel& panel, const std::string& name, const NoisyOracleSpec& spec);

ForecastPanel synth_constant(const RawPanel& panel, const std::string& name, const ConstantSpec& spec);

/// Rows `expert,feature,coefficient`; the intercept appears as feature `intercept`.
void export_coefficients(const std::vector<std::pair<std::string, FittedLinear>>& models,
                         const std::vector<std::string>& feature_names, const std::filesystem::path& path);
void write_coefficients(const std::vector<std::pair<std::string, FittedLinear>>& models,
                        const std::vector<std::string>& feature_names, std::ostream& out);

}  // namespace aggfolio
