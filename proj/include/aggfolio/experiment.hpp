#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "aggfolio/aggregation.hpp"
#include "aggfolio/data.hpp"
#include "aggfolio/experts.hpp"
#include "aggfolio/loss.hpp"
#include "aggfolio/metrics.hpp"
#include "aggfolio/portfolio.hpp"
#include "aggfolio/synthetic.hpp"

namespace aggfolio {

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr const char* kOutputDirEnv = "AGGFOLIO_OUTPUT_DIR";

struct DataSource {
  // Exactly one of the two is set.
  std::optional<std::pair<std::filesystem::path, std::filesystem::path>> files;  // panel, schema
  std::optional<SyntheticPanelSpec> synthetic;
};

struct BaggingConfig {
  std::vector<std::string> base;
  int count = 10;
  double fraction = 0.8;
  std::uint64_t seed = 0;
};

struct ScheduleConfig {
  int start_year = 0;
  int train_years = 0;
  int validation_years = 0;
  int final_test_year = 0;
};

struct VerifyConfig {
  enum class Scenario { ConstantExperts, RegimeSwitch, IdenticalExperts, IidLosses };
  Scenario scenario = Scenario::ConstantExperts;
  Eigen::Index steps = 2000;
  Eigen::Index experts = 2;
  std::optional<double> grid_step;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::optional<DataSource> data;
  std::vector<ExpertSpec> experts;
  std::optional<BaggingConfig> bagging;
  std::optional<ScheduleConfig> schedule;
  Weighting weighting = Weighting::Equal;
  UniverseSelector universe;
  Rule rule = Rule::boa_adaptive();
  LossKind loss = LossKind::squared();
  int pretrain_months = 0;
  std::filesystem::path output_dir;
  unsigned threads = 0;
  VerifyConfig verify;
  // Key-sorted compact dump of the source document; hashed into manifests.
  std::string canonical_json;
};

/// Parses and validates a configuration document. Relative paths resolve
/// against `base_dir`; without `output_dir` the AGGFOLIO_OUTPUT_DIR variable,
/// then `aggfolio-out` under the working directory, is used. Unknown keys,
/// type mismatches, and inconsistent references throw Error(Config).
ExperimentConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Expert list after bagging expansion: configured experts in order, each
/// bagged base followed by its replicas.
std::vector<ExpertSpec> expand_experts(const ExperimentConfig& config);

RawPanel load_data(const ExperimentConfig& config);

/// Everything the aggregation consumes, aligned on the months
/// [first test month - pretrain, last test month].
struct PreparedBacktest {
  std::vector<std::string> expert_names;
  std::vector<std::string> feature_names;
  std::vector<Month> months;
  Eigen::Index pretrain = 0;
  Eigen::MatrixXd long_returns;   // months x experts
  Eigen::MatrixXd short_returns;
  Eigen::VectorXd long_target;
  Eigen::VectorXd short_target;
  std::vector<std::vector<LegHoldings>> long_legs;  // [month][expert]
  std::vector<std::vector<LegHoldings>> short_legs;
  std::vector<std::map<AssetId, double>> realized;  // per month, assets in the universe
  std::vector<std::pair<std::string, FittedLinear>> final_models;
  std::vector<std::pair<std::string, std::uint64_t>> seeds;

  Eigen::Index months_total() const { return static_cast<Eigen::Index>(months.size()); }
  Eigen::Index test_months() const { return months_total() - pretrain; }
};

PreparedBacktest prepare_backtest(const ExperimentConfig& config, const RawPanel& raw);

/// A strategy restricted to the test months.
struct StrategyResult {
  StrategySeries series;
  std::vector<double> turnover;  // monthly, between consecutive books
  PortfolioStats stats;
};

struct AggregatedBook {
  std::string label;
  LongShortAggregation aggregation;  // test months only
  StrategyResult result;
  std::vector<SignedBook> long_books;
  std::vector<SignedBook> short_books;
};

/// Runs the rule on a subset of experts (columns of the prepared matrices),
/// warm-starting over the pre-training months.
AggregatedBook aggregate_books(const PreparedBacktest& prepared, const std::vector<Eigen::Index>& experts,
                               const Rule& rule, const LossKind& loss);

struct Backtest {
  PreparedBacktest prepared;
  std::vector<StrategyResult> experts;  // H-L per expert
  StrategyResult target;
  AggregatedBook uniform;
  std::optional<AggregatedBook> configured;  // absent when the rule is UNI
};

Backtest run_backtest(const ExperimentConfig& config);

struct OutputFile {
  std::string name;
  std::string contents;
};

struct Report {
  std::string command;
  std::vector<OutputFile> files;
  std::string summary;
  // Set when a checked invariant failed (exit status 3).
  bool violation = false;

  const OutputFile* find(std::string_view name) const;
};

Report backtest_report(const ExperimentConfig& config, const Backtest& backtest);

struct ImportanceRow {
  Indicator indicator;
  std::string expert;
  double delta = 0;
  std::optional<double> importance;  // empty when every delta vanishes
};

struct ImportanceTable {
  std::vector<ImportanceRow> rows;
  std::vector<Indicator> degenerate;
};

ImportanceTable run_importance(const ExperimentConfig& config);
Report importance_report(const ExperimentConfig& config, const ImportanceTable& table);

struct VerifyOutcome {
  std::string scenario;
  std::string rule;
  Eigen::Index steps = 0;
  double half_regret = 0;
  double full_regret = 0;
  double mixture_loss = 0;
  double uniform_loss = 0;
  double oracle_loss = 0;
  Eigen::VectorXd oracle_weights;
  bool below_oracle = false;
  std::vector<std::string> violations;
};

VerifyOutcome run_verify(const ExperimentConfig& config);
Report verify_report(const ExperimentConfig& config, const VerifyOutcome& outcome);

Report synth_report(const ExperimentConfig& config);

/// Writes every file of the report into `dir` through temporary names and
/// renames them in place; on failure nothing from this run is left behind.
void write_report(const Report& report, const std::filesystem::path& dir);

}  // namespace aggfolio
