#include "aggfolio/experts.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>

#include "aggfolio/csv.hpp"
#include "aggfolio/error.hpp"
#include "aggfolio/loss.hpp"
#include "aggfolio/random.hpp"

namespace aggfolio {

double NoiseSchedule::at(Month month) const {
  double sigma = initial;
  for (const auto& [from, value] : changes)
    if (month >= from) sigma = value;
  return sigma;
}

void ForecastPanel::insert(const std::string& expert, AssetId asset, Month month, double forecast) {
  auto& slot = entries_[expert][month];
  const auto [it, inserted] = slot.emplace(asset, forecast);
  require(inserted, ErrorKind::Data,
          "duplicate forecast for (" + expert + ", " + std::to_string(asset) + ", " + month.to_string() + ")");
  ++size_;
}

std::optional<double> ForecastPanel::find(const std::string& expert, AssetId asset, Month month) const {
  const AssetMap* m = month_of(expert, month);
  if (m == nullptr) return std::nullopt;
  const auto it = m->find(asset);
  if (it == m->end()) return std::nullopt;
  return it->second;
}

const ForecastPanel::AssetMap* ForecastPanel::month_of(const std::string& expert, Month month) const {
  const auto e = entries_.find(expert);
  if (e == entries_.end()) return nullptr;
  const auto m = e->second.find(month);
  return m == e->second.end() ? nullptr : &m->second;
}

std::vector<std::string> ForecastPanel::experts() const {
  std::vector<std::string> names;
  for (const auto& [name, months] : entries_) names.push_back(name);
  return names;
}

void ForecastPanel::merge(const ForecastPanel& other) {
  for (const auto& [expert, months] : other.entries_)
    for (const auto& [month, assets] : months)
      for (const auto& [asset, value] : assets) insert(expert, asset, month, value);
}

bool ForecastPanel::operator==(const ForecastPanel& other) const {
  if (size_ != other.size_ || entries_.size() != other.entries_.size()) return false;
  auto a = entries_.begin();
  auto b = other.entries_.begin();
  for (; a != entries_.end(); ++a, ++b) {
    if (a->first != b->first || a->second.size() != b->second.size()) return false;
    auto ma = a->second.begin();
    auto mb = b->second.begin();
    for (; ma != a->second.end(); ++ma, ++mb) {
      if (ma->first != mb->first || ma->second.size() != mb->second.size()) return false;
      auto xa = ma->second.begin();
      auto xb = mb->second.begin();
      for (; xa != ma->second.end(); ++xa, ++xb)
        if (xa->first != xb->first ||
            std::bit_cast<std::uint64_t>(xa->second) != std::bit_cast<std::uint64_t>(xb->second))
          return false;
    }
  }
  return true;
}

ForecastPanel ingest_forecasts(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  const std::string file = path.string();
  const std::size_t c_expert = csv::column(table, "expert", file);
  const std::size_t c_asset = csv::column(table, "asset_id", file);
  const std::size_t c_date = csv::column(table, "date", file);
  const std::size_t c_value = csv::column(table, "forecast", file);
  ForecastPanel panel;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string where = file + ":" + std::to_string(table.line_numbers[r]);
    try {
      const double value = csv::parse_double(row[c_value], where);
      require(std::isfinite(value), ErrorKind::Data, "non-finite forecast");
      panel.insert(row[c_expert], csv::parse_int(row[c_asset], where), Month::parse(row[c_date]), value);
    } catch (const Error& e) {
      const std::string message = e.what();
      fail(ErrorKind::Data, message.starts_with(where) ? message : where + ": " + message);
    }
  }
  return panel;
}

void export_forecasts(const ForecastPanel& panel, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::Data, "cannot write " + path.string());
  write_forecasts(panel, out);
}

void write_forecasts(const ForecastPanel& panel, std::ostream& out) {
  out << "expert,asset_id,date,forecast\n";
  for (const auto& [expert, months] : panel.entries())
    for (const auto& [month, assets] : months)
      for (const auto& [asset, value] : assets)
        out << expert << ',' << asset << ',' << month.to_string() << ',' << csv::format(value) << '\n';
}

namespace {

Eigen::VectorXd residuals(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const FittedLinear& p) {
  return (y - x * p.coefficients).array() - p.intercept;
}

void check_design(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  require(x.rows() > 0, ErrorKind::Data, "linear Huber expert: no training rows");
  require(x.rows() == y.size(), ErrorKind::Shape, "linear Huber expert: feature and target rows differ");
  require(x.allFinite() && y.allFinite(), ErrorKind::Data, "linear Huber expert: non-finite training data");
}

}  // namespace

double linear_huber_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const FittedLinear& p, double xi,
                              double l1) {
  const Eigen::VectorXd res = residuals(x, y, p);
  double total = 0;
  for (Eigen::Index i = 0; i < res.size(); ++i) total += huber(res(i), xi);
  return total / static_cast<double>(res.size()) + l1 * p.coefficients.lpNorm<1>();
}

FittedLinear linear_huber_gradient(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const FittedLinear& p,
                                   double xi, double l1) {
  const Eigen::VectorXd res = residuals(x, y, p);
  require(res.allFinite(), ErrorKind::Numerical, "linear Huber expert: non-finite residual, the fit diverged");
  Eigen::VectorXd dres(res.size());
  for (Eigen::Index i = 0; i < res.size(); ++i) dres(i) = huber_gradient(res(i), xi);
  const double n = static_cast<double>(res.size());
  FittedLinear g;
  // d residual / d beta = -x, d residual / d intercept = -1
  g.coefficients = -(x.transpose() * dres) / n + l1 * p.coefficients.array().sign().matrix();
  g.intercept = -dres.sum() / n;
  return g;
}

std::vector<Eigen::Index> subsample_rows(Eigen::Index n, double fraction, std::uint64_t seed) {
  require(fraction > 0.0 && fraction <= 1.0, ErrorKind::Parameter,
          "subsample fraction must lie in (0, 1], got " + std::to_string(fraction));
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  if (fraction == 1.0) return rows;
  const auto keep = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::llround(fraction * static_cast<double>(n))));
  Engine engine(seed);
  // partial Fisher-Yates
  for (Eigen::Index i = 0; i < keep; ++i) {
    std::uniform_int_distribution<Eigen::Index> pick(i, n - 1);
    std::swap(rows[static_cast<std::size_t>(i)], rows[static_cast<std::size_t>(pick(engine))]);
  }
  rows.resize(static_cast<std::size_t>(keep));
  std::sort(rows.begin(), rows.end());
  return rows;
}

FittedLinear train_linear_huber(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets,
                                const LinearHuberSpec& spec) {
  check_design(features, targets);
  require(spec.xi > 0.0, ErrorKind::Parameter, "huber threshold must be positive");
  require(spec.learning_rate > 0.0 && spec.epochs >= 0 && spec.l1_penalty >= 0.0, ErrorKind::Parameter,
          "linear Huber expert: learning rate must be positive, epochs and L1 penalty nonnegative");

  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  if (spec.subsample_fraction < 1.0) {
    const auto rows = subsample_rows(features.rows(), spec.subsample_fraction, spec.seed);
    x.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
    y.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      x.row(static_cast<Eigen::Index>(r)) = features.row(rows[r]);
      y(static_cast<Eigen::Index>(r)) = targets(rows[r]);
    }
  } else {
    require(spec.subsample_fraction == 1.0, ErrorKind::Parameter, "subsample fraction must lie in (0, 1]");
    x = features;
    y = targets;
  }

  FittedLinear model{Eigen::VectorXd::Zero(features.cols()), 0.0};
  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    const FittedLinear g = linear_huber_gradient(x, y, model, spec.xi, spec.l1_penalty);
    model.coefficients -= spec.learning_rate * g.coefficients;
    model.intercept -= spec.learning_rate * g.intercept;
    require(model.coefficients.allFinite() && std::isfinite(model.intercept), ErrorKind::Numerical,
            "linear Huber expert diverged; lower the learning rate");
  }
  return model;
}

double predict(const FittedLinear& model, const Eigen::Ref<const Eigen::VectorXd>& features) {
  require(features.size() == model.coefficients.size(), ErrorKind::Shape,
          "predict: model has " + std::to_string(model.coefficients.size()) + " coefficients, input has " +
              std::to_string(features.size()) + " features");
  return model.coefficients.dot(features) + model.intercept;
}

Eigen::VectorXd predict_rows(const FittedLinear& model, const Eigen::MatrixXd& features) {
  require(features.cols() == model.coefficients.size(), ErrorKind::Shape,
          "predict: feature dimension does not match the model");
  return (features * model.coefficients).array() + model.intercept;
}

std::vector<ExpertSpec> bag_experts(const ExpertSpec& base, int count, double fraction, std::uint64_t master_seed) {
  require(base.trainable(), ErrorKind::Parameter, "bagging needs a trainable expert, '" + base.name + "' is not");
  require(count >= 1, ErrorKind::Parameter, "bagging count must be at least 1");
  require(fraction > 0.0 && fraction <= 1.0, ErrorKind::Parameter,
          "subsample fraction must lie in (0, 1], got " + std::to_string(fraction));
  std::vector<ExpertSpec> replicas;
  for (int k = 0; k < count; ++k) {
    ExpertSpec replica = base;
    replica.name = base.name + "_" + std::to_string(k);
    auto& fit = std::get<LinearHuberSpec>(replica.kind);
    fit.subsample_fraction = fraction;
    fit.seed = derive_seed(master_seed, static_cast<std::uint64_t>(k));
    replicas.push_back(std::move(replica));
  }
  return replicas;
}

ForecastPanel synth_noisy_oracle(const RawPanel& panel, const std::string& name, const NoisyOracleSpec& spec) {
  require(spec.noise.initial >= 0.0, ErrorKind::Parameter, "noise level must be nonnegative");
  for (const auto& change : spec.noise.changes)
    require(change.second >= 0.0, ErrorKind::Parameter, "noise level must be nonnegative");
  Engine engine(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ForecastPanel out;
  for (const auto& [month, rows] : panel.rows_by_month()) {
    const double sigma = spec.noise.at(month);
    for (Eigen::Index row : rows) {
      const double eps = normal(engine);
      out.insert(name, panel.assets[row], month, panel.returns(row) + sigma * eps);
    }
  }
  return out;
}

ForecastPanel synth_constant(const RawPanel& panel, const std::string& name, const ConstantSpec& spec) {
  ForecastPanel out;
  for (Eigen::Index i = 0; i < panel.rows(); ++i) out.insert(name, panel.assets[i], panel.months[i], spec.value);
  return out;
}

void export_coefficients(const std::vector<std::pair<std::string, FittedLinear>>& models,
                         const std::vector<std::string>& feature_names, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::Data, "cannot write " + path.string());
  write_coefficients(models, feature_names, out);
}

void write_coefficients(const std::vector<std::pair<std::string, FittedLinear>>& models,
                        const std::vector<std::string>& feature_names, std::ostream& out) {
  out << "expert,feature,coefficient\n";
  for (const auto& [name, model] : models) {
    require(static_cast<std::size_t>(model.coefficients.size()) == feature_names.size(), ErrorKind::Shape,
            "export_coefficients: feature names do not match model '" + name + "'");
    for (std::size_t j = 0; j < feature_names.size(); ++j)
      out << name << ',' << feature_names[j] << ',' << csv::format(model.coefficients(static_cast<Eigen::Index>(j)))
          << '\n';
    out << name << ",intercept," << csv::format(model.intercept) << '\n';
  }
}

}  // namespace aggfolio
