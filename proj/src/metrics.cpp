#include "aggfolio/metrics.hpp"

#include <numeric>

namespace aggfolio {

Eigen::MatrixXi rank_distribution(const Eigen::MatrixXd& values, const std::vector<std::string>& names) {
  const Eigen::Index strategies = values.rows();
  require(static_cast<Eigen::Index>(names.size()) == strategies, ErrorKind::Shape,
          "rank_distribution: one name per strategy row required");
  require(values.allFinite(), ErrorKind::Data, "rank_distribution: missing yearly values");
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(strategies, strategies);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(strategies));
  for (Eigen::Index year = 0; year < values.cols(); ++year) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
      if (values(a, year) != values(b, year)) return values(a, year) > values(b, year);
      return names[static_cast<std::size_t>(a)] < names[static_cast<std::size_t>(b)];
    });
    for (Eigen::Index rank = 0; rank < strategies; ++rank) ++counts(order[static_cast<std::size_t>(rank)], rank);
  }
  return counts;
}

const char* to_string(Indicator indicator) {
  switch (indicator) {
    case Indicator::AnnualizedReturn: return "ann_ret";
    case Indicator::AnnualizedVolatility: return "ann_vol";
    case Indicator::Sharpe: return "sharpe";
    case Indicator::CumulativeLogReturn: return "cum_log_ret";
  }
  return "?";
}

double indicator_value(const Eigen::VectorXd& returns, Indicator indicator, int periods_per_year) {
  require(returns.size() >= 2, ErrorKind::Parameter, "indicator needs at least two observations");
  switch (indicator) {
    case Indicator::AnnualizedReturn: return periods_per_year * returns.mean();
    case Indicator::AnnualizedVolatility: {
      const double var = (returns.array() - returns.mean()).square().sum() / static_cast<double>(returns.size() - 1);
      return std::sqrt(periods_per_year * var);
    }
    case Indicator::Sharpe: return annual_sharpe(returns, periods_per_year);
    case Indicator::CumulativeLogReturn: return returns.sum();
  }
  fail(ErrorKind::Parameter, "unknown indicator");
}

Eigen::VectorXd expert_importance(double full_mixture, const Eigen::VectorXd& leave_one_out) {
  require(leave_one_out.size() > 0, ErrorKind::Parameter, "expert_importance: no leave-one-out runs");
  const Eigen::VectorXd raw = (full_mixture - leave_one_out.array()).matrix();
  require(raw.allFinite(), ErrorKind::Domain, "expert_importance: non-finite indicator");
  const double scale = raw.cwiseAbs().sum();
  require(scale > 0.0, ErrorKind::Numerical, "expert_importance: all importance deltas are zero");
  return raw / scale;
}

}  // namespace aggfolio
