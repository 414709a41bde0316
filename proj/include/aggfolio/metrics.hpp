#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "aggfolio/error.hpp"

namespace aggfolio {

/// Path on which drawdowns are measured: running sum of monthly returns
/// (log-return convention) or compounded wealth.
enum class DrawdownPath { LogCumulative, Compounded };

/// max over t1 <= t2 of P(t1) - P(t2) on the cumulative-sum path, or the
/// largest relative decline from a running peak on the compounded path.
/// Only observed points enter; a single observation gives 0.
template <typename Derived>
typename Derived::Scalar max_drawdown(const Eigen::MatrixBase<Derived>& returns,
                                      DrawdownPath path = DrawdownPath::LogCumulative) {
  using Scalar = typename Derived::Scalar;
  require(returns.size() >= 1, ErrorKind::Parameter, "max_drawdown needs at least one observation");
  Scalar worst = 0;
  if (path == DrawdownPath::LogCumulative) {
    Scalar level = 0;
    Scalar peak = -std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index t = 0; t < returns.size(); ++t) {
      level += returns(t);
      peak = std::max(peak, level);
      worst = std::max(worst, peak - level);
    }
    return worst;
  }
  Scalar wealth = 1;
  Scalar peak = 0;
  for (Eigen::Index t = 0; t < returns.size(); ++t) {
    wealth *= Scalar(1) + returns(t);
    peak = std::max(peak, wealth);
    if (peak > Scalar(0)) worst = std::max(worst, (peak - wealth) / peak);
  }
  return worst;
}

/// Annualized mean over annualized sample volatility. Throws Domain on a
/// constant series.
template <typename Derived>
typename Derived::Scalar annual_sharpe(const Eigen::MatrixBase<Derived>& returns, int periods_per_year = 12) {
  using Scalar = typename Derived::Scalar;
  require(returns.size() >= 2, ErrorKind::Parameter, "Sharpe ratio needs at least two observations");
  require(returns.maxCoeff() != returns.minCoeff(), ErrorKind::Domain,
          "Sharpe ratio undefined: zero volatility");
  const Scalar n = static_cast<Scalar>(returns.size());
  const Scalar mean = returns.mean();
  const Scalar var = (returns.array() - mean).square().sum() / (n - 1);
  const Scalar p = static_cast<Scalar>(periods_per_year);
  return (p * mean) / (std::sqrt(p) * std::sqrt(var));
}

struct PortfolioStats {
  double annualized_return = 0;
  double annualized_volatility = 0;
  // Standardized central moments; empty for a constant series.
  std::optional<double> skewness;
  std::optional<double> kurtosis;
  bool kurtosis_is_excess = false;
  std::optional<double> sharpe;
  double max_drawdown = 0;
  double max_one_month_loss = 0;
  std::optional<double> average_annual_turnover;
};

struct SummaryOptions {
  int periods_per_year = 12;
  DrawdownPath drawdown_path = DrawdownPath::LogCumulative;
};

/// Annualized average of monthly book turnover: periods * mean / 2, the
/// factor 1/2 expressing turnover relative to the gross long plus short book.
inline double annualized_turnover(const std::vector<double>& monthly_turnover, int periods_per_year = 12) {
  require(!monthly_turnover.empty(), ErrorKind::Parameter, "no turnover observations");
  double total = 0;
  for (double v : monthly_turnover) total += v;
  return periods_per_year * (total / static_cast<double>(monthly_turnover.size())) / 2.0;
}

/// Table-style statistics of a monthly excess-return series. Subtract any
/// risk-free series before calling.
template <typename Derived>
PortfolioStats summarize(const Eigen::MatrixBase<Derived>& returns, const SummaryOptions& options = {}) {
  require(returns.size() >= 2, ErrorKind::Parameter, "summarize needs at least two observations");
  require(returns.allFinite(), ErrorKind::Domain, "summarize: non-finite return");
  const Eigen::VectorXd r = returns.template cast<double>();
  const double n = static_cast<double>(r.size());
  const double p = options.periods_per_year;
  const double mean = r.mean();
  const Eigen::ArrayXd centered = r.array() - mean;
  const double sample_var = centered.square().sum() / (n - 1);

  PortfolioStats s;
  s.annualized_return = p * mean;
  s.annualized_volatility = std::sqrt(p) * std::sqrt(sample_var);
  if (r.maxCoeff() != r.minCoeff()) {
    const double m2 = centered.square().mean();
    s.skewness = centered.cube().mean() / std::pow(m2, 1.5);
    s.kurtosis = centered.square().square().mean() / (m2 * m2);
    s.sharpe = annual_sharpe(r, options.periods_per_year);
  }
  s.max_drawdown = max_drawdown(r, options.drawdown_path);
  s.max_one_month_loss = -r.minCoeff();
  return s;
}

/// Counts, per strategy, how many years it ranked 1st, 2nd, ... on a metric
/// (rows = strategies, columns = years). Higher is better; ties go to the
/// lexicographically smaller name. Result is strategies x ranks.
Eigen::MatrixXi rank_distribution(const Eigen::MatrixXd& values, const std::vector<std::string>& names);

enum class Indicator { AnnualizedReturn, AnnualizedVolatility, Sharpe, CumulativeLogReturn };

const char* to_string(Indicator indicator);

/// Indicator value of a return series. The cumulative log return is the
/// terminal value of the summed-return path used for drawdowns.
double indicator_value(const Eigen::VectorXd& returns, Indicator indicator, int periods_per_year = 12);

/// raw_k = full - without_k, normalized by sum_j |raw_j|.
Eigen::VectorXd expert_importance(double full_mixture, const Eigen::VectorXd& leave_one_out);

}  // namespace aggfolio
