#pragma once

#include <Eigen/Core>
#include <map>
#include <string>
#include <vector>

#include "aggfolio/aggregation.hpp"
#include "aggfolio/data.hpp"
#include "aggfolio/loss.hpp"
#include "aggfolio/month.hpp"

namespace aggfolio {

enum class Side { Long, Short };
enum class Weighting { Equal, Value };

const char* to_string(Side side);
const char* to_string(Weighting weighting);

/// One month of tradable assets. `realized(i)` is the return earned over
/// `month` by an asset held from the start of the month; `forecasts(i, k)` is
/// expert k's forecast of it.
struct CrossSection {
  Month month;
  std::vector<AssetId> assets;
  Eigen::VectorXd realized;
  Eigen::VectorXd market_caps;
  Eigen::MatrixXd forecasts;

  Eigen::Index size() const { return static_cast<Eigen::Index>(assets.size()); }
  Eigen::Index experts() const { return forecasts.cols(); }
};

inline constexpr Eigen::Index kMinUniverse = 10;

/// Decile labels 1..10 by ascending score, ties broken by ascending asset id.
/// Deciles 1 and 10 hold exactly floor(N / 10) assets each; the interior
/// deciles share the rest in sorted order.
std::vector<int> decile_assign(const Eigen::Ref<const Eigen::VectorXd>& scores, const std::vector<AssetId>& assets);

/// A fully invested unit portfolio on one side of the book.
struct LegHoldings {
  Month month;
  Side side = Side::Long;
  std::vector<AssetId> members;
  Eigen::VectorXd weights;
};

struct Leg {
  double ret = 0;
  LegHoldings holdings;
};

/// Long holds the top decile of expert `expert`'s forecasts, short the bottom.
Leg build_leg(const CrossSection& cross_section, Eigen::Index expert, Side side, Weighting weighting);

/// Same construction on arbitrary scores.
Leg build_leg_on_scores(const CrossSection& cross_section, const Eigen::Ref<const Eigen::VectorXd>& scores, Side side,
                        Weighting weighting);

struct TargetReturns {
  double long_target = 0;
  double short_target = 0;
};

/// Perfect-foresight legs: the same construction sorted on realized returns.
TargetReturns target_returns(const CrossSection& cross_section, Weighting weighting);

struct UniverseSelector {
  enum class Kind { All, TopByCap, BottomByCap };
  Kind kind = Kind::All;
  Eigen::Index count = 0;

  static UniverseSelector all() { return {}; }
  static UniverseSelector top(Eigen::Index n) { return {Kind::TopByCap, n}; }
  static UniverseSelector bottom(Eigen::Index n) { return {Kind::BottomByCap, n}; }
};

/// Keeps the min(n, N) largest (or smallest) caps, ties by asset id, in the
/// original asset order. Forecasts pass through untouched.
CrossSection filter_universe(const CrossSection& cross_section, const UniverseSelector& selector);

/// Signed book: long weights positive, short weights negative.
using SignedBook = std::map<AssetId, double>;

/// Sum of weight-scaled legs: sum_k w_k * leg_k with the leg's sign.
SignedBook blend_holdings(const std::vector<const LegHoldings*>& legs, const Eigen::Ref<const Eigen::VectorXd>& weights);

SignedBook book_of(const LegHoldings& long_leg, const LegHoldings& short_leg);

/// sum_i | w_{i,t+1} - w_{i,t} (1 + r_{i,t+1}) | over the union of both books.
/// `drift_returns` must cover every asset held in `current`.
double monthly_turnover(const SignedBook& current, const std::map<AssetId, double>& drift_returns,
                        const SignedBook& next);

struct StrategySeries {
  std::string label;
  std::vector<Month> months;
  Eigen::VectorXd returns;
  std::vector<SignedBook> holdings;  // empty for target and return-only series
};

/// Two independent aggregations, long mixture vs long target and short
/// mixture vs short target, and their difference.
struct LongShortAggregation {
  Eigen::VectorXd long_mixture;
  Eigen::VectorXd short_mixture;
  Eigen::VectorXd long_short;
  Trajectory<double> long_trajectory;
  Trajectory<double> short_trajectory;
};

/// Expert series are T x K (one column per expert); targets are length T.
LongShortAggregation long_short_aggregate(const Eigen::MatrixXd& expert_long, const Eigen::MatrixXd& expert_short,
                                          const Eigen::VectorXd& long_target, const Eigen::VectorXd& short_target,
                                          const Rule& rule, const LossKind& loss);

/// Continues from warm-started states.
LongShortAggregation long_short_aggregate(const AggregationState<double>& long_start,
                                          const AggregationState<double>& short_start,
                                          const Eigen::MatrixXd& expert_long, const Eigen::MatrixXd& expert_short,
                                          const Eigen::VectorXd& long_target, const Eigen::VectorXd& short_target,
                                          const LossKind& loss);

}  // namespace aggfolio
