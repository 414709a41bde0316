#include "aggfolio/portfolio.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "aggfolio/error.hpp"

namespace aggfolio {

namespace {

std::vector<Eigen::Index> ascending_order(const Eigen::Ref<const Eigen::VectorXd>& scores,
                                          const std::vector<AssetId>& assets) {
  std::vector<Eigen::Index> order(assets.size());
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (scores(a) != scores(b)) return scores(a) < scores(b);
    return assets[static_cast<std::size_t>(a)] < assets[static_cast<std::size_t>(b)];
  });
  return order;
}

void check_universe(Eigen::Index n) {
  require(n >= kMinUniverse, ErrorKind::Data,
          "universe too small: " + std::to_string(n) + " assets, need at least " + std::to_string(kMinUniverse));
}

}  // namespace

const char* to_string(Side side) { return side == Side::Long ? "long" : "short"; }
const char* to_string(Weighting weighting) { return weighting == Weighting::Equal ? "equal" : "value"; }

std::vector<int> decile_assign(const Eigen::Ref<const Eigen::VectorXd>& scores, const std::vector<AssetId>& assets) {
  const auto n = static_cast<Eigen::Index>(assets.size());
  require(scores.size() == n, ErrorKind::Shape, "decile_assign: one score per asset required");
  check_universe(n);
  require(scores.allFinite(), ErrorKind::Data, "decile_assign: non-finite forecast");
  const auto order = ascending_order(scores, assets);
  const Eigen::Index extreme = n / 10;
  const Eigen::Index interior = n - 2 * extreme;
  std::vector<int> labels(assets.size());
  for (Eigen::Index pos = 0; pos < n; ++pos) {
    int label;
    if (pos < extreme) {
      label = 1;
    } else if (pos >= n - extreme) {
      label = 10;
    } else {
      label = 2 + static_cast<int>(((pos - extreme) * 8) / interior);
    }
    labels[static_cast<std::size_t>(order[static_cast<std::size_t>(pos)])] = label;
  }
  return labels;
}

Leg build_leg_on_scores(const CrossSection& cs, const Eigen::Ref<const Eigen::VectorXd>& scores, Side side,
                        Weighting weighting) {
  const Eigen::Index n = cs.size();
  require(scores.size() == n && cs.realized.size() == n && cs.market_caps.size() == n, ErrorKind::Shape,
          "cross-section columns have inconsistent lengths");
  check_universe(n);
  require(scores.allFinite(), ErrorKind::Data, "non-finite forecast in " + cs.month.to_string());
  const auto order = ascending_order(scores, cs.assets);
  const Eigen::Index m = n / 10;

  Leg leg;
  leg.holdings.month = cs.month;
  leg.holdings.side = side;
  leg.holdings.weights.resize(m);
  std::vector<Eigen::Index> rows;
  rows.reserve(static_cast<std::size_t>(m));
  for (Eigen::Index j = 0; j < m; ++j)
    rows.push_back(side == Side::Long ? order[static_cast<std::size_t>(n - 1 - j)] : order[static_cast<std::size_t>(j)]);

  if (weighting == Weighting::Equal) {
    leg.holdings.weights.setConstant(1.0 / static_cast<double>(m));
  } else {
    double total = 0;
    for (Eigen::Index j = 0; j < m; ++j) {
      const double cap = cs.market_caps(rows[static_cast<std::size_t>(j)]);
      require(cap > 0.0 && std::isfinite(cap), ErrorKind::Data,
              "value weighting needs positive caps; asset " +
                  std::to_string(cs.assets[static_cast<std::size_t>(rows[static_cast<std::size_t>(j)])]) + " has " +
                  std::to_string(cap) + " in " + cs.month.to_string());
      leg.holdings.weights(j) = cap;
      total += cap;
    }
    leg.holdings.weights /= total;
  }
  for (Eigen::Index j = 0; j < m; ++j) {
    const Eigen::Index row = rows[static_cast<std::size_t>(j)];
    leg.holdings.members.push_back(cs.assets[static_cast<std::size_t>(row)]);
    leg.ret += leg.holdings.weights(j) * cs.realized(row);
  }
  return leg;
}

Leg build_leg(const CrossSection& cs, Eigen::Index expert, Side side, Weighting weighting) {
  require(expert >= 0 && expert < cs.experts(), ErrorKind::Shape,
          "expert index " + std::to_string(expert) + " out of range");
  return build_leg_on_scores(cs, cs.forecasts.col(expert), side, weighting);
}

TargetReturns target_returns(const CrossSection& cs, Weighting weighting) {
  return {build_leg_on_scores(cs, cs.realized, Side::Long, weighting).ret,
          build_leg_on_scores(cs, cs.realized, Side::Short, weighting).ret};
}

CrossSection filter_universe(const CrossSection& cs, const UniverseSelector& selector) {
  if (selector.kind == UniverseSelector::Kind::All) {
    check_universe(cs.size());
    return cs;
  }
  const Eigen::Index n = cs.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const bool top = selector.kind == UniverseSelector::Kind::TopByCap;
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    const double ca = cs.market_caps(a);
    const double cb = cs.market_caps(b);
    if (ca != cb) return top ? ca > cb : ca < cb;
    return cs.assets[static_cast<std::size_t>(a)] < cs.assets[static_cast<std::size_t>(b)];
  });
  const Eigen::Index keep = std::min(selector.count, n);
  check_universe(keep);
  order.resize(static_cast<std::size_t>(keep));
  std::sort(order.begin(), order.end());

  CrossSection out;
  out.month = cs.month;
  out.realized.resize(keep);
  out.market_caps.resize(keep);
  out.forecasts.resize(keep, cs.forecasts.cols());
  for (Eigen::Index j = 0; j < keep; ++j) {
    const Eigen::Index row = order[static_cast<std::size_t>(j)];
    out.assets.push_back(cs.assets[static_cast<std::size_t>(row)]);
    out.realized(j) = cs.realized(row);
    out.market_caps(j) = cs.market_caps(row);
    if (cs.forecasts.cols() > 0) out.forecasts.row(j) = cs.forecasts.row(row);
  }
  return out;
}

SignedBook blend_holdings(const std::vector<const LegHoldings*>& legs, const Eigen::Ref<const Eigen::VectorXd>& weights) {
  require(static_cast<Eigen::Index>(legs.size()) == weights.size(), ErrorKind::Shape,
          "blend_holdings: one weight per leg required");
  SignedBook book;
  for (std::size_t k = 0; k < legs.size(); ++k) {
    const double sign = legs[k]->side == Side::Long ? 1.0 : -1.0;
    const double scale = sign * weights(static_cast<Eigen::Index>(k));
    for (std::size_t j = 0; j < legs[k]->members.size(); ++j)
      book[legs[k]->members[j]] += scale * legs[k]->weights(static_cast<Eigen::Index>(j));
  }
  return book;
}

SignedBook book_of(const LegHoldings& long_leg, const LegHoldings& short_leg) {
  return blend_holdings({&long_leg, &short_leg}, Eigen::Vector2d(1.0, 1.0));
}

double monthly_turnover(const SignedBook& current, const std::map<AssetId, double>& drift_returns,
                        const SignedBook& next) {
  double total = 0;
  for (const auto& [asset, weight] : current) {
    const auto r = drift_returns.find(asset);
    require(r != drift_returns.end(), ErrorKind::Data,
            "turnover: no return for held asset " + std::to_string(asset));
    const auto it = next.find(asset);
    const double target = it == next.end() ? 0.0 : it->second;
    total += std::abs(target - weight * (1.0 + r->second));
  }
  for (const auto& [asset, weight] : next)
    if (!current.contains(asset)) total += std::abs(weight);
  return total;
}

LongShortAggregation long_short_aggregate(const AggregationState<double>& long_start,
                                          const AggregationState<double>& short_start,
                                          const Eigen::MatrixXd& expert_long, const Eigen::MatrixXd& expert_short,
                                          const Eigen::VectorXd& long_target, const Eigen::VectorXd& short_target,
                                          const LossKind& loss) {
  require(expert_long.rows() == expert_short.rows() && expert_long.cols() == expert_short.cols(), ErrorKind::Shape,
          "long and short expert series must have the same shape");
  LongShortAggregation out;
  out.long_trajectory = run_online(long_start, expert_long, long_target, loss);
  out.short_trajectory = run_online(short_start, expert_short, short_target, loss);
  out.long_mixture = out.long_trajectory.mixture();
  out.short_mixture = out.short_trajectory.mixture();
  out.long_short = out.long_mixture - out.short_mixture;
  return out;
}

LongShortAggregation long_short_aggregate(const Eigen::MatrixXd& expert_long, const Eigen::MatrixXd& expert_short,
                                          const Eigen::VectorXd& long_target, const Eigen::VectorXd& short_target,
                                          const Rule& rule, const LossKind& loss) {
  const auto start = AggregationState<double>::initial(rule, expert_long.cols());
  return long_short_aggregate(start, start, expert_long, expert_short, long_target, short_target, loss);
}

}  // namespace aggfolio
