#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "aggfolio/data.hpp"
#include "aggfolio/month.hpp"

namespace aggfolio {

/// Factor-plus-noise monthly panel. Characteristics follow AR(1) paths
/// (quarterly and annual ones only refresh on their cycle); returns load on
/// the characteristics as they become public under the publication lags, so a
/// linear model on the lagged, ranked panel has real signal. Caps start
/// lognormal and compound with returns.
struct SyntheticPanelSpec {
  Eigen::Index assets = 500;
  int months = 240;
  Month start{2000, 1};
  int features = 4;
  double missing_rate = 0.02;
  double signal = 0.003;
  double market_vol = 0.04;
  double idiosyncratic_vol = 0.08;
  double persistence = 0.9;
  std::uint64_t seed = 0;
};

RawPanel generate_panel(const SyntheticPanelSpec& spec);

/// Expert streams (T x K) and target (T) for aggregation-level checks.
struct Scenario {
  std::string name;
  Eigen::MatrixXd experts;
  Eigen::VectorXd target;
  // First step of the second regime, or -1.
  Eigen::Index switch_step = -1;
};

/// Two experts emitting the constants 0 and 1 against a constant 0.3 target.
Scenario constant_experts_scenario(Eigen::Index steps);

/// `experts` copies of one noisy stream.
Scenario identical_experts_scenario(Eigen::Index steps, Eigen::Index experts, std::uint64_t seed);

/// Two noisy copies of a standard normal target whose noise levels (low,
/// high) swap at the midpoint.
Scenario regime_switch_scenario(Eigen::Index steps, std::uint64_t seed, double low_noise = 0.1,
                                double high_noise = 1.0);

/// i.i.d. losses in [0, 1] with expert-specific means (T x K).
Eigen::MatrixXd iid_bounded_losses(Eigen::Index steps, Eigen::Index experts, std::uint64_t seed);

}  // namespace aggfolio
