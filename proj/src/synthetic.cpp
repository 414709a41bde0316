#include "aggfolio/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "aggfolio/error.hpp"
#include "aggfolio/random.hpp"

namespace aggfolio {

namespace {

Frequency frequency_for(int feature) {
  switch (feature % 4) {
    case 2: return Frequency::Quarterly;
    case 3: return Frequency::Annual;
    default: return Frequency::Monthly;
  }
}

int refresh_period(Frequency f) {
  switch (f) {
    case Frequency::Quarterly: return 3;
    case Frequency::Annual: return 12;
    default: return 1;
  }
}

}  // namespace

RawPanel generate_panel(const SyntheticPanelSpec& spec) {
  require(spec.assets > 0 && spec.months > 0 && spec.features >= 0, ErrorKind::Parameter,
          "synthetic panel sizes must be positive");
  require(spec.missing_rate >= 0.0 && spec.missing_rate < 1.0, ErrorKind::Parameter,
          "missing rate must lie in [0, 1)");
  require(spec.persistence >= 0.0 && spec.persistence < 1.0, ErrorKind::Parameter,
          "persistence must lie in [0, 1)");

  const Eigen::Index n = spec.assets;
  const int months = spec.months;
  const int f = spec.features;
  Engine engine(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  RawPanel panel;
  std::vector<double> loadings;
  for (int j = 0; j < f; ++j) {
    panel.feature_names.push_back("c" + std::to_string(j));
    panel.frequencies.push_back(frequency_for(j));
    const double magnitude = 1.0 / (1.0 + 0.5 * j);
    loadings.push_back(j % 2 == 0 ? magnitude : -magnitude);
  }

  // characteristics[t](i, j): true value at month t
  std::vector<Eigen::MatrixXd> characteristics(static_cast<std::size_t>(months), Eigen::MatrixXd(n, f));
  for (int t = 0; t < months; ++t) {
    auto& now = characteristics[static_cast<std::size_t>(t)];
    for (Eigen::Index i = 0; i < n; ++i)
      for (int j = 0; j < f; ++j) {
        const int period = refresh_period(frequency_for(j));
        if (t == 0) {
          now(i, j) = normal(engine);
        } else if (t % period == 0) {
          const double rho = std::pow(spec.persistence, period);
          now(i, j) = rho * characteristics[static_cast<std::size_t>(t - 1)](i, j) +
                      std::sqrt(1.0 - rho * rho) * normal(engine);
        } else {
          now(i, j) = characteristics[static_cast<std::size_t>(t - 1)](i, j);
        }
      }
  }

  const auto rows = static_cast<Eigen::Index>(months) * n;
  panel.assets.reserve(static_cast<std::size_t>(rows));
  panel.months.reserve(static_cast<std::size_t>(rows));
  panel.returns.resize(rows);
  panel.market_caps.resize(rows);
  panel.features.resize(rows, f);

  Eigen::VectorXd caps(n);
  for (Eigen::Index i = 0; i < n; ++i) caps(i) = std::exp(5.0 + 1.5 * normal(engine));

  Eigen::Index row = 0;
  for (int t = 0; t < months; ++t) {
    const double market = 0.005 + spec.market_vol * normal(engine);
    for (Eigen::Index i = 0; i < n; ++i, ++row) {
      double expected = market;
      for (int j = 0; j < f; ++j) {
        const int visible = std::max(0, t - publication_lag(frequency_for(j)));
        expected += spec.signal * loadings[static_cast<std::size_t>(j)] *
                    characteristics[static_cast<std::size_t>(visible)](i, j);
      }
      const double ret = std::max(-0.95, expected + spec.idiosyncratic_vol * normal(engine));
      panel.assets.push_back(10001 + i);
      panel.months.push_back(spec.start + t);
      panel.returns(row) = ret;
      panel.market_caps(row) = caps(i);
      for (int j = 0; j < f; ++j) {
        const bool missing = uniform(engine) < spec.missing_rate;
        panel.features(row, j) =
            missing ? std::numeric_limits<double>::quiet_NaN() : characteristics[static_cast<std::size_t>(t)](i, j);
      }
      caps(i) *= 1.0 + ret;
    }
  }
  return panel;
}

Scenario constant_experts_scenario(Eigen::Index steps) {
  require(steps >= 1, ErrorKind::Parameter, "scenario needs at least one step");
  Scenario s;
  s.name = "constant_experts";
  s.experts.resize(steps, 2);
  s.experts.col(0).setZero();
  s.experts.col(1).setOnes();
  s.target = Eigen::VectorXd::Constant(steps, 0.3);
  return s;
}

Scenario identical_experts_scenario(Eigen::Index steps, Eigen::Index experts, std::uint64_t seed) {
  require(steps >= 1 && experts >= 1, ErrorKind::Parameter, "scenario sizes must be positive");
  Engine engine(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Scenario s;
  s.name = "identical_experts";
  s.target.resize(steps);
  Eigen::VectorXd stream(steps);
  for (Eigen::Index t = 0; t < steps; ++t) {
    s.target(t) = normal(engine);
    stream(t) = s.target(t) + 0.5 * normal(engine);
  }
  s.experts = stream.replicate(1, experts);
  return s;
}

Scenario regime_switch_scenario(Eigen::Index steps, std::uint64_t seed, double low_noise, double high_noise) {
  require(steps >= 2, ErrorKind::Parameter, "regime switch needs at least two steps");
  Engine engine(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Scenario s;
  s.name = "regime_switch";
  s.switch_step = steps / 2;
  s.target.resize(steps);
  s.experts.resize(steps, 2);
  for (Eigen::Index t = 0; t < steps; ++t) {
    const bool first = t < s.switch_step;
    s.target(t) = normal(engine);
    s.experts(t, 0) = s.target(t) + (first ? low_noise : high_noise) * normal(engine);
    s.experts(t, 1) = s.target(t) + (first ? high_noise : low_noise) * normal(engine);
  }
  return s;
}

Eigen::MatrixXd iid_bounded_losses(Eigen::Index steps, Eigen::Index experts, std::uint64_t seed) {
  require(steps >= 1 && experts >= 1, ErrorKind::Parameter, "loss matrix sizes must be positive");
  Engine engine(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Eigen::VectorXd means(experts);
  for (Eigen::Index k = 0; k < experts; ++k) means(k) = 0.3 + 0.4 * uniform(engine);
  Eigen::MatrixXd losses(steps, experts);
  for (Eigen::Index t = 0; t < steps; ++t)
    for (Eigen::Index k = 0; k < experts; ++k)
      losses(t, k) = std::clamp(means(k) + 0.3 * (2.0 * uniform(engine) - 1.0), 0.0, 1.0);
  return losses;
}

}  // namespace aggfolio
