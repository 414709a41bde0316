#pragma once

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "aggfolio/error.hpp"
#include "aggfolio/loss.hpp"

namespace aggfolio {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Index = Eigen::Index;

/// Aggregation policy: uniform mixture, BOA with a shared fixed rate, or BOA
/// with per-expert adaptive rates.
struct Rule {
  enum class Kind { Uniform, BoaFixed, BoaAdaptive };

  Kind kind = Kind::BoaAdaptive;
  double eta = 1.0;  // only read by BoaFixed

  static Rule uniform() { return {Kind::Uniform, 0.0}; }
  static Rule boa_fixed(double eta) {
    require(eta > 0.0 && std::isfinite(eta), ErrorKind::Parameter, "BOA learning rate must be positive");
    return {Kind::BoaFixed, eta};
  }
  static Rule boa_adaptive() { return {Kind::BoaAdaptive, 1.0}; }

  /// Short label used in reports: UNI or BOA.
  std::string label() const { return kind == Kind::Uniform ? "UNI" : "BOA"; }

  bool operator==(const Rule&) const = default;
};

/// Learning rate used by the adaptive rule before any regret has been seen.
inline constexpr double kInitialLearningRate = 1.0;

template <typename Derived>
bool on_simplex(const Eigen::MatrixBase<Derived>& w, double tolerance = 1e-12) {
  if (w.size() == 0) return false;
  for (Index k = 0; k < w.size(); ++k)
    if (!(w(k) >= 0)) return false;
  return std::abs(static_cast<double>(w.sum()) - 1.0) <= tolerance;
}

template <typename Scalar = double>
Vector<Scalar> uni_weights(Index experts) {
  require(experts >= 1, ErrorKind::Parameter, "empty expert set");
  return Vector<Scalar>::Constant(experts, Scalar(1) / static_cast<Scalar>(experts));
}

/// Convex combination sum_k w_k v_k.
template <typename DerivedW, typename DerivedV>
typename DerivedW::Scalar mixture_predict(const Eigen::MatrixBase<DerivedW>& weights,
                                          const Eigen::MatrixBase<DerivedV>& values) {
  require(weights.size() == values.size(), ErrorKind::Shape,
          "mixture_predict: " + std::to_string(weights.size()) + " weights for " + std::to_string(values.size()) +
              " expert values");
  return weights.dot(values);
}

template <typename Scalar>
struct AggregationState {
  Rule rule;
  Index step = 0;
  Vector<Scalar> weights;
  // Log-weights shifted so that their maximum is zero.
  Vector<Scalar> log_weights;
  // V_k: sum of squared instantaneous regrets.
  Vector<Scalar> cumulative_sq_regret;
  // E_k: running max of |instantaneous regret|.
  Vector<Scalar> max_abs_regret;
  Vector<Scalar> learning_rates;

  Index experts() const { return weights.size(); }

  static AggregationState initial(const Rule& rule, Index experts) {
    AggregationState s;
    s.rule = rule;
    s.weights = uni_weights<Scalar>(experts);
    s.log_weights = Vector<Scalar>::Zero(experts);
    s.cumulative_sq_regret = Vector<Scalar>::Zero(experts);
    s.max_abs_regret = Vector<Scalar>::Zero(experts);
    switch (rule.kind) {
      case Rule::Kind::Uniform: s.learning_rates = Vector<Scalar>::Zero(experts); break;
      case Rule::Kind::BoaFixed: s.learning_rates = Vector<Scalar>::Constant(experts, Scalar(rule.eta)); break;
      case Rule::Kind::BoaAdaptive:
        s.learning_rates = Vector<Scalar>::Constant(experts, Scalar(kInitialLearningRate));
        break;
    }
    return s;
  }

  bool operator==(const AggregationState&) const = default;
};

template <typename Scalar>
struct StepOutcome {
  // Filled by run_online; NaN when the outcome comes from a bare weight update.
  Scalar mixture_value = std::numeric_limits<Scalar>::quiet_NaN();
  Vector<Scalar> weights_before;
  Vector<Scalar> expert_losses;
  Scalar mixture_loss = 0;
  Vector<Scalar> instantaneous_regrets;
  Vector<Scalar> weights_after;
};

template <typename Scalar>
struct StepResult {
  AggregationState<Scalar> state;
  StepOutcome<Scalar> outcome;
};

namespace detail {

template <typename Scalar>
void check_losses(const AggregationState<Scalar>& state, const Vector<Scalar>& losses) {
  require(state.experts() >= 1, ErrorKind::Parameter, "aggregation state has no experts");
  require(losses.size() == state.experts(), ErrorKind::Shape,
          "expected " + std::to_string(state.experts()) + " expert losses, got " + std::to_string(losses.size()));
  require(losses.allFinite(), ErrorKind::Domain, "non-finite expert loss");
}

template <typename Scalar>
StepOutcome<Scalar> begin_step(const AggregationState<Scalar>& state, const Vector<Scalar>& losses) {
  StepOutcome<Scalar> out;
  out.weights_before = state.weights;
  out.expert_losses = losses;
  out.mixture_loss = state.weights.dot(losses);
  // r_k = sum_j w_j (l_k - l_j), equal to l_k - w.l on the simplex; exactly
  // zero whenever all losses coincide.
  const Index K = losses.size();
  out.instantaneous_regrets.resize(K);
  for (Index k = 0; k < K; ++k) out.instantaneous_regrets(k) = state.weights.dot((losses(k) - losses.array()).matrix());
  return out;
}

// log w_k += -eta_k r_k (1 + eta_k r_k), then renormalize over experts.
template <typename Scalar>
void apply_second_order_update(AggregationState<Scalar>& state, const Vector<Scalar>& regrets) {
  const auto eta_r = (state.learning_rates.array() * regrets.array()).eval();
  state.log_weights.array() -= eta_r * (Scalar(1) + eta_r);
  require(state.log_weights.allFinite(), ErrorKind::Numerical, "BOA log-weights became non-finite");
  state.log_weights.array() -= state.log_weights.maxCoeff();
  Vector<Scalar> unnormalized = state.log_weights.array().exp().matrix();
  const Scalar total = unnormalized.sum();
  require(total > Scalar(0) && std::isfinite(total), ErrorKind::Numerical, "BOA weights underflowed");
  state.weights = unnormalized / total;
}

template <typename Scalar>
void accumulate_regret_moments(AggregationState<Scalar>& state, const Vector<Scalar>& regrets) {
  state.cumulative_sq_regret += regrets.cwiseAbs2();
  state.max_abs_regret = state.max_abs_regret.cwiseMax(regrets.cwiseAbs());
}

}  // namespace detail

/// BOA update with one shared learning rate.
template <typename Scalar>
StepResult<Scalar> boa_step_fixed(const AggregationState<Scalar>& state, const Vector<Scalar>& losses) {
  require(state.rule.kind == Rule::Kind::BoaFixed, ErrorKind::Parameter, "boa_step_fixed needs a BOA_fixed state");
  require(state.rule.eta > 0.0, ErrorKind::Parameter, "BOA learning rate must be positive");
  detail::check_losses(state, losses);
  StepResult<Scalar> result{state, detail::begin_step(state, losses)};
  auto& next = result.state;
  detail::accumulate_regret_moments(next, result.outcome.instantaneous_regrets);
  next.learning_rates.setConstant(Scalar(state.rule.eta));
  detail::apply_second_order_update(next, result.outcome.instantaneous_regrets);
  ++next.step;
  result.outcome.weights_after = next.weights;
  return result;
}

/// BOA update with per-expert rates
///   eta_k = min(1 / (2 E_k), sqrt(ln K / (1 + V_k)))
/// where E_k and V_k already include the current regret. Experts with no
/// nonzero regret so far keep kInitialLearningRate.
template <typename Scalar>
StepResult<Scalar> boa_step_adaptive(const AggregationState<Scalar>& state, const Vector<Scalar>& losses) {
  require(state.rule.kind == Rule::Kind::BoaAdaptive, ErrorKind::Parameter,
          "boa_step_adaptive needs a BOA_adaptive state");
  detail::check_losses(state, losses);
  StepResult<Scalar> result{state, detail::begin_step(state, losses)};
  auto& next = result.state;
  detail::accumulate_regret_moments(next, result.outcome.instantaneous_regrets);

  const Scalar log_k = std::log(static_cast<Scalar>(next.experts()));
  for (Index k = 0; k < next.experts(); ++k) {
    const Scalar range = next.max_abs_regret(k);
    if (range <= Scalar(0)) {
      next.learning_rates(k) = Scalar(kInitialLearningRate);
      continue;
    }
    const Scalar range_cap = Scalar(1) / (Scalar(2) * range);
    const Scalar variance_rate = std::sqrt(log_k / (Scalar(1) + next.cumulative_sq_regret(k)));
    next.learning_rates(k) = std::min(range_cap, variance_rate);
  }
  detail::apply_second_order_update(next, result.outcome.instantaneous_regrets);
  ++next.step;
  result.outcome.weights_after = next.weights;
  return result;
}

/// Uniform rule: weights stay at 1/K; regret statistics are still tracked.
template <typename Scalar>
StepResult<Scalar> uniform_step(const AggregationState<Scalar>& state, const Vector<Scalar>& losses) {
  detail::check_losses(state, losses);
  StepResult<Scalar> result{state, detail::begin_step(state, losses)};
  detail::accumulate_regret_moments(result.state, result.outcome.instantaneous_regrets);
  ++result.state.step;
  result.outcome.weights_after = result.state.weights;
  return result;
}

template <typename Scalar>
StepResult<Scalar> aggregation_step(const AggregationState<Scalar>& state, const Vector<Scalar>& losses) {
  switch (state.rule.kind) {
    case Rule::Kind::Uniform: return uniform_step(state, losses);
    case Rule::Kind::BoaFixed: return boa_step_fixed(state, losses);
    case Rule::Kind::BoaAdaptive: return boa_step_adaptive(state, losses);
  }
  fail(ErrorKind::Parameter, "unknown aggregation rule");
}

template <typename Scalar>
struct Trajectory {
  std::vector<StepOutcome<Scalar>> steps;
  AggregationState<Scalar> final_state;

  Index length() const { return static_cast<Index>(steps.size()); }

  Vector<Scalar> mixture() const {
    Vector<Scalar> m(length());
    for (Index t = 0; t < length(); ++t) m(t) = steps[t].mixture_value;
    return m;
  }

  /// T x K matrix of the weights used to form each step's mixture.
  Matrix<Scalar> weights_used() const {
    Matrix<Scalar> w(length(), final_state.experts());
    for (Index t = 0; t < length(); ++t) w.row(t) = steps[t].weights_before.transpose();
    return w;
  }

  Matrix<Scalar> weights_after() const {
    Matrix<Scalar> w(length(), final_state.experts());
    for (Index t = 0; t < length(); ++t) w.row(t) = steps[t].weights_after.transpose();
    return w;
  }

  Scalar average_mixture_loss() const {
    require(!steps.empty(), ErrorKind::Parameter, "empty trajectory");
    Scalar total = 0;
    for (const auto& s : steps) total += s.mixture_loss;
    return total / static_cast<Scalar>(steps.size());
  }
};

/// Sequential protocol over T steps, continuing from `start`. At step t the
/// mixture is formed with the current weights, the target is revealed, and
/// the weights are updated on gradient-linearized losses
///   l_k = dloss/dyhat(y_t, yhat_t) * f_{k,t},
/// so the rule competes with the best fixed convex combination rather than
/// the best single expert. Reported expert and mixture losses are the true
/// losses.
template <typename Scalar, typename DerivedF, typename DerivedY>
Trajectory<Scalar> run_online(AggregationState<Scalar> state, const Eigen::MatrixBase<DerivedF>& expert_streams,
                              const Eigen::MatrixBase<DerivedY>& target, const LossKind& loss) {
  const Index T = expert_streams.rows();
  const Index K = expert_streams.cols();
  require(K == state.experts(), ErrorKind::Shape,
          "run_online: " + std::to_string(K) + " expert streams for a state over " +
              std::to_string(state.experts()) + " experts");
  require(target.size() == T, ErrorKind::Shape,
          "run_online: target has " + std::to_string(target.size()) + " steps, experts have " + std::to_string(T));
  require(expert_streams.allFinite() && target.allFinite(), ErrorKind::Domain,
          "run_online: missing or non-finite values (sleeping experts are not supported)");

  Trajectory<Scalar> traj;
  traj.steps.reserve(static_cast<std::size_t>(T));
  Vector<Scalar> values(K);
  Vector<Scalar> linearized(K);
  Vector<Scalar> true_losses(K);
  for (Index t = 0; t < T; ++t) {
    values = expert_streams.row(t).transpose().template cast<Scalar>();
    const Scalar y = static_cast<Scalar>(target(t));
    const Scalar yhat = mixture_predict(state.weights, values);
    const Scalar slope = loss_gradient(loss, y, yhat);
    linearized = slope * values;
    for (Index k = 0; k < K; ++k) true_losses(k) = evaluate_loss(loss, y, values(k));

    auto [next, outcome] = aggregation_step(state, linearized);
    outcome.mixture_value = yhat;
    outcome.expert_losses = true_losses;
    outcome.mixture_loss = evaluate_loss(loss, y, yhat);
    traj.steps.push_back(std::move(outcome));
    state = std::move(next);
  }
  traj.final_state = std::move(state);
  return traj;
}

template <typename Scalar = double, typename DerivedF, typename DerivedY>
Trajectory<Scalar> run_online(const Rule& rule, const Eigen::MatrixBase<DerivedF>& expert_streams,
                              const Eigen::MatrixBase<DerivedY>& target, const LossKind& loss) {
  return run_online(AggregationState<Scalar>::initial(rule, expert_streams.cols()), expert_streams, target, loss);
}

/// Runs the rule directly on a T x K matrix of expert losses (no forecasts,
/// no linearization). The mixture loss of step t is w_t . l_t.
template <typename Scalar = double, typename Derived>
Trajectory<Scalar> run_on_losses(const Rule& rule, const Eigen::MatrixBase<Derived>& losses) {
  require(losses.allFinite(), ErrorKind::Domain, "run_on_losses: non-finite loss");
  auto state = AggregationState<Scalar>::initial(rule, losses.cols());
  Trajectory<Scalar> traj;
  traj.steps.reserve(static_cast<std::size_t>(losses.rows()));
  for (Index t = 0; t < losses.rows(); ++t) {
    auto [next, outcome] = aggregation_step(state, Vector<Scalar>(losses.row(t).transpose().template cast<Scalar>()));
    traj.steps.push_back(std::move(outcome));
    state = std::move(next);
  }
  traj.final_state = std::move(state);
  return traj;
}

/// Runs the rule over a pre-training segment and returns the terminal state.
/// Continuing with run_online reproduces an uninterrupted run exactly.
template <typename Scalar = double, typename DerivedF, typename DerivedY>
AggregationState<Scalar> warm_start(const Rule& rule, const Eigen::MatrixBase<DerivedF>& pretrain_streams,
                                    const Eigen::MatrixBase<DerivedY>& pretrain_target, const LossKind& loss) {
  require(pretrain_streams.rows() > 0, ErrorKind::Parameter, "warm_start: empty pre-training segment");
  return run_online<Scalar>(rule, pretrain_streams, pretrain_target, loss).final_state;
}

}  // namespace aggfolio
