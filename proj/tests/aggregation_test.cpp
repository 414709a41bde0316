#include <gtest/gtest.h>

#include <cmath>

#include "aggfolio/aggregation.hpp"
#include "aggfolio/synthetic.hpp"
#include "oracles.hpp"

using namespace aggfolio;

namespace {

using Vec = Eigen::VectorXd;
using State = AggregationState<double>;

State step_losses(const State& s, const Vec& losses) { return aggregation_step(s, losses).state; }

}  // namespace

TEST(UniWeights, Examples) {
  EXPECT_EQ(uni_weights(4), Vec::Constant(4, 0.25));
  EXPECT_EQ(uni_weights(1), Vec::Ones(1));
  const Vec w13 = uni_weights(13);
  for (Eigen::Index k = 0; k < 13; ++k) EXPECT_EQ(w13(k), 1.0 / 13.0);
  EXPECT_THROW(uni_weights(0), Error);
}

TEST(MixturePredict, Examples) {
  EXPECT_DOUBLE_EQ(mixture_predict(Eigen::Vector2d(0.5, 0.5), Eigen::Vector2d(0.02, 0.04)), 0.03);
  EXPECT_EQ(mixture_predict(Eigen::Vector2d(1, 0), Eigen::Vector2d(0.02, 0.04)), 0.02);
  EXPECT_DOUBLE_EQ(mixture_predict(Eigen::Vector2d(0.3, 0.7), Eigen::Vector2d(0, 1)), 0.7);
  EXPECT_THROW(mixture_predict(Eigen::VectorXd(Eigen::Vector2d(0.5, 0.5)), Eigen::VectorXd(Eigen::Vector3d(1, 2, 3))), Error);
}

TEST(MixturePredict, StaysWithinExpertRange) {
  oracle::Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const int k = oracle::uniform_int(rng, 1, 8);
    Vec w = oracle::uniform_matrix(rng, k, 1, 0, 1);
    w /= w.sum();
    const Vec v = oracle::normal_vector(rng, k);
    const double m = mixture_predict(w, v);
    EXPECT_GE(m, v.minCoeff() - 1e-12);
    EXPECT_LE(m, v.maxCoeff() + 1e-12);
  }
}

TEST(BoaFixed, HandExample) {
  const State s = State::initial(Rule::boa_fixed(1.0), 2);
  const auto [next, out] = boa_step_fixed(s, Vec(Eigen::Vector2d(-0.1, 0.1)));
  EXPECT_NEAR(out.instantaneous_regrets(0), -0.1, 1e-15);
  EXPECT_NEAR(out.instantaneous_regrets(1), 0.1, 1e-15);
  // exp(0.09) / (exp(0.09) + exp(-0.11))
  const double a = std::exp(0.09), b = std::exp(-0.11);
  EXPECT_NEAR(next.weights(0), a / (a + b), 1e-15);
  EXPECT_NEAR(next.weights(0), 0.549834, 1e-6);
  EXPECT_NEAR(next.weights(1), 0.450166, 1e-6);
}

TEST(BoaFixed, EqualLossesLeaveWeightsUnchanged) {
  State s = State::initial(Rule::boa_fixed(0.7), 3);
  s = step_losses(s, Vec(Eigen::Vector3d(0.2, 0.1, 0.4)));
  const Vec before = s.weights;
  const auto [next, out] = boa_step_fixed(s, Vec(Vec::Constant(3, 0.37)));
  EXPECT_EQ(out.instantaneous_regrets, Vec::Zero(3));
  EXPECT_EQ(next.weights, before);
}

TEST(BoaFixed, RepeatedStepsConcentrate) {
  State s = State::initial(Rule::boa_fixed(1.0), 2);
  for (int t = 0; t < 200; ++t) s = step_losses(s, Vec(Eigen::Vector2d(-0.1, 0.1)));
  EXPECT_GT(s.weights(0), 0.999);
}

TEST(BoaFixed, RejectsNonPositiveRateAndWrongShapes) {
  EXPECT_THROW(Rule::boa_fixed(0.0), Error);
  EXPECT_THROW(Rule::boa_fixed(-1.0), Error);
  const State s = State::initial(Rule::boa_fixed(1.0), 2);
  EXPECT_THROW(boa_step_fixed(s, Vec(Eigen::Vector3d(0, 0, 0))), Error);
  EXPECT_THROW(boa_step_fixed(s, Vec(Eigen::Vector2d(0, std::nan("")))), Error);
  EXPECT_THROW(boa_step_adaptive(s, Vec(Eigen::Vector2d(0, 0))), Error);
}

TEST(BoaFixed, BetterExpertNeverLosesWeightAgainstWorseOnes) {
  oracle::Rng rng(12);
  for (int trial = 0; trial < 2000; ++trial) {
    const int k = oracle::uniform_int(rng, 2, 6);
    State s = State::initial(Rule::boa_fixed(std::uniform_real_distribution<double>(0.1, 3)(rng)), k);
    s = step_losses(s, oracle::uniform_matrix(rng, k, 1, 0, 1));
    // expert 0 strictly best, so r_0 < 0 and every other regret is >= 0 only
    // when the others tie; build that case directly
    Vec losses = Vec::Constant(k, std::uniform_real_distribution<double>(0.2, 1)(rng));
    losses(0) -= 0.15;
    const auto [next, out] = boa_step_fixed(s, losses);
    ASSERT_LT(out.instantaneous_regrets(0), 0.0);
    for (Eigen::Index j = 1; j < k; ++j) ASSERT_GE(out.instantaneous_regrets(j), 0.0);
    EXPECT_GE(next.weights(0), s.weights(0));
  }
}

TEST(BoaFixed, MatchesPlainDomainReference) {
  oracle::Rng rng(13);
  for (double eta : {0.3, 1.0, 2.5}) {
    const int k = 5;
    State s = State::initial(Rule::boa_fixed(eta), k);
    oracle::ReferenceBoa ref(k, false, eta);
    for (int t = 0; t < 300; ++t) {
      const Vec l = oracle::uniform_matrix(rng, k, 1, 0, 1);
      s = step_losses(s, l);
      ref.step(std::vector<long double>(l.data(), l.data() + k));
      for (int i = 0; i < k; ++i) ASSERT_NEAR(s.weights(i), static_cast<double>(ref.w[static_cast<std::size_t>(i)]), 1e-12);
    }
  }
}

TEST(BoaAdaptive, MatchesPlainDomainReference) {
  oracle::Rng rng(14);
  for (double scale : {0.01, 1.0, 30.0}) {
    const int k = 4;
    State s = State::initial(Rule::boa_adaptive(), k);
    oracle::ReferenceBoa ref(k, true);
    for (int t = 0; t < 400; ++t) {
      const Vec l = scale * oracle::uniform_matrix(rng, k, 1, 0, 1);
      s = step_losses(s, l);
      ref.step(std::vector<long double>(l.data(), l.data() + k));
      for (int i = 0; i < k; ++i) {
        ASSERT_NEAR(s.weights(i), static_cast<double>(ref.w[static_cast<std::size_t>(i)]), 1e-11);
        ASSERT_NEAR(s.learning_rates(i), static_cast<double>(ref.eta[static_cast<std::size_t>(i)]), 1e-11);
      }
    }
  }
}

TEST(BoaAdaptive, FirstStepWithEqualLosses) {
  const State s = State::initial(Rule::boa_adaptive(), 3);
  const auto [next, out] = boa_step_adaptive(s, Vec(Vec::Constant(3, 0.5)));
  EXPECT_EQ(next.weights, s.weights);
  EXPECT_EQ(next.learning_rates, Vec::Constant(3, kInitialLearningRate));
  EXPECT_EQ(next.step, 1);
}

TEST(BoaAdaptive, ConstantGapConcentratesOnBetterExpert) {
  Eigen::MatrixXd losses(500, 2);
  losses.col(0).setZero();
  losses.col(1).setOnes();
  const auto traj = run_on_losses(Rule::boa_adaptive(), losses);
  EXPECT_GT(traj.final_state.weights(0), 0.99);
  // bound against the best fixed expert, whose average loss is 0
  EXPECT_LE(traj.average_mixture_loss(), 0.0 + 3 * std::log(2.0) / 500);
  // monotone after the first step
  for (std::size_t t = 1; t < traj.steps.size(); ++t)
    EXPECT_GE(traj.steps[t].weights_after(0), traj.steps[t - 1].weights_after(0));
}

TEST(BoaAdaptive, CumulativeSquaredRegretNondecreasing) {
  oracle::Rng rng(15);
  State s = State::initial(Rule::boa_adaptive(), 6);
  for (int t = 0; t < 2000; ++t) {
    const State next = step_losses(s, oracle::normal_vector(rng, 6));
    EXPECT_TRUE((next.cumulative_sq_regret.array() >= s.cumulative_sq_regret.array()).all());
    EXPECT_TRUE((next.max_abs_regret.array() >= s.max_abs_regret.array()).all());
    EXPECT_TRUE((next.learning_rates.array() > 0).all());
    s = next;
  }
}

TEST(Aggregation, SimplexInvariantOnRandomStreams) {
  oracle::Rng rng(16);
  long violations = 0, steps = 0;
  for (const Rule& rule : {Rule::boa_fixed(0.5), Rule::boa_fixed(5.0), Rule::boa_adaptive()}) {
    for (int run = 0; run < 10; ++run) {
      const int k = oracle::uniform_int(rng, 1, 13);
      const double scale = std::pow(10.0, oracle::uniform_int(rng, -3, 2));
      State s = State::initial(rule, k);
      for (int t = 0; t < 500; ++t, ++steps) {
        s = step_losses(s, scale * oracle::normal_vector(rng, k));
        if (!on_simplex(s.weights, 1e-12)) ++violations;
      }
    }
  }
  EXPECT_GE(steps, 10000);
  EXPECT_EQ(violations, 0);
}

TEST(Aggregation, PermutationEquivariance) {
  oracle::Rng rng(17);
  const int k = 5, T = 300;
  const Eigen::MatrixXd losses = oracle::uniform_matrix(rng, T, k, 0, 1);
  std::vector<int> perm{3, 0, 4, 1, 2};
  Eigen::MatrixXd permuted(T, k);
  for (int j = 0; j < k; ++j) permuted.col(j) = losses.col(perm[static_cast<std::size_t>(j)]);
  for (const Rule& rule : {Rule::boa_fixed(1.0), Rule::boa_adaptive(), Rule::uniform()}) {
    const Eigen::MatrixXd a = run_on_losses(rule, losses).weights_after();
    const Eigen::MatrixXd b = run_on_losses(rule, permuted).weights_after();
    for (int j = 0; j < k; ++j) EXPECT_LE((b.col(j) - a.col(perm[static_cast<std::size_t>(j)])).cwiseAbs().maxCoeff(), 1e-13);
  }
}

TEST(Aggregation, TranslationInvariance) {
  oracle::Rng rng(18);
  for (const Rule& rule : {Rule::boa_fixed(1.0), Rule::boa_adaptive()}) {
    State s = State::initial(rule, 4);
    for (int t = 0; t < 500; ++t) {
      const Vec l = oracle::uniform_matrix(rng, 4, 1, 0, 1);
      const double c = std::uniform_real_distribution<double>(-3, 3)(rng);
      const auto plain = aggregation_step(s, l);
      const auto shifted = aggregation_step(s, Vec((l.array() + c).matrix()));
      ASSERT_LE((plain.outcome.instantaneous_regrets - shifted.outcome.instantaneous_regrets).cwiseAbs().maxCoeff(),
                1e-14);
      ASSERT_LE((plain.state.weights - shifted.state.weights).cwiseAbs().maxCoeff(), 1e-14);
      s = plain.state;
    }
  }
}

TEST(Aggregation, IdenticalExpertsMatchUniExactly) {
  const Scenario s = identical_experts_scenario(400, 4, 3);
  const auto boa = run_online(Rule::boa_adaptive(), s.experts, s.target, LossKind::squared());
  const auto uni = run_online(Rule::uniform(), s.experts, s.target, LossKind::squared());
  EXPECT_EQ(boa.mixture(), uni.mixture());
  EXPECT_EQ(boa.weights_used(), uni.weights_used());
}

TEST(RunOnline, UniKeepsUniformWeights) {
  oracle::Rng rng(19);
  const Eigen::MatrixXd f = oracle::uniform_matrix(rng, 50, 3, -1, 1);
  const Vec y = oracle::normal_vector(rng, 50);
  const auto traj = run_online(Rule::uniform(), f, y, LossKind::squared());
  for (const auto& st : traj.steps) EXPECT_EQ(st.weights_before, uni_weights(3));
}

TEST(RunOnline, SingleExpertReproducesItsStream) {
  oracle::Rng rng(20);
  const Eigen::MatrixXd f = oracle::uniform_matrix(rng, 80, 1, -1, 1);
  const Vec y = oracle::normal_vector(rng, 80);
  for (const Rule& rule : {Rule::boa_adaptive(), Rule::boa_fixed(2.0), Rule::uniform()})
    EXPECT_EQ(run_online(rule, f, y, LossKind::huber(0.5)).mixture(), Vec(f.col(0)));
}

TEST(RunOnline, StepOutcomesAreConsistent) {
  oracle::Rng rng(21);
  const Eigen::MatrixXd f = oracle::uniform_matrix(rng, 100, 3, -1, 1);
  const Vec y = oracle::normal_vector(rng, 100);
  const LossKind loss = LossKind::huber(0.8);
  const auto traj = run_online(Rule::boa_adaptive(), f, y, loss);
  for (Eigen::Index t = 0; t < 100; ++t) {
    const auto& st = traj.steps[static_cast<std::size_t>(t)];
    EXPECT_DOUBLE_EQ(st.mixture_value, st.weights_before.dot(Vec(f.row(t).transpose())));
    EXPECT_EQ(st.mixture_loss, evaluate_loss(loss, y(t), st.mixture_value));
    for (Eigen::Index k = 0; k < 3; ++k) EXPECT_EQ(st.expert_losses(k), evaluate_loss(loss, y(t), f(t, k)));
  }
}

TEST(RunOnline, ConstantExpertsApproachOracle) {
  const Scenario s = constant_experts_scenario(2000);
  const auto traj = run_online(Rule::boa_adaptive(), s.experts, s.target, LossKind::squared());
  // oracle: w = (0.7, 0.3), loss 0
  EXPECT_LE(traj.average_mixture_loss(), 3 * std::log(2.0) / 2000);
  EXPECT_NEAR(traj.final_state.weights(1), 0.3, 1e-2);
}

TEST(RunOnline, NoLookAhead) {
  oracle::Rng rng(22);
  const Eigen::MatrixXd f = oracle::uniform_matrix(rng, 120, 4, -1, 1);
  const Vec y = oracle::normal_vector(rng, 120);
  const auto base = run_online(Rule::boa_adaptive(), f, y, LossKind::squared());
  for (int cut : {0, 1, 37, 118}) {
    Vec altered = y;
    altered.tail(119 - cut) = oracle::normal_vector(rng, 119 - cut, 10.0);
    const auto other = run_online(Rule::boa_adaptive(), f, altered, LossKind::squared());
    for (int t = 0; t <= cut; ++t) {
      const auto& a = base.steps[static_cast<std::size_t>(t)];
      const auto& b = other.steps[static_cast<std::size_t>(t)];
      EXPECT_EQ(a.weights_before, b.weights_before);
      EXPECT_EQ(a.mixture_value, b.mixture_value);
      EXPECT_EQ(a.weights_after, b.weights_after);
    }
    EXPECT_EQ(base.steps[static_cast<std::size_t>(cut + 1)].mixture_value,
              other.steps[static_cast<std::size_t>(cut + 1)].mixture_value);
  }
}

TEST(RunOnline, RejectsMismatchedAndMissingInputs) {
  const Eigen::MatrixXd f = Eigen::MatrixXd::Zero(10, 2);
  EXPECT_THROW(run_online(Rule::uniform(), f, Vec::Zero(9), LossKind::squared()), Error);
  Eigen::MatrixXd g = f;
  g(3, 1) = std::nan("");
  EXPECT_THROW(run_online(Rule::uniform(), g, Vec::Zero(10), LossKind::squared()), Error);
}

TEST(WarmStart, RejectsEmptySegment) {
  EXPECT_THROW(warm_start(Rule::boa_adaptive(), Eigen::MatrixXd(0, 2), Vec(0), LossKind::squared()), Error);
}

TEST(WarmStart, LengthOneWithEqualLossesIsFreshStateAfterOneStep) {
  const Eigen::MatrixXd f = Eigen::MatrixXd::Constant(1, 3, 0.2);
  const State s = warm_start(Rule::boa_adaptive(), f, Vec::Constant(1, 0.5), LossKind::squared());
  State fresh = State::initial(Rule::boa_adaptive(), 3);
  EXPECT_EQ(s.weights, fresh.weights);
  EXPECT_EQ(s.step, 1);
}

TEST(WarmStart, ContinuationIsBitExact) {
  oracle::Rng rng(23);
  for (const Rule& rule : {Rule::boa_adaptive(), Rule::boa_fixed(0.8), Rule::uniform()}) {
    for (int trial = 0; trial < 20; ++trial) {
      const Eigen::MatrixXd f = oracle::uniform_matrix(rng, 100, 4, -0.2, 0.2);
      const Vec y = oracle::normal_vector(rng, 100, 0.1);
      const int split = oracle::uniform_int(rng, 1, 99);
      const auto full = run_online(rule, f, y, LossKind::squared());
      const State mid = warm_start(rule, f.topRows(split), y.head(split), LossKind::squared());
      const auto rest = run_online(mid, f.bottomRows(100 - split), y.tail(100 - split), LossKind::squared());
      EXPECT_EQ(rest.weights_used(), full.weights_used().bottomRows(100 - split));
      EXPECT_EQ(rest.final_state, full.final_state);
    }
  }
}
