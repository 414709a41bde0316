#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "aggfolio/aggregation.hpp"
#include "aggfolio/error.hpp"
#include "aggfolio/loss.hpp"

namespace aggfolio {

inline constexpr double kMaxGridCandidates = 1e7;

/// C(n + k - 1, k - 1) as a double, enough to apply the capacity guard.
inline double simplex_grid_size(Index experts, Index cells) {
  double count = 1.0;
  for (Index i = 1; i < experts; ++i) count = count * static_cast<double>(cells + i) / static_cast<double>(i);
  return std::round(count);
}

/// Number of grid cells per unit, or a Parameter error when step does not divide 1.
inline Index grid_cells(double step) {
  require(step > 0.0 && step <= 1.0, ErrorKind::Parameter, "grid step must lie in (0, 1]");
  const double cells = 1.0 / step;
  const double rounded = std::round(cells);
  require(std::abs(rounded * step - 1.0) <= 1e-12, ErrorKind::Parameter,
          "grid step " + std::to_string(step) + " does not divide 1");
  return static_cast<Index>(rounded);
}

/// All weight vectors whose entries are multiples of `step`, as the columns of
/// a K x N matrix in ascending lexicographic order. Entries are i / cells,
/// so vertices and round fractions are exact.
template <typename Scalar = double>
Matrix<Scalar> simplex_grid(Index experts, double step) {
  require(experts >= 1, ErrorKind::Parameter, "empty expert set");
  const Index cells = grid_cells(step);
  const double count = simplex_grid_size(experts, cells);
  require(count <= kMaxGridCandidates, ErrorKind::Capacity,
          "simplex grid with K=" + std::to_string(experts) + " and step " + std::to_string(step) + " has " +
              std::to_string(static_cast<long long>(count)) + " points (limit 1e7); use fewer experts or a coarser step");

  Matrix<Scalar> grid(experts, static_cast<Index>(count));
  std::vector<Index> parts(static_cast<std::size_t>(experts), 0);
  parts.back() = cells;
  Index column = 0;
  while (true) {
    for (Index k = 0; k < experts; ++k)
      grid(k, column) = static_cast<Scalar>(parts[static_cast<std::size_t>(k)]) / static_cast<Scalar>(cells);
    ++column;
    // Lexicographic successor: bump the rightmost non-final part that still
    // has mass after it, and move the remaining tail mass to the last part.
    Index tail = 0;
    Index pivot = experts - 2;
    for (; pivot >= 0; --pivot) {
      tail += parts[static_cast<std::size_t>(pivot + 1)];
      if (tail > 0) break;
    }
    if (pivot < 0) break;
    ++parts[static_cast<std::size_t>(pivot)];
    std::fill(parts.begin() + pivot + 1, parts.end(), Index{0});
    parts.back() = tail - 1;
  }
  require(column == grid.cols(), ErrorKind::Invariant, "simplex grid enumeration count mismatch");
  return grid;
}

template <typename Scalar>
struct OracleResult {
  Vector<Scalar> best_weights;
  Scalar best_average_loss = 0;
  double grid_step = 0;
  Index best_expert = 0;
  Scalar best_expert_average_loss = 0;
};

/// Average loss of each column of `predictions` (T x N) against `target`.
template <typename Scalar, typename DerivedY>
Vector<Scalar> average_losses(const Matrix<Scalar>& predictions, const Eigen::MatrixBase<DerivedY>& target,
                              const LossKind& loss) {
  const Index T = predictions.rows();
  Vector<Scalar> out(predictions.cols());
  if (loss.tag() == LossKind::Tag::Squared) {
    out = (predictions.colwise() - target.template cast<Scalar>()).cwiseAbs2().colwise().sum().transpose() /
          static_cast<Scalar>(T);
    return out;
  }
  const Scalar xi = static_cast<Scalar>(loss.threshold());
  for (Index c = 0; c < predictions.cols(); ++c) {
    Scalar total = 0;
    for (Index t = 0; t < T; ++t) total += huber(static_cast<Scalar>(target(t)) - predictions(t, c), xi);
    out(c) = total / static_cast<Scalar>(T);
  }
  return out;
}

/// Best single expert in hindsight (lowest index wins ties).
template <typename DerivedF, typename DerivedY>
std::pair<Index, typename DerivedF::Scalar> best_fixed_expert(const Eigen::MatrixBase<DerivedF>& expert_streams,
                                                              const Eigen::MatrixBase<DerivedY>& target,
                                                              const LossKind& loss) {
  using Scalar = typename DerivedF::Scalar;
  require(expert_streams.rows() == target.size() && target.size() > 0, ErrorKind::Shape,
          "best_fixed_expert: streams and target must be aligned and nonempty");
  const Matrix<Scalar> streams = expert_streams;
  const Vector<Scalar> avg = average_losses<Scalar>(streams, target, loss);
  Index best = 0;
  for (Index k = 1; k < avg.size(); ++k)
    if (avg(k) < avg(best)) best = k;
  return {best, avg(best)};
}

/// Best expert when the per-expert losses themselves are given (T x K).
template <typename Derived>
std::pair<Index, typename Derived::Scalar> best_fixed_expert_from_losses(const Eigen::MatrixBase<Derived>& losses) {
  require(losses.rows() > 0 && losses.cols() > 0, ErrorKind::Shape, "empty loss matrix");
  const auto avg = (losses.colwise().sum() / static_cast<typename Derived::Scalar>(losses.rows())).eval();
  Index best = 0;
  for (Index k = 1; k < avg.size(); ++k)
    if (avg(k) < avg(best)) best = k;
  return {best, avg(best)};
}

/// Grid search for the best fixed convex combination. Candidates are scored
/// in blocks (one GEMM per block); blocks run on up to `threads` threads and
/// are reduced in grid order, so ties always go to the lexicographically
/// smallest weight vector.
template <typename DerivedF, typename DerivedY>
OracleResult<typename DerivedF::Scalar> best_fixed_mixture(const Eigen::MatrixBase<DerivedF>& expert_streams,
                                                           const Eigen::MatrixBase<DerivedY>& target,
                                                           const LossKind& loss, double step,
                                                           unsigned threads = 0) {
  using Scalar = typename DerivedF::Scalar;
  const Index T = expert_streams.rows();
  const Index K = expert_streams.cols();
  require(T > 0 && K > 0 && target.size() == T, ErrorKind::Shape,
          "best_fixed_mixture: streams and target must be aligned and nonempty");
  const Matrix<Scalar> streams = expert_streams;
  const Vector<Scalar> y = target.template cast<Scalar>();
  const Matrix<Scalar> grid = simplex_grid<Scalar>(K, step);

  constexpr Index kBlock = 512;
  const Index n = grid.cols();
  const Index blocks = (n + kBlock - 1) / kBlock;
  std::vector<Index> block_best(static_cast<std::size_t>(blocks), 0);
  std::vector<Scalar> block_loss(static_cast<std::size_t>(blocks), std::numeric_limits<Scalar>::infinity());

  auto score = [&](Index b) {
    const Index first = b * kBlock;
    const Index width = std::min(kBlock, n - first);
    const Matrix<Scalar> predictions = streams * grid.middleCols(first, width);
    const Vector<Scalar> avg = average_losses<Scalar>(predictions, y, loss);
    Index best = 0;
    for (Index c = 1; c < width; ++c)
      if (avg(c) < avg(best)) best = c;
    block_best[static_cast<std::size_t>(b)] = first + best;
    block_loss[static_cast<std::size_t>(b)] = avg(best);
  };

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  const Index workers = std::min<Index>(static_cast<Index>(threads), blocks);
  if (workers <= 1) {
    for (Index b = 0; b < blocks; ++b) score(b);
  } else {
    std::vector<std::thread> pool;
    for (Index w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (Index b = w; b < blocks; b += workers) score(b);
      });
    for (auto& th : pool) th.join();
  }

  OracleResult<Scalar> result;
  Index winner = 0;
  for (Index b = 0; b < blocks; ++b)
    if (block_loss[static_cast<std::size_t>(b)] < block_loss[static_cast<std::size_t>(winner)]) winner = b;
  result.best_weights = grid.col(block_best[static_cast<std::size_t>(winner)]);
  result.best_average_loss = block_loss[static_cast<std::size_t>(winner)];
  result.grid_step = step;
  std::tie(result.best_expert, result.best_expert_average_loss) = best_fixed_expert(streams, y, loss);
  return result;
}

struct Regret {
  double value = 0;
  // Set when the mixture beat the grid oracle, which only a coarse grid allows.
  bool below_oracle = false;
};

/// R_T = average mixture loss - oracle average loss.
inline Regret regret(double average_mixture_loss, double oracle_average_loss) {
  const double r = average_mixture_loss - oracle_average_loss;
  return {r, r < 0.0};
}

/// Default grid step for the oracle at a given expert count: 0.01 up to four
/// experts, 0.1 up to seven. Larger sets are refused.
inline double default_grid_step(Index experts) {
  if (experts <= 4) return 0.01;
  if (experts <= 7) return 0.1;
  fail(ErrorKind::Capacity, "grid oracle supports at most 7 experts; got " + std::to_string(experts));
}

}  // namespace aggfolio
