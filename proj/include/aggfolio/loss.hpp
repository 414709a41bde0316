#pragma once

#include <Eigen/Core>
#include <cmath>
#include <string>

#include "aggfolio/error.hpp"

namespace aggfolio {

/// Per-observation loss. Time averaging is left to callers so the same kernels
/// serve stock-level and portfolio-level losses.
class LossKind {
 public:
  enum class Tag { Squared, Huber };

  static LossKind squared() { return LossKind(Tag::Squared, 0.0); }

  static LossKind huber(double threshold) {
    require(threshold > 0.0 && std::isfinite(threshold), ErrorKind::Parameter,
            "huber threshold must be positive, got " + std::to_string(threshold));
    return LossKind(Tag::Huber, threshold);
  }

  Tag tag() const { return tag_; }
  double threshold() const { return threshold_; }

  bool operator==(const LossKind&) const = default;

 private:
  LossKind(Tag tag, double threshold) : tag_(tag), threshold_(threshold) {}

  Tag tag_;
  double threshold_;
};

template <typename Scalar>
Scalar squared_loss(Scalar y, Scalar yhat) {
  require(std::isfinite(y) && std::isfinite(yhat), ErrorKind::Domain, "squared_loss: non-finite input");
  const Scalar residual = y - yhat;
  return residual * residual;
}

/// x^2 inside [-xi, xi], 2 xi |x| - xi^2 outside. C^1 and convex in x.
template <typename Scalar>
Scalar huber(Scalar residual, Scalar xi) {
  require(xi > Scalar(0), ErrorKind::Parameter, "huber threshold must be positive");
  const Scalar a = std::abs(residual);
  if (a <= xi) return residual * residual;
  return Scalar(2) * xi * a - xi * xi;
}

template <typename Scalar>
Scalar huber_loss(Scalar y, Scalar yhat, Scalar xi) {
  require(std::isfinite(y) && std::isfinite(yhat), ErrorKind::Domain, "huber_loss: non-finite input");
  return huber(y - yhat, xi);
}

/// Derivative of huber() with respect to the residual.
template <typename Scalar>
Scalar huber_gradient(Scalar residual, Scalar xi) {
  require(xi > Scalar(0), ErrorKind::Parameter, "huber threshold must be positive");
  if (std::abs(residual) <= xi) return Scalar(2) * residual;
  return residual > Scalar(0) ? Scalar(2) * xi : Scalar(-2) * xi;
}

template <typename Scalar>
Scalar evaluate_loss(const LossKind& loss, Scalar y, Scalar yhat) {
  if (loss.tag() == LossKind::Tag::Huber) return huber_loss(y, yhat, static_cast<Scalar>(loss.threshold()));
  return squared_loss(y, yhat);
}

/// Derivative of the loss with respect to the prediction yhat.
template <typename Scalar>
Scalar loss_gradient(const LossKind& loss, Scalar y, Scalar yhat) {
  require(std::isfinite(y) && std::isfinite(yhat), ErrorKind::Domain, "loss_gradient: non-finite input");
  if (loss.tag() == LossKind::Tag::Huber) return -huber_gradient(y - yhat, static_cast<Scalar>(loss.threshold()));
  return Scalar(2) * (yhat - y);
}

/// Out-of-sample R^2 against a zero forecast: 1 - sum (y - yhat)^2 / sum y^2.
template <typename DerivedY, typename DerivedF>
typename DerivedY::Scalar predictive_r2(const Eigen::MatrixBase<DerivedY>& y, const Eigen::MatrixBase<DerivedF>& yhat) {
  using Scalar = typename DerivedY::Scalar;
  require(y.size() == yhat.size() && y.size() > 0, ErrorKind::Shape, "predictive_r2: sequences must share a nonzero length");
  const Scalar denom = y.squaredNorm();
  require(denom > Scalar(0), ErrorKind::Domain, "predictive_r2: sum of squared targets is zero");
  return Scalar(1) - (y - yhat).squaredNorm() / denom;
}

}  // namespace aggfolio
