#pragma once

#include "ttsgd/kalman_bucy.hpp"

namespace ttsgd {

/// One-dimensional linear-Gaussian model
///   dx = -theta x dt + sqrt(q) dv,   dy = c x dt + dw,   Var(dw) = (tau2 + (o - o0)^2) dt,
/// with a single parameter theta and a single scalar sensor o.
/// tau2 = 0 gives the pure quadratic sensor-noise law; tau2 > 0 keeps R invertible at o = o0.
struct ScalarLinearParams {
  double q = 1.0;
  double c = 1.0;
  double tau2 = 1.0;
  double o0 = 0.0;

  double r(double o) const noexcept { return tau2 + (o - o0) * (o - o0); }
  double dr(double o) const noexcept { return 2.0 * (o - o0); }
};

inline LinearGaussianModel scalar_linear_model(const ScalarLinearParams& p, double theta, double o) {
  LinearGaussianModel m;
  m.A = Mat::Constant(1, 1, -theta);
  m.Q = Mat::Constant(1, 1, p.q);
  m.C = Mat::Constant(1, 1, p.c);
  m.R = Mat::Constant(1, 1, p.r(o));
  m.H = Mat::Identity(1, 1);
  ModelDerivative d_theta;
  d_theta.dA = Mat::Constant(1, 1, -1.0);
  m.theta_derivs = {d_theta};
  ModelDerivative d_o;
  d_o.dR = Mat::Constant(1, 1, p.dr(o));
  m.sensor_derivs = {d_o};
  return m;
}

/// Closed-form stationary filter variance of the scalar model: the positive root of
/// q - 2 theta S - c^2 S^2 / r = 0.
inline double scalar_steady_variance(double theta, double q, double c, double r) {
  if (c == 0.0) return q / (2.0 * theta);
  const double k = c * c / r;
  return (-theta + std::sqrt(theta * theta + k * q)) / k;
}

}  // namespace ttsgd
