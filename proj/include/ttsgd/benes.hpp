#pragma once

#include <array>
#include <cmath>
#include <numbers>

#include "ttsgd/errors.hpp"

namespace ttsgd {

/// Beneš signal dx = mu sigma tanh(mu x / sigma) dt + sigma dv observed through
/// dy = c x dt + dw with Var(dw) = r(o) dt, r(o) = tau2 + (o - o0)^2.
struct BenesModel {
  double mu = 3.0;
  double sigma = 2.0;
  double c = 0.7;
  double tau2 = 2.0;
  double o0 = 4.0;
  double o = 4.0;

  double r() const noexcept { return tau2 + (o - o0) * (o - o0); }
  double dr_do() const noexcept { return 2.0 * (o - o0); }
  double signal_drift(double x) const noexcept { return mu * sigma * std::tanh(mu / sigma * x); }

  void validate() const {
    if (!(sigma > 0.0)) throw DomainError("Beneš model requires sigma > 0");
    if (!(tau2 > 0.0)) throw DomainError("Beneš model requires tau2 > 0");
  }
};

/// Coordinates of the Beneš tangent filters, in storage order.
enum BenesCoord : std::size_t { kMu = 0, kSigma = 1, kC = 2, kO = 3 };
inline constexpr std::size_t kBenesCoords = 4;

/// Sufficient statistics (m, P) and their derivatives with respect to mu, sigma, c, o.
struct BenesFilterState {
  double m = 0.0;
  double P = 0.0;
  std::array<double, kBenesCoords> m_grad{};
  std::array<double, kBenesCoords> P_grad{};
};

inline void require_finite_benes(const BenesFilterState& s) {
  if (!std::isfinite(s.m)) throw NumericBlowup("benes filter m", 0);
  if (!std::isfinite(s.P)) throw NumericBlowup("benes filter P", 1);
  for (std::size_t i = 0; i < kBenesCoords; ++i) {
    if (!std::isfinite(s.m_grad[i])) throw NumericBlowup("benes tangent m", i);
    if (!std::isfinite(s.P_grad[i])) throw NumericBlowup("benes tangent P", i);
  }
}

/// One Euler step of
///   dm = -c^2 r^-1 P m dt + c r^-1 P dy,   dP = (sigma^2 - c^2 r^-1 P^2) dt
/// together with the formally differentiated system for every coordinate in BenesCoord.
inline BenesFilterState benes_step(const BenesModel& mdl, const BenesFilterState& s, double dy, double dt) {
  if (!(dt > 0.0)) throw DomainError("benes_step requires dt > 0");
  const double r = mdl.r();
  const double a = mdl.c * mdl.c / r;  // c^2 r^-1
  const double b = mdl.c / r;          // c r^-1

  // Partial derivatives of (a, b, sigma^2) per coordinate.
  std::array<double, kBenesCoords> da{}, db{}, dq{};
  dq[kSigma] = 2.0 * mdl.sigma;
  da[kC] = 2.0 * mdl.c / r;
  db[kC] = 1.0 / r;
  da[kO] = -a / r * mdl.dr_do();
  db[kO] = -b / r * mdl.dr_do();

  BenesFilterState n = s;
  n.m = s.m + (-a * s.P * s.m) * dt + b * s.P * dy;
  n.P = s.P + (mdl.sigma * mdl.sigma - a * s.P * s.P) * dt;
  for (std::size_t i = 0; i < kBenesCoords; ++i) {
    const double mp = s.m_grad[i];
    const double Pp = s.P_grad[i];
    n.m_grad[i] = mp - (da[i] * s.P * s.m + a * (Pp * s.m + s.P * mp)) * dt + (db[i] * s.P + b * Pp) * dy;
    n.P_grad[i] = Pp + (dq[i] - da[i] * s.P * s.P - 2.0 * a * s.P * Pp) * dt;
  }
  require_finite_benes(n);
  return n;
}

/// Tangent components of benes_step(...) only; the (m, P) entries of the result are the
/// post-step statistics as well, since the tangent system is driven by pre-step values.
inline BenesFilterState benes_tangent_step(const BenesModel& mdl, const BenesFilterState& s, double dy, double dt) {
  return benes_step(mdl, s, dy, dt);
}

/// Posterior mean and variance with derivatives per BenesCoord.
struct BenesMoments {
  double x_hat = 0.0;
  double Sigma_hat = 0.0;
  std::array<double, kBenesCoords> x_hat_grad{};
  std::array<double, kBenesCoords> Sigma_hat_grad{};
};

/// x_hat = m + u P tanh(u m),  Sigma_hat = P + u^2 (1 - tanh^2(u m)) P^2,  u = mu / sigma.
inline BenesMoments benes_posterior_moments(const BenesModel& mdl, const BenesFilterState& s) {
  const double u = mdl.mu / mdl.sigma;
  const double z = u * s.m;
  const double th = std::tanh(z);
  const double s2 = 1.0 - th * th;

  std::array<double, kBenesCoords> du{};
  du[kMu] = 1.0 / mdl.sigma;
  du[kSigma] = -mdl.mu / (mdl.sigma * mdl.sigma);

  BenesMoments out;
  out.x_hat = s.m + u * s.P * th;
  out.Sigma_hat = s.P + u * u * s2 * s.P * s.P;
  for (std::size_t i = 0; i < kBenesCoords; ++i) {
    const double mp = s.m_grad[i];
    const double Pp = s.P_grad[i];
    const double zp = du[i] * s.m + u * mp;
    const double thp = s2 * zp;
    const double s2p = -2.0 * th * thp;
    out.x_hat_grad[i] = mp + du[i] * s.P * th + u * Pp * th + u * s.P * thp;
    out.Sigma_hat_grad[i] =
        Pp + 2.0 * u * du[i] * s2 * s.P * s.P + u * u * s2p * s.P * s.P + 2.0 * u * u * s2 * s.P * Pp;
  }
  return out;
}

/// Two-component representation of the Beneš posterior: weights w+-, means A+- /(2B), variance 1/(2B).
struct BenesMixture {
  double w_plus = 0.5, w_minus = 0.5;
  double mean_plus = 0.0, mean_minus = 0.0;
  double variance = 0.0;
};

/// Mixture form of the posterior built from (m, P); diagnostic only.
inline BenesMixture benes_mixture(const BenesModel& mdl, const BenesFilterState& s) {
  if (!(s.P > 0.0)) throw DomainError("Beneš mixture requires P > 0 (t > 0)");
  const double u = mdl.mu / mdl.sigma;
  // pi_t is proportional to cosh(u x) N(x; m, P): components N(m +- u P, P), weights ~ exp(+-u m).
  BenesMixture mix;
  mix.variance = s.P;
  mix.mean_plus = s.m + u * s.P;
  mix.mean_minus = s.m - u * s.P;
  // w+ = e^{u m} / (e^{u m} + e^{-u m}), computed without overflow.
  mix.w_plus = 0.5 * (1.0 + std::tanh(u * s.m));
  mix.w_minus = 0.5 * (1.0 - std::tanh(u * s.m));
  return mix;
}

/// Posterior density at x.
inline double benes_mixture_density(const BenesModel& mdl, const BenesFilterState& s, double x) {
  const BenesMixture mix = benes_mixture(mdl, s);
  const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi * mix.variance);
  const double gp = std::exp(-0.5 * (x - mix.mean_plus) * (x - mix.mean_plus) / mix.variance);
  const double gm = std::exp(-0.5 * (x - mix.mean_minus) * (x - mix.mean_minus) / mix.variance);
  return norm * (mix.w_plus * gp + mix.w_minus * gm);
}

}  // namespace ttsgd
