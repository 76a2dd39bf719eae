#pragma once

#include <Eigen/LU>

#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "ttsgd/errors.hpp"
#include "ttsgd/linalg.hpp"
#include "ttsgd/schedule.hpp"

namespace ttsgd {

/// Closed coordinate box [lo, hi].
struct Box {
  Vec lo, hi;

  static Box unbounded(Eigen::Index n) {
    return {Vec::Constant(n, -std::numeric_limits<double>::infinity()),
            Vec::Constant(n, std::numeric_limits<double>::infinity())};
  }
  Eigen::Index size() const noexcept { return lo.size(); }
  bool contains(Eigen::Index i, double v) const noexcept { return v >= lo(i) && v <= hi(i); }
  bool contains(const Vec& v) const {
    for (Eigen::Index i = 0; i < v.size(); ++i)
      if (!contains(i, v(i))) return false;
    return true;
  }
  void validate(const std::string& what) const {
    require_size(hi.size(), lo.size(), what + " upper bounds");
    for (Eigen::Index i = 0; i < lo.size(); ++i)
      if (!(lo(i) < hi(i))) throw ConfigError(what + " box has empty interior in coordinate " + std::to_string(i));
  }
};

/// Admissible sets for the slow (theta) and fast (sensor) iterates.
struct ProjectionSet {
  Box slow;
  Box fast;
};

/// Iterates with their time-averages (trapezoid rule on the step grid).
struct IterateState {
  Vec alpha;
  Vec beta;
  double t = 0.0;
  Vec avg_alpha;
  Vec avg_beta;

  static IterateState start(Vec alpha0, Vec beta0, double t0 = 0.0) {
    IterateState s;
    s.avg_alpha = alpha0;
    s.avg_beta = beta0;
    s.alpha = std::move(alpha0);
    s.beta = std::move(beta0);
    s.t = t0;
    return s;
  }
};

/// Applies the increments coordinate by coordinate, dropping any coordinate increment that
/// would leave its box; the remaining coordinates move normally.
inline IterateState project(const IterateState& s, const ProjectionSet& sets, const Vec& d_alpha, const Vec& d_beta) {
  require_size(d_alpha.size(), s.alpha.size(), "slow increment");
  require_size(d_beta.size(), s.beta.size(), "fast increment");
  IterateState out = s;
  auto apply = [](Vec& x, const Vec& dx, const Box& box) {
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double proposed = x(i) + dx(i);
      if (box.size() == 0 || box.contains(i, proposed)) x(i) = proposed;
    }
  };
  apply(out.alpha, d_alpha, sets.slow);
  apply(out.beta, d_beta, sets.fast);
  return out;
}

/// Moves the iterates to (alpha_next, beta_next), advances time by dt and updates the
/// running means (1/t) int_0^t iterate ds with the trapezoid rule.
inline IterateState polyak_ruppert_update(const IterateState& before, const Vec& alpha_next, const Vec& beta_next,
                                          double dt) {
  IterateState out = before;
  const double t_new = before.t + dt;
  if (!(t_new > 0.0)) throw DomainError("averaging requires t > 0 after the update");
  auto upd = [&](const Vec& avg, const Vec& prev, const Vec& next) -> Vec {
    return (avg * before.t + 0.5 * dt * (prev + next)) / t_new;
  };
  out.avg_alpha = upd(before.avg_alpha, before.alpha, alpha_next);
  out.avg_beta = upd(before.avg_beta, before.beta, beta_next);
  out.alpha = alpha_next;
  out.beta = beta_next;
  out.t = t_new;
  return out;
}

/// Additive-noise two-timescale step:
///   alpha <- alpha - gamma_slow(t) [f dt + dxi1],   beta <- beta - gamma_fast(t) [g dt + dxi2],
/// followed by projection (when sets are non-empty) and averaging.
inline IterateState generic_tt_step(const IterateState& s, const Vec& drift_f, const Vec& drift_g, const Vec& dxi1,
                                    const Vec& dxi2, const ScheduleSet& slow, const ScheduleSet& fast, double dt,
                                    const ProjectionSet& sets = {}) {
  require_size(drift_f.size(), s.alpha.size(), "slow drift");
  require_size(drift_g.size(), s.beta.size(), "fast drift");
  require_size(static_cast<Eigen::Index>(slow.size()), s.alpha.size(), "slow schedules");
  require_size(static_cast<Eigen::Index>(fast.size()), s.beta.size(), "fast schedules");
  const Vec d_alpha = -slow(s.t).cwiseProduct(drift_f * dt + dxi1);
  const Vec d_beta = -fast(s.t).cwiseProduct(drift_g * dt + dxi2);
  require_finite(d_alpha, "slow increment");
  require_finite(d_beta, "fast increment");
  const IterateState moved = project(s, sets, d_alpha, d_beta);
  return polyak_ruppert_update(s, moved.alpha, moved.beta, dt);
}

/// Total-derivative approximation grad_a f - H_ab H_bb^{-1} grad_b f, where H_ab is
/// the n_alpha x n_beta mixed Hessian of the inner objective and H_bb its beta-Hessian.
inline Vec surrogate_gradient(const Vec& grad_alpha_f, const Vec& grad_beta_f, const Mat& hess_ab_g,
                              const Mat& hess_bb_g, double min_rcond = 1e-12) {
  require_shape(hess_bb_g, grad_beta_f.size(), grad_beta_f.size(), "inner beta-Hessian");
  require_shape(hess_ab_g, grad_alpha_f.size(), grad_beta_f.size(), "inner mixed Hessian");
  if (grad_beta_f.size() == 0) return grad_alpha_f;
  Eigen::PartialPivLU<Mat> lu(hess_bb_g);
  const double rc = lu.rcond();
  if (!(rc > min_rcond))
    throw ConditioningError("inner Hessian is singular or ill-conditioned (rcond " + std::to_string(rc) + ")");
  return grad_alpha_f - hess_ab_g * lu.solve(grad_beta_f);
}

/// Two-timescale descent where the gradient estimates are functions of a diffusion X that
/// the iterates control:
///   dX     = Phi(a, b, X) dt + Psi(a, b, X) dB
///   d alpha = -gamma_slow [F(a, b, X) dt + Z(a, b, X) dB]
///   d beta  = -gamma_fast G(a, b, X) dt
struct MarkovianOracle {
  std::size_t aug_dim = 0;
  std::size_t noise_dim = 0;
  std::function<Vec(const Vec&, const Vec&, const Vec&)> slow_drift;
  std::function<Vec(const Vec&, const Vec&, const Vec&)> fast_drift;
  std::function<Mat(const Vec&, const Vec&, const Vec&)> slow_noise;
  std::function<Vec(const Vec&, const Vec&, const Vec&)> aug_drift;
  std::function<Mat(const Vec&, const Vec&, const Vec&)> aug_diffusion;
};

/// One Euler step of the Markovian-dynamics variant; every term uses beginning-of-step values.
inline IterateState markovian_tt_step(const IterateState& s, Vec& X, const MarkovianOracle& oracle, const Vec& dB,
                                      const ScheduleSet& slow, const ScheduleSet& fast, double dt,
                                      const ProjectionSet& sets = {}) {
  require_size(X.size(), static_cast<Eigen::Index>(oracle.aug_dim), "augmented state");
  require_size(dB.size(), static_cast<Eigen::Index>(oracle.noise_dim), "driving noise");
  const Vec F = oracle.slow_drift(s.alpha, s.beta, X);
  const Vec G = oracle.fast_drift(s.alpha, s.beta, X);
  Vec dxi1 = Vec::Zero(s.alpha.size());
  if (oracle.slow_noise) dxi1 = oracle.slow_noise(s.alpha, s.beta, X) * dB;

  Vec X_next = X + oracle.aug_drift(s.alpha, s.beta, X) * dt;
  X_next.noalias() += oracle.aug_diffusion(s.alpha, s.beta, X) * dB;
  require_finite(X_next, "augmented state");

  IterateState next = generic_tt_step(s, F, G, dxi1, Vec::Zero(s.beta.size()), slow, fast, dt, sets);
  X = std::move(X_next);
  return next;
}

}  // namespace ttsgd
