#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>
#include <vector>

#include "ttsgd/errors.hpp"
#include "ttsgd/linalg.hpp"

namespace ttsgd {

/// Partial derivatives of (A, Q, C, R) with respect to one scalar coordinate.
/// An empty matrix stands for an identically zero block.
struct ModelDerivative {
  Mat dA, dQ, dC, dR;
};

/// dx = A x dt + dv,  dy = C x dt + dw,  E[dv dv'] = Q dt,  E[dw dw'] = R dt.
/// `theta_derivs` and `sensor_derivs` hold one entry per parameter / per scalar sensor coordinate.
/// H weights the filter covariance in the sensor objective Tr[H Sigma].
struct LinearGaussianModel {
  Mat A, Q, C, R, H;
  std::vector<ModelDerivative> theta_derivs;
  std::vector<ModelDerivative> sensor_derivs;

  Eigen::Index n_x() const noexcept { return A.rows(); }
  Eigen::Index n_y() const noexcept { return C.rows(); }
  std::size_t n_theta() const noexcept { return theta_derivs.size(); }
  std::size_t n_sensor() const noexcept { return sensor_derivs.size(); }

  void validate() const {
    const auto n = n_x();
    const auto m = n_y();
    require_shape(A, n, n, "A");
    require_shape(Q, n, n, "Q");
    require_shape(C, m, n, "C");
    require_shape(R, m, m, "R");
    if (H.size() != 0) require_shape(H, n, n, "H");
    auto check = [&](const std::vector<ModelDerivative>& ds, const char* family) {
      for (std::size_t i = 0; i < ds.size(); ++i) {
        const std::string tag = std::string(family) + "[" + std::to_string(i) + "]";
        if (ds[i].dA.size()) require_shape(ds[i].dA, n, n, "dA " + tag);
        if (ds[i].dQ.size()) require_shape(ds[i].dQ, n, n, "dQ " + tag);
        if (ds[i].dC.size()) require_shape(ds[i].dC, m, n, "dC " + tag);
        if (ds[i].dR.size()) require_shape(ds[i].dR, m, m, "dR " + tag);
      }
    };
    check(theta_derivs, "theta");
    check(sensor_derivs, "sensor");
  }
};

struct KbState {
  Vec x_hat;
  Mat Sigma;
};

/// Derivatives of the filter mean and covariance; column / slice p belongs to coordinate p.
struct KbTangent {
  Mat x_hat_grad;
  std::vector<Mat> Sigma_grad;

  static KbTangent zeros(Eigen::Index n_x, std::size_t n_param) {
    KbTangent t;
    t.x_hat_grad = Mat::Zero(n_x, static_cast<Eigen::Index>(n_param));
    t.Sigma_grad.assign(n_param, Mat::Zero(n_x, n_x));
    return t;
  }
  std::size_t n_param() const noexcept { return Sigma_grad.size(); }
};

enum class Wrt { parameters, sensors };

inline const std::vector<ModelDerivative>& derivs_for(const LinearGaussianModel& m, Wrt wrt) {
  return wrt == Wrt::parameters ? m.theta_derivs : m.sensor_derivs;
}

namespace detail {

// Quantities shared by the filter step and every tangent step, all at pre-step values.
struct KbStepContext {
  Mat R_inv;
  Mat gain;   // Sigma C' R^{-1}
  Vec innov;  // dy - C x_hat dt

  KbStepContext(const LinearGaussianModel& model, const KbState& state, const Vec& dy, double dt) {
    require_size(dy.size(), model.n_y(), "observation increment");
    require_size(state.x_hat.size(), model.n_x(), "filter mean");
    require_shape(state.Sigma, model.n_x(), model.n_x(), "filter covariance");
    Eigen::LLT<Mat> llt(model.R);
    if (llt.info() != Eigen::Success) throw ConfigError("observation covariance R is not positive definite");
    R_inv = llt.solve(Mat::Identity(model.n_y(), model.n_y()));
    gain.noalias() = state.Sigma * model.C.transpose() * R_inv;
    innov = dy;
    innov.noalias() -= model.C * state.x_hat * dt;
  }
};

inline void advance_tangents(const LinearGaussianModel& model, const KbState& state, const KbStepContext& ctx,
                             KbTangent& tangent, Wrt wrt, double dt) {
  const auto& ds = derivs_for(model, wrt);
  if (tangent.n_param() != ds.size() || tangent.x_hat_grad.cols() != static_cast<Eigen::Index>(ds.size()) ||
      tangent.x_hat_grad.rows() != model.n_x())
    throw DimensionError("tangent filter does not match the model's derivative count");

  const Mat& S = state.Sigma;
  const Mat& W = ctx.gain;
  const Mat Ct = model.C.transpose();
  Mat drift_S(model.n_x(), model.n_x());
  Mat tmp;
  for (std::size_t p = 0; p < ds.size(); ++p) {
    const ModelDerivative& d = ds[p];
    const auto col = static_cast<Eigen::Index>(p);
    const Vec xp = tangent.x_hat_grad.col(col);
    const Mat& Sp = tangent.Sigma_grad[p];

    // Gain derivative: Sp C' R^-1 + S dC' R^-1 - W dR R^-1.
    Mat dgain = Sp * Ct * ctx.R_inv;
    if (d.dC.size()) dgain.noalias() += S * d.dC.transpose() * ctx.R_inv;
    if (d.dR.size()) dgain.noalias() -= W * d.dR * ctx.R_inv;

    Vec dxp = model.A * xp * dt;
    if (d.dA.size()) dxp.noalias() += d.dA * state.x_hat * dt;
    dxp.noalias() += dgain * ctx.innov;
    Vec dCx = model.C * xp;
    if (d.dC.size()) dCx.noalias() += d.dC * state.x_hat;
    dxp.noalias() -= W * dCx * dt;

    // Covariance derivative drift; each bracketed pair is X + X'.
    tmp.noalias() = model.A * Sp;
    if (d.dA.size()) tmp.noalias() += d.dA * S;
    tmp.noalias() -= Sp * Ct * W.transpose();
    if (d.dC.size()) tmp.noalias() -= S * d.dC.transpose() * W.transpose();
    drift_S = tmp + tmp.transpose();
    if (d.dQ.size()) drift_S += d.dQ;
    if (d.dR.size()) drift_S.noalias() += W * d.dR * W.transpose();

    tangent.x_hat_grad.col(col) += dxp;
    tangent.Sigma_grad[p] += drift_S * dt;
    symmetrize(tangent.Sigma_grad[p]);
  }
  require_finite(tangent.x_hat_grad, "kalman-bucy tangent mean");
}

}  // namespace detail

/// Smallest-eigenvalue check; throws DomainError when Sigma is not PSD within tol.
inline void check_psd(const Mat& Sigma, double tol = 1e-10) {
  Eigen::SelfAdjointEigenSolver<Mat> es(Sigma, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  if (lo < -tol)
    throw DomainError("filter covariance lost positive semidefiniteness (min eigenvalue " + std::to_string(lo) +
                      "); reduce dt");
}

/// One Euler step of the Kalman-Bucy mean/covariance SDE.
inline KbState kb_step(const LinearGaussianModel& model, const KbState& state, const Vec& dy, double dt) {
  const detail::KbStepContext ctx(model, state, dy, dt);
  KbState next;
  next.x_hat = state.x_hat;
  next.x_hat.noalias() += model.A * state.x_hat * dt;
  next.x_hat.noalias() += ctx.gain * ctx.innov;

  Mat AS = model.A * state.Sigma;
  Mat drift = AS + AS.transpose() + model.Q;
  drift.noalias() -= ctx.gain * model.C * state.Sigma;
  next.Sigma = state.Sigma + drift * dt;
  symmetrize(next.Sigma);

  require_finite(next.x_hat, "kalman-bucy mean");
  require_finite(next.Sigma, "kalman-bucy covariance");
  for (Eigen::Index i = 0; i < next.Sigma.rows(); ++i)
    if (next.Sigma(i, i) < -1e-10) throw DomainError("filter covariance has a negative diagonal entry; reduce dt");
  return next;
}

/// Advances the tangent filter over the same step as kb_step(model, state, dy, dt).
inline KbTangent kb_tangent_step(const LinearGaussianModel& model, const KbState& state, const KbTangent& tangent,
                                 const Vec& dy, double dt, Wrt wrt) {
  const detail::KbStepContext ctx(model, state, dy, dt);
  KbTangent next = tangent;
  detail::advance_tangents(model, state, ctx, next, wrt, dt);
  return next;
}

/// Filter plus both tangent families advanced from shared pre-step quantities.
struct KbBundle {
  KbState state;
  KbTangent d_theta;
  KbTangent d_sensor;

  static KbBundle init(const LinearGaussianModel& model, Vec x_hat0, Mat Sigma0) {
    return {KbState{std::move(x_hat0), std::move(Sigma0)}, KbTangent::zeros(model.n_x(), model.n_theta()),
            KbTangent::zeros(model.n_x(), model.n_sensor())};
  }

  void step(const LinearGaussianModel& model, const Vec& dy, double dt) {
    const detail::KbStepContext ctx(model, state, dy, dt);
    detail::advance_tangents(model, state, ctx, d_theta, Wrt::parameters, dt);
    detail::advance_tangents(model, state, ctx, d_sensor, Wrt::sensors, dt);
    Vec x = state.x_hat;
    x.noalias() += model.A * state.x_hat * dt;
    x.noalias() += ctx.gain * ctx.innov;
    Mat AS = model.A * state.Sigma;
    Mat drift = AS + AS.transpose() + model.Q;
    drift.noalias() -= ctx.gain * model.C * state.Sigma;
    state.Sigma += drift * dt;
    symmetrize(state.Sigma);
    state.x_hat = std::move(x);
    require_finite(state.x_hat, "kalman-bucy mean");
    require_finite(state.Sigma, "kalman-bucy covariance");
    for (Eigen::Index i = 0; i < state.Sigma.rows(); ++i)
      if (state.Sigma(i, i) < -1e-10) throw DomainError("filter covariance has a negative diagonal entry; reduce dt");
  }
};

// Readouts of the conditional expectations consumed by the algorithms.

/// E[C x | F_t^Y] = C x_hat
inline Vec psi_C(const LinearGaussianModel& model, const KbState& s) { return model.C * s.x_hat; }

/// Tr[H Sigma]
inline double psi_j(const LinearGaussianModel& model, const KbState& s) {
  if (model.H.size() == 0) return 0.0;
  return (model.H.cwiseProduct(s.Sigma)).sum();
}

/// n_y x n_param matrix: column p is dC_p x_hat + C x_hat_p.
inline Mat psi_C_grad(const LinearGaussianModel& model, const KbState& s, const KbTangent& t, Wrt wrt) {
  const auto& ds = derivs_for(model, wrt);
  Mat out = model.C * t.x_hat_grad;
  for (std::size_t p = 0; p < ds.size(); ++p)
    if (ds[p].dC.size()) out.col(static_cast<Eigen::Index>(p)).noalias() += ds[p].dC * s.x_hat;
  return out;
}

/// Tr[H Sigma_p] per coordinate (H does not depend on theta or sensors).
inline Vec psi_j_grad(const LinearGaussianModel& model, const KbTangent& t) {
  Vec out = Vec::Zero(static_cast<Eigen::Index>(t.n_param()));
  if (model.H.size() == 0) return out;
  for (std::size_t p = 0; p < t.n_param(); ++p)
    out(static_cast<Eigen::Index>(p)) = model.H.cwiseProduct(t.Sigma_grad[p]).sum();
  return out;
}

inline Mat riccati_rhs(const LinearGaussianModel& model, const Mat& Sigma, const Mat& CtRinvC) {
  Mat AS = model.A * Sigma;
  Mat out = AS + AS.transpose() + model.Q;
  out.noalias() -= Sigma * CtRinvC * Sigma;
  return out;
}

struct RiccatiOptions {
  double tolerance = 1e-9;   // Frobenius norm of the residual
  double max_time = 1e5;
  double max_dt = 0.05;
};

/// Steady state of the Riccati ODE, integrated from Sigma = 0 until the algebraic residual
/// A S + S A' + Q - S C' R^-1 C S has Frobenius norm below the tolerance.
inline Mat riccati_steady_state(const LinearGaussianModel& model, const RiccatiOptions& opt = {}) {
  model.validate();
  Eigen::LLT<Mat> llt(model.R);
  if (llt.info() != Eigen::Success) throw ConfigError("observation covariance R is not positive definite");
  const Mat CtRinvC = model.C.transpose() * llt.solve(model.C);

  const double a_norm = model.A.norm();
  Mat S = Mat::Zero(model.n_x(), model.n_x());
  double t = 0.0;
  while (t < opt.max_time) {
    const Mat F = riccati_rhs(model, S, CtRinvC);
    const double res = F.norm();
    if (!std::isfinite(res)) throw ConvergenceError("riccati integration diverged");
    if (res < opt.tolerance) return S;
    // Step bounded by the local linearisation A - S C'R^-1 C.
    const double rate = 2.0 * (a_norm + S.norm() * CtRinvC.norm()) + 1e-12;
    const double dt = std::min(opt.max_dt, 0.25 / rate);
    S += dt * F;
    symmetrize(S);
    t += dt;
  }
  throw ConvergenceError("riccati integration did not reach residual " + std::to_string(opt.tolerance) +
                         " within time " + std::to_string(opt.max_time));
}

}  // namespace ttsgd
