#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ttsgd/advdiff.hpp"
#include "ttsgd/benes.hpp"
#include "ttsgd/kalman_bucy.hpp"
#include "ttsgd/sde.hpp"

namespace ttsgd {

/// One compared derivative: Frobenius norms of both sides and their relative difference.
struct TangentCheckRow {
  std::string quantity;
  std::string coordinate;
  double analytic = 0.0;
  double finite_difference = 0.0;
  double rel_error = 0.0;
};

struct TangentCheckOptions {
  double horizon = 10.0;
  double dt = 1e-3;
  double h = 1e-4;
  std::uint64_t seed = 1;
};

/// ||a - f|| / ||f||, with ||f|| floored at 1e-12 so structural zeros compare as zero.
inline double relative_difference(const Mat& a, const Mat& f) {
  return (a - f).norm() / std::max(f.norm(), 1e-12);
}

namespace detail {

inline TangentCheckRow make_row(std::string q, std::string c, const Mat& a, const Mat& f) {
  return {std::move(q), std::move(c), a.norm(), f.norm(), relative_difference(a, f)};
}

inline Mat as_mat(const Vec& v) { return v; }

inline Mat or_zero(const Mat& m, Eigen::Index r, Eigen::Index c) { return m.size() ? m : Mat::Zero(r, c); }

}  // namespace detail

/// Observation increments of a linear model started at x = 0, Euler-Maruyama on streams 0 and 1.
inline std::vector<Vec> linear_observations(const LinearGaussianModel& truth, double dt, std::size_t n,
                                            std::uint64_t seed) {
  Eigen::SelfAdjointEigenSolver<Mat> qs(truth.Q);
  const Mat sqrtQ = qs.operatorSqrt();
  Eigen::LLT<Mat> rl(truth.R);
  if (rl.info() != Eigen::Success) throw ConfigError("observation covariance R is not positive definite");
  const Mat L = rl.matrixL();
  const NoiseStream sv(seed, 0, static_cast<std::size_t>(truth.n_x()));
  const NoiseStream sw(seed, 1, static_cast<std::size_t>(truth.n_y()));
  Vec x = Vec::Zero(truth.n_x());
  std::vector<Vec> dys(n);
  for (std::size_t k = 0; k < n; ++k) {
    dys[k] = truth.C * x * dt + L * sw.increments(k, dt);
    x += truth.A * x * dt + sqrtQ * sv.increments(k, dt);
  }
  return dys;
}

/// Kalman-Bucy tangents at (theta, o) against central differences of the filter run on the
/// same observation record (generated at theta_star).
template <class Build>
std::vector<TangentCheckRow> check_kb_tangents(const Build& build, const Vec& theta_star, const Vec& theta,
                                               const Vec& o, const std::vector<std::string>& theta_names,
                                               const std::vector<std::string>& sensor_names,
                                               const TangentCheckOptions& opt) {
  const auto n = static_cast<std::size_t>(std::llround(opt.horizon / opt.dt));
  const auto dys = linear_observations(build(theta_star, o), opt.dt, n, opt.seed);
  const LinearGaussianModel m = build(theta, o);
  const Eigen::Index nx = m.n_x();

  KbBundle b = KbBundle::init(m, Vec::Zero(nx), Mat::Zero(nx, nx));
  for (const auto& dy : dys) b.step(m, dy, opt.dt);

  auto filter_at = [&](const Vec& th, const Vec& oo) {
    const LinearGaussianModel mm = build(th, oo);
    KbState s{Vec::Zero(nx), Mat::Zero(nx, nx)};
    for (const auto& dy : dys) s = kb_step(mm, s, dy, opt.dt);
    return s;
  };

  std::vector<TangentCheckRow> rows;
  auto compare = [&](const KbTangent& t, std::size_t i, const KbState& up, const KbState& dn, const std::string& name) {
    const Vec fd_x = (up.x_hat - dn.x_hat) / (2 * opt.h);
    const Mat fd_S = (up.Sigma - dn.Sigma) / (2 * opt.h);
    rows.push_back(detail::make_row("x_hat", name, t.x_hat_grad.col(static_cast<Eigen::Index>(i)), fd_x));
    rows.push_back(detail::make_row("Sigma", name, t.Sigma_grad[i], fd_S));
  };
  for (std::size_t i = 0; i < m.n_theta(); ++i) {
    Vec up = theta, dn = theta;
    up(static_cast<Eigen::Index>(i)) += opt.h;
    dn(static_cast<Eigen::Index>(i)) -= opt.h;
    compare(b.d_theta, i, filter_at(up, o), filter_at(dn, o), theta_names.at(i));
  }
  for (std::size_t j = 0; j < m.n_sensor(); ++j) {
    Vec up = o, dn = o;
    up(static_cast<Eigen::Index>(j)) += opt.h;
    dn(static_cast<Eigen::Index>(j)) -= opt.h;
    compare(b.d_sensor, j, filter_at(theta, up), filter_at(theta, dn), sensor_names.at(j));
  }
  return rows;
}

/// Beneš tangents of (m, P) and of the posterior mean and variance in (mu, sigma, c, o)
/// against central differences.
inline std::vector<TangentCheckRow> check_benes_tangents(const BenesModel& truth, const BenesModel& est,
                                                         const TangentCheckOptions& opt) {
  const auto n = static_cast<std::size_t>(std::llround(opt.horizon / opt.dt));
  const NoiseStream sv(opt.seed, 0, 1), sw(opt.seed, 1, 1);
  std::vector<double> dys(n);
  double x = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    dys[k] = truth.c * x * opt.dt + std::sqrt(truth.r()) * sw.increments(k, opt.dt)(0);
    x += truth.signal_drift(x) * opt.dt + truth.sigma * sv.increments(k, opt.dt)(0);
  }
  auto run = [&](const BenesModel& m) {
    BenesFilterState s;
    for (double dy : dys) s = benes_step(m, s, dy, opt.dt);
    return s;
  };
  auto shifted = [&](std::size_t i, double h) {
    BenesModel m = est;
    double* field[] = {&m.mu, &m.sigma, &m.c, &m.o};
    *field[i] += h;
    return m;
  };
  const BenesFilterState s = run(est);
  const BenesMoments mom = benes_posterior_moments(est, s);
  const char* names[] = {"mu", "sigma", "c", "o"};
  std::vector<TangentCheckRow> rows;
  for (std::size_t i = 0; i < kBenesCoords; ++i) {
    const BenesFilterState up = run(shifted(i, opt.h)), dn = run(shifted(i, -opt.h));
    const Mat fm = Mat::Constant(1, 1, (up.m - dn.m) / (2 * opt.h));
    const Mat fP = Mat::Constant(1, 1, (up.P - dn.P) / (2 * opt.h));
    rows.push_back(detail::make_row("m", names[i], Mat::Constant(1, 1, s.m_grad[i]), fm));
    rows.push_back(detail::make_row("P", names[i], Mat::Constant(1, 1, s.P_grad[i]), fP));
    const BenesMoments mu = benes_posterior_moments(shifted(i, opt.h), up);
    const BenesMoments md = benes_posterior_moments(shifted(i, -opt.h), dn);
    rows.push_back(detail::make_row("x_hat", names[i], Mat::Constant(1, 1, mom.x_hat_grad[i]),
                                    Mat::Constant(1, 1, (mu.x_hat - md.x_hat) / (2 * opt.h))));
    rows.push_back(detail::make_row("Sigma", names[i], Mat::Constant(1, 1, mom.Sigma_hat_grad[i]),
                                    Mat::Constant(1, 1, (mu.Sigma_hat - md.Sigma_hat) / (2 * opt.h))));
  }
  return rows;
}

/// Parameter and sensor derivative matrices of the advection-diffusion model against central
/// differences of the assembled A, Q, C, R.
inline std::vector<TangentCheckRow> check_advdiff_matrices(const advdiff::AdvDiffParams& p,
                                                           const advdiff::SensorConfig& sensors, int kmax,
                                                           double h) {
  using namespace advdiff;
  const SpectralGrid grid(kmax);
  const LinearGaussianModel m = build_linear_model(p, sensors, grid);
  const Eigen::Index nx = m.n_x(), ny = m.n_y();
  std::vector<TangentCheckRow> rows;
  auto push_all = [&](const std::string& coord, const ModelDerivative& d, const LinearGaussianModel& up,
                      const LinearGaussianModel& dn) {
    rows.push_back(detail::make_row("A", coord, detail::or_zero(d.dA, nx, nx), (up.A - dn.A) / (2 * h)));
    rows.push_back(detail::make_row("Q", coord, detail::or_zero(d.dQ, nx, nx), (up.Q - dn.Q) / (2 * h)));
    rows.push_back(detail::make_row("C", coord, detail::or_zero(d.dC, ny, nx), (up.C - dn.C) / (2 * h)));
    rows.push_back(detail::make_row("R", coord, detail::or_zero(d.dR, ny, ny), (up.R - dn.R) / (2 * h)));
  };
  const Vec v = p.to_vec();
  for (std::size_t i = 0; i < kNumParams; ++i) {
    Vec up = v, dn = v;
    up(static_cast<Eigen::Index>(i)) += h;
    dn(static_cast<Eigen::Index>(i)) -= h;
    push_all(param_names()[i], m.theta_derivs[i], build_linear_model(AdvDiffParams::from_vec(up), sensors, grid),
             build_linear_model(AdvDiffParams::from_vec(dn), sensors, grid));
  }
  for (std::size_t s = 0; s < m.n_sensor(); ++s) {
    SensorConfig up = sensors, dn = sensors;
    up.locations[s / 2](static_cast<Eigen::Index>(s % 2)) += h;
    dn.locations[s / 2](static_cast<Eigen::Index>(s % 2)) -= h;
    const std::string coord = "s" + std::to_string(s / 2 + 1) + (s % 2 ? "y" : "x");
    push_all(coord, m.sensor_derivs[s], build_linear_model(p, up, grid), build_linear_model(p, dn, grid));
  }
  return rows;
}

}  // namespace ttsgd
