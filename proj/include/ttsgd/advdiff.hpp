#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "ttsgd/errors.hpp"
#include "ttsgd/kalman_bucy.hpp"
#include "ttsgd/linalg.hpp"

namespace ttsgd::advdiff {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr std::size_t kNumParams = 9;

/// Parameter vector, in this fixed order.
enum Param : std::size_t { kRho0 = 0, kSigma2, kZeta, kRho1, kGamma, kAlpha, kMuX, kMuY, kTau2 };

inline const std::array<std::string, kNumParams>& param_names() {
  static const std::array<std::string, kNumParams> names{"rho0",  "sigma2", "zeta", "rho1", "gamma",
                                                         "alpha", "mu_x",   "mu_y", "tau2"};
  return names;
}

struct AdvDiffParams {
  double rho0 = 0.5;
  double sigma2 = 0.2;
  double zeta = 0.5;
  double rho1 = 0.1;
  double gamma = 2.0;
  double alpha = std::numbers::pi / 4.0;
  double mu_x = 0.3;
  double mu_y = -0.3;
  double tau2 = 0.01;

  Vec to_vec() const {
    Vec v(9);
    v << rho0, sigma2, zeta, rho1, gamma, alpha, mu_x, mu_y, tau2;
    return v;
  }

  static AdvDiffParams from_vec(const Vec& v) {
    require_size(v.size(), 9, "advection-diffusion parameter vector");
    return {v(0), v(1), v(2), v(3), v(4), v(5), v(6), v(7), v(8)};
  }

  void validate() const {
    if (!(rho0 > 0 && sigma2 > 0 && zeta > 0 && rho1 > 0 && gamma > 0 && tau2 > 0))
      throw DomainError("advection-diffusion parameters rho0, sigma2, zeta, rho1, gamma, tau2 must be positive");
  }
};

/// Fourier modes k in Z^2 \ {0} with |k|_inf <= k_max. Each conjugate pair {k, -k} is
/// represented by one wavevector `pairs[j]` and occupies real coordinates 2j (cos 2 pi k.s)
/// and 2j+1 (sin 2 pi k.s).
struct SpectralGrid {
  int k_max = 3;
  std::vector<std::array<int, 2>> pairs;

  explicit SpectralGrid(int kmax = 3) : k_max(kmax) {
    if (kmax < 1) throw DomainError("spectral grid requires k_max >= 1");
    for (int k1 = 0; k1 <= kmax; ++k1)
      for (int k2 = -kmax; k2 <= kmax; ++k2)
        if (k1 > 0 || k2 > 0) pairs.push_back({k1, k2});
  }

  /// All listed complex modes, +k then -k for each pair.
  std::vector<std::array<int, 2>> modes() const {
    std::vector<std::array<int, 2>> out;
    for (const auto& k : pairs) {
      out.push_back(k);
      out.push_back({-k[0], -k[1]});
    }
    return out;
  }

  Eigen::Index dim() const noexcept { return static_cast<Eigen::Index>(2 * pairs.size()); }
};

/// Diffusion matrix with inverse (1/rho1^2) W'W, W = [[cos a, sin a], [-gamma sin a, cos a]],
/// plus its derivatives with respect to rho1, gamma and alpha.
struct DiffusionTensor {
  Eigen::Matrix2d Sigma, d_rho1, d_gamma, d_alpha;
};

inline DiffusionTensor diffusion_tensor(double rho1, double gamma, double alpha) {
  const double ca = std::cos(alpha), sa = std::sin(alpha);
  Eigen::Matrix2d W;
  W << ca, sa, -gamma * sa, ca;
  Eigen::Matrix2d Wg;
  Wg << 0.0, 0.0, -sa, 0.0;
  Eigen::Matrix2d Wa;
  Wa << -sa, ca, -gamma * ca, -sa;

  const Eigen::Matrix2d Sinv = W.transpose() * W / (rho1 * rho1);
  DiffusionTensor out;
  out.Sigma = Sinv.inverse();
  // d(S) = -S d(S^-1) S
  auto via_inverse = [&](const Eigen::Matrix2d& dSinv) -> Eigen::Matrix2d {
    return -out.Sigma * dSinv * out.Sigma;
  };
  out.d_rho1 = 2.0 / rho1 * out.Sigma;
  out.d_gamma = via_inverse((Wg.transpose() * W + W.transpose() * Wg) / (rho1 * rho1));
  out.d_alpha = via_inverse((Wa.transpose() * W + W.transpose() * Wa) / (rho1 * rho1));
  return out;
}

/// State matrix and its derivative per parameter (empty = identically zero).
struct OperatorAssembly {
  Mat A;
  std::vector<Mat> dA;  // kNumParams entries
};

/// Per pair: complex eigenvalue lambda_k = -2 pi i mu.k - 4 pi^2 k' Sigma k - zeta, stored as
/// the real block [[-d, -w], [w, -d]] with d = 4 pi^2 k' Sigma k + zeta and w = 2 pi mu.k.
inline OperatorAssembly assemble_operator(const AdvDiffParams& p, const SpectralGrid& grid) {
  const DiffusionTensor D = diffusion_tensor(p.rho1, p.gamma, p.alpha);
  const Eigen::Index n = grid.dim();
  OperatorAssembly out;
  out.A = Mat::Zero(n, n);
  out.dA.assign(kNumParams, Mat());
  for (std::size_t i : {kZeta, kRho1, kGamma, kAlpha, kMuX, kMuY}) out.dA[i] = Mat::Zero(n, n);

  const double c4 = 4.0 * std::numbers::pi * std::numbers::pi;
  auto put_block = [](Mat& M, Eigen::Index j, double decay, double rot) {
    M(2 * j, 2 * j) = -decay;
    M(2 * j + 1, 2 * j + 1) = -decay;
    M(2 * j, 2 * j + 1) = -rot;
    M(2 * j + 1, 2 * j) = rot;
  };
  for (std::size_t jj = 0; jj < grid.pairs.size(); ++jj) {
    const auto j = static_cast<Eigen::Index>(jj);
    const Eigen::Vector2d k(grid.pairs[jj][0], grid.pairs[jj][1]);
    const double kSk = k.dot(D.Sigma * k);
    const double decay = c4 * kSk + p.zeta;
    if (!(decay > 0.0)) throw DomainError("advection-diffusion operator is not stable for these parameters");
    const double rot = kTwoPi * (p.mu_x * k(0) + p.mu_y * k(1));
    put_block(out.A, j, decay, rot);
    put_block(out.dA[kZeta], j, 1.0, 0.0);
    put_block(out.dA[kRho1], j, c4 * k.dot(D.d_rho1 * k), 0.0);
    put_block(out.dA[kGamma], j, c4 * k.dot(D.d_gamma * k), 0.0);
    put_block(out.dA[kAlpha], j, c4 * k.dot(D.d_alpha * k), 0.0);
    put_block(out.dA[kMuX], j, 0.0, kTwoPi * k(0));
    put_block(out.dA[kMuY], j, 0.0, kTwoPi * k(1));
  }
  return out;
}

/// Matérn mode variances eta_k^2 = sigma2 / (2 pi)^2 (k'k + 1/rho0^2)^-2, one per pair.
struct MaternSpectrum {
  Vec eta2;
  Vec d_sigma2;
  Vec d_rho0;

  /// Real-packed incremental covariance: both coordinates of a pair carry 2 eta_k^2.
  Mat real_Q() const { return (2.0 * doubled(eta2)).asDiagonal(); }
  Mat real_dQ_sigma2() const { return (2.0 * doubled(d_sigma2)).asDiagonal(); }
  Mat real_dQ_rho0() const { return (2.0 * doubled(d_rho0)).asDiagonal(); }

 private:
  static Vec doubled(const Vec& v) {
    Vec out(2 * v.size());
    for (Eigen::Index j = 0; j < v.size(); ++j) out(2 * j) = out(2 * j + 1) = v(j);
    return out;
  }
};

inline MaternSpectrum matern_spectrum(const AdvDiffParams& p, const SpectralGrid& grid) {
  const auto np = static_cast<Eigen::Index>(grid.pairs.size());
  MaternSpectrum s;
  s.eta2.resize(np);
  s.d_sigma2.resize(np);
  s.d_rho0.resize(np);
  const double pref = 1.0 / (kTwoPi * kTwoPi);
  for (Eigen::Index j = 0; j < np; ++j) {
    const auto& k = grid.pairs[static_cast<std::size_t>(j)];
    const double base = k[0] * k[0] + k[1] * k[1] + 1.0 / (p.rho0 * p.rho0);
    s.eta2(j) = p.sigma2 * pref / (base * base);
    s.d_sigma2(j) = pref / (base * base);
    // d/d rho0 of base^-2 = -2 base^-3 * (-2 rho0^-3)
    s.d_rho0(j) = p.sigma2 * pref * 4.0 / (base * base * base * p.rho0 * p.rho0 * p.rho0);
  }
  return s;
}

/// 2 J1(z) / z, the disc average of a plane wave with |wavenumber| * radius = z / (2 pi).
inline double disc_average_factor(double z) {
  if (std::abs(z) < 1e-8) return 1.0 - z * z / 8.0;
  return 2.0 * std::cyl_bessel_j(1.0, z) / z;
}

struct SensorConfig {
  std::vector<Eigen::Vector2d> locations;
  double radius = 1.0 / 24.0;
  std::vector<Eigen::Vector2d> targets;

  void validate() const {
    if (!(radius > 0.0 && radius < 0.5)) throw DomainError("sensor radius must lie in (0, 0.5)");
  }
};

inline Eigen::Vector2d wrap_torus(const Eigen::Vector2d& p) {
  return {p(0) - std::floor(p(0)), p(1) - std::floor(p(1))};
}

inline double torus_distance(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  Eigen::Vector2d d = (a - b).cwiseAbs();
  for (int i = 0; i < 2; ++i) {
    d(i) -= std::floor(d(i));
    d(i) = std::min(d(i), 1.0 - d(i));
  }
  return d.norm();
}

/// Disc-average evaluation row for a point: coordinate 2j -> avg cos, 2j+1 -> avg sin.
inline Eigen::RowVectorXd disc_average_row(const Eigen::Vector2d& o, double radius, const SpectralGrid& grid) {
  Eigen::RowVectorXd row(grid.dim());
  for (std::size_t jj = 0; jj < grid.pairs.size(); ++jj) {
    const auto j = static_cast<Eigen::Index>(jj);
    const Eigen::Vector2d k(grid.pairs[jj][0], grid.pairs[jj][1]);
    const double J = disc_average_factor(kTwoPi * radius * k.norm());
    const double ph = kTwoPi * k.dot(o);
    row(2 * j) = std::cos(ph) * J;
    row(2 * j + 1) = std::sin(ph) * J;
  }
  return row;
}

struct ObservationAssembly {
  Mat C;
  std::vector<Mat> dC;  // one per scalar sensor coordinate, index 2 i + d
};

inline ObservationAssembly observation_matrix(const SensorConfig& sensors, const SpectralGrid& grid) {
  sensors.validate();
  const auto ny = static_cast<Eigen::Index>(sensors.locations.size());
  ObservationAssembly out;
  out.C.resize(ny, grid.dim());
  out.dC.assign(2 * sensors.locations.size(), Mat::Zero(ny, grid.dim()));
  for (Eigen::Index i = 0; i < ny; ++i) {
    const Eigen::Vector2d& o = sensors.locations[static_cast<std::size_t>(i)];
    out.C.row(i) = disc_average_row(o, sensors.radius, grid);
    for (std::size_t jj = 0; jj < grid.pairs.size(); ++jj) {
      const auto j = static_cast<Eigen::Index>(jj);
      const double cj = out.C(i, 2 * j), sj = out.C(i, 2 * j + 1);
      for (int d = 0; d < 2; ++d) {
        const double f = kTwoPi * grid.pairs[jj][static_cast<std::size_t>(d)];
        Mat& D = out.dC[static_cast<std::size_t>(2 * i + d)];
        D(i, 2 * j) = -f * sj;
        D(i, 2 * j + 1) = f * cj;
      }
    }
  }
  return out;
}

/// H = Phi' Phi with Phi the disc-average evaluation at the target points.
inline Mat target_weight(const SensorConfig& sensors, const SpectralGrid& grid) {
  Mat Phi(static_cast<Eigen::Index>(sensors.targets.size()), grid.dim());
  for (std::size_t i = 0; i < sensors.targets.size(); ++i)
    Phi.row(static_cast<Eigen::Index>(i)) = disc_average_row(sensors.targets[i], sensors.radius, grid);
  return Phi.transpose() * Phi;
}

/// Full linear-Gaussian model. theta_derivs follow Param order; sensor_derivs index 2 i + d.
inline LinearGaussianModel build_linear_model(const AdvDiffParams& p, const SensorConfig& sensors,
                                              const SpectralGrid& grid, const Mat& H) {
  p.validate();
  OperatorAssembly op = assemble_operator(p, grid);
  const MaternSpectrum spec = matern_spectrum(p, grid);
  ObservationAssembly obs = observation_matrix(sensors, grid);
  const auto ny = static_cast<Eigen::Index>(sensors.locations.size());

  LinearGaussianModel m;
  m.A = std::move(op.A);
  m.Q = spec.real_Q();
  m.C = std::move(obs.C);
  m.R = p.tau2 * Mat::Identity(ny, ny);
  m.H = H;
  m.theta_derivs.resize(kNumParams);
  for (std::size_t i = 0; i < kNumParams; ++i) m.theta_derivs[i].dA = std::move(op.dA[i]);
  m.theta_derivs[kSigma2].dQ = spec.real_dQ_sigma2();
  m.theta_derivs[kRho0].dQ = spec.real_dQ_rho0();
  m.theta_derivs[kTau2].dR = Mat::Identity(ny, ny);
  m.sensor_derivs.resize(obs.dC.size());
  for (std::size_t s = 0; s < obs.dC.size(); ++s) m.sensor_derivs[s].dC = std::move(obs.dC[s]);
  return m;
}

inline LinearGaussianModel build_linear_model(const AdvDiffParams& p, const SensorConfig& sensors,
                                              const SpectralGrid& grid) {
  return build_linear_model(p, sensors, grid, target_weight(sensors, grid));
}

/// Stationary prior covariance of the signal (diagonal): 2 eta_k^2 / (2 d_k).
inline Mat stationary_covariance(const AdvDiffParams& p, const SpectralGrid& grid) {
  const OperatorAssembly op = assemble_operator(p, grid);
  const MaternSpectrum spec = matern_spectrum(p, grid);
  Vec diag(grid.dim());
  for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(grid.pairs.size()); ++j) {
    const double decay = -op.A(2 * j, 2 * j);
    diag(2 * j) = diag(2 * j + 1) = 2.0 * spec.eta2(j) / (2.0 * decay);
  }
  return diag.asDiagonal();
}

}  // namespace ttsgd::advdiff
