#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "ttsgd/diagnostics.hpp"
#include "ttsgd/sde.hpp"

using namespace ttsgd;

namespace {

SdeSystem ou_system() {
  SdeSystem s;
  s.dim = 1;
  s.noise_dim = 1;
  s.drift = [](double, const Vec& x) -> Vec { return -x; };
  s.diffusion = [](double, const Vec&) -> Mat { return Mat::Identity(1, 1); };
  return s;
}

}  // namespace

TEST(TimeGrid, TimesAreComputedFromIndex) {
  const TimeGrid g(0.3, 0.1, 1000);
  EXPECT_EQ(g.time(0), 0.3);
  EXPECT_EQ(g.time(1000), 0.3 + 1000.0 * 0.1);
  EXPECT_THROW(TimeGrid(0.0, 0.0, 10), DomainError);
  EXPECT_THROW(TimeGrid(0.0, 0.1, 0), DomainError);
}

TEST(NoiseStream, RepeatableForSameArguments) {
  const NoiseStream s(7, 0, 2);
  const Vec a = gaussian_increments(s, 0, 0.01);
  const Vec b = gaussian_increments(NoiseStream(7, 0, 2), 0, 0.01);
  ASSERT_EQ(a.size(), 2);
  EXPECT_EQ(a(0), b(0));
  EXPECT_EQ(a(1), b(1));
  EXPECT_NE(a(0), gaussian_increments(NoiseStream(7, 1, 2), 0, 0.01)(0));
  EXPECT_NE(a(0), gaussian_increments(s, 1, 0.01)(0));
}

TEST(NoiseStream, EmptyDimension) {
  EXPECT_EQ(gaussian_increments(NoiseStream(1, 0, 0), 3, 0.1).size(), 0);
}

TEST(NoiseStream, RejectsNonPositiveDt) {
  EXPECT_THROW(gaussian_increments(NoiseStream(1, 0, 1), 0, 0.0), DomainError);
}

TEST(NoiseStream, EmpiricalVarianceMatchesDt) {
  const NoiseStream s(11, 3, 2);
  const double dt = 0.01;
  double sum = 0.0, sum2 = 0.0;
  const std::size_t n = 500000;
  for (std::size_t k = 0; k < n; ++k) {
    const Vec d = s.increments(k, dt);
    sum += d.sum();
    sum2 += d.squaredNorm();
  }
  const double N = 2.0 * n;
  const double mean = sum / N;
  const double var = sum2 / N - mean * mean;
  EXPECT_NEAR(var / dt, 1.0, 0.01);
  EXPECT_NEAR(mean, 0.0, 4.0 * std::sqrt(dt / N));
}

TEST(NoiseStream, DistinctStreamsUncorrelated) {
  const NoiseStream a(5, 0, 1), b(5, 1, 1);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t k = 0; k < 200000; ++k) {
    const double x = a.increments(k, 1.0)(0), y = b.increments(k, 1.0)(0);
    sab += x * y;
    saa += x * x;
    sbb += y * y;
  }
  EXPECT_LT(std::abs(sab / std::sqrt(saa * sbb)), 4.0 / std::sqrt(200000.0));
}

TEST(EulerMaruyama, DeterministicLinearDecay) {
  SdeSystem s;
  s.dim = 1;
  s.noise_dim = 0;
  s.drift = [](double, const Vec& x) -> Vec { return -x; };
  const Vec x = euler_maruyama_step(s, Vec::Ones(1), 0.0, 0.1, Vec());
  EXPECT_DOUBLE_EQ(x(0), 0.9);
}

TEST(EulerMaruyama, ShapeMismatchIsDimensionError) {
  const SdeSystem s = ou_system();
  EXPECT_THROW(euler_maruyama_step(s, Vec::Ones(2), 0.0, 0.1, Vec::Zero(1)), DimensionError);
  EXPECT_THROW(euler_maruyama_step(s, Vec::Ones(1), 0.0, 0.1, Vec::Zero(3)), DimensionError);
  SdeSystem bad = s;
  bad.diffusion = [](double, const Vec&) -> Mat { return Mat::Identity(2, 2); };
  EXPECT_THROW(euler_maruyama_step(bad, Vec::Ones(1), 0.0, 0.1, Vec::Zero(1)), DimensionError);
}

TEST(EulerMaruyama, NanDriftIsBlowupWithComponent) {
  SdeSystem s;
  s.dim = 3;
  s.noise_dim = 0;
  s.drift = [](double, const Vec&) -> Vec { return Vec{{0.0, 0.0, std::nan("")}}; };
  try {
    euler_maruyama_step(s, Vec::Zero(3), 0.0, 0.1, Vec());
    FAIL() << "expected NumericBlowup";
  } catch (const NumericBlowup& e) {
    EXPECT_EQ(e.component(), 2u);
  }
}

TEST(EulerMaruyama, OuStrongOrderOne) {
  // Reference: exact OU transition on a fine grid, x <- e^-h x + e^-h/2 dv (midpoint
  // weight for the stochastic convolution), driven by the same fine increments that are
  // summed to form the coarse Euler increments.
  const double T = 1.0;
  const int fine_pow = 13;
  const double h_fine = 0.1 * std::ldexp(1.0, -fine_pow);
  const auto n_fine = static_cast<std::size_t>(std::llround(T / h_fine));
  const std::vector<int> coarse_pows{4, 5, 6, 7, 8, 9};
  const std::size_t n_paths = 200;

  std::vector<double> err2(coarse_pows.size(), 0.0);
  const double ef = std::exp(-h_fine), ef_half = std::exp(-0.5 * h_fine);
  for (std::size_t path = 0; path < n_paths; ++path) {
    const NoiseStream stream(1234, path, 1);
    std::vector<double> dv(n_fine);
    for (std::size_t k = 0; k < n_fine; ++k) stream.fill(k, h_fine, std::span<double>(&dv[k], 1));

    double ref = 1.0;
    for (std::size_t k = 0; k < n_fine; ++k) ref = ef * ref + ef_half * dv[k];

    for (std::size_t c = 0; c < coarse_pows.size(); ++c) {
      const std::size_t ratio = std::size_t{1} << (fine_pow - coarse_pows[c]);
      const double h = h_fine * static_cast<double>(ratio);
      const SdeSystem sys = ou_system();
      Vec x = Vec::Ones(1);
      for (std::size_t k = 0; k < n_fine; k += ratio) {
        double dW = 0.0;
        for (std::size_t j = 0; j < ratio; ++j) dW += dv[k + j];
        x = euler_maruyama_step(sys, x, static_cast<double>(k) * h_fine, h, Vec::Constant(1, dW));
      }
      err2[c] += (x(0) - ref) * (x(0) - ref);
    }
  }
  std::vector<double> lx, ly;
  for (std::size_t c = 0; c < coarse_pows.size(); ++c) {
    lx.push_back(std::log(0.1 * std::ldexp(1.0, -coarse_pows[c])));
    ly.push_back(0.5 * std::log(err2[c] / n_paths));
  }
  const double slope = ls_slope(lx, ly);
  EXPECT_GE(slope, 0.85);
  EXPECT_LE(slope, 1.15);
}

TEST(SimulatePath, DecimationIncludesEndpoints) {
  const TrajectoryRecord r = simulate_path(ou_system(), Vec::Ones(1), TimeGrid(0.0, 0.1, 10), NoiseStream(1, 0, 1), 5);
  ASSERT_EQ(r.size(), 3u);
  EXPECT_DOUBLE_EQ(r.rows[0][0], 0.0);
  EXPECT_DOUBLE_EQ(r.rows[1][0], 0.5);
  EXPECT_DOUBLE_EQ(r.rows[2][0], 1.0);
  const TrajectoryRecord r2 = simulate_path(ou_system(), Vec::Ones(1), TimeGrid(0.0, 0.1, 7), NoiseStream(1, 0, 1), 5);
  ASSERT_EQ(r2.size(), 3u);
  EXPECT_DOUBLE_EQ(r2.rows[2][0], 0.7);
}

TEST(SimulatePath, NullDynamicsKeepInitialState) {
  SdeSystem s;
  s.dim = 2;
  s.noise_dim = 2;
  s.drift = [](double, const Vec&) -> Vec { return Vec::Zero(2); };
  s.diffusion = [](double, const Vec&) -> Mat { return Mat::Zero(2, 2); };
  const Vec x0{{1.5, -2.0}};
  const TrajectoryRecord r = simulate_path(s, x0, TimeGrid(0.0, 0.01, 100), NoiseStream(3, 0, 2), 10);
  for (const auto& row : r.rows) {
    EXPECT_EQ(row[1], 1.5);
    EXPECT_EQ(row[2], -2.0);
  }
}

TEST(SimulatePath, BitwiseRepeatable) {
  const TimeGrid g = TimeGrid::over(100.0, 0.01);
  const TrajectoryRecord a = simulate_path(ou_system(), Vec::Ones(1), g, NoiseStream(99, 0, 1), 100);
  const TrajectoryRecord b = simulate_path(ou_system(), Vec::Ones(1), g, NoiseStream(99, 0, 1), 100);
  ASSERT_EQ(a.rows, b.rows);
}

TEST(SimulatePath, BlowupCarriesStep) {
  SdeSystem s;
  s.dim = 1;
  s.noise_dim = 0;
  s.drift = [](double t, const Vec& x) -> Vec { return t > 0.25 ? Vec::Constant(1, std::nan("")) : x; };
  try {
    simulate_path(s, Vec::Ones(1), TimeGrid(0.0, 0.1, 10), NoiseStream(1, 0, 0), 1);
    FAIL() << "expected NumericBlowup";
  } catch (const NumericBlowup& e) {
    EXPECT_EQ(e.step(), 3u);
  }
}
