#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "ttsgd/errors.hpp"
#include "ttsgd/linalg.hpp"
#include "ttsgd/record.hpp"

namespace ttsgd {

/// Uniform grid t_k = t0 + k*dt, k = 0..n_steps.
struct TimeGrid {
  double t0 = 0.0;
  double dt = 0.01;
  std::size_t n_steps = 1;

  TimeGrid() = default;
  TimeGrid(double t0_, double dt_, std::size_t n) : t0(t0_), dt(dt_), n_steps(n) {
    if (!(dt > 0.0)) throw DomainError("time grid requires dt > 0");
    if (n_steps < 1) throw DomainError("time grid requires n_steps >= 1");
  }

  static TimeGrid over(double horizon, double dt) {
    return TimeGrid(0.0, dt, static_cast<std::size_t>(std::llround(horizon / dt)));
  }

  double time(std::size_t k) const noexcept { return t0 + static_cast<double>(k) * dt; }
  double horizon() const noexcept { return time(n_steps); }
};

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// (0, 1], never zero so log() is safe.
inline double to_unit(std::uint64_t h) noexcept {
  return (static_cast<double>(h >> 11) + 1.0) * 0x1.0p-53;
}

}  // namespace detail

/// Counter-based Gaussian increments: the draw for (seed, stream_id, step, component)
/// is a pure function of those values, so streams can be replayed or skipped freely.
class NoiseStream {
 public:
  NoiseStream() = default;
  NoiseStream(std::uint64_t seed, std::uint64_t stream_id, std::size_t dim)
      : seed_(seed), stream_id_(stream_id), dim_(dim),
        key_(detail::splitmix64(seed ^ detail::splitmix64(stream_id + 0x632be59bd9b4e019ULL))) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }
  std::size_t dim() const noexcept { return dim_; }

  /// Writes dim() independent N(0, dt) draws for step `step` into `out`.
  void fill(std::size_t step, double dt, std::span<double> out) const {
    if (!(dt > 0.0)) throw DomainError("gaussian increments require dt > 0");
    if (out.size() != dim_) throw DimensionError("noise buffer size mismatch");
    const double scale = std::sqrt(dt);
    const std::uint64_t base = detail::splitmix64(key_ + detail::splitmix64(static_cast<std::uint64_t>(step)));
    for (std::size_t p = 0; 2 * p < dim_; ++p) {
      const double u1 = detail::to_unit(detail::splitmix64(base + 2 * p));
      const double u2 = detail::to_unit(detail::splitmix64(base + 2 * p + 1));
      const double rad = std::sqrt(-2.0 * std::log(u1)) * scale;
      const double ang = 2.0 * std::numbers::pi * u2;
      out[2 * p] = rad * std::cos(ang);
      if (2 * p + 1 < dim_) out[2 * p + 1] = rad * std::sin(ang);
    }
  }

  Vec increments(std::size_t step, double dt) const {
    Vec out(static_cast<Eigen::Index>(dim_));
    fill(step, dt, std::span<double>(out.data(), dim_));
    return out;
  }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t stream_id_ = 0;
  std::size_t dim_ = 0;
  std::uint64_t key_ = 0;
};

inline Vec gaussian_increments(const NoiseStream& stream, std::size_t step_index, double dt) {
  return stream.increments(step_index, dt);
}

/// dX = drift(t, X) dt + diffusion(t, X) dW with X in R^dim, W in R^noise_dim.
struct SdeSystem {
  std::size_t dim = 0;
  std::size_t noise_dim = 0;
  std::function<Vec(double, const Vec&)> drift;
  std::function<Mat(double, const Vec&)> diffusion;
};

inline Vec euler_maruyama_step(const SdeSystem& sys, const Vec& state, double t, double dt, const Vec& dW) {
  const auto n = static_cast<Eigen::Index>(sys.dim);
  const auto q = static_cast<Eigen::Index>(sys.noise_dim);
  require_size(state.size(), n, "SDE state");
  require_size(dW.size(), q, "Wiener increment");

  const Vec f = sys.drift(t, state);
  require_size(f.size(), n, "drift output");
  require_finite(f, "drift");

  Vec next = state + f * dt;
  if (q > 0) {
    const Mat g = sys.diffusion(t, state);
    require_shape(g, n, q, "diffusion output");
    require_finite(g, "diffusion");
    next.noalias() += g * dW;
  }
  require_finite(next, "euler-maruyama state");
  return next;
}

/// Integrates over the grid and keeps every record_every-th state, always including
/// the first and the last one. Columns: t, x0, x1, ...
inline TrajectoryRecord simulate_path(const SdeSystem& sys, const Vec& x0, const TimeGrid& grid,
                                      const NoiseStream& stream, std::size_t record_every) {
  if (record_every < 1) throw DomainError("record_every must be >= 1");
  require_size(x0.size(), static_cast<Eigen::Index>(sys.dim), "initial state");
  if (stream.dim() != sys.noise_dim) throw DimensionError("noise stream dimension differs from noise_dim");

  TrajectoryRecord rec;
  rec.columns.emplace_back("t");
  for (std::size_t i = 0; i < sys.dim; ++i) rec.columns.push_back("x" + std::to_string(i));

  auto push = [&](double t, const Vec& x) {
    std::vector<double> row{t};
    row.insert(row.end(), x.data(), x.data() + x.size());
    rec.rows.push_back(std::move(row));
  };

  Vec x = x0;
  Vec dW(static_cast<Eigen::Index>(sys.noise_dim));
  push(grid.time(0), x);
  for (std::size_t k = 0; k < grid.n_steps; ++k) {
    if (sys.noise_dim > 0) stream.fill(k, grid.dt, std::span<double>(dW.data(), sys.noise_dim));
    try {
      x = euler_maruyama_step(sys, x, grid.time(k), grid.dt, dW);
    } catch (const NumericBlowup& e) {
      throw e.at_step(k, "simulate_path");
    }
    const std::size_t done = k + 1;
    if (done % record_every == 0 || done == grid.n_steps) push(grid.time(done), x);
  }
  return rec;
}

}  // namespace ttsgd
