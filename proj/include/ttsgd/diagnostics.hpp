#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "ttsgd/errors.hpp"
#include "ttsgd/joint.hpp"
#include "ttsgd/linalg.hpp"
#include "ttsgd/record.hpp"

namespace ttsgd {

/// Long-run time average with a batch-means Monte Carlo standard error.
struct ErgodicEstimate {
  Vec value;
  Vec mc_std_error;
  double horizon = 0.0;
  double burn_in = 0.0;

  double scalar() const { return value(0); }
  double scalar_se() const { return mc_std_error(0); }
};

/// Accumulates per-step contributions into equal-length batches. Each batch yields a rate
/// (sum / batch duration); the estimate is the overall rate and the error is sd / sqrt(B).
class BatchMeans {
 public:
  BatchMeans(Eigen::Index dim, std::size_t n_steps, std::size_t n_batches, double dt)
      : dim_(dim), dt_(dt), n_batches_(n_batches) {
    if (n_batches < 20) throw ConfigError("batch means require at least 20 batches");
    if (n_steps < n_batches) throw ConfigError("fewer steps than batches");
    batch_len_ = n_steps / n_batches;
    sums_.assign(n_batches, Vec::Zero(dim));
  }

  void add(const Vec& contribution) {
    const std::size_t b = count_ / batch_len_;
    if (b < n_batches_) sums_[b] += contribution;
    ++count_;
  }

  ErgodicEstimate finish(double horizon, double burn_in) const {
    const double batch_time = static_cast<double>(batch_len_) * dt_;
    Vec mean = Vec::Zero(dim_);
    for (const auto& s : sums_) mean += s / batch_time;
    mean /= static_cast<double>(n_batches_);
    Vec var = Vec::Zero(dim_);
    for (const auto& s : sums_) var += (s / batch_time - mean).cwiseAbs2();
    var /= static_cast<double>(n_batches_ - 1);
    ErgodicEstimate e;
    e.value = mean;
    e.mc_std_error = (var / static_cast<double>(n_batches_)).cwiseSqrt();
    e.horizon = horizon;
    e.burn_in = burn_in;
    return e;
  }

 private:
  Eigen::Index dim_;
  double dt_;
  std::size_t n_batches_;
  std::size_t batch_len_ = 1;
  std::size_t count_ = 0;
  std::vector<Vec> sums_;
};

struct ErgodicOptions {
  double horizon = 1000.0;
  double burn_in = 0.0;
  double dt = 0.01;
  std::size_t batches = 20;
};

namespace detail {

template <class Problem, class Contribution>
ErgodicEstimate ergodic_average(Problem prob, const Vec& theta, const Vec& o, const ErgodicOptions& opt,
                                Eigen::Index dim, Contribution&& contribution) {
  if (!(opt.horizon > opt.burn_in && opt.burn_in >= 0.0))
    throw ConfigError("ergodic estimate requires horizon > burn_in >= 0");
  const auto total = static_cast<std::size_t>(std::llround(opt.horizon / opt.dt));
  const auto skip = static_cast<std::size_t>(std::llround(opt.burn_in / opt.dt));
  BatchMeans bm(dim, total - skip, opt.batches, opt.dt);
  for (std::size_t k = 0; k < total; ++k) {
    const JointSignals sig = prob.step(theta, o, k, opt.dt);
    if (k >= skip) bm.add(contribution(sig));
  }
  return bm.finish(opt.horizon, opt.burn_in);
}

}  // namespace detail

/// (1/t) log-likelihood at fixed (theta, o): time average of
/// psi_C' R^-1 dy - 1/2 psi_C' R^-1 psi_C dt.
template <class Problem>
ErgodicEstimate estimate_asymptotic_loglik(Problem prob, const Vec& theta, const Vec& o, const ErgodicOptions& opt) {
  return detail::ergodic_average(std::move(prob), theta, o, opt, 1, [&](const JointSignals& s) {
    const Vec Rp = s.R_inv * s.psi_C;
    return Vec::Constant(1, Rp.dot(s.dy) - 0.5 * Rp.dot(s.psi_C) * opt.dt);
  });
}

/// L~(theta_a) - L~(theta_b) on one shared data path. Both filters see the same dy; the
/// standard error comes from batch means of the per-step difference.
template <class Problem>
ErgodicEstimate compare_asymptotic_loglik(const Problem& prob, const Vec& theta_a, const Vec& theta_b, const Vec& o,
                                          const ErgodicOptions& opt) {
  if (!(opt.horizon > opt.burn_in && opt.burn_in >= 0.0))
    throw ConfigError("ergodic estimate requires horizon > burn_in >= 0");
  Problem a = prob, b = prob;
  const auto total = static_cast<std::size_t>(std::llround(opt.horizon / opt.dt));
  const auto skip = static_cast<std::size_t>(std::llround(opt.burn_in / opt.dt));
  BatchMeans bm(1, total - skip, opt.batches, opt.dt);
  auto rate = [&](const JointSignals& s) {
    const Vec Rp = s.R_inv * s.psi_C;
    return Rp.dot(s.dy) - 0.5 * Rp.dot(s.psi_C) * opt.dt;
  };
  for (std::size_t k = 0; k < total; ++k) {
    const JointSignals sa = a.step(theta_a, o, k, opt.dt);
    const JointSignals sb = b.step(theta_b, o, k, opt.dt);
    if (k >= skip) bm.add(Vec::Constant(1, rate(sa) - rate(sb)));
  }
  return bm.finish(opt.horizon, opt.burn_in);
}

/// Time average of Tr[H Sigma] at fixed (theta, o).
template <class Problem>
ErgodicEstimate estimate_asymptotic_sensor_objective(Problem prob, const Vec& theta, const Vec& o,
                                                     const ErgodicOptions& opt) {
  return detail::ergodic_average(std::move(prob), theta, o, opt, 1,
                                 [&](const JointSignals& s) { return Vec::Constant(1, s.psi_j * opt.dt); });
}

/// Time-averaged gradient estimators at fixed (theta, o): the theta-gradient of the
/// asymptotic log-likelihood and the sensor gradient of the asymptotic objective.
struct GradientEstimates {
  ErgodicEstimate loglik_theta;
  ErgodicEstimate objective_sensor;
};

template <class Problem>
GradientEstimates estimate_objective_gradients(Problem prob, const Vec& theta, const Vec& o,
                                               const ErgodicOptions& opt) {
  const auto nt = theta.size();
  const auto no = o.size();
  const ErgodicEstimate both =
      detail::ergodic_average(std::move(prob), theta, o, opt, nt + no, [&](const JointSignals& s) {
        Vec c(nt + no);
        c.head(nt) = s.psi_C_theta.transpose() * (s.R_inv * (s.dy - s.psi_C * opt.dt));
        c.tail(no) = s.psi_j_o * opt.dt;
        return c;
      });
  GradientEstimates out;
  out.loglik_theta = {both.value.head(nt), both.mc_std_error.head(nt), both.horizon, both.burn_in};
  out.objective_sensor = {both.value.tail(no), both.mc_std_error.tail(no), both.horizon, both.burn_in};
  return out;
}

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h. `fn` must be deterministic,
/// which for stochastic estimates means common random numbers across evaluations.
inline Vec finite_diff_gradient(const std::function<double(const Vec&)>& fn, const Vec& x, double h) {
  if (!(h > 0.0)) throw DomainError("finite difference step must be positive");
  Vec g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vec xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    g(i) = (fn(xp) - fn(xm)) / (2.0 * h);
  }
  return g;
}

/// Least-squares slope of y on x.
inline double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = static_cast<double>(x.size());
  if (x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxx > 0.0 ? sxy / sxx : std::numeric_limits<double>::quiet_NaN();
}

struct L1Curve {
  std::vector<double> t;
  std::vector<double> error;  // seed-averaged |iterate - truth|_1
  double slope = std::numeric_limits<double>::quiet_NaN();
  bool converged_exactly = false;
};

/// Seed-averaged L1 error of the given columns against `truth`, with the log-log slope
/// fitted over t in [t_end / fit_decades_factor, t_end].
inline L1Curve l1_error_curve(const std::vector<TrajectoryRecord>& records, const std::vector<std::string>& columns,
                              const Vec& truth, double fit_window_factor = 10.0) {
  if (records.size() < 2) throw ConfigError("L1 error curve needs at least two runs");
  require_size(truth.size(), static_cast<Eigen::Index>(columns.size()), "truth vector");
  const auto& ref = records.front();
  const std::size_t tcol = 0;
  L1Curve out;
  out.t.reserve(ref.size());
  for (const auto& row : ref.rows) out.t.push_back(row[tcol]);
  out.error.assign(out.t.size(), 0.0);

  for (const auto& rec : records) {
    if (rec.size() != ref.size()) throw AlignmentError("records have different numbers of rows");
    std::vector<std::size_t> idx;
    for (const auto& c : columns) idx.push_back(rec.column_index(c));
    for (std::size_t r = 0; r < rec.size(); ++r) {
      if (std::abs(rec.rows[r][tcol] - out.t[r]) > 1e-9 * std::max(1.0, std::abs(out.t[r])))
        throw AlignmentError("records use different time grids");
      double e = 0.0;
      for (std::size_t j = 0; j < idx.size(); ++j) e += std::abs(rec.rows[r][idx[j]] - truth(static_cast<Eigen::Index>(j)));
      out.error[r] += e / static_cast<double>(records.size());
    }
  }

  const double t_end = out.t.back();
  std::vector<double> lx, ly;
  bool all_zero = true;
  for (std::size_t r = 0; r < out.t.size(); ++r) {
    if (out.t[r] <= 0.0 || out.t[r] < t_end / fit_window_factor) continue;
    if (out.error[r] > 0.0) {
      all_zero = false;
      lx.push_back(std::log(out.t[r]));
      ly.push_back(std::log(out.error[r]));
    }
  }
  out.converged_exactly = all_zero;
  if (!all_zero) out.slope = ls_slope(lx, ly);
  return out;
}

/// Average ranks (ties share the mean rank).
inline std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw AlignmentError("spearman needs two equal-length series");
  const auto rx = ranks(x), ry = ranks(y);
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace ttsgd
