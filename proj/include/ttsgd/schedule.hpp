#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ttsgd/errors.hpp"
#include "ttsgd/linalg.hpp"

namespace ttsgd {

/// gamma(t) = gamma0 (delta + t)^-eta in decay mode, gamma0 in constant mode.
struct LearningRateSchedule {
  enum class Mode { decay, constant };

  double gamma0 = 1.0;
  double delta = 1.0;
  double eta = 0.75;
  Mode mode = Mode::decay;

  static LearningRateSchedule decaying(double gamma0, double eta, double delta = 1.0) {
    return {gamma0, delta, eta, Mode::decay};
  }
  static LearningRateSchedule constant(double gamma0) { return {gamma0, 1.0, 0.0, Mode::constant}; }

  void validate() const {
    if (gamma0 < 0.0) throw ConfigError("learning rate gamma0 must be >= 0");
    if (mode == Mode::decay) {
      if (!(delta > 0.0)) throw ConfigError("learning rate delta must be > 0");
      if (!(eta > 0.0 && eta <= 1.0)) throw ConfigError("learning rate eta must lie in (0, 1]");
    }
  }

  double operator()(double t) const {
    if (t < 0.0) throw DomainError("learning rate evaluated at negative time");
    if (mode == Mode::constant) return gamma0;
    return gamma0 * std::pow(delta + t, -eta);
  }
};

inline double lr_eval(const LearningRateSchedule& s, double t) { return s(t); }

/// Per-coordinate rates for a vector iterate.
struct ScheduleSet {
  std::vector<LearningRateSchedule> per_coord;

  ScheduleSet() = default;
  ScheduleSet(std::size_t n, const LearningRateSchedule& s) : per_coord(n, s) {}
  explicit ScheduleSet(std::vector<LearningRateSchedule> v) : per_coord(std::move(v)) {}

  std::size_t size() const noexcept { return per_coord.size(); }

  Vec operator()(double t) const {
    Vec out(static_cast<Eigen::Index>(per_coord.size()));
    for (std::size_t i = 0; i < per_coord.size(); ++i) out(static_cast<Eigen::Index>(i)) = per_coord[i](t);
    return out;
  }

  ScheduleSet scaled(double factor) const {
    ScheduleSet out = *this;
    for (auto& s : out.per_coord) s.gamma0 *= factor;
    return out;
  }
};

struct RateAssumptionReport {
  bool slow_in_range = false;        // eta_slow in (1/2, 1]
  bool fast_in_range = false;        // eta_fast in (1/2, 1]
  bool separated = false;            // eta_slow > eta_fast
  bool additive_noise_range = false; // both eta in (0, 1]: the additive-noise regime only
  bool satisfied() const noexcept { return slow_in_range && fast_in_range && separated; }
  std::string summary() const {
    std::string s = satisfied() ? "satisfied" : "violated";
    if (!slow_in_range) s += "; slow exponent outside (1/2, 1]";
    if (!fast_in_range) s += "; fast exponent outside (1/2, 1]";
    if (!separated) s += "; slow exponent not larger than fast exponent";
    return s;
  }
};

/// Closed-form rate conditions for polynomially decaying schedules.
inline RateAssumptionReport check_rate_assumptions(const LearningRateSchedule& slow,
                                                   const LearningRateSchedule& fast) {
  if (slow.mode != LearningRateSchedule::Mode::decay || fast.mode != LearningRateSchedule::Mode::decay)
    throw ConfigError("rate assumptions are defined for decaying schedules only");
  auto in_half_open = [](double e) { return e > 0.5 && e <= 1.0; };
  RateAssumptionReport r;
  r.slow_in_range = in_half_open(slow.eta);
  r.fast_in_range = in_half_open(fast.eta);
  r.separated = slow.eta > fast.eta;
  r.additive_noise_range = slow.eta > 0.0 && slow.eta <= 1.0 && fast.eta > 0.0 && fast.eta <= 1.0;
  return r;
}

}  // namespace ttsgd
