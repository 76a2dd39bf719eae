#pragma once

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ttsgd/advdiff.hpp"
#include "ttsgd/errors.hpp"
#include "ttsgd/joint.hpp"
#include "ttsgd/record.hpp"
#include "ttsgd/schedule.hpp"
#include "ttsgd/two_timescale.hpp"

namespace ttsgd {

inline constexpr const char* kToolVersion = "ttsgd 0.1.0";

enum class ExperimentKind { benes_joint, benes_averaged, benes_tracking, linear_scalar, advdiff_joint, gradient_check };

inline const std::vector<std::pair<std::string, ExperimentKind>>& experiment_kinds() {
  static const std::vector<std::pair<std::string, ExperimentKind>> kinds{
      {"benes-joint", ExperimentKind::benes_joint},       {"benes-averaged", ExperimentKind::benes_averaged},
      {"benes-tracking", ExperimentKind::benes_tracking}, {"linear-scalar", ExperimentKind::linear_scalar},
      {"advdiff-joint", ExperimentKind::advdiff_joint},   {"gradient-check", ExperimentKind::gradient_check}};
  return kinds;
}

inline bool is_benes(ExperimentKind k) {
  return k == ExperimentKind::benes_joint || k == ExperimentKind::benes_averaged ||
         k == ExperimentKind::benes_tracking;
}

/// Initial iterate; one run per (schedule, initial iterate, seed).
struct InitialIterate {
  Vec theta;
  Vec sensor;
};

struct NamedSchedules {
  std::string name;
  ScheduleSet theta;
  ScheduleSet sensor;
};

struct BenesTruth {
  double mu = 3.0;
  double sigma2 = 4.0;
  double c = 0.7;
  double tau2 = 2.0;
  double o0 = 4.0;
  BenesJointProblem::Truth problem_truth() const { return {mu, std::sqrt(sigma2), c, tau2, o0}; }
};

struct ScalarTruth {
  double theta = 1.0;
  double q = 1.0;
  double c = 1.0;
  double tau2 = 1.0;
  double o0 = 0.0;
  ScalarLinearParams params() const { return {q, c, tau2, o0}; }
};

struct AdvDiffSetup {
  advdiff::AdvDiffParams truth;
  int kmax = 3;
  double radius = 1.0 / 24.0;
  std::vector<Eigen::Vector2d> targets;
};

/// Thresholds for the summary's pass/fail column. NaN / empty means "not checked".
struct AcceptanceConfig {
  std::map<std::string, double> final_error;      // |seed mean of final iterate - truth|
  std::map<std::string, double> final_rel_error;  // same, relative to |truth|
  std::map<std::string, double> tail_error;       // |seed mean of tail average - truth|
  double tail_fraction = 0.2;
  std::string l1_coordinate = "o";
  double slope_gap = std::numeric_limits<double>::quiet_NaN();
  double fit_window_factor = 10.0;
  double spearman_max = std::numeric_limits<double>::quiet_NaN();
  double target_distance = std::numeric_limits<double>::quiet_NaN();
  int min_sensors = 0;
  double stationarity_se = std::numeric_limits<double>::quiet_NaN();
  double stationarity_horizon = 2000.0;
  double stationarity_burn_in = 50.0;
  std::uint64_t stationarity_seed = 1000;
  double tangent_tolerance = 1e-2;
  double matrix_tolerance = 1e-6;
};

struct GradientCheckConfig {
  std::string model;  // benes | scalar-linear | advdiff
  double horizon = 10.0;
  double dt = 1e-3;
  double h = 1e-4;
  double matrix_h = 1e-5;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::benes_joint;
  std::string experiment;
  std::string source;  // file name, for diagnostics
  std::string hash;
  std::vector<std::uint64_t> seeds;
  double dt = 0.01;
  double horizon = 1e4;
  std::size_t record_every = 100;
  std::string output_dir;

  BenesTruth benes;
  ScalarTruth scalar;
  AdvDiffSetup advdiff;

  std::vector<InitialIterate> initial;
  std::vector<NamedSchedules> schedules;
  ProjectionSet projection;
  std::vector<TruthJump> jumps;
  AcceptanceConfig acceptance;
  GradientCheckConfig gradient_check;

  std::size_t n_steps() const { return static_cast<std::size_t>(std::llround(horizon / dt)); }

  std::vector<std::string> theta_names() const;
  std::vector<std::string> sensor_names() const;
  Vec theta_truth() const;
  Vec sensor_truth() const;  // Beneš and scalar sensor optimum; empty for advdiff
};

/// FNV-1a over the raw config bytes, as 16 hex digits.
inline std::string config_hash(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Reference constants for the advection-diffusion experiment.
namespace reference {

inline advdiff::AdvDiffParams advdiff_theta0() {
  return {0.25, 0.5, 0.2, 0.2, 1.5, std::numbers::pi / 3.0, 0.1, -0.15, 0.1};
}

inline std::vector<Eigen::Vector2d> advdiff_targets() {
  std::vector<Eigen::Vector2d> t{{0, 7}, {6, 8}, {4, 4}, {9, 6}, {1, 1}, {7, 10}, {10, 11}, {3, 10}};
  for (auto& p : t) p /= 12.0;
  return t;
}

inline std::vector<Eigen::Vector2d> advdiff_sensors0() {
  std::vector<Eigen::Vector2d> s{{10.1, 7.8}, {4.1, 6.01}, {5.2, 3.75}, {7.2, 4.02},
                                 {3.2, 3.1},  {6.1, 2.1},  {1.01, 2.8}, {3.0, 1.0}};
  for (auto& p : s) p /= 12.0;
  return s;
}

}  // namespace reference

inline std::vector<std::string> ExperimentConfig::theta_names() const {
  if (is_benes(kind) || gradient_check.model == "benes") return BenesJointProblem::theta_names();
  if (kind == ExperimentKind::linear_scalar || gradient_check.model == "scalar-linear") return {"theta"};
  const auto& n = advdiff::param_names();
  return {n.begin(), n.end()};
}

inline std::vector<std::string> ExperimentConfig::sensor_names() const {
  if (is_benes(kind) || kind == ExperimentKind::linear_scalar || gradient_check.model == "benes" ||
      gradient_check.model == "scalar-linear")
    return {"o"};
  std::vector<std::string> out;
  const std::size_t n = initial.empty() ? 8 : static_cast<std::size_t>(initial.front().sensor.size()) / 2;
  for (std::size_t i = 1; i <= n; ++i) {
    out.push_back("s" + std::to_string(i) + "x");
    out.push_back("s" + std::to_string(i) + "y");
  }
  return out;
}

inline Vec ExperimentConfig::theta_truth() const {
  const auto names = theta_names();
  if (names.size() == 3) return Vec{{benes.mu, std::sqrt(benes.sigma2), benes.c}};
  if (names.size() == 1) return Vec::Constant(1, scalar.theta);
  return advdiff.truth.to_vec();
}

inline Vec ExperimentConfig::sensor_truth() const {
  const auto names = theta_names();
  if (names.size() == 3) return Vec::Constant(1, benes.o0);
  if (names.size() == 1) return Vec::Constant(1, scalar.o0);
  return {};
}

namespace detail {

/// Typed access to a YAML document with file:line:column diagnostics.
class YamlReader {
 public:
  explicit YamlReader(std::string file) : file_(std::move(file)) {}

  [[noreturn]] void fail(const YAML::Node& at, const std::string& what) const {
    std::string loc = file_;
    const YAML::Mark m = at.Mark();
    if (m.line >= 0) loc += ":" + std::to_string(m.line + 1) + ":" + std::to_string(m.column + 1);
    throw ConfigError(loc + ": " + what);
  }

  void expect_map(const YAML::Node& n, const std::string& key) const {
    if (!n.IsMap()) fail(n, "'" + key + "' must be a mapping");
  }

  void allow_keys(const YAML::Node& map, const std::string& where, const std::set<std::string>& allowed) const {
    for (const auto& kv : map) {
      const std::string k = kv.first.as<std::string>();
      if (!allowed.count(k)) {
        std::string list;
        for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
        fail(kv.first, "unknown key '" + k + "' in " + where + " (allowed: " + list + ")");
      }
    }
  }

  double number(const YAML::Node& n, const std::string& key) const {
    try {
      return n.as<double>();
    } catch (const YAML::Exception&) {
      fail(n, "'" + key + "' must be a number");
    }
  }

  double positive(const YAML::Node& n, const std::string& key) const {
    const double v = number(n, key);
    if (!(v > 0.0)) fail(n, "'" + key + "' must be > 0");
    return v;
  }

  std::uint64_t unsigned_int(const YAML::Node& n, const std::string& key) const {
    try {
      const auto s = n.as<std::string>();
      if (s.empty() || s[0] == '-') fail(n, "'" + key + "' must be a non-negative integer");
      return n.as<std::uint64_t>();
    } catch (const YAML::Exception&) {
      fail(n, "'" + key + "' must be a non-negative integer");
    }
  }

  std::string string(const YAML::Node& n, const std::string& key) const {
    if (!n.IsScalar()) fail(n, "'" + key + "' must be a string");
    return n.as<std::string>();
  }

  std::vector<double> numbers(const YAML::Node& n, const std::string& key) const {
    if (!n.IsSequence()) fail(n, "'" + key + "' must be a list of numbers");
    std::vector<double> out;
    for (const auto& e : n) out.push_back(number(e, key));
    return out;
  }

  Eigen::Vector2d point(const YAML::Node& n, const std::string& key) const {
    const auto v = numbers(n, key);
    if (v.size() != 2) fail(n, "'" + key + "' entries must be [x, y] pairs");
    return {v[0], v[1]};
  }

  std::vector<Eigen::Vector2d> points(const YAML::Node& n, const std::string& key) const {
    if (!n.IsSequence()) fail(n, "'" + key + "' must be a list of [x, y] pairs");
    std::vector<Eigen::Vector2d> out;
    for (const auto& e : n) out.push_back(point(e, key));
    return out;
  }

 private:
  std::string file_;
};

inline LearningRateSchedule parse_schedule(const YamlReader& rd, const YAML::Node& n, const std::string& where) {
  rd.expect_map(n, where);
  rd.allow_keys(n, where, {"mode", "gamma0", "eta", "delta"});
  LearningRateSchedule s;
  const std::string mode = n["mode"] ? rd.string(n["mode"], where + ".mode") : "decay";
  if (mode == "constant") {
    s = LearningRateSchedule::constant(0.0);
    if (n["eta"]) rd.fail(n["eta"], where + ": 'eta' is meaningless for a constant schedule");
  } else if (mode != "decay") {
    rd.fail(n["mode"], where + ".mode must be 'decay' or 'constant'");
  } else {
    if (!n["eta"]) rd.fail(n, where + ": decaying schedule needs 'eta'");
    s.eta = rd.number(n["eta"], where + ".eta");
    if (n["delta"]) s.delta = rd.number(n["delta"], where + ".delta");
  }
  if (!n["gamma0"]) rd.fail(n, where + ": schedule needs 'gamma0'");
  s.gamma0 = rd.number(n["gamma0"], where + ".gamma0");
  try {
    s.validate();
  } catch (const ConfigError& e) {
    rd.fail(n, where + ": " + e.what());
  }
  return s;
}

/// Per-coordinate schedules: keys are coordinate names or 'default'. Coordinates with
/// neither get a zero constant rate (held fixed).
inline ScheduleSet parse_schedule_set(const YamlReader& rd, const YAML::Node& n, const std::string& where,
                                      const std::vector<std::string>& names) {
  rd.expect_map(n, where);
  std::set<std::string> allowed(names.begin(), names.end());
  allowed.insert("default");
  rd.allow_keys(n, where, allowed);
  const LearningRateSchedule fallback =
      n["default"] ? parse_schedule(rd, n["default"], where + ".default") : LearningRateSchedule::constant(0.0);
  std::vector<LearningRateSchedule> per;
  for (const auto& name : names)
    per.push_back(n[name] ? parse_schedule(rd, n[name], where + "." + name) : fallback);
  return ScheduleSet(std::move(per));
}

inline Box parse_box(const YamlReader& rd, const YAML::Node& n, const std::string& where,
                     const std::vector<std::string>& names) {
  Box b = Box::unbounded(static_cast<Eigen::Index>(names.size()));
  if (!n) return b;
  rd.expect_map(n, where);
  std::set<std::string> allowed(names.begin(), names.end());
  allowed.insert("default");
  rd.allow_keys(n, where, allowed);
  auto interval = [&](const YAML::Node& v, const std::string& key, Eigen::Index i) {
    const auto lh = rd.numbers(v, key);
    if (lh.size() != 2 || !(lh[0] < lh[1])) rd.fail(v, "'" + key + "' must be [lo, hi] with lo < hi");
    b.lo(i) = lh[0];
    b.hi(i) = lh[1];
  };
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto idx = static_cast<Eigen::Index>(i);
    if (n[names[i]])
      interval(n[names[i]], where + "." + names[i], idx);
    else if (n["default"])
      interval(n["default"], where + ".default", idx);
  }
  return b;
}

inline std::map<std::string, double> parse_tolerances(const YamlReader& rd, const YAML::Node& n,
                                                      const std::string& where, const std::vector<std::string>& names) {
  rd.expect_map(n, where);
  rd.allow_keys(n, where, std::set<std::string>(names.begin(), names.end()));
  std::map<std::string, double> out;
  for (const auto& kv : n) {
    const std::string k = kv.first.as<std::string>();
    out[k] = rd.positive(kv.second, where + "." + k);
  }
  return out;
}

}  // namespace detail

/// Parses a config document. `source` names the file in diagnostics.
inline ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  using detail::YamlReader;
  const YamlReader rd(source);
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(source + ":" + std::to_string(e.mark.line + 1) + ":" + std::to_string(e.mark.column + 1) +
                      ": " + e.msg);
  }
  if (!root.IsMap()) throw ConfigError(source + ": top level must be a mapping");

  ExperimentConfig cfg;
  cfg.source = source;
  cfg.hash = config_hash(text);

  if (!root["experiment"]) rd.fail(root, "missing required key 'experiment'");
  cfg.experiment = rd.string(root["experiment"], "experiment");
  bool known = false;
  for (const auto& [name, kind] : experiment_kinds())
    if (name == cfg.experiment) {
      cfg.kind = kind;
      known = true;
    }
  if (!known) rd.fail(root["experiment"], "unknown experiment '" + cfg.experiment + "'");
  const ExperimentKind kind = cfg.kind;

  std::set<std::string> top{"experiment", "seeds", "output_dir", "truth", "acceptance"};
  if (kind == ExperimentKind::gradient_check) {
    top.insert({"model", "horizon", "dt", "h", "matrix_h", "initial", "kmax", "radius", "targets"});
  } else {
    top.insert({"dt", "horizon", "record_every", "initial", "schedules", "projection"});
    if (kind == ExperimentKind::benes_tracking) top.insert("jumps");
    if (kind == ExperimentKind::advdiff_joint) top.insert({"kmax", "radius", "targets"});
  }
  rd.allow_keys(root, "the top level", top);

  // Seeds.
  if (!root["seeds"]) rd.fail(root, "missing required key 'seeds'");
  if (!root["seeds"].IsSequence()) rd.fail(root["seeds"], "'seeds' must be a list");
  for (const auto& s : root["seeds"]) cfg.seeds.push_back(rd.unsigned_int(s, "seeds"));
  if (cfg.seeds.empty()) rd.fail(root["seeds"], "'seeds' is empty; at least one seed is required");
  if (std::set<std::uint64_t>(cfg.seeds.begin(), cfg.seeds.end()).size() != cfg.seeds.size())
    rd.fail(root["seeds"], "'seeds' contains duplicates");

  cfg.output_dir = root["output_dir"] ? rd.string(root["output_dir"], "output_dir") : cfg.experiment;

  // Model selection for gradient checks.
  if (kind == ExperimentKind::gradient_check) {
    if (!root["model"]) rd.fail(root, "gradient-check needs 'model' (benes, scalar-linear or advdiff)");
    cfg.gradient_check.model = rd.string(root["model"], "model");
    if (cfg.gradient_check.model != "benes" && cfg.gradient_check.model != "scalar-linear" &&
        cfg.gradient_check.model != "advdiff")
      rd.fail(root["model"], "'model' must be benes, scalar-linear or advdiff");
    if (root["horizon"]) cfg.gradient_check.horizon = rd.positive(root["horizon"], "horizon");
    if (root["dt"]) cfg.gradient_check.dt = rd.positive(root["dt"], "dt");
    if (root["h"]) cfg.gradient_check.h = rd.positive(root["h"], "h");
    if (root["matrix_h"]) cfg.gradient_check.matrix_h = rd.positive(root["matrix_h"], "matrix_h");
    cfg.dt = cfg.gradient_check.dt;
    cfg.horizon = cfg.gradient_check.horizon;
  } else {
    cfg.gradient_check.model = is_benes(kind) ? "benes"
                               : kind == ExperimentKind::linear_scalar ? "scalar-linear"
                                                                       : "advdiff";
    if (root["dt"]) cfg.dt = rd.positive(root["dt"], "dt");
    if (root["horizon"]) cfg.horizon = rd.positive(root["horizon"], "horizon");
    if (root["record_every"]) {
      cfg.record_every = rd.unsigned_int(root["record_every"], "record_every");
      if (cfg.record_every < 1) rd.fail(root["record_every"], "'record_every' must be >= 1");
    }
    if (cfg.n_steps() < 1) rd.fail(root, "'horizon' must be at least one step 'dt'");
  }
  const std::string model = cfg.gradient_check.model;

  // Truth.
  const YAML::Node truth = root["truth"];
  if (truth) rd.expect_map(truth, "truth");
  if (model == "benes") {
    if (truth) {
      rd.allow_keys(truth, "truth", {"mu", "sigma2", "c", "tau2", "o0"});
      if (truth["mu"]) cfg.benes.mu = rd.number(truth["mu"], "truth.mu");
      if (truth["sigma2"]) cfg.benes.sigma2 = rd.positive(truth["sigma2"], "truth.sigma2");
      if (truth["c"]) cfg.benes.c = rd.number(truth["c"], "truth.c");
      if (truth["tau2"]) cfg.benes.tau2 = rd.positive(truth["tau2"], "truth.tau2");
      if (truth["o0"]) cfg.benes.o0 = rd.number(truth["o0"], "truth.o0");
    }
  } else if (model == "scalar-linear") {
    if (truth) {
      rd.allow_keys(truth, "truth", {"theta", "q", "c", "tau2", "o0"});
      if (truth["theta"]) cfg.scalar.theta = rd.number(truth["theta"], "truth.theta");
      if (truth["q"]) cfg.scalar.q = rd.positive(truth["q"], "truth.q");
      if (truth["c"]) cfg.scalar.c = rd.number(truth["c"], "truth.c");
      if (truth["tau2"]) {
        cfg.scalar.tau2 = rd.number(truth["tau2"], "truth.tau2");
        if (cfg.scalar.tau2 < 0.0) rd.fail(truth["tau2"], "'truth.tau2' must be >= 0");
      }
      if (truth["o0"]) cfg.scalar.o0 = rd.number(truth["o0"], "truth.o0");
    }
  } else {
    const auto& names = advdiff::param_names();
    Vec v = cfg.advdiff.truth.to_vec();
    if (truth) {
      rd.allow_keys(truth, "truth", std::set<std::string>(names.begin(), names.end()));
      for (std::size_t i = 0; i < names.size(); ++i)
        if (truth[names[i]]) v(static_cast<Eigen::Index>(i)) = rd.number(truth[names[i]], "truth." + names[i]);
    }
    cfg.advdiff.truth = advdiff::AdvDiffParams::from_vec(v);
    try {
      cfg.advdiff.truth.validate();
    } catch (const Error& e) {
      rd.fail(truth ? truth : root, std::string("truth: ") + e.what());
    }
    if (root["kmax"]) {
      cfg.advdiff.kmax = static_cast<int>(rd.unsigned_int(root["kmax"], "kmax"));
      if (cfg.advdiff.kmax < 1) rd.fail(root["kmax"], "'kmax' must be >= 1");
    }
    if (root["radius"]) {
      cfg.advdiff.radius = rd.positive(root["radius"], "radius");
      if (cfg.advdiff.radius >= 0.5) rd.fail(root["radius"], "'radius' must be < 0.5");
    }
    cfg.advdiff.targets = root["targets"] ? rd.points(root["targets"], "targets") : reference::advdiff_targets();
  }

  // Initial iterates. Missing parameter coordinates start at the truth.
  const std::vector<std::string> theta_names = cfg.theta_names();
  const Vec theta_star = cfg.theta_truth();
  auto default_initial = [&]() {
    std::vector<InitialIterate> out;
    if (model == "benes") {
      for (double mu0 : {1.0, 7.0})
        for (double o0 : {2.0, 6.0}) out.push_back({Vec{{mu0, theta_star(1), theta_star(2)}}, Vec{{o0}}});
    } else if (model == "scalar-linear") {
      out.push_back({Vec{{0.5}}, Vec{{1.0}}});
    } else {
      Vec s(16);
      const auto s0 = reference::advdiff_sensors0();
      for (std::size_t i = 0; i < 8; ++i) s.segment<2>(static_cast<Eigen::Index>(2 * i)) = s0[i];
      out.push_back({reference::advdiff_theta0().to_vec(), s});
    }
    return out;
  };
  if (root["initial"]) {
    const YAML::Node init = root["initial"];
    if (!init.IsSequence() || init.size() == 0) rd.fail(init, "'initial' must be a non-empty list");
    std::set<std::string> allowed(theta_names.begin(), theta_names.end());
    allowed.insert(model == "advdiff" ? "sensors" : "o");
    for (std::size_t i = 0; i < init.size(); ++i) {
      const YAML::Node e = init[i];
      const std::string where = "initial[" + std::to_string(i) + "]";
      rd.expect_map(e, where);
      rd.allow_keys(e, where, allowed);
      InitialIterate it;
      it.theta = model == "advdiff" ? reference::advdiff_theta0().to_vec() : theta_star;
      for (std::size_t j = 0; j < theta_names.size(); ++j)
        if (e[theta_names[j]])
          it.theta(static_cast<Eigen::Index>(j)) = rd.number(e[theta_names[j]], where + "." + theta_names[j]);
      if (model == "advdiff") {
        const auto pts = e["sensors"] ? rd.points(e["sensors"], where + ".sensors") : reference::advdiff_sensors0();
        it.sensor.resize(static_cast<Eigen::Index>(2 * pts.size()));
        for (std::size_t j = 0; j < pts.size(); ++j) it.sensor.segment<2>(static_cast<Eigen::Index>(2 * j)) = pts[j];
      } else {
        if (!e["o"]) rd.fail(e, where + ": missing initial sensor location 'o'");
        it.sensor = Vec::Constant(1, rd.number(e["o"], where + ".o"));
      }
      cfg.initial.push_back(std::move(it));
    }
    for (const auto& it : cfg.initial)
      if (it.sensor.size() != cfg.initial.front().sensor.size())
        rd.fail(init, "all initial entries need the same number of sensors");
  } else {
    cfg.initial = default_initial();
  }
  if (model == "advdiff" && cfg.advdiff.targets.size() * 2 != static_cast<std::size_t>(cfg.initial[0].sensor.size()))
    rd.fail(root, "the number of targets must equal the number of sensors");
  const std::vector<std::string> sensor_names = cfg.sensor_names();

  // Schedules and projection.
  if (kind != ExperimentKind::gradient_check) {
    if (!root["schedules"]) rd.fail(root, "missing required key 'schedules'");
    const YAML::Node sch = root["schedules"];
    if (!sch.IsSequence() || sch.size() == 0) rd.fail(sch, "'schedules' must be a non-empty list");
    std::set<std::string> seen;
    for (std::size_t i = 0; i < sch.size(); ++i) {
      const YAML::Node e = sch[i];
      const std::string where = "schedules[" + std::to_string(i) + "]";
      rd.expect_map(e, where);
      rd.allow_keys(e, where, {"name", "theta", "o"});
      NamedSchedules ns;
      ns.name = e["name"] ? rd.string(e["name"], where + ".name") : "s" + std::to_string(i);
      if (ns.name.find_first_of("/\\ ,") != std::string::npos) rd.fail(e["name"], where + ".name must not contain '/', ' ' or ','");
      if (!seen.insert(ns.name).second) rd.fail(e, where + ": duplicate schedule name '" + ns.name + "'");
      if (!e["theta"] || !e["o"]) rd.fail(e, where + " needs both 'theta' and 'o'");
      ns.theta = detail::parse_schedule_set(rd, e["theta"], where + ".theta", theta_names);
      ns.sensor = detail::parse_schedule_set(rd, e["o"], where + ".o", sensor_names);
      cfg.schedules.push_back(std::move(ns));
    }
    if (const YAML::Node pr = root["projection"]) {
      rd.expect_map(pr, "projection");
      rd.allow_keys(pr, "projection", {"theta", "o"});
      cfg.projection.slow = detail::parse_box(rd, pr["theta"], "projection.theta", theta_names);
      cfg.projection.fast = detail::parse_box(rd, pr["o"], "projection.o", sensor_names);
    } else {
      cfg.projection.slow = Box::unbounded(static_cast<Eigen::Index>(theta_names.size()));
      cfg.projection.fast = Box::unbounded(static_cast<Eigen::Index>(sensor_names.size()));
    }
    for (std::size_t i = 0; i < cfg.initial.size(); ++i)
      for (Eigen::Index j = 0; j < cfg.initial[i].theta.size(); ++j) {
        const double v = cfg.initial[i].theta(j);
        if (!(v > cfg.projection.slow.lo(j) && v < cfg.projection.slow.hi(j)))
          rd.fail(root["initial"] ? root["initial"] : root,
                  "initial[" + std::to_string(i) + "]." + theta_names[static_cast<std::size_t>(j)] +
                      " is not strictly inside its projection box");
      }
    for (std::size_t i = 0; i < cfg.initial.size(); ++i)
      for (Eigen::Index j = 0; j < cfg.initial[i].sensor.size(); ++j) {
        const double v = cfg.initial[i].sensor(j);
        if (!(v > cfg.projection.fast.lo(j) && v < cfg.projection.fast.hi(j)))
          rd.fail(root["initial"] ? root["initial"] : root,
                  "initial[" + std::to_string(i) + "] sensor " + sensor_names[static_cast<std::size_t>(j)] +
                      " is not strictly inside its projection box");
      }
  }

  // Truth jumps (tracking only).
  if (const YAML::Node jn = root["jumps"]) {
    if (!jn.IsSequence()) rd.fail(jn, "'jumps' must be a list");
    Vec current = theta_star;
    double last = 0.0;
    for (std::size_t i = 0; i < jn.size(); ++i) {
      const YAML::Node e = jn[i];
      const std::string where = "jumps[" + std::to_string(i) + "]";
      rd.expect_map(e, where);
      std::set<std::string> allowed(theta_names.begin(), theta_names.end());
      allowed.insert({"time", "o0"});
      rd.allow_keys(e, where, allowed);
      TruthJump j;
      if (!e["time"]) rd.fail(e, where + ": missing 'time'");
      j.time = rd.positive(e["time"], where + ".time");
      if (j.time <= last) rd.fail(e["time"], where + ".time must be increasing");
      last = j.time;
      bool any = false;
      for (std::size_t k = 0; k < theta_names.size(); ++k)
        if (e[theta_names[k]]) {
          current(static_cast<Eigen::Index>(k)) = rd.number(e[theta_names[k]], where + "." + theta_names[k]);
          any = true;
        }
      if (any) j.theta_star = current;
      if (e["o0"]) j.o0 = rd.number(e["o0"], where + ".o0");
      cfg.jumps.push_back(std::move(j));
    }
  }

  // Acceptance thresholds.
  if (const YAML::Node ac = root["acceptance"]) {
    rd.expect_map(ac, "acceptance");
    std::vector<std::string> coords = theta_names;
    coords.insert(coords.end(), sensor_names.begin(), sensor_names.end());
    AcceptanceConfig& a = cfg.acceptance;
    std::set<std::string> allowed;
    switch (kind) {
      case ExperimentKind::benes_joint: allowed = {"final_error", "final_rel_error"}; break;
      case ExperimentKind::benes_averaged: allowed = {"slope_gap", "fit_window_factor", "l1_coordinate"}; break;
      case ExperimentKind::benes_tracking: allowed = {"tail_error", "tail_fraction"}; break;
      case ExperimentKind::linear_scalar:
        allowed = {"final_error", "final_rel_error", "stationarity_se", "stationarity_horizon",
                   "stationarity_burn_in", "stationarity_seed"};
        break;
      case ExperimentKind::advdiff_joint: allowed = {"spearman_max", "target_distance", "min_sensors"}; break;
      case ExperimentKind::gradient_check: allowed = {"tangent_tolerance", "matrix_tolerance"}; break;
    }
    rd.allow_keys(ac, "acceptance", allowed);
    if (ac["final_error"]) a.final_error = detail::parse_tolerances(rd, ac["final_error"], "acceptance.final_error", coords);
    if (ac["final_rel_error"])
      a.final_rel_error = detail::parse_tolerances(rd, ac["final_rel_error"], "acceptance.final_rel_error", coords);
    if (ac["tail_error"]) a.tail_error = detail::parse_tolerances(rd, ac["tail_error"], "acceptance.tail_error", coords);
    if (ac["tail_fraction"]) {
      a.tail_fraction = rd.positive(ac["tail_fraction"], "acceptance.tail_fraction");
      if (a.tail_fraction > 1.0) rd.fail(ac["tail_fraction"], "'acceptance.tail_fraction' must be <= 1");
    }
    if (ac["slope_gap"]) a.slope_gap = rd.positive(ac["slope_gap"], "acceptance.slope_gap");
    if (ac["fit_window_factor"]) {
      a.fit_window_factor = rd.positive(ac["fit_window_factor"], "acceptance.fit_window_factor");
      if (a.fit_window_factor <= 1.0) rd.fail(ac["fit_window_factor"], "'acceptance.fit_window_factor' must be > 1");
    }
    if (ac["l1_coordinate"]) {
      a.l1_coordinate = rd.string(ac["l1_coordinate"], "acceptance.l1_coordinate");
      if (std::find(coords.begin(), coords.end(), a.l1_coordinate) == coords.end())
        rd.fail(ac["l1_coordinate"], "'acceptance.l1_coordinate' names no iterate coordinate");
    }
    if (ac["spearman_max"]) a.spearman_max = rd.number(ac["spearman_max"], "acceptance.spearman_max");
    if (ac["target_distance"]) a.target_distance = rd.positive(ac["target_distance"], "acceptance.target_distance");
    if (ac["min_sensors"]) a.min_sensors = static_cast<int>(rd.unsigned_int(ac["min_sensors"], "acceptance.min_sensors"));
    if (ac["stationarity_se"]) a.stationarity_se = rd.positive(ac["stationarity_se"], "acceptance.stationarity_se");
    if (ac["stationarity_horizon"])
      a.stationarity_horizon = rd.positive(ac["stationarity_horizon"], "acceptance.stationarity_horizon");
    if (ac["stationarity_burn_in"]) {
      a.stationarity_burn_in = rd.number(ac["stationarity_burn_in"], "acceptance.stationarity_burn_in");
      if (a.stationarity_burn_in < 0.0 || a.stationarity_burn_in >= a.stationarity_horizon)
        rd.fail(ac["stationarity_burn_in"], "'acceptance.stationarity_burn_in' must lie in [0, stationarity_horizon)");
    }
    if (ac["stationarity_seed"]) a.stationarity_seed = rd.unsigned_int(ac["stationarity_seed"], "acceptance.stationarity_seed");
    if (ac["tangent_tolerance"]) a.tangent_tolerance = rd.positive(ac["tangent_tolerance"], "acceptance.tangent_tolerance");
    if (ac["matrix_tolerance"]) a.matrix_tolerance = rd.positive(ac["matrix_tolerance"], "acceptance.matrix_tolerance");
  }
  return cfg;
}

/// Reads and parses a config file; an unreadable file is a configuration error.
inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError(path + ": cannot open config file");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), path);
}

}  // namespace ttsgd
