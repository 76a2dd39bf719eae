#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ttsgd/advdiff.hpp"
#include "ttsgd/config.hpp"
#include "ttsgd/diagnostics.hpp"
#include "ttsgd/gradient_check.hpp"
#include "ttsgd/joint.hpp"
#include "ttsgd/record.hpp"

namespace ttsgd {

inline constexpr const char* kOutputRootEnv = "TTSGD_OUTPUT_ROOT";

struct SummaryRow {
  std::string item;
  std::string quantity;
  double value = 0.0;
  double threshold = std::numeric_limits<double>::quiet_NaN();
  std::string status = "info";  // pass | fail | info
};

/// A named record written next to the per-run files (L1 curves, tangent tables).
struct NamedRecord {
  std::string file;
  TrajectoryRecord record;
};

struct ExperimentResult {
  std::vector<NamedRecord> runs;
  std::vector<NamedRecord> extra;
  std::vector<SummaryRow> summary;
  std::vector<std::pair<std::string, std::string>> metadata;

  bool passed() const {
    return std::none_of(summary.begin(), summary.end(), [](const SummaryRow& r) { return r.status == "fail"; });
  }
};

struct RunJob {
  std::size_t schedule = 0;
  std::size_t init = 0;
  std::uint64_t seed = 0;
};

inline std::string run_name(const ExperimentConfig& cfg, const RunJob& j) {
  return cfg.schedules[j.schedule].name + "__init" + std::to_string(j.init) + "__seed" + std::to_string(j.seed);
}

/// Schedules outermost, seeds innermost. Output order never depends on the worker count.
inline std::vector<RunJob> enumerate_jobs(const ExperimentConfig& cfg) {
  std::vector<RunJob> jobs;
  for (std::size_t s = 0; s < cfg.schedules.size(); ++s)
    for (std::size_t i = 0; i < cfg.initial.size(); ++i)
      for (auto seed : cfg.seeds) jobs.push_back({s, i, seed});
  return jobs;
}

/// Runs fn(0..n-1) on up to `workers` threads. Results keep index order; if any call throws,
/// the exception of the lowest failing index is rethrown after all threads join.
template <class T>
std::vector<T> parallel_map(std::size_t n, std::size_t workers, const std::function<T(std::size_t)>& fn) {
  std::vector<std::optional<T>> out(n);
  std::vector<std::exception_ptr> errs(n);
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        out[i] = fn(i);
      } catch (...) {
        errs[i] = std::current_exception();
      }
    }
  };
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
  std::vector<T> res;
  res.reserve(n);
  for (auto& o : out) res.push_back(std::move(*o));
  return res;
}

namespace detail {

inline advdiff::SensorConfig sensor_config(const ExperimentConfig& cfg, const Vec& o) {
  advdiff::SensorConfig s;
  s.radius = cfg.advdiff.radius;
  s.targets = cfg.advdiff.targets;
  for (Eigen::Index i = 0; i + 1 < o.size(); i += 2) s.locations.emplace_back(o(i), o(i + 1));
  return s;
}

/// Builder for the advection-diffusion model with a fixed target weight.
inline LinearJointProblem::Builder advdiff_builder(const ExperimentConfig& cfg, std::size_t n_sensors) {
  const advdiff::SpectralGrid grid(cfg.advdiff.kmax);
  advdiff::SensorConfig base = sensor_config(cfg, Vec::Zero(static_cast<Eigen::Index>(2 * n_sensors)));
  const Mat H = advdiff::target_weight(base, grid);
  return [base, grid, H](const Vec& th, const Vec& o) {
    advdiff::SensorConfig s = base;
    for (std::size_t i = 0; i < s.locations.size(); ++i)
      s.locations[i] = Eigen::Vector2d(o(static_cast<Eigen::Index>(2 * i)), o(static_cast<Eigen::Index>(2 * i + 1)));
    return advdiff::build_linear_model(advdiff::AdvDiffParams::from_vec(th), s, grid, H);
  };
}

inline LinearJointProblem make_advdiff_problem(const ExperimentConfig& cfg, const InitialIterate& init,
                                               std::uint64_t seed) {
  const advdiff::SpectralGrid grid(cfg.advdiff.kmax);
  const std::size_t n_sensors = static_cast<std::size_t>(init.sensor.size()) / 2;
  // Signal starts in its stationary law at the truth; the filter prior is stationary at theta_0.
  const Mat S_star = advdiff::stationary_covariance(cfg.advdiff.truth, grid);
  const Vec x0 = S_star.diagonal().cwiseSqrt().cwiseProduct(
      NoiseStream(seed, kInitialStream, static_cast<std::size_t>(grid.dim())).increments(0, 1.0));
  const Mat Sigma0 = advdiff::stationary_covariance(advdiff::AdvDiffParams::from_vec(init.theta), grid);
  LinearJointProblem::Options opt{cfg.theta_names(), cfg.sensor_names(), 1000};
  return LinearJointProblem(advdiff_builder(cfg, n_sensors), cfg.advdiff.truth.to_vec(), init.sensor, x0,
                            Vec::Zero(grid.dim()), Sigma0, seed, std::move(opt));
}

inline void add_run_metadata(TrajectoryRecord& rec, const ExperimentConfig& cfg, const RunJob& j) {
  rec.metadata = {{"config_hash", cfg.hash},
                  {"seed", std::to_string(j.seed)},
                  {"experiment", cfg.experiment},
                  {"schedule", cfg.schedules[j.schedule].name},
                  {"init", std::to_string(j.init)},
                  {"tool_version", kToolVersion}};
}

/// Objective Tr[H Sigma_inf] at the true parameter along the recorded sensor path.
inline void add_objective_at_truth(TrajectoryRecord& rec, const ExperimentConfig& cfg) {
  const auto sn = cfg.sensor_names();
  const auto build = advdiff_builder(cfg, sn.size() / 2);
  std::vector<std::size_t> idx;
  for (const auto& n : sn) idx.push_back(rec.column_index("o_" + n));
  const Vec theta_star = cfg.advdiff.truth.to_vec();
  rec.columns.push_back("objective_at_truth");
  for (auto& row : rec.rows) {
    Vec o(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) o(static_cast<Eigen::Index>(i)) = row[idx[i]];
    const LinearGaussianModel m = build(theta_star, o);
    row.push_back((m.H * riccati_steady_state(m)).trace());
  }
}

}  // namespace detail

/// One joint run for a job of a benes-*, linear-scalar or advdiff-joint config.
inline TrajectoryRecord run_single(const ExperimentConfig& cfg, const RunJob& job, IterateState* final_state = nullptr) {
  const InitialIterate& init = cfg.initial.at(job.init);
  const NamedSchedules& sch = cfg.schedules.at(job.schedule);
  JointRunConfig rc;
  rc.dt = cfg.dt;
  rc.n_steps = cfg.n_steps();
  rc.record_every = cfg.record_every;
  rc.slow = sch.theta;
  rc.fast = sch.sensor;
  rc.sets = cfg.projection;
  rc.jumps = cfg.jumps;
  const IterateState s0 = IterateState::start(init.theta, init.sensor);

  TrajectoryRecord rec;
  try {
    if (is_benes(cfg.kind)) {
      BenesJointProblem prob(cfg.benes.problem_truth(), job.seed);
      rec = run_joint(prob, s0, rc, final_state);
    } else if (cfg.kind == ExperimentKind::linear_scalar) {
      LinearJointProblem prob = make_scalar_problem(cfg.scalar.params(), cfg.scalar.theta, job.seed);
      rec = run_joint(prob, s0, rc, final_state);
    } else if (cfg.kind == ExperimentKind::advdiff_joint) {
      LinearJointProblem prob = detail::make_advdiff_problem(cfg, init, job.seed);
      rec = run_joint(prob, s0, rc, final_state);
      detail::add_objective_at_truth(rec, cfg);
    } else {
      throw ConfigError("experiment '" + cfg.experiment + "' has no joint runs");
    }
  } catch (const NumericBlowup& e) {
    throw NumericBlowup("run " + run_name(cfg, job), e.component(), e.step());
  }
  detail::add_run_metadata(rec, cfg, job);
  return rec;
}

/// Coordinates of a record column family: iterate column and its averaged counterpart.
struct CoordColumns {
  std::string name;
  std::string raw;
  std::string avg;
  double truth = 0.0;
};

inline std::vector<CoordColumns> coordinate_columns(const ExperimentConfig& cfg) {
  std::vector<CoordColumns> out;
  const Vec th = cfg.theta_truth(), os = cfg.sensor_truth();
  const auto tn = cfg.theta_names(), sn = cfg.sensor_names();
  for (std::size_t i = 0; i < tn.size(); ++i)
    out.push_back({tn[i], "theta_" + tn[i], "avg_theta_" + tn[i], th(static_cast<Eigen::Index>(i))});
  for (std::size_t i = 0; i < sn.size(); ++i)
    out.push_back({sn[i], "o_" + sn[i], "avg_o_" + sn[i],
                   os.size() ? os(static_cast<Eigen::Index>(i)) : std::numeric_limits<double>::quiet_NaN()});
  return out;
}

namespace detail {

inline SummaryRow judged(std::string item, std::string quantity, double value, double threshold, bool below) {
  SummaryRow r{std::move(item), std::move(quantity), value, threshold, "info"};
  if (!std::isnan(threshold)) r.status = (below ? value < threshold : value > threshold) ? "pass" : "fail";
  if (std::isnan(value) && !std::isnan(threshold)) r.status = "fail";
  return r;
}

inline double lookup(const std::map<std::string, double>& m, const std::string& k) {
  const auto it = m.find(k);
  return it == m.end() ? std::numeric_limits<double>::quiet_NaN() : it->second;
}

/// Runs grouped by (schedule, init), seeds in config order.
inline std::map<std::pair<std::size_t, std::size_t>, std::vector<const TrajectoryRecord*>> group_runs(
    const std::vector<RunJob>& jobs, const std::vector<NamedRecord>& runs) {
  std::map<std::pair<std::size_t, std::size_t>, std::vector<const TrajectoryRecord*>> g;
  for (std::size_t k = 0; k < jobs.size(); ++k) g[{jobs[k].schedule, jobs[k].init}].push_back(&runs[k].record);
  return g;
}

inline std::string group_item(const ExperimentConfig& cfg, std::pair<std::size_t, std::size_t> key) {
  return cfg.schedules[key.first].name + "__init" + std::to_string(key.second);
}

inline double seed_mean_last(const std::vector<const TrajectoryRecord*>& recs, const std::string& col) {
  double s = 0.0;
  for (const auto* r : recs) s += r->rows.back()[r->column_index(col)];
  return s / static_cast<double>(recs.size());
}

inline void summarize_final_errors(const ExperimentConfig& cfg, const std::vector<RunJob>& jobs,
                                   const std::vector<NamedRecord>& runs, std::vector<SummaryRow>& out) {
  for (const auto& [key, recs] : group_runs(jobs, runs)) {
    const std::string item = group_item(cfg, key);
    for (const auto& c : coordinate_columns(cfg)) {
      const double mean = seed_mean_last(recs, c.raw);
      out.push_back({item, "final_mean_" + c.raw, mean, std::numeric_limits<double>::quiet_NaN(), "info"});
      if (std::isnan(c.truth)) continue;
      const double err = std::abs(mean - c.truth);
      out.push_back(judged(item, "final_error_" + c.name, err, lookup(cfg.acceptance.final_error, c.name), true));
      const double rel_thr = lookup(cfg.acceptance.final_rel_error, c.name);
      if (!std::isnan(rel_thr))
        out.push_back(judged(item, "final_rel_error_" + c.name, err / std::max(std::abs(c.truth), 1e-300), rel_thr, true));
    }
  }
}

inline void summarize_tracking(const ExperimentConfig& cfg, const std::vector<RunJob>& jobs,
                               const std::vector<NamedRecord>& runs, std::vector<SummaryRow>& out) {
  for (const auto& [key, recs] : group_runs(jobs, runs)) {
    const std::string item = group_item(cfg, key);
    for (const auto& c : coordinate_columns(cfg)) {
      const bool is_theta = c.raw.rfind("theta_", 0) == 0;
      const double t_end = recs.front()->rows.back()[0];
      const double t_from = t_end * (1.0 - cfg.acceptance.tail_fraction);
      double mean = 0.0, truth = 0.0;
      for (const auto* r : recs) {
        const auto t = r->column("t");
        const auto v = r->column(c.raw);
        double s = 0.0;
        std::size_t n = 0;
        for (std::size_t k = 0; k < t.size(); ++k)
          if (t[k] >= t_from) {
            s += v[k];
            ++n;
          }
        mean += s / static_cast<double>(std::max<std::size_t>(n, 1));
        truth = is_theta ? r->rows.back()[r->column_index("true_theta_" + c.name)] : c.truth;
      }
      mean /= static_cast<double>(recs.size());
      if (!is_theta && !cfg.jumps.empty() && cfg.jumps.back().o0) truth = *cfg.jumps.back().o0;
      out.push_back({item, "tail_mean_" + c.raw, mean, std::numeric_limits<double>::quiet_NaN(), "info"});
      out.push_back({item, "final_truth_" + c.name, truth, std::numeric_limits<double>::quiet_NaN(), "info"});
      out.push_back(judged(item, "tail_error_" + c.name, std::abs(mean - truth), lookup(cfg.acceptance.tail_error, c.name), true));
    }
  }
}

inline void summarize_l1(const ExperimentConfig& cfg, const std::vector<RunJob>& jobs,
                         const std::vector<NamedRecord>& runs, ExperimentResult& res) {
  const auto cols = coordinate_columns(cfg);
  const auto it = std::find_if(cols.begin(), cols.end(),
                               [&](const CoordColumns& c) { return c.name == cfg.acceptance.l1_coordinate; });
  const CoordColumns c = *it;
  const auto groups = group_runs(jobs, runs);
  const double gap = cfg.acceptance.slope_gap;
  for (std::size_t init = 0; init < cfg.initial.size(); ++init) {
    std::vector<double> avg_slopes, raw_slopes;
    for (std::size_t s = 0; s < cfg.schedules.size(); ++s) {
      const auto& recs = groups.at({s, init});
      std::vector<TrajectoryRecord> copies;
      for (const auto* r : recs) copies.push_back(*r);
      const Vec truth = Vec::Constant(1, c.truth);
      const L1Curve avg = l1_error_curve(copies, {c.avg}, truth, cfg.acceptance.fit_window_factor);
      const L1Curve raw = l1_error_curve(copies, {c.raw}, truth, cfg.acceptance.fit_window_factor);
      TrajectoryRecord curve;
      curve.columns = {"t", "l1_avg", "l1_raw"};
      curve.metadata = {{"config_hash", cfg.hash},
                        {"experiment", cfg.experiment},
                        {"schedule", cfg.schedules[s].name},
                        {"init", std::to_string(init)},
                        {"coordinate", c.name},
                        {"seeds", std::to_string(recs.size())},
                        {"slope_avg", format_double(avg.slope)},
                        {"slope_raw", format_double(raw.slope)},
                        {"tool_version", kToolVersion}};
      for (std::size_t k = 0; k < avg.t.size(); ++k) curve.add_row({avg.t[k], avg.error[k], raw.error[k]});
      const std::string item = group_item(cfg, {s, init});
      res.extra.push_back({"l1_" + item + ".csv", std::move(curve)});
      res.summary.push_back({item, "l1_slope_avg_" + c.name, avg.slope, std::numeric_limits<double>::quiet_NaN(), "info"});
      res.summary.push_back({item, "l1_slope_raw_" + c.name, raw.slope, std::numeric_limits<double>::quiet_NaN(), "info"});
      avg_slopes.push_back(avg.slope);
      raw_slopes.push_back(raw.slope);
    }
    if (cfg.schedules.size() < 2) continue;
    double avg_spread = 0.0, raw_min_gap = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < avg_slopes.size(); ++a)
      for (std::size_t b = a + 1; b < avg_slopes.size(); ++b) {
        avg_spread = std::max(avg_spread, std::abs(avg_slopes[a] - avg_slopes[b]));
        raw_min_gap = std::min(raw_min_gap, std::abs(raw_slopes[a] - raw_slopes[b]));
      }
    const std::string item = "init" + std::to_string(init);
    res.summary.push_back(judged(item, "avg_slope_spread", avg_spread, gap, true));
    res.summary.push_back(judged(item, "raw_slope_min_gap", raw_min_gap, gap, false));
  }
}

inline void summarize_advdiff(const ExperimentConfig& cfg, const std::vector<RunJob>& jobs,
                              const std::vector<NamedRecord>& runs, std::vector<SummaryRow>& out) {
  const auto& a = cfg.acceptance;
  const auto sn = cfg.sensor_names();
  for (const auto& [key, recs] : group_runs(jobs, runs)) {
    const std::string group = group_item(cfg, key);
    int good_runs = 0;
    for (std::size_t r = 0; r < recs.size(); ++r) {
      const TrajectoryRecord& rec = *recs[r];
      const std::string item = group + "__seed" + rec.meta("seed");
      const double rho = spearman(rec.column("t"), rec.column("objective_at_truth"));
      out.push_back({item, "spearman_objective_at_truth", rho, a.spearman_max, "info"});
      out.push_back({item, "spearman_objective_window", spearman(rec.column("t"), rec.column("psi_j_window")),
                     std::numeric_limits<double>::quiet_NaN(), "info"});
      int near = 0;
      for (std::size_t i = 0; i + 1 < sn.size(); i += 2) {
        const Eigen::Vector2d p = advdiff::wrap_torus(
            {rec.rows.back()[rec.column_index("o_" + sn[i])], rec.rows.back()[rec.column_index("o_" + sn[i + 1])]});
        double d = std::numeric_limits<double>::infinity();
        for (const auto& t : cfg.advdiff.targets) d = std::min(d, advdiff::torus_distance(p, t));
        out.push_back({item, "target_distance_s" + std::to_string(i / 2 + 1), d, a.target_distance, "info"});
        if (d < a.target_distance) ++near;
      }
      out.push_back({item, "sensors_near_target", static_cast<double>(near), static_cast<double>(a.min_sensors), "info"});
      const bool ok = (std::isnan(a.spearman_max) || rho < a.spearman_max) &&
                      (std::isnan(a.target_distance) || near >= a.min_sensors);
      good_runs += ok;
    }
    // Per-seed rows are informative; the majority over seeds decides.
    if (!std::isnan(a.spearman_max) || !std::isnan(a.target_distance))
      out.push_back(judged(group, "runs_meeting_both", good_runs, static_cast<double>(recs.size()) / 2.0, false));
  }
}

/// Ergodic gradient estimates at each run's final iterates, on an independent data path.
inline void summarize_stationarity(const ExperimentConfig& cfg, const std::vector<RunJob>& jobs,
                                   const std::vector<NamedRecord>& runs, std::vector<SummaryRow>& out) {
  const auto& a = cfg.acceptance;
  if (std::isnan(a.stationarity_se)) return;
  ErgodicOptions eo;
  eo.horizon = a.stationarity_horizon;
  eo.burn_in = a.stationarity_burn_in;
  eo.dt = cfg.dt;
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    const TrajectoryRecord& rec = runs[k].record;
    const Vec theta = Vec::Constant(1, rec.rows.back()[rec.column_index("theta_theta")]);
    const Vec o = Vec::Constant(1, rec.rows.back()[rec.column_index("o_o")]);
    LinearJointProblem prob = make_scalar_problem(cfg.scalar.params(), cfg.scalar.theta, a.stationarity_seed + k);
    const GradientEstimates g = estimate_objective_gradients(prob, theta, o, eo);
    const std::string item = run_name(cfg, jobs[k]);
    auto judge = [&](const std::string& what, const ErgodicEstimate& e) {
      const double v = std::abs(e.scalar()), bound = a.stationarity_se * e.scalar_se();
      out.push_back({item, what + "_se", e.scalar_se(), std::numeric_limits<double>::quiet_NaN(), "info"});
      out.push_back({item, "abs_" + what, v, bound, v <= bound ? "pass" : "fail"});
    };
    judge("grad_loglik_theta", g.loglik_theta);
    judge("grad_objective_o", g.objective_sensor);
  }
}

}  // namespace detail

/// Tangent and derivative-matrix checks for the model of `cfg`, at its first initial iterate.
inline std::vector<TangentCheckRow> gradient_check_rows(const ExperimentConfig& cfg, std::uint64_t seed) {
  const GradientCheckConfig& g = cfg.gradient_check;
  TangentCheckOptions opt{g.horizon, g.dt, g.h, seed};
  const InitialIterate& init = cfg.initial.front();
  if (g.model == "benes") {
    const auto& b = cfg.benes;
    const BenesModel truth{b.mu, std::sqrt(b.sigma2), b.c, b.tau2, b.o0, b.o0};
    const BenesModel est{init.theta(0), init.theta(1), init.theta(2), b.tau2, b.o0, init.sensor(0)};
    return check_benes_tangents(truth, est, opt);
  }
  if (g.model == "scalar-linear") {
    const ScalarLinearParams p = cfg.scalar.params();
    auto build = [p](const Vec& th, const Vec& o) { return scalar_linear_model(p, th(0), o(0)); };
    return check_kb_tangents(build, cfg.theta_truth(), init.theta, init.sensor, cfg.theta_names(),
                             cfg.sensor_names(), opt);
  }
  auto rows = check_kb_tangents(detail::advdiff_builder(cfg, static_cast<std::size_t>(init.sensor.size()) / 2),
                                cfg.theta_truth(), init.theta, init.sensor, cfg.theta_names(), cfg.sensor_names(), opt);
  const auto mats = check_advdiff_matrices(advdiff::AdvDiffParams::from_vec(init.theta),
                                           detail::sensor_config(cfg, init.sensor), cfg.advdiff.kmax, g.matrix_h);
  for (auto r : mats) {
    r.quantity = "matrix_" + r.quantity;
    rows.push_back(std::move(r));
  }
  return rows;
}

inline ExperimentResult run_gradient_check(const ExperimentConfig& cfg) {
  ExperimentResult res;
  const auto& a = cfg.acceptance;
  for (auto seed : cfg.seeds) {
    const auto rows = gradient_check_rows(cfg, seed);
    TrajectoryRecord table;
    table.columns = {"row", "analytic_norm", "fd_norm", "rel_error"};
    table.metadata = {{"config_hash", cfg.hash}, {"seed", std::to_string(seed)}, {"experiment", cfg.experiment},
                      {"model", cfg.gradient_check.model}, {"tool_version", kToolVersion}};
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& r = rows[i];
      table.metadata.emplace_back("row " + std::to_string(i), r.quantity + "/" + r.coordinate);
      table.add_row({static_cast<double>(i), r.analytic, r.finite_difference, r.rel_error});
      const bool matrix = r.quantity.rfind("matrix_", 0) == 0;
      res.summary.push_back(detail::judged("seed" + std::to_string(seed) + "/" + r.quantity + "/" + r.coordinate,
                                           "rel_error", r.rel_error, matrix ? a.matrix_tolerance : a.tangent_tolerance,
                                           true));
    }
    res.runs.push_back({"tangents__seed" + std::to_string(seed) + ".csv", std::move(table)});
  }
  return res;
}

/// Runs every job of `cfg` on `workers` threads and computes the summary.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, std::size_t workers,
                                       const std::function<void(const std::string&)>& progress = {}) {
  ExperimentResult res;
  res.metadata = {{"config_hash", cfg.hash}, {"experiment", cfg.experiment}, {"tool_version", kToolVersion}};
  if (cfg.kind == ExperimentKind::gradient_check) {
    ExperimentResult g = run_gradient_check(cfg);
    g.metadata = res.metadata;
    return g;
  }
  const auto jobs = enumerate_jobs(cfg);
  res.runs = parallel_map<NamedRecord>(jobs.size(), workers, [&](std::size_t k) {
    NamedRecord nr{run_name(cfg, jobs[k]) + ".csv", run_single(cfg, jobs[k])};
    if (progress) progress(nr.file);
    return nr;
  });
  switch (cfg.kind) {
    case ExperimentKind::benes_joint:
      detail::summarize_final_errors(cfg, jobs, res.runs, res.summary);
      break;
    case ExperimentKind::linear_scalar:
      detail::summarize_final_errors(cfg, jobs, res.runs, res.summary);
      detail::summarize_stationarity(cfg, jobs, res.runs, res.summary);
      break;
    case ExperimentKind::benes_averaged:
      detail::summarize_l1(cfg, jobs, res.runs, res);
      break;
    case ExperimentKind::benes_tracking:
      detail::summarize_tracking(cfg, jobs, res.runs, res.summary);
      break;
    case ExperimentKind::advdiff_joint:
      detail::summarize_advdiff(cfg, jobs, res.runs, res.summary);
      break;
    case ExperimentKind::gradient_check:
      break;
  }
  return res;
}

inline void write_summary(const ExperimentResult& res, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  for (const auto& [k, v] : res.metadata) os << "# " << k << ": " << v << '\n';
  os << "item,quantity,value,threshold,status\n";
  for (const auto& r : res.summary)
    os << r.item << ',' << r.quantity << ',' << format_double(r.value) << ',' << format_double(r.threshold) << ','
       << r.status << '\n';
  os.flush();
  if (!os) throw IoError("write failed for '" + path + "'");
}

/// TTSGD_OUTPUT_ROOT if set and non-empty, else "results".
inline std::filesystem::path output_root() {
  const char* env = std::getenv(kOutputRootEnv);
  return env && *env ? std::filesystem::path(env) : std::filesystem::path("results");
}

inline std::filesystem::path write_outputs(const ExperimentConfig& cfg, const ExperimentResult& res) {
  const std::filesystem::path dir = output_root() / cfg.output_dir;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
  for (const auto& r : res.runs) emit_csv(r.record, (dir / r.file).string());
  for (const auto& r : res.extra) emit_csv(r.record, (dir / r.file).string());
  write_summary(res, (dir / "summary.csv").string());
  return dir;
}

/// Row-wise mean of records sharing columns and time grid.
inline TrajectoryRecord average_records(const std::vector<TrajectoryRecord>& recs) {
  if (recs.empty()) throw ConfigError("average needs at least one record");
  const TrajectoryRecord& ref = recs.front();
  TrajectoryRecord out;
  out.columns = ref.columns;
  out.rows.assign(ref.size(), std::vector<double>(ref.columns.size(), 0.0));
  bool same_hash = true;
  for (const auto& r : recs) {
    if (r.columns != ref.columns) throw AlignmentError("records have different columns");
    if (r.size() != ref.size()) throw AlignmentError("records have different numbers of rows");
    same_hash = same_hash && r.meta("config_hash") == ref.meta("config_hash");
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (!ref.columns.empty() && r.rows[i][0] != ref.rows[i][0])
        throw AlignmentError("records use different time grids (row " + std::to_string(i) + ")");
      for (std::size_t j = 0; j < r.columns.size(); ++j)
        out.rows[i][j] += r.rows[i][j] / static_cast<double>(recs.size());
    }
  }
  if (!ref.columns.empty())
    for (std::size_t i = 0; i < ref.size(); ++i) out.rows[i][0] = ref.rows[i][0];
  if (same_hash && !ref.meta("config_hash").empty()) out.metadata.emplace_back("config_hash", ref.meta("config_hash"));
  out.metadata.emplace_back("averaged_records", std::to_string(recs.size()));
  std::string seeds;
  for (const auto& r : recs) seeds += (seeds.empty() ? "" : " ") + r.meta("seed");
  out.metadata.emplace_back("seed", seeds);
  out.metadata.emplace_back("tool_version", kToolVersion);
  return out;
}

/// Oracle values for the model of `cfg`: steady filter variance and sensor objective at the
/// truth, for the first initial sensor locations and (where known) at the sensor optimum.
inline std::vector<std::pair<std::string, double>> riccati_report(const ExperimentConfig& cfg) {
  std::vector<std::pair<std::string, double>> out;
  const Vec o_init = cfg.initial.front().sensor;
  const std::string model = cfg.gradient_check.model;
  if (model == "benes") {
    const auto& b = cfg.benes;
    for (const auto& [label, o] : {std::pair<std::string, double>{"initial", o_init(0)}, {"optimum", b.o0}}) {
      const BenesModel m{b.mu, std::sqrt(b.sigma2), b.c, b.tau2, b.o0, o};
      out.emplace_back("steady_P_" + label, std::sqrt(b.sigma2) * std::sqrt(m.r()) / std::abs(b.c));
    }
    return out;
  }
  auto emit = [&](const std::string& label, const LinearGaussianModel& m) {
    const Mat S = riccati_steady_state(m);
    if (S.rows() == 1) out.emplace_back("sigma_inf_" + label, S(0, 0));
    out.emplace_back("trace_sigma_inf_" + label, S.trace());
    out.emplace_back("objective_" + label, (m.H * S).trace());
  };
  if (model == "scalar-linear") {
    const ScalarLinearParams p = cfg.scalar.params();
    emit("initial", scalar_linear_model(p, cfg.scalar.theta, o_init(0)));
    emit("optimum", scalar_linear_model(p, cfg.scalar.theta, p.o0));
    return out;
  }
  const auto build = detail::advdiff_builder(cfg, static_cast<std::size_t>(o_init.size()) / 2);
  emit("initial", build(cfg.theta_truth(), o_init));
  Vec at_targets(o_init.size());
  for (std::size_t i = 0; i < cfg.advdiff.targets.size(); ++i)
    at_targets.segment<2>(static_cast<Eigen::Index>(2 * i)) = cfg.advdiff.targets[i];
  emit("targets", build(cfg.theta_truth(), at_targets));
  return out;
}

}  // namespace ttsgd
