// One line per acceptance criterion; exit status 1 if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ttsgd/config.hpp"
#include "ttsgd/experiment.hpp"
#include "ttsgd/ttsgd.hpp"

using namespace ttsgd;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

const std::string kConfigs = TTSGD_CONFIG_DIR;
const std::string kCli = TTSGD_CLI_PATH;

fs::path output_base() {
  const char* env = std::getenv(kOutputRootEnv);
  return env && *env ? fs::path(env) : fs::path(TTSGD_ACCEPTANCE_OUT);
}

std::size_t workers() { return std::max(1u, std::thread::hardware_concurrency()); }

std::string fmt(double v, const char* f = "%.4g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---- filter oracles -------------------------------------------------------

Outcome riccati_oracle() {
  // Scalar A = -1, Q = 1, C = 1, R = 1: Sigma^2 + 2 Sigma - 1 = 0.
  const double exact = std::sqrt(2.0) - 1.0;
  LinearGaussianModel m;
  m.A = Mat::Constant(1, 1, -1.0);
  m.Q = Mat::Constant(1, 1, 1.0);
  m.C = Mat::Constant(1, 1, 1.0);
  m.R = Mat::Constant(1, 1, 1.0);
  m.H = Mat::Constant(1, 1, 1.0);
  const double solved = riccati_steady_state(m)(0, 0);
  KbState s{Vec::Zero(1), Mat::Zero(1, 1)};
  const double dt = 1e-3;
  for (int k = 0; k < 50000; ++k) s = kb_step(m, s, Vec::Zero(1), dt);
  const double integrated = s.Sigma(0, 0);
  const double e1 = std::abs(solved - exact), e2 = std::abs(integrated - exact);
  return {e1 < 1e-6 && e2 < 1e-3, "solver err " + fmt(e1) + " (< 1e-6), integration err " + fmt(e2) + " (< 1e-3)"};
}

Outcome benes_closed_form() {
  const double sigma = 2.0, c = 0.7, r = 2.0, dt = 1e-4;
  const BenesModel m{3.0, sigma, c, r, 4.0, 4.0};
  BenesFilterState s;
  std::size_t k = 0;
  double worst = 0.0;
  for (double t : {0.5, 1.0, 5.0}) {
    for (const auto target = static_cast<std::size_t>(std::llround(t / dt)); k < target; ++k)
      s = benes_step(m, s, 0.0, dt);
    const double exact = sigma * std::sqrt(r) / c * std::tanh(c * sigma * t / std::sqrt(r));
    worst = std::max(worst, std::abs(s.P - exact));
  }
  return {worst < 1e-3, "max |P(t) - closed form| over t in {0.5, 1, 5} = " + fmt(worst) + " (< 1e-3)"};
}

Outcome benes_kalman_reduction() {
  const BenesModel b{0.0, 2.0, 0.7, 2.0, 4.0, 4.0};
  LinearGaussianModel lin;
  lin.A = Mat::Zero(1, 1);
  lin.Q = Mat::Constant(1, 1, b.sigma * b.sigma);
  lin.C = Mat::Constant(1, 1, b.c);
  lin.R = Mat::Constant(1, 1, b.r());
  lin.H = Mat::Constant(1, 1, 1.0);
  const double dt = 0.01;
  const NoiseStream sv(5, 0, 1), sw(5, 1, 1);
  BenesFilterState bs;
  KbState ks{Vec::Zero(1), Mat::Zero(1, 1)};
  double x = 0.0, worst = 0.0;
  for (std::size_t k = 0; k < 100000; ++k) {
    const double dy = b.c * x * dt + std::sqrt(b.r()) * sw.increments(k, dt)(0);
    x += b.sigma * sv.increments(k, dt)(0);
    bs = benes_step(b, bs, dy, dt);
    ks = kb_step(lin, ks, Vec::Constant(1, dy), dt);
    const BenesMoments mom = benes_posterior_moments(b, bs);
    worst = std::max({worst, std::abs(mom.x_hat - ks.x_hat(0)), std::abs(mom.Sigma_hat - ks.Sigma(0, 0))});
  }
  return {worst < 1e-10, "max per-step state difference over 1e5 steps = " + fmt(worst) + " (< 1e-10)"};
}

Outcome tangent_suite() {
  std::size_t n = 0, bad = 0;
  double worst_tangent = 0.0, worst_matrix = 0.0;
  for (const char* f : {"gradient_check_scalar.yaml", "gradient_check_benes.yaml", "gradient_check_advdiff.yaml"}) {
    const ExperimentConfig cfg = load_config(kConfigs + "/" + f);
    if (cfg.gradient_check.h != 1e-4 || cfg.gradient_check.horizon != 10.0)
      return {false, std::string(f) + " does not use h = 1e-4 and T = 10"};
    for (const auto& r : gradient_check_rows(cfg, cfg.seeds.front())) {
      const bool matrix = r.quantity.rfind("matrix_", 0) == 0;
      ++n;
      if (matrix) {
        worst_matrix = std::max(worst_matrix, r.rel_error);
        bad += !(r.rel_error < 1e-6);
      } else {
        worst_tangent = std::max(worst_tangent, r.rel_error);
        bad += !(r.rel_error < 1e-2);
      }
    }
  }
  return {bad == 0, std::to_string(n) + " comparisons, worst tangent rel err " + fmt(worst_tangent) +
                        " (< 1e-2), worst matrix rel err " + fmt(worst_matrix) + " (< 1e-6)"};
}

// ---- experiments ----------------------------------------------------------

ExperimentResult run_config(const std::string& file) {
  const ExperimentConfig cfg = load_config(kConfigs + "/" + file);
  const ExperimentResult res = run_experiment(cfg, workers());
  const fs::path root = output_base();
  setenv(kOutputRootEnv, root.c_str(), 1);
  write_outputs(cfg, res);
  return res;
}

std::vector<SummaryRow> rows_with(const ExperimentResult& res, const std::string& prefix) {
  std::vector<SummaryRow> out;
  for (const auto& r : res.summary)
    if (r.quantity.rfind(prefix, 0) == 0) out.push_back(r);
  return out;
}

Outcome judge_rows(const std::vector<SummaryRow>& rows, const std::string& label) {
  if (rows.empty()) return {false, "no '" + label + "' rows in summary"};
  std::size_t fails = 0;
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& r : rows) {
    fails += r.status != "pass";
    worst = std::max(worst, r.value);
  }
  return {fails == 0, std::to_string(rows.size() - fails) + "/" + std::to_string(rows.size()) + " " + label +
                          " rows pass, max value " + fmt(worst)};
}

Outcome benes_joint() {
  const auto res = run_config("benes_joint.yaml");
  auto rows = rows_with(res, "final_error_mu");
  const auto o = rows_with(res, "final_error_o");
  rows.insert(rows.end(), o.begin(), o.end());
  for (const auto& r : rows)
    if (!(r.threshold <= 0.3)) return {false, "threshold above 0.3 in config"};
  if (rows.size() != 32) return {false, "expected 16 schedule/init groups, found " + std::to_string(rows.size() / 2)};
  return judge_rows(rows, "|seed-mean final - truth| < 0.3");
}

Outcome averaged_slopes() {
  const auto res = run_config("benes_averaged.yaml");
  std::string slopes;
  for (const auto& r : res.summary)
    if (r.quantity.rfind("l1_slope_", 0) == 0) slopes += r.item + ":" + r.quantity.substr(9) + "=" + fmt(r.value, "%.3f") + " ";
  const auto spread = rows_with(res, "avg_slope_spread");
  const auto gap = rows_with(res, "raw_slope_min_gap");
  if (spread.empty() || gap.empty()) return {false, "missing slope rows"};
  const bool ok = spread[0].status == "pass" && gap[0].status == "pass" && spread[0].threshold <= 0.15;
  return {ok, slopes + "| averaged spread " + fmt(spread[0].value, "%.3f") + " < " + fmt(spread[0].threshold) +
                  ", raw gap " + fmt(gap[0].value, "%.3f") + " > " + fmt(gap[0].threshold)};
}

Outcome tracking() {
  const auto res = run_config("benes_tracking.yaml");
  const auto rows = rows_with(res, "tail_error_mu");
  for (const auto& r : rows)
    if (!(r.threshold <= 0.3)) return {false, "threshold above 0.3 in config"};
  return judge_rows(rows, "post-jump tail error");
}

Outcome advdiff_placement() {
  const auto res = run_config("advdiff_joint.yaml");
  std::string per_seed;
  for (const auto& r : res.summary)
    if (r.quantity == "spearman_objective_at_truth" || r.quantity == "sensors_near_target")
      per_seed += r.item.substr(r.item.rfind("seed")) + (r.quantity[0] == 's' && r.quantity[1] == 'p' ? " rho=" : " near=") +
                  fmt(r.value, "%.3g") + " ";
  const auto maj = rows_with(res, "runs_meeting_both");
  if (maj.empty()) return {false, "missing majority row"};
  return {maj[0].status == "pass", per_seed + "| seeds meeting both: " + fmt(maj[0].value, "%.0f") + " of 3"};
}

Outcome stationarity() {
  const auto res = run_config("scalar_linear.yaml");
  std::string detail;
  bool ok = true;
  std::size_t n = 0;
  for (const auto& r : res.summary)
    if (r.quantity.rfind("abs_grad_", 0) == 0) {
      ++n;
      ok = ok && r.status == "pass";
      detail += r.quantity.substr(4) + "=" + fmt(r.value, "%.3g") + " vs 3 SE=" + fmt(r.threshold, "%.3g") + " ";
    }
  return {ok && n > 0, detail};
}

Outcome surrogate() {
  // Quadratic: g = |b - M a|^2 / 2, f = |b|^2 / 2 at b*(a) = M a, so d/da f(a, b*(a)) = M'M a.
  const Mat M{{1.0, 2.0}, {-0.5, 0.3}, {0.7, -1.1}};
  const Vec a{{0.4, -0.9}};
  const Vec quad = surrogate_gradient(Vec::Zero(2), M * a, -M.transpose(), Mat::Identity(3, 3));
  const double e1 = (quad - M.transpose() * M * a).cwiseAbs().maxCoeff();

  // Non-quadratic inner problem solved by Newton; outer derivative by central differences.
  const Mat N{{1.0, 0.5}, {-0.3, 0.8}};
  auto inner = [&](const Vec& x) {
    Vec b = Vec::Zero(2);
    const Vec rhs = N * x;
    for (int it = 0; it < 100; ++it) {
      const Vec grad = b.array().cube() + b.array() - rhs.array();
      b -= grad.cwiseQuotient((3.0 * b.array().square() + 1.0).matrix());
      if (grad.norm() < 1e-15) break;
    }
    return b;
  };
  auto f = [](const Vec& x, const Vec& b) { return 0.5 * b.squaredNorm() + std::sin(x(0)) * b(1) + x.squaredNorm(); };
  const Vec x{{0.6, -0.4}};
  const Vec b = inner(x);
  const Vec sg = surrogate_gradient(Vec{{std::cos(x(0)) * b(1) + 2 * x(0), 2 * x(1)}}, Vec{{b(0), b(1) + std::sin(x(0))}},
                                    -N.transpose(), (3.0 * b.array().square() + 1.0).matrix().asDiagonal());
  Vec fd(2);
  const double h = 1e-5;
  for (int i = 0; i < 2; ++i) {
    Vec up = x, dn = x;
    up(i) += h;
    dn(i) -= h;
    fd(i) = (f(up, inner(up)) - f(dn, inner(dn))) / (2 * h);
  }
  const double e2 = (sg - fd).norm() / fd.norm();
  return {e1 < 1e-12 && e2 < 1e-4, "quadratic err " + fmt(e1) + " (< 1e-12), nested FD rel err " + fmt(e2) + " (< 1e-4)"};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const fs::path base = output_base() / "determinism_check";
  fs::remove_all(base);
  std::vector<fs::path> dirs;
  for (int w : {1, 3}) {
    const fs::path root = base / ("workers" + std::to_string(w));
    const std::string cmd = std::string(kOutputRootEnv) + "='" + root.string() + "' '" + kCli + "' run '" + kConfigs +
                            "/determinism.yaml' --quiet -j " + std::to_string(w) + " > /dev/null";
    if (const int rc = std::system(cmd.c_str()); rc != 0) return {false, "cli exited with status " + std::to_string(rc)};
    dirs.push_back(root / "determinism");
  }
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dirs[0])) {
    const fs::path other = dirs[1] / e.path().filename();
    if (!fs::exists(other)) return {false, "missing " + other.string()};
    if (slurp(e.path()) != slurp(other)) return {false, e.path().filename().string() + " differs"};
    ++files;
  }
  std::size_t files3 = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dirs[1])) ++files3;
  if (files3 != files) return {false, "file counts differ"};
  return {files > 1, std::to_string(files) + " files byte-identical between 1 and 3 workers"};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> fn;
    double time_limit;  // seconds; 0 = none
  };
  const std::vector<Criterion> criteria{
      {"riccati-oracle", riccati_oracle, 1.0},
      {"benes-closed-form", benes_closed_form, 5.0},
      {"benes-kalman-reduction", benes_kalman_reduction, 5.0},
      {"tangent-gradient-suite", tangent_suite, 30.0},
      {"benes-joint-convergence", benes_joint, 0.0},
      {"averaged-slope-agreement", averaged_slopes, 0.0},
      {"constant-rate-tracking", tracking, 0.0},
      {"advdiff-sensor-placement", advdiff_placement, 0.0},
      {"stationarity-readout", stationarity, 0.0},
      {"surrogate-gradient", surrogate, 0.0},
      {"determinism", determinism, 0.0},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto& c = criteria[i];
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.time_limit > 0.0 && sec >= c.time_limit) {
      o.pass = false;
      o.detail += "; runtime over " + fmt(c.time_limit) + " s";
    }
    failed += !o.pass;
    std::printf("%s %2zu %-26s %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", i + 1, c.name, o.detail.c_str(), sec);
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria pass\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
  return failed ? 1 : 0;
}
