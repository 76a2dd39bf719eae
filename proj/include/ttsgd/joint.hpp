#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ttsgd/benes.hpp"
#include "ttsgd/kalman_bucy.hpp"
#include "ttsgd/linalg.hpp"
#include "ttsgd/record.hpp"
#include "ttsgd/scalar_linear.hpp"
#include "ttsgd/sde.hpp"
#include "ttsgd/two_timescale.hpp"

namespace ttsgd {

/// Everything one step of a joint problem exposes to the algorithm, evaluated at the
/// beginning of the step, plus the observation increment generated during it.
struct JointSignals {
  Vec dy;
  Vec psi_C;        // predicted observation rate C x_hat
  Mat psi_C_theta;  // n_y x n_theta
  Mat R_inv;        // n_y x n_y
  Vec psi_j_o;      // sensor gradient of Tr[H Sigma]
  double psi_j = 0.0;
};

/// Snapshot of the signal and filter for recording.
struct JointSummary {
  double signal = 0.0;
  double filter_mean = 0.0;
  double psi_j = 0.0;
};

/// Change of the data-generating truth at a given time (tracking experiments).
struct TruthJump {
  double time = 0.0;
  std::optional<Vec> theta_star;
  std::optional<double> o0;
};

/// Signal noise uses stream 0, observation noise stream 1, initial-state draws stream 2.
enum NoiseStreamId : std::uint64_t { kSignalStream = 0, kObservationStream = 1, kInitialStream = 2 };

/// Beneš signal, its filter and tangent filters. theta = (mu, sigma, c), one scalar sensor o.
class BenesJointProblem {
 public:
  struct Truth {
    double mu = 3.0;
    double sigma = 2.0;
    double c = 0.7;
    double tau2 = 2.0;
    double o0 = 4.0;
  };

  BenesJointProblem(const Truth& truth, std::uint64_t seed, double x0 = 0.0)
      : truth_(truth), x_(x0), signal_noise_(seed, kSignalStream, 1), obs_noise_(seed, kObservationStream, 1) {}

  static constexpr std::size_t n_theta() { return 3; }
  static constexpr std::size_t n_sensor() { return 1; }
  static std::vector<std::string> theta_names() { return {"mu", "sigma", "c"}; }
  static std::vector<std::string> sensor_names() { return {"o"}; }

  Vec theta_star() const { return Vec{{truth_.mu, truth_.sigma, truth_.c}}; }
  Vec sensor_star() const { return Vec{{truth_.o0}}; }
  const Truth& truth() const noexcept { return truth_; }
  const BenesFilterState& filter() const noexcept { return filter_; }
  double signal() const noexcept { return x_; }

  BenesModel model_at(const Vec& theta, const Vec& o) const {
    BenesModel m{theta(0), theta(1), theta(2), truth_.tau2, truth_.o0, o(0)};
    m.validate();
    return m;
  }

  JointSignals step(const Vec& theta, const Vec& o, std::size_t k, double dt) {
    const BenesModel est = model_at(theta, o);
    const BenesMoments mom = benes_posterior_moments(est, filter_);

    JointSignals sig;
    sig.psi_C = Vec::Constant(1, est.c * mom.x_hat);
    sig.psi_C_theta.resize(1, 3);
    sig.psi_C_theta(0, 0) = est.c * mom.x_hat_grad[kMu];
    sig.psi_C_theta(0, 1) = est.c * mom.x_hat_grad[kSigma];
    sig.psi_C_theta(0, 2) = mom.x_hat + est.c * mom.x_hat_grad[kC];
    sig.R_inv = Mat::Constant(1, 1, 1.0 / est.r());
    sig.psi_j = mom.Sigma_hat;
    sig.psi_j_o = Vec::Constant(1, mom.Sigma_hat_grad[kO]);

    double dv = 0.0, dw = 0.0;
    signal_noise_.fill(k, dt, std::span<double>(&dv, 1));
    obs_noise_.fill(k, dt, std::span<double>(&dw, 1));
    const double dy = truth_.c * x_ * dt + std::sqrt(est.r()) * dw;
    sig.dy = Vec::Constant(1, dy);

    const double drift = truth_.mu * truth_.sigma * std::tanh(truth_.mu / truth_.sigma * x_);
    x_ += drift * dt + truth_.sigma * dv;
    if (!std::isfinite(x_)) throw NumericBlowup("Beneš signal", 0, k);
    filter_ = benes_step(est, filter_, dy, dt);
    return sig;
  }

  JointSummary summary(const Vec& theta, const Vec& o) const {
    const BenesMoments mom = benes_posterior_moments(model_at(theta, o), filter_);
    return {x_, mom.x_hat, mom.Sigma_hat};
  }

  void apply(const TruthJump& j) {
    if (j.theta_star) {
      require_size(j.theta_star->size(), 3, "Beneš truth");
      truth_.mu = (*j.theta_star)(0);
      truth_.sigma = (*j.theta_star)(1);
      truth_.c = (*j.theta_star)(2);
    }
    if (j.o0) truth_.o0 = *j.o0;
  }

 private:
  Truth truth_;
  double x_;
  BenesFilterState filter_{};
  NoiseStream signal_noise_;
  NoiseStream obs_noise_;
};

/// Linear-Gaussian signal with a Kalman-Bucy filter and both tangent families.
/// `build(theta, o)` returns the model together with its derivative blocks; the data are
/// generated by the model at (theta_star, o) for the current sensor locations o.
class LinearJointProblem {
 public:
  using Builder = std::function<LinearGaussianModel(const Vec& theta, const Vec& o)>;

  struct Options {
    std::vector<std::string> theta_names;
    std::vector<std::string> sensor_names;
    std::size_t psd_check_every = 1000;
  };

  LinearJointProblem(Builder build, Vec theta_star, const Vec& o_ref, Vec x0, Vec x_hat0, Mat Sigma0,
                     std::uint64_t seed, Options opt)
      : build_(std::move(build)), theta_star_(std::move(theta_star)), opt_(std::move(opt)), x_(std::move(x0)) {
    const LinearGaussianModel m = build_(theta_star_, o_ref);
    m.validate();
    n_y_ = m.n_y();
    set_truth_dynamics(m);
    bundle_ = KbBundle::init(m, std::move(x_hat0), std::move(Sigma0));
    require_size(x_.size(), m.n_x(), "initial signal");
    signal_noise_ = NoiseStream(seed, kSignalStream, static_cast<std::size_t>(m.n_x()));
    obs_noise_ = NoiseStream(seed, kObservationStream, static_cast<std::size_t>(n_y_));
    if (opt_.theta_names.empty())
      for (std::size_t i = 0; i < m.n_theta(); ++i) opt_.theta_names.push_back("theta" + std::to_string(i));
    if (opt_.sensor_names.empty())
      for (std::size_t i = 0; i < m.n_sensor(); ++i) opt_.sensor_names.push_back("o" + std::to_string(i));
  }

  std::size_t n_theta() const noexcept { return opt_.theta_names.size(); }
  std::size_t n_sensor() const noexcept { return opt_.sensor_names.size(); }
  const std::vector<std::string>& theta_names() const noexcept { return opt_.theta_names; }
  const std::vector<std::string>& sensor_names() const noexcept { return opt_.sensor_names; }
  Vec theta_star() const { return theta_star_; }
  const KbBundle& bundle() const noexcept { return bundle_; }
  const Vec& signal() const noexcept { return x_; }

  JointSignals step(const Vec& theta, const Vec& o, std::size_t k, double dt) {
    const LinearGaussianModel est = build_(theta, o);
    const KbState& st = bundle_.state;

    JointSignals sig;
    sig.psi_C = psi_C(est, st);
    sig.psi_C_theta = psi_C_grad(est, st, bundle_.d_theta, Wrt::parameters);
    Eigen::LLT<Mat> llt(est.R);
    if (llt.info() != Eigen::Success) throw ConfigError("observation covariance R is not positive definite");
    sig.R_inv = llt.solve(Mat::Identity(est.n_y(), est.n_y()));
    sig.psi_j = psi_j(est, st);
    sig.psi_j_o = psi_j_grad(est, bundle_.d_sensor);

    // Data from the truth at the current sensor locations.
    const LinearGaussianModel truth_obs = build_(theta_star_, o);
    Eigen::LLT<Mat> rllt(truth_obs.R);
    if (rllt.info() != Eigen::Success) throw ConfigError("true observation covariance is not positive definite");
    Vec dv(x_.size()), dw(n_y_);
    signal_noise_.fill(k, dt, std::span<double>(dv.data(), static_cast<std::size_t>(dv.size())));
    obs_noise_.fill(k, dt, std::span<double>(dw.data(), static_cast<std::size_t>(dw.size())));
    sig.dy = truth_obs.C * x_ * dt;
    sig.dy.noalias() += rllt.matrixL() * dw;

    Vec x_next = x_ + A_star_ * x_ * dt;
    x_next.noalias() += sqrtQ_star_ * dv;
    x_ = std::move(x_next);
    if (const auto bad = first_non_finite(x_); bad >= 0)
      throw NumericBlowup("linear signal", static_cast<std::size_t>(bad), k);

    bundle_.step(est, sig.dy, dt);
    if (opt_.psd_check_every > 0 && (k + 1) % opt_.psd_check_every == 0) check_psd(bundle_.state.Sigma);
    return sig;
  }

  JointSummary summary(const Vec& theta, const Vec& o) const {
    const LinearGaussianModel est = build_(theta, o);
    return {x_(0), bundle_.state.x_hat(0), psi_j(est, bundle_.state)};
  }

  void apply(const TruthJump& j) {
    if (j.o0) throw ConfigError("linear problems take sensor anchors from their model builder; o0 jumps unsupported");
    if (j.theta_star) {
      require_size(j.theta_star->size(), theta_star_.size(), "linear truth");
      theta_star_ = *j.theta_star;
      set_truth_dynamics(build_(theta_star_, Vec::Zero(static_cast<Eigen::Index>(n_sensor()))));
    }
  }

 private:
  void set_truth_dynamics(const LinearGaussianModel& m) {
    A_star_ = m.A;
    Eigen::SelfAdjointEigenSolver<Mat> es(m.Q);
    sqrtQ_star_ = es.operatorSqrt();
  }

  Builder build_;
  Vec theta_star_;
  Options opt_;
  Vec x_;
  Eigen::Index n_y_ = 0;
  Mat A_star_;
  Mat sqrtQ_star_;
  KbBundle bundle_;
  NoiseStream signal_noise_;
  NoiseStream obs_noise_;
};

/// Scalar linear-Gaussian problem with parameter theta and sensor o; the filter starts at
/// (x_hat, Sigma) = (0, Sigma0) and the signal at x0.
inline LinearJointProblem make_scalar_problem(const ScalarLinearParams& p, double theta_star, std::uint64_t seed,
                                              double x0 = 0.0, double Sigma0 = 0.0) {
  LinearJointProblem::Options opt{{"theta"}, {"o"}, 1000};
  return LinearJointProblem([p](const Vec& th, const Vec& o) { return scalar_linear_model(p, th(0), o(0)); },
                            Vec::Constant(1, theta_star), Vec::Constant(1, p.o0), Vec::Constant(1, x0), Vec::Zero(1),
                            Mat::Constant(1, 1, Sigma0), seed, std::move(opt));
}

/// Increments of the joint algorithm for one step of `prob`:
///   d theta = gamma_slow [psi_C^theta]' R^-1 (dy - psi_C dt),   d o = -gamma_fast psi_j^o dt.
struct JointIncrements {
  Vec d_theta;
  Vec d_sensor;
};

inline JointIncrements joint_increments(const JointSignals& sig, const ScheduleSet& slow, const ScheduleSet& fast,
                                        double t, double dt) {
  const Vec innov = sig.dy - sig.psi_C * dt;
  JointIncrements inc;
  inc.d_theta = slow(t).cwiseProduct(sig.psi_C_theta.transpose() * (sig.R_inv * innov));
  inc.d_sensor = -fast(t).cwiseProduct(sig.psi_j_o) * dt;
  require_finite(inc.d_theta, "parameter increment");
  require_finite(inc.d_sensor, "sensor increment");
  return inc;
}

/// One step of joint online parameter estimation (slow) and sensor placement (fast):
/// signal and observation, filter and tangents at the current iterates, parameter and
/// sensor increments from beginning-of-step readouts, projection, running averages.
template <class Problem>
IterateState joint_rml_osp_step(Problem& prob, const IterateState& s, const ScheduleSet& slow, const ScheduleSet& fast,
                                const ProjectionSet& sets, std::size_t k, double dt, JointSignals* signals = nullptr) {
  JointSignals sig = prob.step(s.alpha, s.beta, k, dt);
  const JointIncrements inc = joint_increments(sig, slow, fast, s.t, dt);
  const IterateState moved = project(s, sets, inc.d_theta, inc.d_sensor);
  IterateState next = polyak_ruppert_update(s, moved.alpha, moved.beta, dt);
  if (signals) *signals = std::move(sig);
  return next;
}

/// Recursive maximum likelihood with the sensors held fixed.
template <class Problem>
IterateState rml_step(Problem& prob, const IterateState& s, const ScheduleSet& rates, const Box& theta_box,
                      std::size_t k, double dt) {
  const JointSignals sig = prob.step(s.alpha, s.beta, k, dt);
  const Vec grad = sig.psi_C_theta.transpose() * (sig.R_inv * (sig.dy - sig.psi_C * dt));
  Vec theta = s.alpha;
  const Vec g = rates(s.t);
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double proposed = theta(i) + g(i) * grad(i);
    if (theta_box.size() == 0 || theta_box.contains(i, proposed)) theta(i) = proposed;
  }
  return polyak_ruppert_update(s, theta, s.beta, dt);
}

/// Sensor-placement descent on Tr[H Sigma] with the parameters held fixed.
template <class Problem>
IterateState sensor_descent_step(Problem& prob, const IterateState& s, const ScheduleSet& rates, const Box& sensor_box,
                                 std::size_t k, double dt) {
  const JointSignals sig = prob.step(s.alpha, s.beta, k, dt);
  Vec o = s.beta;
  const Vec g = rates(s.t);
  for (Eigen::Index i = 0; i < o.size(); ++i) {
    const double proposed = o(i) - g(i) * sig.psi_j_o(i) * dt;
    if (sensor_box.size() == 0 || sensor_box.contains(i, proposed)) o(i) = proposed;
  }
  return polyak_ruppert_update(s, s.alpha, o, dt);
}

struct JointRunConfig {
  double dt = 0.01;
  std::size_t n_steps = 1000;
  std::size_t record_every = 100;
  ScheduleSet slow;
  ScheduleSet fast;
  ProjectionSet sets;
  std::vector<TruthJump> jumps;
};

/// Columns written by run_joint for a problem.
template <class Problem>
std::vector<std::string> joint_columns(const Problem& prob) {
  std::vector<std::string> cols{"t"};
  for (const auto& n : prob.theta_names()) cols.push_back("theta_" + n);
  for (const auto& n : prob.sensor_names()) cols.push_back("o_" + n);
  for (const auto& n : prob.theta_names()) cols.push_back("avg_theta_" + n);
  for (const auto& n : prob.sensor_names()) cols.push_back("avg_o_" + n);
  for (const auto& n : prob.theta_names()) cols.push_back("true_theta_" + n);
  cols.push_back("signal");
  cols.push_back("filter_mean");
  cols.push_back("psi_j");
  cols.push_back("psi_j_window");
  return cols;
}

/// Runs the joint algorithm over n_steps and records every record_every-th state (and the
/// first and last). psi_j_window is the mean of Tr[H Sigma] over the steps since the last row.
template <class Problem>
TrajectoryRecord run_joint(Problem& prob, IterateState s, const JointRunConfig& cfg, IterateState* final_state = nullptr) {
  if (cfg.record_every < 1) throw DomainError("record_every must be >= 1");
  const TimeGrid grid(s.t, cfg.dt, cfg.n_steps);
  TrajectoryRecord rec;
  rec.columns = joint_columns(prob);

  std::vector<bool> applied(cfg.jumps.size(), false);
  auto apply_due = [&](double t) {
    for (std::size_t j = 0; j < cfg.jumps.size(); ++j)
      if (!applied[j] && t >= cfg.jumps[j].time - 1e-12) {
        prob.apply(cfg.jumps[j]);
        applied[j] = true;
      }
  };

  auto push = [&](const IterateState& st, double window) {
    const JointSummary sm = prob.summary(st.alpha, st.beta);
    std::vector<double> row{st.t};
    auto add = [&](const Vec& v) { row.insert(row.end(), v.data(), v.data() + v.size()); };
    add(st.alpha);
    add(st.beta);
    add(st.avg_alpha);
    add(st.avg_beta);
    add(prob.theta_star());
    row.push_back(sm.signal);
    row.push_back(sm.filter_mean);
    row.push_back(sm.psi_j);
    row.push_back(std::isnan(window) ? sm.psi_j : window);
    rec.add_row(std::move(row));
  };

  apply_due(grid.time(0));
  push(s, std::numeric_limits<double>::quiet_NaN());
  double window_sum = 0.0;
  std::size_t window_n = 0;
  JointSignals sig;
  for (std::size_t k = 0; k < grid.n_steps; ++k) {
    apply_due(grid.time(k));
    try {
      s = joint_rml_osp_step(prob, s, cfg.slow, cfg.fast, cfg.sets, k, cfg.dt, &sig);
    } catch (const NumericBlowup& e) {
      throw e.at_step(k, "joint algorithm");
    }
    s.t = grid.time(k + 1);
    window_sum += sig.psi_j;
    ++window_n;
    const std::size_t done = k + 1;
    if (done % cfg.record_every == 0 || done == grid.n_steps) {
      push(s, window_sum / static_cast<double>(window_n));
      window_sum = 0.0;
      window_n = 0;
    }
  }
  if (final_state) *final_state = s;
  return rec;
}

}  // namespace ttsgd
