#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ttsgd/joint.hpp"
#include "ttsgd/schedule.hpp"
#include "ttsgd/two_timescale.hpp"

using namespace ttsgd;

namespace {

ScheduleSet decay(std::size_t n, double g0, double eta) {
  return ScheduleSet(n, LearningRateSchedule::decaying(g0, eta));
}

ScheduleSet constant(std::size_t n, double g0) { return ScheduleSet(n, LearningRateSchedule::constant(g0)); }

}  // namespace

TEST(Schedule, DecayValue) {
  EXPECT_DOUBLE_EQ(lr_eval(LearningRateSchedule::decaying(1.0, 0.75, 1.0), 15.0), 0.125);
}

TEST(Schedule, ConstantAndMonotone) {
  const auto c = LearningRateSchedule::constant(0.3);
  for (double t : {0.0, 1.0, 1e6}) EXPECT_EQ(c(t), 0.3);
  const auto d = LearningRateSchedule::decaying(2.0, 0.6, 0.5);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1e4);
  for (int i = 0; i < 10000; ++i) {
    double s = u(rng), t = u(rng);
    if (t < s) std::swap(s, t);
    EXPECT_LE(d(t), d(s));
  }
  EXPECT_LT(d(2.0), d(1.0));
  EXPECT_THROW(d(-1.0), DomainError);
}

TEST(Schedule, RateAssumptions) {
  auto sched = [](double eta) { return LearningRateSchedule::decaying(1.0, eta); };
  EXPECT_TRUE(check_rate_assumptions(sched(0.9), sched(0.6)).satisfied());
  const auto low = check_rate_assumptions(sched(0.4), sched(0.2));
  EXPECT_FALSE(low.satisfied());
  EXPECT_TRUE(low.additive_noise_range);
  const auto swapped = check_rate_assumptions(sched(0.6), sched(0.9));
  EXPECT_FALSE(swapped.satisfied());
  EXPECT_FALSE(swapped.separated);
  EXPECT_THROW(check_rate_assumptions(LearningRateSchedule::constant(1.0), sched(0.6)), ConfigError);
}

TEST(Projection, RejectsOnlyOffendingCoordinates) {
  const ProjectionSet sets{Box{Vec{{0.0, 0.0}}, Vec{{1.0, 1.0}}}, Box{Vec{{-1.0}}, Vec{{1.0}}}};
  const IterateState s = IterateState::start(Vec{{0.1, 0.5}}, Vec{{0.0}});
  const IterateState out = project(s, sets, Vec{{-0.2, 0.1}}, Vec{{0.3}});
  EXPECT_EQ(out.alpha(0), 0.1);
  EXPECT_DOUBLE_EQ(out.alpha(1), 0.6);
  EXPECT_DOUBLE_EQ(out.beta(0), 0.3);
  const IterateState pass = project(s, sets, Vec{{0.05, -0.05}}, Vec{{-0.5}});
  EXPECT_DOUBLE_EQ(pass.alpha(0), 0.15);
  EXPECT_DOUBLE_EQ(pass.alpha(1), 0.45);
  EXPECT_DOUBLE_EQ(pass.beta(0), -0.5);
}

TEST(Projection, FuzzNeverLeavesBox) {
  const ProjectionSet sets{Box{Vec{{0.1, -2.0}}, Vec{{5.0, 2.0}}}, Box{Vec{{-3.0}}, Vec{{3.0}}}};
  IterateState s = IterateState::start(Vec{{1.0, 0.0}}, Vec{{0.0}});
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd(0.0, 0.7);
  for (int i = 0; i < 1000000; ++i) {
    s = project(s, sets, Vec{{nd(rng), nd(rng)}}, Vec{{nd(rng)}});
    ASSERT_TRUE(sets.slow.contains(s.alpha) && sets.fast.contains(s.beta)) << "step " << i;
  }
}

TEST(Averaging, ConstantAndLinearPaths) {
  IterateState s = IterateState::start(Vec::Constant(1, 2.5), Vec::Constant(1, 0.0));
  const double dt = 0.01;
  for (int k = 0; k < 1000; ++k) {
    const double next = (k + 1) * dt;
    s = polyak_ruppert_update(s, Vec::Constant(1, 2.5), Vec::Constant(1, next), dt);
  }
  EXPECT_NEAR(s.avg_alpha(0), 2.5, 1e-13);
  EXPECT_NEAR(s.avg_beta(0), s.t / 2.0, 1e-12);
}

TEST(Averaging, DependsOnlyOnPath) {
  // Produce a path with one schedule, then re-average the same path on its own.
  IterateState s = IterateState::start(Vec::Constant(1, 1.0), Vec::Constant(1, -1.0));
  const NoiseStream ns(3, 0, 2);
  const double dt = 0.01;
  std::vector<IterateState> path{s};
  for (std::size_t k = 0; k < 2000; ++k) {
    const Vec n = ns.increments(k, dt);
    s = generic_tt_step(s, s.alpha, s.beta - s.alpha, n.head(1), n.tail(1), decay(1, 0.5, 0.9), decay(1, 2.0, 0.6), dt);
    path.push_back(s);
  }
  IterateState r = path.front();
  for (std::size_t k = 1; k < path.size(); ++k) r = polyak_ruppert_update(r, path[k].alpha, path[k].beta, dt);
  EXPECT_EQ(r.avg_alpha, s.avg_alpha);
  EXPECT_EQ(r.avg_beta, s.avg_beta);
}

TEST(GenericStep, DeterministicFlowConverges) {
  // f = |alpha|^2 / 2, g = |beta - alpha|^2 / 2, no noise.
  IterateState s = IterateState::start(Vec{{1.0, -0.5}}, Vec{{2.0, 1.0}});
  const double dt = 0.01;
  const auto slow = decay(2, 1.0, 0.9), fast = decay(2, 1.0, 0.6);
  const Vec z = Vec::Zero(2);
  for (int k = 0; k < 100000; ++k) s = generic_tt_step(s, s.alpha, s.beta - s.alpha, z, z, slow, fast, dt);
  EXPECT_LT(s.alpha.cwiseAbs().maxCoeff(), 1e-3);
  EXPECT_LT(s.beta.cwiseAbs().maxCoeff(), 1e-3);
}

TEST(GenericStep, FrozenSlowTimescale) {
  IterateState s = IterateState::start(Vec{{1.0}}, Vec{{3.0}});
  const NoiseStream ns(5, 0, 2);
  for (std::size_t k = 0; k < 1000; ++k) {
    const Vec n = ns.increments(k, 0.01);
    s = generic_tt_step(s, s.alpha, s.beta - s.alpha, n.head(1), n.tail(1), constant(1, 0.0), decay(1, 1.0, 0.6),
                        0.01);
  }
  EXPECT_EQ(s.alpha(0), 1.0);
  EXPECT_LT(std::abs(s.beta(0) - 1.0), 0.5);
}

TEST(GenericStep, NonFiniteIsBlowup) {
  const IterateState s = IterateState::start(Vec{{1.0}}, Vec{{3.0}});
  EXPECT_THROW(generic_tt_step(s, Vec::Constant(1, std::nan("")), Vec::Zero(1), Vec::Zero(1), Vec::Zero(1),
                               constant(1, 1.0), constant(1, 1.0), 0.01),
               NumericBlowup);
}

TEST(GenericStep, NoisyQuadraticAveragesNearStationaryPoint) {
  // f = (alpha - 2)^2 / 2, g = (beta - 0.5 alpha)^2 / 2: stationary point (2, 1).
  const double dt = 0.01, sigma = 0.3;
  const std::size_t n = 200000, seeds = 10;
  std::vector<double> a, b;
  for (std::size_t seed = 0; seed < seeds; ++seed) {
    IterateState s = IterateState::start(Vec{{2.2}}, Vec{{1.2}});
    const NoiseStream ns(100 + seed, 0, 2);
    for (std::size_t k = 0; k < n; ++k) {
      const Vec w = sigma * ns.increments(k, dt);
      s = generic_tt_step(s, s.alpha - Vec::Constant(1, 2.0), s.beta - 0.5 * s.alpha, w.head(1), w.tail(1),
                          decay(1, 1.0, 0.75), decay(1, 1.0, 0.55), dt);
    }
    a.push_back(s.avg_alpha(0));
    b.push_back(s.avg_beta(0));
  }
  auto band_ok = [&](const std::vector<double>& v, double target) {
    double m = 0.0, v2 = 0.0;
    for (double x : v) m += x;
    m /= v.size();
    for (double x : v) v2 += (x - m) * (x - m);
    const double se = std::sqrt(v2 / (v.size() - 1) / v.size());
    return std::abs(m - target) < 3.0 * se + 1e-12;
  };
  EXPECT_TRUE(band_ok(a, 2.0));
  EXPECT_TRUE(band_ok(b, 1.0));
}

TEST(Surrogate, DecoupledCase) {
  const Vec ga{{0.3, -1.0}};
  EXPECT_EQ(surrogate_gradient(ga, Vec::Zero(3), Mat::Random(2, 3), Mat::Identity(3, 3)), ga);
}

TEST(Surrogate, QuadraticTotalDerivative) {
  // g = |beta - M alpha|^2 / 2, f = |beta|^2 / 2, at beta = M alpha.
  const Mat M{{1.0, 2.0}, {-0.5, 0.3}, {0.7, -1.1}};
  const Vec alpha{{0.4, -0.9}};
  const Vec beta = M * alpha;
  const Vec sg = surrogate_gradient(Vec::Zero(2), beta, -M.transpose(), Mat::Identity(3, 3));
  EXPECT_LT((sg - M.transpose() * M * alpha).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Surrogate, NestedOptimisationFiniteDifference) {
  // g(a, b) = sum_i (b_i^4 / 4 + b_i^2 / 2) - b' M a, strongly convex in b.
  // f(a, b) = |b|^2 / 2 + sin(a_0) b_1 + |a|^2.
  const Mat M{{1.0, 0.5}, {-0.3, 0.8}};
  auto inner = [&](const Vec& a) {
    Vec b = Vec::Zero(2);
    const Vec rhs = M * a;
    for (int it = 0; it < 100; ++it) {
      const Vec grad = b.array().cube() + b.array() - rhs.array();
      const Vec hess = 3.0 * b.array().square() + 1.0;
      b -= grad.cwiseQuotient(hess);
      if (grad.norm() < 1e-15) break;
    }
    return b;
  };
  auto f = [](const Vec& a, const Vec& b) { return 0.5 * b.squaredNorm() + std::sin(a(0)) * b(1) + a.squaredNorm(); };
  const Vec a{{0.6, -0.4}};
  const Vec b = inner(a);
  const Vec gaf{{std::cos(a(0)) * b(1) + 2 * a(0), 2 * a(1)}};
  const Vec gbf{{b(0), b(1) + std::sin(a(0))}};
  const Mat hab = -M.transpose();
  const Mat hbb = (3.0 * b.array().square() + 1.0).matrix().asDiagonal();
  const Vec sg = surrogate_gradient(gaf, gbf, hab, hbb);

  const double h = 1e-5;
  Vec fd(2);
  for (int i = 0; i < 2; ++i) {
    Vec up = a, dn = a;
    up(i) += h;
    dn(i) -= h;
    fd(i) = (f(up, inner(up)) - f(dn, inner(dn))) / (2 * h);
  }
  EXPECT_LT((sg - fd).norm() / fd.norm(), 1e-4);
}

TEST(Surrogate, SingularHessianIsConditioningError) {
  EXPECT_THROW(surrogate_gradient(Vec::Ones(1), Vec::Ones(2), Mat::Ones(1, 2), Mat::Ones(2, 2)), ConditioningError);
  EXPECT_THROW(surrogate_gradient(Vec::Ones(1), Vec::Ones(2), Mat::Ones(1, 3), Mat::Identity(2, 2)), DimensionError);
}

TEST(Joint, ZeroRatesFreezeIterates) {
  BenesJointProblem prob({}, 21);
  IterateState s = IterateState::start(Vec{{3.0, 2.0, 0.7}}, Vec{{4.0}});
  for (std::size_t k = 0; k < 1000; ++k)
    s = joint_rml_osp_step(prob, s, constant(3, 0.0), constant(1, 0.0), {}, k, 0.01);
  EXPECT_EQ(s.alpha, (Vec{{3.0, 2.0, 0.7}}));
  EXPECT_EQ(s.beta, Vec::Constant(1, 4.0));
  EXPECT_LT((s.avg_alpha - s.alpha).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Joint, BenesIncrementsMatchExplicitDisplay) {
  // d mu = g c x_mu (dy - c x_hat dt), d sigma likewise, d c = g (x_hat + c x_c)(dy - c x_hat dt),
  // d o = -g Sigma_o dt; the displayed rates absorb the factor 1 / r(o).
  BenesJointProblem prob({}, 4);
  BenesJointProblem twin({}, 4);
  IterateState s = IterateState::start(Vec{{1.0, 2.0, 0.7}}, Vec{{6.0}});
  const double dt = 0.01, g1 = 0.05, g2 = 0.2;
  for (std::size_t k = 0; k < 2000; ++k) {
    const BenesModel est = twin.model_at(s.alpha, s.beta);
    const BenesMoments mom = benes_posterior_moments(est, twin.filter());
    JointSignals sig;
    const IterateState next = joint_rml_osp_step(prob, s, constant(3, g1), constant(1, g2), {}, k, dt, &sig);
    twin.step(s.alpha, s.beta, k, dt);
    const double dy = sig.dy(0);
    const double innov = dy - est.c * mom.x_hat * dt;
    const double g = g1 / est.r();
    const double dmu = g * est.c * mom.x_hat_grad[kMu] * innov;
    const double dsig = g * est.c * mom.x_hat_grad[kSigma] * innov;
    const double dc = g * (mom.x_hat + est.c * mom.x_hat_grad[kC]) * innov;
    const double d_o = -g2 * mom.Sigma_hat_grad[kO] * dt;
    ASSERT_NEAR(next.alpha(0) - s.alpha(0), dmu, 1e-14);
    ASSERT_NEAR(next.alpha(1) - s.alpha(1), dsig, 1e-14);
    ASSERT_NEAR(next.alpha(2) - s.alpha(2), dc, 1e-14);
    ASSERT_NEAR(next.beta(0) - s.beta(0), d_o, 1e-14);
    s = next;
  }
}

TEST(Joint, FreezingSlowRatesGivesSensorDescent) {
  BenesJointProblem a({}, 8), b({}, 8);
  IterateState sa = IterateState::start(Vec{{3.0, 2.0, 0.7}}, Vec{{2.0}}), sb = sa;
  for (std::size_t k = 0; k < 5000; ++k) {
    sa = joint_rml_osp_step(a, sa, constant(3, 0.0), decay(1, 1.0, 0.6), {}, k, 0.01);
    sb = sensor_descent_step(b, sb, decay(1, 1.0, 0.6), Box{}, k, 0.01);
    ASSERT_LT((sa.beta - sb.beta).cwiseAbs().maxCoeff(), 1e-10) << k;
  }
  EXPECT_EQ(sa.alpha, sb.alpha);
  EXPECT_LT((sa.avg_beta - sb.avg_beta).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Joint, FreezingFastRatesGivesRml) {
  BenesJointProblem a({}, 9), b({}, 9);
  IterateState sa = IterateState::start(Vec{{1.0, 2.0, 0.7}}, Vec{{4.0}}), sb = sa;
  for (std::size_t k = 0; k < 5000; ++k) {
    sa = joint_rml_osp_step(a, sa, decay(3, 0.5, 0.75), constant(1, 0.0), {}, k, 0.01);
    sb = rml_step(b, sb, decay(3, 0.5, 0.75), Box{}, k, 0.01);
    ASSERT_LT((sa.alpha - sb.alpha).cwiseAbs().maxCoeff(), 1e-10) << k;
  }
  EXPECT_EQ(sa.beta, sb.beta);
}

TEST(Joint, ScalarMatchesMarkovianFormulation) {
  // Augmented state (x, x_hat, S, x_theta, S_theta, x_o, S_o) with dB = (dv, dw), written
  // out by hand for A = -theta, C = c, Q = q, R = r(o), H = 1.
  const ScalarLinearParams p{1.0, 1.0, 1.0, 0.0};
  const double theta_star = 1.0, dt = 0.01;
  const std::uint64_t seed = 31;

  MarkovianOracle orc;
  orc.aug_dim = 7;
  orc.noise_dim = 2;
  auto Ri = [&](const Vec& o) { return 1.0 / p.r(o(0)); };
  orc.slow_drift = [&](const Vec&, const Vec& o, const Vec& X) {
    return Vec::Constant(1, -p.c * X(3) * Ri(o) * (p.c * X(0) - p.c * X(1)));
  };
  orc.slow_noise = [&](const Vec&, const Vec& o, const Vec& X) {
    Mat Z = Mat::Zero(1, 2);
    Z(0, 1) = -p.c * X(3) * Ri(o) * std::sqrt(p.r(o(0)));
    return Z;
  };
  orc.fast_drift = [&](const Vec&, const Vec&, const Vec& X) { return Vec::Constant(1, X(6)); };
  orc.aug_drift = [&](const Vec& th, const Vec& o, const Vec& X) {
    const double t = th(0), ri = Ri(o), c = p.c, rp = p.dr(o(0));
    const double x = X(0), xh = X(1), S = X(2), xt = X(3), St = X(4), xo = X(5), So = X(6);
    const double innov = c * x - c * xh;
    Vec d(7);
    d(0) = -theta_star * x;
    d(1) = -t * xh + S * c * ri * innov;
    d(2) = p.q - 2 * t * S - c * c * ri * S * S;
    d(3) = -xh - t * xt + St * c * ri * innov - S * c * c * ri * xt;
    d(4) = 2 * (-t * St - S - St * c * c * ri * S);
    const double Ko = So * c * ri - S * c * ri * ri * rp;
    d(5) = -t * xo + Ko * innov - S * c * c * ri * xo;
    d(6) = 2 * (-t * So - So * c * c * ri * S) + S * S * c * c * ri * ri * rp;
    return d;
  };
  orc.aug_diffusion = [&](const Vec&, const Vec& o, const Vec& X) {
    const double ri = Ri(o), c = p.c, sr = std::sqrt(p.r(o(0)));
    const double S = X(2), St = X(4), So = X(6);
    Mat G = Mat::Zero(7, 2);
    G(0, 0) = std::sqrt(p.q);
    G(1, 1) = S * c * ri * sr;
    G(3, 1) = St * c * ri * sr;
    G(5, 1) = (So * c * ri - S * c * ri * ri * p.dr(o(0))) * sr;
    return G;
  };

  LinearJointProblem prob = make_scalar_problem(p, theta_star, seed);
  const NoiseStream sv(seed, kSignalStream, 1), sw(seed, kObservationStream, 1);
  const auto slow = decay(1, 0.5, 0.75), fast = decay(1, 1.0, 0.6);
  const ProjectionSet sets{Box{Vec{{0.1}}, Vec{{5.0}}}, Box{Vec{{-3.0}}, Vec{{3.0}}}};
  IterateState sj = IterateState::start(Vec{{2.0}}, Vec{{1.5}}), sm = sj;
  Vec X = Vec::Zero(7);
  double worst = 0.0;
  for (std::size_t k = 0; k < 20000; ++k) {
    sj = joint_rml_osp_step(prob, sj, slow, fast, sets, k, dt);
    const Vec dB{{sv.increments(k, dt)(0), sw.increments(k, dt)(0)}};
    sm = markovian_tt_step(sm, X, orc, dB, slow, fast, dt, sets);
    worst = std::max({worst, std::abs(sj.alpha(0) - sm.alpha(0)), std::abs(sj.beta(0) - sm.beta(0))});
  }
  EXPECT_LT(worst, 1e-9);
  EXPECT_NEAR(X(0), prob.signal()(0), 1e-9);
  EXPECT_NEAR(X(2), prob.bundle().state.Sigma(0, 0), 1e-12);
}

TEST(Joint, RunJointRecordsAndAppliesJumps) {
  BenesJointProblem prob({}, 2);
  JointRunConfig cfg;
  cfg.dt = 0.01;
  cfg.n_steps = 1000;
  cfg.record_every = 250;
  cfg.slow = constant(3, 0.0);
  cfg.fast = constant(1, 0.0);
  cfg.jumps = {TruthJump{5.0, Vec{{5.0, 2.0, 0.7}}, std::nullopt}};
  const TrajectoryRecord rec = run_joint(prob, IterateState::start(Vec{{3.0, 2.0, 0.7}}, Vec{{4.0}}), cfg);
  ASSERT_EQ(rec.size(), 5u);
  const auto t = rec.column("t");
  const auto mu_star = rec.column("true_theta_mu");
  EXPECT_DOUBLE_EQ(t.back(), 10.0);
  EXPECT_EQ(mu_star.front(), 3.0);
  EXPECT_EQ(mu_star.back(), 5.0);
  for (std::size_t i = 1; i < t.size(); ++i) EXPECT_GT(t[i], t[i - 1]);
}
