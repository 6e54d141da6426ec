#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "smol/pose_solver.hpp"
#include "smol/sim_lab.hpp"

using namespace smol;

namespace {

FitContext make_context(double phi) {
  FitContext ctx;
  ctx.osc = paper_device();
  ctx.osc.phi = phi;
  ctx.array = SensorArray::default_layout();
  return ctx;
}

// Clean end-to-end pipeline; no noise, no quantization.
SampledObservations clean_observations(const Pose& truth, const OscillatorParams& osc,
                                       const SensorArray& array, int N, double anchor) {
  const SignalFrame clean = synthesize_signal(truth, osc, MagnetSpec{}, array,
                                              anchor + 0.02 + N / (2.0 * osc.f_res) + 0.01);
  const SignalFrame filtered = filter_chain(clean, array);
  return downsample_half_periods(filtered, osc.f_res, N, anchor);
}

double angular_error(const Eigen::Vector4d& a, const Eigen::Vector4d& b) {
  const double d = std::min(1.0, std::abs(a.normalized().dot(b.normalized())));
  return 2.0 * std::acos(d);
}

}  // namespace

TEST_CASE("levenberg_marquardt") {
  SUBCASE("linear least squares reaches the normal-equation solution in <= 3 iterations") {
    Eigen::MatrixXd A(5, 2);
    A << 1, 2, 3, -1, 0.5, 4, -2, 1, 1, 1;
    Eigen::VectorXd b(5);
    b << 1, 2, 3, 4, 5;
    const Eigen::VectorXd x_star = (A.transpose() * A).ldlt().solve(A.transpose() * b);
    const auto fn = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd { return A * x - b; };
    const LMResult res = levenberg_marquardt(fn, Eigen::VectorXd::Zero(2));
    CHECK(res.converged);
    CHECK(res.iterations <= 3);
    CHECK((res.params - x_star).norm() < 1e-10);
  }
  SUBCASE("Rosenbrock from the classic start") {
    const auto fn = [](const Eigen::VectorXd& x) -> Eigen::VectorXd {
      Eigen::VectorXd r(2);
      r(0) = 10.0 * (x(1) - x(0) * x(0));
      r(1) = 1.0 - x(0);
      return r;
    };
    Eigen::VectorXd x0(2);
    x0 << -1.2, 1.0;
    LMOptions opts;
    opts.fd_step_default = 1e-7;
    const LMResult res = levenberg_marquardt(fn, x0, opts);
    CHECK(res.converged);
    CHECK(res.params(0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(res.params(1) == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("zero residual at the start returns immediately") {
    const auto fn = [](const Eigen::VectorXd& x) -> Eigen::VectorXd {
      return Eigen::VectorXd::Zero(3);
    };
    const LMResult res = levenberg_marquardt(fn, Eigen::VectorXd::Ones(2));
    CHECK(res.converged);
    CHECK(res.iterations == 0);
  }
  SUBCASE("returns best-so-far without convergence on a hard budget") {
    const auto fn = [](const Eigen::VectorXd& x) -> Eigen::VectorXd {
      Eigen::VectorXd r(2);
      r(0) = 10.0 * (x(1) - x(0) * x(0));
      r(1) = 1.0 - x(0);
      return r;
    };
    Eigen::VectorXd x0(2);
    x0 << -1.2, 1.0;
    LMOptions opts;
    opts.max_iterations = 2;
    const LMResult res = levenberg_marquardt(fn, x0, opts);
    CHECK(res.iterations == 2);
    CHECK(res.sse < fn(x0).squaredNorm());
  }
}

TEST_CASE("model_observations") {
  const Pose truth = reference_pose(0.08);
  OscillatorParams osc = paper_device();
  osc.phi = 0.3;
  const SensorArray array = SensorArray::default_layout();

  SUBCASE("self-consistency with the processed pipeline at the true pose") {
    const SampledObservations obs = clean_observations(truth, osc, array, 2, 0.0213);
    FitContext ctx = make_context(osc.phi);
    const Eigen::MatrixXd pred = model_observations(truth, ctx, obs.timestamps);
    const double scale = obs.values.cwiseAbs().maxCoeff();
    CHECK((pred - obs.values).cwiseAbs().maxCoeff() < 1e-9 * scale);
  }
  SUBCASE("predictions scale linearly with the magnetic moment") {
    FitContext ctx = make_context(osc.phi);
    Eigen::VectorXd ts(5);
    ts << 0.02, 0.021, 0.022, 0.023, 0.024;
    const Eigen::MatrixXd base = model_observations(truth, ctx, ts);
    ctx.magnet.volume *= 2.0;
    const Eigen::MatrixXd doubled = model_observations(truth, ctx, ts);
    CHECK((doubled - 2.0 * base).cwiseAbs().maxCoeff() < 1e-12 * base.cwiseAbs().maxCoeff());
  }
  SUBCASE("predictions are smooth in pose") {
    FitContext ctx = make_context(osc.phi);
    Eigen::VectorXd ts(9);
    for (int i = 0; i < 9; ++i) ts(i) = 0.02 + 0.0012 * i;
    const double h = 1e-6;
    for (int axis = 0; axis < 3; ++axis) {
      Pose plus = truth, minus = truth;
      plus.position(axis) += h;
      minus.position(axis) -= h;
      const Eigen::MatrixXd f0 = model_observations(truth, ctx, ts);
      const Eigen::MatrixXd fp = model_observations(plus, ctx, ts);
      const Eigen::MatrixXd fm = model_observations(minus, ctx, ts);
      const Eigen::MatrixXd central = (fp - fm) / (2.0 * h);
      const Eigen::MatrixXd onesided = (fp - f0) / h;
      const double scale = central.cwiseAbs().maxCoeff();
      CHECK((central - onesided).cwiseAbs().maxCoeff() < 0.01 * scale);
    }
  }
  SUBCASE("finite-difference Jacobian passes a Richardson consistency check") {
    FitContext ctx = make_context(osc.phi);
    Eigen::VectorXd ts(9);
    for (int i = 0; i < 9; ++i) ts(i) = 0.02 + 0.0012 * i;
    std::mt19937_64 rng(31);
    std::normal_distribution<double> g(0.0, 1.0);
    Pose pose = truth;
    pose.position += 0.003 * Vec3(g(rng), g(rng), g(rng));
    const Eigen::MatrixXd f0 = model_observations(pose, ctx, ts);
    for (int axis = 0; axis < 3; ++axis) {
      const double h = 1e-6;
      Pose p1 = pose, p2 = pose;
      p1.position(axis) += h;
      p2.position(axis) += 2.0 * h;
      const Eigen::MatrixXd j1 = (model_observations(p1, ctx, ts) - f0) / h;
      const Eigen::MatrixXd j2 = (model_observations(p2, ctx, ts) - f0) / (2.0 * h);
      CHECK((j1 - j2).cwiseAbs().maxCoeff() < 0.01 * j1.cwiseAbs().maxCoeff());
    }
  }
}

TEST_CASE("localize on clean data") {
  const Pose truth = reference_pose(0.08);
  OscillatorParams osc = paper_device();
  osc.phi = 1.1;
  const SensorArray array = SensorArray::default_layout();
  const SampledObservations obs = clean_observations(truth, osc, array, 2, 0.0217);
  FitContext ctx = make_context(osc.phi);

  SUBCASE("round trip from a 2 mm warm start") {
    Pose init = truth;
    init.position += Vec3(1.2e-3, -1.0e-3, 1.1e-3);
    const LocalizationResult res = localize(obs, ctx, init);
    CHECK(res.converged);
    CHECK((res.pose.position - truth.position).norm() < 10e-6);
    CHECK(rad2deg(angular_error(res.pose.orientation, truth.orientation)) < 0.05);
    CHECK(*res.r2 > 0.9999);
  }
  SUBCASE("warm-start consistency within the basin") {
    std::mt19937_64 rng(41);
    std::normal_distribution<double> g(0.0, 1.0);
    const LocalizationResult from_truth = localize(obs, ctx, truth);
    for (int i = 0; i < 3; ++i) {
      Pose init = truth;
      Vec3 d(g(rng), g(rng), g(rng));
      init.position += 2e-3 * d.normalized();
      Vec3 ax(g(rng), g(rng), g(rng));
      init.orientation =
          quat_multiply(init.orientation, quat_from_axis_angle(ax.normalized(), deg2rad(5.0)));
      const LocalizationResult res = localize(obs, ctx, init);
      CHECK(res.converged);
      CHECK(std::abs(res.sse - from_truth.sse) < 1e-12);
      CHECK((res.pose.position - from_truth.pose.position).norm() < 1e-7);
    }
  }
  SUBCASE("quaternion gauge: q and -q give exactly equal residuals") {
    Pose a = truth;
    Pose b = truth;
    b.orientation = -b.orientation;
    const Eigen::MatrixXd pa = model_observations(a, ctx, obs.timestamps);
    const Eigen::MatrixXd pb = model_observations(b, ctx, obs.timestamps);
    CHECK((pa - pb).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("degenerate observations raise a no-signal error") {
    SampledObservations zeros = obs;
    zeros.values.setZero();
    CHECK_THROWS_AS(localize(zeros, ctx, truth), NoSignalError);
  }
  SUBCASE("sensor order does not matter for the unweighted objective") {
    // permute the measurement sensors (reference stays last)
    SensorArray permuted = array;
    std::swap(permuted.sensors[0], permuted.sensors[7]);
    std::swap(permuted.sensors[2], permuted.sensors[5]);
    const SampledObservations obs_p = clean_observations(truth, osc, permuted, 2, 0.0217);
    FitContext ctx_p = ctx;
    ctx_p.array = permuted;
    Pose init = truth;
    init.position += Vec3(1e-3, 1e-3, -1e-3);
    const LocalizationResult a = localize(obs, ctx, init);
    const LocalizationResult b = localize(obs_p, ctx_p, init);
    CHECK(a.sse == doctest::Approx(b.sse).epsilon(1e-9));
    CHECK((a.pose.position - b.pose.position).norm() < 1e-9);
  }
  SUBCASE("phase sign resolution recovers the synthesis phase") {
    // the anchor-derived phi may be off by pi; localize must pick the truth
    FitContext flipped = ctx;
    flipped.osc.phi = wrap_angle(osc.phi + kPi);
    Pose init = truth;
    init.position += Vec3(0.5e-3, -0.5e-3, 0.5e-3);
    const LocalizationResult res = localize(obs, flipped, init);
    CHECK(res.converged);
    CHECK(std::abs(wrap_angle(res.phase - osc.phi)) < 1e-9);
    CHECK((res.pose.position - truth.position).norm() < 10e-6);
  }
}

TEST_CASE("localize under default noise") {
  CampaignOptions base = CampaignOptions::defaults();
  base.repeats = 6;
  base.jobs = 2;
  const Pose truth = reference_pose(0.08);

  SUBCASE("speed mode keeps R2 above 0.99") {
    for (int r = 0; r < 4; ++r) {
      TrialSpec spec;
      spec.truth = truth;
      spec.osc = base.osc;
      spec.magnet = base.magnet;
      spec.array = base.array;
      spec.noise = base.noise.with_seed(derive_seed(101, 0, static_cast<std::uint64_t>(r)));
      spec.filter = base.filter;
      spec.solver = base.solver;
      spec.half_periods = 2;
      spec.init = truth;
      const LocalizationResult res = run_localization_trial(spec);
      CHECK(res.converged);
      CHECK(*res.r2 > 0.99);
      CHECK((res.pose.position - truth.position).norm() < 2e-3);
    }
  }
  SUBCASE("precision mode scatter is at the 0.1 mm scale") {
    const double sigma = measure_sigma_xyz(truth, base, 20, 55);
    CHECK(sigma < 0.3e-3);
    CHECK(sigma > 0.01e-3);
    MESSAGE("sigma_xyz(N=20, 6 repeats) = ", sigma * 1e3, " mm");
  }
}

TEST_CASE("calibrate") {
  const SensorArray array = SensorArray::default_layout();
  OscillatorParams true_osc = paper_device();  // theta_max 17.8 deg, eta 1.1
  const double z = 0.08;
  Pose truth = reference_pose(z);

  auto make_frames = [&](const OscillatorParams& osc, int count, std::uint64_t seed,
                         bool noisy) -> std::vector<SignalFrame> {
    std::vector<SignalFrame> frames;
    for (int i = 0; i < count; ++i) {
      OscillatorParams o = osc;
      o.phi = 0.4 + 1.3 * i;
      SignalFrame f = synthesize_signal(truth, o, MagnetSpec{}, array, 0.16);
      if (noisy) {
        f = inject_noise(f, make_default_noise(array, derive_seed(seed, 9, i)));
        f = saturate_quantize(f, array);
      }
      frames.push_back(std::move(f));
    }
    return frames;
  };

  SUBCASE("missing z is an error naming the degeneracy") {
    FitContext ctx = make_context(0.0);
    const auto frames = make_frames(true_osc, 1, 1, false);
    CHECK_THROWS_AS(calibrate(frames, ctx, std::nullopt, truth), ConfigError);
  }
  SUBCASE("recovers theta_max and eta from noisy frames") {
    FitContext ctx = make_context(0.0);
    ctx.osc.theta_max = deg2rad(15.0);  // deliberately off
    ctx.osc.eta = 0.6;
    Pose init = truth;
    init.position += Vec3(1e-3, -1e-3, 0.0);
    const auto frames = make_frames(true_osc, 2, 77, true);
    const CalibrationResult res = calibrate(frames, ctx, z, init, 20);
    CHECK(res.converged);
    CHECK(res.osc.theta_max == doctest::Approx(true_osc.theta_max).epsilon(0.02));
    CHECK(res.osc.eta == doctest::Approx(true_osc.eta).epsilon(0.05));
  }
  SUBCASE("damping-law selection by SSE on strongly damped data") {
    OscillatorParams damped = true_osc;
    damped.eta = 25.0;
    damped.law = DampingLaw::Exponential;
    const auto frames = make_frames(damped, 1, 5, false);

    FitContext ctx_exp = make_context(0.0);
    ctx_exp.osc.law = DampingLaw::Exponential;
    ctx_exp.osc.eta = 20.0;
    ctx_exp.osc.theta_max = deg2rad(16.0);
    const CalibrationResult fit_exp = calibrate(frames, ctx_exp, z, truth, 12);

    FitContext ctx_lin = ctx_exp;
    ctx_lin.osc.law = DampingLaw::Linear;
    const CalibrationResult fit_lin = calibrate(frames, ctx_lin, z, truth, 12);

    CHECK(fit_exp.osc.eta == doctest::Approx(25.0).epsilon(0.05));
    CHECK(fit_exp.sse < fit_lin.sse);
  }
  SUBCASE("the amplitude degeneracy direction barely changes the signal") {
    // doubling theta_max (small angles) while growing z by 2^(1/3) leaves the
    // center-channel amplitude nearly unchanged
    OscillatorParams small = true_osc;
    small.theta_max = deg2rad(2.0);
    small.eta = 0.0;
    Pose p1 = reference_pose(0.08);
    Pose p2 = reference_pose(0.08 * std::cbrt(2.0));
    OscillatorParams doubled = small;
    doubled.theta_max *= 2.0;
    SensorSpec center;
    center.position = Vec3::Zero();
    center.axis = Vec3::UnitZ();
    double amp1 = 0.0, amp2 = 0.0;
    for (int k = 0; k <= 200; ++k) {
      const double t = k * 1e-4;
      amp1 = std::max(amp1, std::abs(sensor_reading(t, p1, small, MagnetSpec{}, center) -
                                     sensor_reading(0.25 / small.f_res, p1, small, MagnetSpec{},
                                                    center)));
      amp2 = std::max(amp2, std::abs(sensor_reading(t, p2, doubled, MagnetSpec{}, center) -
                                     sensor_reading(0.25 / small.f_res, p2, doubled, MagnetSpec{},
                                                    center)));
    }
    CHECK(amp2 == doctest::Approx(amp1).epsilon(0.05));
  }
}

TEST_CASE("static_localize") {
  const SensorArray array = SensorArray::default_layout();
  const double moment = 15.97e-3;
  const Vec3 truth_pos(0.004, -0.006, 0.085);
  const Vec3 truth_dir = Vec3(1.0, 0.3, 1.2).normalized();

  Eigen::VectorXd dc(array.size());
  for (int i = 0; i < array.size(); ++i)
    dc(i) = dipole_field(moment * truth_dir, (array.sensors[i].position - truth_pos).eval())
                .dot(array.sensors[i].axis);

  SUBCASE("noise-free round trip") {
    const StaticLocalizationResult res =
        static_localize(dc, array, moment, truth_pos + Vec3(0.003, -0.002, 0.004),
                        Vec3(1.0, 0.0, 1.0).normalized());
    CHECK(res.converged);
    CHECK((res.position - truth_pos).norm() < 1e-6);
    CHECK(res.moment_direction.dot(truth_dir) > 1.0 - 1e-9);
  }
  SUBCASE("rotation about the moment axis is unobservable") {
    // the observations depend only on the moment vector, so any rotation of
    // the carrier about that axis leaves every sensor reading identical
    const Eigen::Vector4d spin = quat_from_axis_angle(truth_dir, 1.234);
    const Mat3 R = quat_rotation_matrix(spin);
    const Vec3 spun_dir = R * truth_dir;
    Eigen::VectorXd dc2(array.size());
    for (int i = 0; i < array.size(); ++i)
      dc2(i) = dipole_field(moment * spun_dir, (array.sensors[i].position - truth_pos).eval())
                   .dot(array.sensors[i].axis);
    CHECK((dc2 - dc).cwiseAbs().maxCoeff() < 1e-18);
  }
}

TEST_CASE("localize_superfast on a clean ring-down") {
  const SensorArray array = SensorArray::default_layout();
  OscillatorParams osc = paper_device();
  osc.law = DampingLaw::Exponential;
  osc.phi = 0.9;
  const Pose truth = reference_pose(0.08);
  const SignalFrame raw = synthesize_signal(truth, osc, MagnetSpec{}, array, 0.35);

  FitContext ctx = make_context(0.0);
  ctx.osc = osc;
  const auto segments = localize_superfast(raw, ctx, 4, truth, {}, 0.0);
  CHECK(segments.size() >= 10);
  int converged = 0;
  for (const auto& seg : segments) {
    if (!seg.converged) continue;
    ++converged;
    CHECK((seg.pose.position - truth.position).norm() < 1e-4);
  }
  CHECK(converged >= static_cast<int>(segments.size()) - 1);
  // segment timestamps advance by N_seg half periods
  for (size_t i = 1; i < segments.size(); ++i)
    CHECK(segments[i].timestamp - segments[i - 1].timestamp ==
          doctest::Approx(4.0 / (2.0 * osc.f_res)).epsilon(1e-9));
}
