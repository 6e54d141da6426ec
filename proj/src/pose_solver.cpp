#include "smol/pose_solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <memory>

#include "smol/metrics.hpp"

namespace smol {

namespace {

void moving_mean_inplace(Eigen::MatrixXd& data, int window, int passes) {
  const Eigen::Index n = data.rows();
  const Eigen::Index left = window / 2;
  const Eigen::Index right = (window - 1) / 2;
  Eigen::VectorXd prefix(n + 1);
  Eigen::VectorXd col(n);
  for (int p = 0; p < passes; ++p) {
    for (Eigen::Index c = 0; c < data.cols(); ++c) {
      prefix(0) = 0.0;
      for (Eigen::Index k = 0; k < n; ++k) prefix(k + 1) = prefix(k) + data(k, c);
      for (Eigen::Index k = 0; k < n; ++k) {
        const Eigen::Index lo = std::max<Eigen::Index>(0, k - left);
        const Eigen::Index hi = std::min<Eigen::Index>(n - 1, k + right);
        col(k) = (prefix(hi + 1) - prefix(lo)) / static_cast<double>(hi - lo + 1);
      }
      data.col(c) = col;
    }
  }
}

void central_difference_inplace(Eigen::MatrixXd& data, double rate) {
  const Eigen::Index n = data.rows();
  Eigen::VectorXd col(n);
  for (Eigen::Index c = 0; c < data.cols(); ++c) {
    col(0) = (data(1, c) - data(0, c)) * rate;
    for (Eigen::Index k = 1; k + 1 < n; ++k)
      col(k) = (data(k + 1, c) - data(k - 1, c)) * rate * 0.5;
    col(n - 1) = (data(n - 1, c) - data(n - 2, c)) * rate;
    data.col(c) = col;
  }
}

// Evaluates model predictions on a fixed timestamp set with reusable buffers.
// The synthesis grid is aligned to the universal k/sample_rate grid so that
// interpolation weights match the measurement side exactly.
class ModelEvaluator {
 public:
  ModelEvaluator(const FitContext& ctx, const Eigen::VectorXd& timestamps)
      : ctx_(ctx), timestamps_(timestamps) {
    const double rate = ctx.array.sample_rate;
    pad_samples_ = ctx.filter.passes * ctx.filter.window + 2;
    const double t_min = timestamps.minCoeff();
    const double t_max = timestamps.maxCoeff();
    grid_first_ = static_cast<long long>(std::floor(t_min * rate)) - pad_samples_;
    const auto grid_last = static_cast<long long>(std::ceil(t_max * rate)) + pad_samples_;
    n_grid_ = grid_last - grid_first_ + 1;
    keep_ = ctx.array.measurement_indices();
    if (!ctx.apply_spatial_difference) {
      keep_.clear();
      for (int i = 0; i < ctx.array.size(); ++i) keep_.push_back(i);
    }
    raw_.resize(n_grid_, ctx.array.size());
    work_.resize(n_grid_, static_cast<Eigen::Index>(keep_.size()));
    out_.resize(timestamps.size() * static_cast<Eigen::Index>(keep_.size()));
  }

  Eigen::Index n_channels() const { return static_cast<Eigen::Index>(keep_.size()); }
  Eigen::Index n_values() const { return out_.size(); }

  /// Flattened predictions (column-major: all samples of channel 0 first).
  const Eigen::VectorXd& predict(const Pose& pose, double phi) {
    OscillatorParams osc = ctx_.osc;
    osc.phi = phi;
    return predict_with(pose, osc);
  }

  const Eigen::VectorXd& predict_with(const Pose& pose, const OscillatorParams& osc) {
    const double rate = ctx_.array.sample_rate;
    Eigen::Vector4d q = pose.orientation;
    q.normalize();
    const Mat3 R = quat_rotation_matrix(q);
    const Vec3 ex = R.col(0);
    const Vec3 ez = R.col(2);
    const double m = ctx_.magnet.moment();
    const double l0 = osc.arm_length;
    const double omega = 2.0 * kPi * osc.f_res;
    const double kdip = kMu0 / (4.0 * kPi);
    const int n_sensors = ctx_.array.size();
    const double min_d2 = ctx_.min_dipole_distance * ctx_.min_dipole_distance;

    for (long long k = 0; k < n_grid_; ++k) {
      const double t = static_cast<double>(grid_first_ + k) / rate;
      const double theta = osc.theta_max * std::cos(omega * t + osc.phi) * damping_factor(t, osc);
      const double c = std::cos(theta), s = std::sin(theta);
      const Vec3 dipole_pos = pose.position + l0 * (s * ex + c * ez);
      const Vec3 moment = m * (c * ex - s * ez);
      for (int j = 0; j < n_sensors; ++j) {
        const SensorSpec& sensor = ctx_.array.sensors[j];
        const Vec3 r = sensor.position - dipole_pos;
        const double d2 = r.squaredNorm();
        if (d2 < min_d2)
          throw SingularityError("model_observations: dipole coincides with a sensor");
        const double inv_d2 = 1.0 / d2;
        const double inv_d3 = inv_d2 / std::sqrt(d2);
        const double rm = r.dot(moment);
        const double ra = r.dot(sensor.axis);
        const double ma = moment.dot(sensor.axis);
        raw_(k, j) = kdip * inv_d3 * (3.0 * rm * ra * inv_d2 - ma);
      }
    }

    if (ctx_.apply_spatial_difference) {
      for (size_t j = 0; j < keep_.size(); ++j) {
        const int i = keep_[j];
        const int r = ctx_.array.reference_for(i);
        work_.col(static_cast<Eigen::Index>(j)) = raw_.col(i) - raw_.col(r);
      }
    } else {
      work_ = raw_;
    }
    moving_mean_inplace(work_, ctx_.filter.window, ctx_.filter.passes);
    central_difference_inplace(work_, rate);

    const double t0 = static_cast<double>(grid_first_) / rate;
    for (Eigen::Index i = 0; i < timestamps_.size(); ++i) {
      const double x = (timestamps_(i) - t0) * rate;
      const auto k = static_cast<Eigen::Index>(std::floor(x));
      const double w = x - static_cast<double>(k);
      for (Eigen::Index c = 0; c < n_channels(); ++c)
        out_(c * timestamps_.size() + i) = (1.0 - w) * work_(k, c) + w * work_(k + 1, c);
    }
    return out_;
  }

 private:
  FitContext ctx_;
  Eigen::VectorXd timestamps_;
  std::vector<int> keep_;
  long long grid_first_ = 0;
  long long n_grid_ = 0;
  int pad_samples_ = 0;
  Eigen::MatrixXd raw_;
  Eigen::MatrixXd work_;
  Eigen::VectorXd out_;
};

Pose pose_from_params(const Eigen::VectorXd& x) {
  Pose pose;
  pose.position = x.segment<3>(0);
  pose.orientation = x.segment<4>(3);
  pose.normalize();
  return pose;
}

std::vector<Eigen::Vector4d> canonical_orientations() {
  return {
      {1.0, 0.0, 0.0, 0.0},
      quat_from_axis_angle(Vec3::UnitX(), kPi),
      quat_from_axis_angle(Vec3::UnitY(), 0.5 * kPi),
      quat_from_axis_angle(Vec3::UnitY(), -0.5 * kPi),
      quat_from_axis_angle(Vec3::UnitX(), -0.5 * kPi),
      quat_from_axis_angle(Vec3::UnitX(), 0.5 * kPi),
  };
}

std::optional<double> pooled_r2(const Eigen::VectorXd& data, double sse) {
  const double mean = data.mean();
  const double tss = (data.array() - mean).matrix().squaredNorm();
  if (tss <= 0.0) return std::nullopt;
  return 1.0 - sse / tss;
}

}  // namespace

Eigen::MatrixXd model_observations(const Pose& pose, const FitContext& ctx,
                                   const Eigen::VectorXd& timestamps) {
  ModelEvaluator ev(ctx, timestamps);
  const Eigen::VectorXd& flat = ev.predict(pose, ctx.osc.phi);
  Eigen::MatrixXd out(timestamps.size(), ev.n_channels());
  for (Eigen::Index c = 0; c < ev.n_channels(); ++c)
    out.col(c) = flat.segment(c * timestamps.size(), timestamps.size());
  return out;
}

LocalizationResult localize(const SampledObservations& obs, const FitContext& ctx,
                            std::optional<Pose> init, const SolverConfig& cfg) {
  const auto t_start = std::chrono::steady_clock::now();

  const Eigen::VectorXd data =
      Eigen::Map<const Eigen::VectorXd>(obs.values.data(), obs.values.size());
  if (data.cwiseAbs().maxCoeff() < cfg.no_signal_threshold)
    throw NoSignalError("localize: observations carry no signal");

  ModelEvaluator ev(ctx, obs.timestamps);
  if (ev.n_channels() != obs.n_channels())
    throw ConfigError("localize: observation channel count does not match the context");

  // Candidate seeds: the provided pose or a coarse grid, each tried with both
  // phase signs (a deflection extremum fixes phi only up to pi).
  std::vector<Pose> seeds;
  if (init) {
    seeds.push_back(*init);
  } else {
    const ColdStartSpec& cs = cfg.cold_start;
    const auto orientations = canonical_orientations();
    for (double z = cs.lower.z(); z <= cs.upper.z() + 1e-12; z += cs.pitch)
      for (double y = cs.lower.y(); y <= cs.upper.y() + 1e-12; y += cs.pitch)
        for (double x = cs.lower.x(); x <= cs.upper.x() + 1e-12; x += cs.pitch)
          for (const auto& q : orientations) {
            Pose p;
            p.position = Vec3(x, y, z);
            p.orientation = q;
            seeds.push_back(p);
          }
  }
  std::vector<double> phases{ctx.osc.phi};
  if (cfg.resolve_phase_sign) phases.push_back(wrap_angle(ctx.osc.phi + kPi));

  Pose best_seed = seeds.front();
  double best_phi = phases.front();
  double best_sse = std::numeric_limits<double>::infinity();
  for (const Pose& seed : seeds) {
    for (double phi : phases) {
      const double sse = (ev.predict(seed, phi) - data).squaredNorm();
      if (sse < best_sse) {
        best_sse = sse;
        best_seed = seed;
        best_phi = phi;
      }
    }
  }

  const bool fit_phi = cfg.co_fit_phase;
  const Eigen::Index n_params = fit_phi ? 8 : 7;
  Eigen::VectorXd x0(n_params);
  x0.segment<3>(0) = best_seed.position;
  x0.segment<4>(3) = best_seed.orientation;
  if (fit_phi) x0(7) = best_phi;

  LMOptions lm;
  lm.max_iterations = cfg.max_iterations;
  lm.lambda_init = cfg.lambda_init;
  lm.lambda_increase = cfg.lambda_increase;
  lm.lambda_decrease = cfg.lambda_decrease;
  lm.sse_rel_tol = cfg.sse_rel_tol;
  lm.step_tol = cfg.step_tol;
  lm.fd_steps.resize(n_params);
  lm.fd_steps.segment<3>(0).setConstant(cfg.fd_step_position);
  lm.fd_steps.segment<4>(3).setConstant(cfg.fd_step_quaternion);
  if (fit_phi) lm.fd_steps(7) = cfg.fd_step_scalar;
  lm.post_step = [](Eigen::VectorXd& x) { x.segment<4>(3).normalize(); };

  const double phi_fixed = best_phi;
  const auto residual = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    const Pose pose = pose_from_params(x);
    const double phi = fit_phi ? x(7) : phi_fixed;
    return ev.predict(pose, phi) - data;
  };

  const LMResult fit = levenberg_marquardt(residual, x0, lm);

  LocalizationResult result;
  result.pose = pose_from_params(fit.params);
  result.sse = fit.sse;
  result.r2 = pooled_r2(data, fit.sse);
  result.iterations = fit.iterations;
  result.converged = fit.converged;
  result.timestamp = obs.anchor_time;
  result.phase = fit_phi ? wrap_angle(fit.params(7)) : phi_fixed;
  result.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

CalibrationResult calibrate(const std::vector<SignalFrame>& raw_frames, const FitContext& ctx,
                            std::optional<double> known_z, const Pose& init, int N,
                            const SolverConfig& cfg) {
  if (!known_z)
    throw ConfigError(
        "calibrate: a known z is required; theta_max and depth are degenerate (B ~ theta_max/z^3) "
        "so the joint fit is ill-posed without it");
  if (raw_frames.empty()) throw ConfigError("calibrate: no frames");

  AnchorOptions aopts;
  aopts.chain = ctx.filter;
  aopts.eta = ctx.osc.eta;
  aopts.law = ctx.osc.law;

  std::vector<SampledObservations> all_obs;
  std::vector<std::unique_ptr<ModelEvaluator>> evals;
  Eigen::Index total = 0;
  for (const auto& frame : raw_frames) {
    const SignalFrame filtered = filter_chain(frame, ctx.array, ctx.filter);
    const PhaseAnchor anchor = estimate_phase_anchor(filtered, ctx.osc.f_res, aopts);
    SampledObservations obs =
        downsample_half_periods(filtered, ctx.osc.f_res, N, anchor.anchor_time);
    all_obs.push_back(std::move(obs));
    evals.push_back(std::make_unique<ModelEvaluator>(ctx, all_obs.back().timestamps));
    total += all_obs.back().values.size();
  }

  Eigen::VectorXd data(total);
  Eigen::Index offset = 0;
  for (const auto& obs : all_obs) {
    data.segment(offset, obs.values.size()) =
        Eigen::Map<const Eigen::VectorXd>(obs.values.data(), obs.values.size());
    offset += obs.values.size();
  }

  Pose seed = init;
  seed.position.z() = *known_z;

  // Resolve the phase sign per frame at the initial parameters.
  std::vector<double> phases;
  for (size_t f = 0; f < raw_frames.size(); ++f) {
    const PhaseAnchor anchor =
        estimate_phase_anchor(filter_chain(raw_frames[f], ctx.array, ctx.filter), ctx.osc.f_res,
                              aopts);
    double best_phi = anchor.phi;
    double best_sse = std::numeric_limits<double>::infinity();
    for (double phi : {anchor.phi, wrap_angle(anchor.phi + kPi)}) {
      OscillatorParams osc = ctx.osc;
      osc.phi = phi;
      const double sse =
          (evals[f]->predict_with(seed, osc) -
           Eigen::Map<const Eigen::VectorXd>(all_obs[f].values.data(), all_obs[f].values.size()))
              .squaredNorm();
      if (sse < best_sse) {
        best_sse = sse;
        best_phi = phi;
      }
    }
    phases.push_back(best_phi);
  }

  // Parameters: x, y, quaternion, theta_max, eta (z fixed).
  Eigen::VectorXd x0(8);
  x0(0) = seed.position.x();
  x0(1) = seed.position.y();
  x0.segment<4>(2) = seed.orientation;
  x0(6) = ctx.osc.theta_max;
  x0(7) = ctx.osc.eta;

  const auto residual = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    Pose pose;
    pose.position = Vec3(x(0), x(1), *known_z);
    pose.orientation = x.segment<4>(2);
    pose.normalize();
    OscillatorParams osc = ctx.osc;
    osc.theta_max = std::clamp(x(6), 1e-4, kPi / 2 - 1e-4);
    osc.eta = std::max(0.0, x(7));
    Eigen::VectorXd r(total);
    Eigen::Index off = 0;
    for (size_t f = 0; f < evals.size(); ++f) {
      osc.phi = phases[f];
      const Eigen::VectorXd& pred = evals[f]->predict_with(pose, osc);
      r.segment(off, pred.size()) =
          pred - data.segment(off, pred.size());
      off += pred.size();
    }
    return r;
  };

  LMOptions lm;
  lm.max_iterations = cfg.max_iterations;
  lm.sse_rel_tol = cfg.sse_rel_tol;
  lm.step_tol = cfg.step_tol;
  lm.fd_steps.resize(8);
  lm.fd_steps.segment<2>(0).setConstant(cfg.fd_step_position);
  lm.fd_steps.segment<4>(2).setConstant(cfg.fd_step_quaternion);
  lm.fd_steps(6) = cfg.fd_step_scalar;
  lm.fd_steps(7) = cfg.fd_step_scalar;
  lm.post_step = [](Eigen::VectorXd& x) { x.segment<4>(2).normalize(); };

  const LMResult fit = levenberg_marquardt(residual, x0, lm);

  CalibrationResult result;
  result.osc = ctx.osc;
  result.osc.theta_max = fit.params(6);
  result.osc.eta = fit.params(7);
  result.osc.phi = phases.front();
  result.pose.position = Vec3(fit.params(0), fit.params(1), *known_z);
  result.pose.orientation = fit.params.segment<4>(2);
  result.pose.normalize();
  result.sse = fit.sse;
  result.r2 = pooled_r2(data, fit.sse);
  result.iterations = fit.iterations;
  result.converged = fit.converged;
  result.frame_phases = phases;
  return result;
}

std::vector<LocalizationResult> localize_superfast(const SignalFrame& raw_frame,
                                                   const FitContext& ctx, int n_seg,
                                                   std::optional<Pose> init,
                                                   const SolverConfig& cfg, double search_start) {
  const SignalFrame filtered = filter_chain(raw_frame, ctx.array, ctx.filter);
  AnchorOptions aopts;
  aopts.chain = ctx.filter;
  aopts.eta = ctx.osc.eta;
  aopts.law = ctx.osc.law;
  aopts.search_start = search_start;
  const PhaseAnchor anchor = estimate_phase_anchor(filtered, ctx.osc.f_res, aopts);

  FitContext seg_ctx = ctx;
  seg_ctx.osc.phi = anchor.phi;

  // Keep only segments clear of the filter edge distortion at the frame end.
  const double usable_end =
      filtered.end_time() - (ctx.filter.passes * ctx.filter.window + 2) / filtered.sample_rate;
  std::vector<SampledObservations> segments =
      segment_signal(filtered, ctx.osc.f_res, n_seg, anchor.anchor_time);
  while (!segments.empty() && segments.back().timestamps(segments.back().n_samples() - 1) >
                                  usable_end)
    segments.pop_back();

  std::vector<LocalizationResult> results;
  std::optional<Pose> warm = init;
  SolverConfig seg_cfg = cfg;
  for (size_t i = 0; i < segments.size(); ++i) {
    // The phase sign is coherent across one ring-down: resolve it on the
    // first segment only.
    seg_cfg.resolve_phase_sign = cfg.resolve_phase_sign && results.empty();
    LocalizationResult r;
    try {
      r = localize(segments[i], seg_ctx, warm, seg_cfg);
    } catch (const NoSignalError&) {
      r.converged = false;
      r.timestamp = segments[i].anchor_time;
      results.push_back(r);
      continue;
    }
    if (results.empty() && r.phase != seg_ctx.osc.phi) seg_ctx.osc.phi = r.phase;
    results.push_back(r);
    if (r.converged) warm = r.pose;
  }
  return results;
}

StaticLocalizationResult static_localize(const Eigen::VectorXd& dc_values,
                                         const SensorArray& array, double moment_magnitude,
                                         const Vec3& init_position, const Vec3& init_direction,
                                         const SolverConfig& cfg) {
  if (dc_values.size() != array.size())
    throw ConfigError("static_localize: value count does not match the array");
  if (dc_values.cwiseAbs().maxCoeff() < cfg.no_signal_threshold)
    throw NoSignalError("static_localize: observations carry no signal");

  const Vec3 dir0 = init_direction.normalized();
  Eigen::VectorXd x0(5);
  x0.segment<3>(0) = init_position;
  x0(3) = std::acos(std::clamp(dir0.z(), -1.0, 1.0));  // polar
  x0(4) = std::atan2(dir0.y(), dir0.x());              // azimuth

  const auto residual = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    const Vec3 pos = x.segment<3>(0);
    const double sp = std::sin(x(3)), cp = std::cos(x(3));
    const Vec3 m = moment_magnitude * Vec3(sp * std::cos(x(4)), sp * std::sin(x(4)), cp);
    Eigen::VectorXd r(array.size());
    for (int i = 0; i < array.size(); ++i) {
      const Vec3 d = array.sensors[i].position - pos;
      r(i) = dipole_field(m, d).dot(array.sensors[i].axis) - dc_values(i);
    }
    return r;
  };

  LMOptions lm;
  lm.max_iterations = cfg.max_iterations;
  lm.sse_rel_tol = cfg.sse_rel_tol;
  lm.step_tol = cfg.step_tol;
  lm.fd_steps.resize(5);
  lm.fd_steps.segment<3>(0).setConstant(cfg.fd_step_position);
  lm.fd_steps(3) = cfg.fd_step_scalar;
  lm.fd_steps(4) = cfg.fd_step_scalar;

  const LMResult fit = levenberg_marquardt(residual, x0, lm);

  StaticLocalizationResult result;
  result.position = fit.params.segment<3>(0);
  const double sp = std::sin(fit.params(3)), cp = std::cos(fit.params(3));
  result.moment_direction = Vec3(sp * std::cos(fit.params(4)), sp * std::sin(fit.params(4)), cp);
  result.sse = fit.sse;
  result.iterations = fit.iterations;
  result.converged = fit.converged;
  const double mean = dc_values.mean();
  const double tss = (dc_values.array() - mean).matrix().squaredNorm();
  if (tss > 0.0) result.r2 = 1.0 - fit.sse / tss;
  return result;
}

}  // namespace smol
