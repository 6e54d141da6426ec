#pragma once

#include <optional>

#include "smol/levenberg_marquardt.hpp"
#include "smol/magneto_model.hpp"
#include "smol/signal_pipeline.hpp"
#include "smol/types.hpp"

namespace smol {

// Everything the model side needs to mirror the measurement processing:
// device parameters, array geometry, and the filter chain configuration.
// osc.phi must hold the phase estimated for the frame being fitted.
struct FitContext {
  OscillatorParams osc;
  MagnetSpec magnet;
  SensorArray array;
  FilterConfig filter;
  bool apply_spatial_difference = true;
  double min_dipole_distance = 1e-6;  // [m]
};

struct ColdStartSpec {
  Vec3 lower{-0.06, -0.06, 0.04};  // [m]
  Vec3 upper{0.06, 0.06, 0.14};
  double pitch = 0.02;
};

struct SolverConfig {
  int max_iterations = 200;
  double lambda_init = 1e-4;
  double lambda_increase = 10.0;
  double lambda_decrease = 0.2;
  double sse_rel_tol = 1e-10;
  double step_tol = 1e-12;
  double fd_step_position = 1e-6;    // [m]
  double fd_step_quaternion = 1e-6;
  double fd_step_scalar = 1e-5;      // phase / theta_max / eta parameters
  bool resolve_phase_sign = true;    // try phi and phi+pi (the anchor cannot tell)
  bool co_fit_phase = false;         // add phi as a nuisance parameter
  double no_signal_threshold = 1e-12;
  ColdStartSpec cold_start;
};

struct LocalizationResult {
  Pose pose;
  double sse = 0.0;
  std::optional<double> r2;
  int iterations = 0;
  bool converged = false;
  double timestamp = 0.0;  // segment anchor time [s]
  double wall_time = 0.0;  // [s]
  double phase = 0.0;      // phi actually used by the fit [rad]
};

/// Clean-model predictions at the given timestamps: synthesizes the noise-free
/// signal at full rate over the needed window, applies the same reference
/// subtraction and filter chain as the measurement side, and samples at the
/// timestamps. Rows are samples, columns the measurement channels.
Eigen::MatrixXd model_observations(const Pose& pose, const FitContext& ctx,
                                   const Eigen::VectorXd& timestamps);

/// Unweighted 6-DoF fit of position and quaternion to sampled observations.
/// Without an initial pose a coarse position/orientation grid seeds the
/// solver. The quaternion is renormalized after every step.
LocalizationResult localize(const SampledObservations& obs, const FitContext& ctx,
                            std::optional<Pose> init = std::nullopt, const SolverConfig& cfg = {});

struct CalibrationResult {
  OscillatorParams osc;  // theta_max and eta replaced by the fitted values
  Pose pose;
  double sse = 0.0;
  std::optional<double> r2;
  int iterations = 0;
  bool converged = false;
  std::vector<double> frame_phases;
};

/// Joint fit of theta_max and eta alongside the planar pose, with the depth
/// fixed to the supplied value. The amplitude degeneracy B ~ theta_max / z^3
/// makes the problem ill-posed without a known z, so none is an error.
CalibrationResult calibrate(const std::vector<SignalFrame>& raw_frames, const FitContext& ctx,
                            std::optional<double> known_z, const Pose& init, int N = 20,
                            const SolverConfig& cfg = {});

/// Segments one ring-down into N_seg half-period pieces and localizes each
/// independently, warm-starting from the previous segment. Non-convergence is
/// flagged per segment, never fatal.
std::vector<LocalizationResult> localize_superfast(const SignalFrame& raw_frame,
                                                   const FitContext& ctx, int n_seg,
                                                   std::optional<Pose> init = std::nullopt,
                                                   const SolverConfig& cfg = {},
                                                   double search_start = 0.0);

struct StaticLocalizationResult {
  Vec3 position{Vec3::Zero()};
  Vec3 moment_direction{1.0, 0.0, 0.0};
  double sse = 0.0;
  std::optional<double> r2;
  int iterations = 0;
  bool converged = false;
};

/// 5-DoF baseline: fits position and unit moment direction (fixed magnitude)
/// of a static dipole to per-sensor DC field values.
StaticLocalizationResult static_localize(const Eigen::VectorXd& dc_values,
                                         const SensorArray& array, double moment_magnitude,
                                         const Vec3& init_position, const Vec3& init_direction,
                                         const SolverConfig& cfg = {});

}  // namespace smol
