#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "smol/metrics.hpp"
#include "smol/pose_solver.hpp"

namespace smol {

/// Deterministic per-trial seed from a campaign seed and trial coordinates.
std::uint64_t derive_seed(std::uint64_t campaign, std::uint64_t point, std::uint64_t repeat);

/// Runs body(0..n-1) on up to `jobs` threads (0 = hardware concurrency).
/// Iterations must be independent.
void parallel_for(int n, int jobs, const std::function<void(int)>& body);

// Reference scenario: the characterized device 80 mm above the array center,
// main axis along +y, oscillation in the x-y plane.
struct Scenario {
  OscillatorParams osc;
  MagnetSpec magnet;
  SensorArray array;
  NoiseModel noise;
  FilterConfig filter;
  double reference_z = 0.08;

  Pose reference_pose() const;
  static Scenario defaults();
};

OscillatorParams paper_device();
Pose reference_pose(double z);

/// Synthetic default noise: 50 Hz mains with 100/150 Hz harmonics and white
/// noise, the mains amplitude calibrated once so the raw whole-signal SNR of
/// the reference scenario is 1.1. Gradient factors make the spatial
/// difference remove roughly 90% of the common-mode trace.
NoiseModel make_default_noise(const SensorArray& array, std::uint64_t seed = 0);

// One synthetic localization: synthesize, corrupt, filter, anchor,
// down-sample, solve.
struct TrialSpec {
  Pose truth;
  OscillatorParams osc;
  MagnetSpec magnet;
  SensorArray array;
  NoiseModel noise;
  FilterConfig filter;
  SolverConfig solver;
  int half_periods = 2;
  double signal_start = 0.02;  // buffer dead time before the usable signal [s]
  bool randomize_phase = true;
  std::optional<Pose> init;
  // Additional physical field at the sensors (e.g. a moving tool), added
  // before saturation; arguments are time and the sensor.
  std::function<double(double, const SensorSpec&)> interference;
  // Device motion during the ring-down; overrides `truth` when set.
  std::function<Pose(double)> motion;
};

LocalizationResult run_localization_trial(const TrialSpec& spec);

struct TrialRecord {
  int point = 0;
  int repeat = 0;
  double truth_value = 0.0;  // swept coordinate (m or rad)
  Pose truth;
  LocalizationResult result;
};

struct CampaignOptions {
  OscillatorParams osc;
  MagnetSpec magnet;
  SensorArray array;
  NoiseModel noise;
  FilterConfig filter;
  SolverConfig solver;
  int repeats = 20;
  std::uint64_t seed = 1;
  int jobs = 0;
  double reference_z = 0.08;
  double signal_start = 0.02;

  static CampaignOptions defaults();
};

struct SweepResult {
  AccuracyReport report;
  std::vector<TrialRecord> records;
  std::vector<int> flagged_points;  // points where repeats failed to converge
};

struct TranslationSweepOptions {
  CampaignOptions base = CampaignOptions::defaults();
  char axis = 'x';
  double start = -0.025, stop = 0.025, step = 0.005;  // offsets [m]
  int half_periods = 2;
};
SweepResult run_translation_sweep(const TranslationSweepOptions& opts);

struct RotationSweepOptions {
  CampaignOptions base = CampaignOptions::defaults();
  char axis = 'z';  // intrinsic device axis
  double start = 0.0, stop = deg2rad(340.0), step = deg2rad(20.0);
  int half_periods = 2;
};
SweepResult run_rotation_sweep(const RotationSweepOptions& opts);

struct PrecisionRow {
  int half_periods = 0;
  double sigma_x = 0.0, sigma_y = 0.0, sigma_z = 0.0;
  double sigma_xyz = 0.0;
  double f_loc = 0.0;  // [Hz]
};
struct PrecisionVsNOptions {
  CampaignOptions base = CampaignOptions::defaults();
  std::vector<int> n_values{1, 2, 4, 6, 10, 20};
  double overhead = 0.08;  // excitation + ring-down dead time per fix [s]
};
struct PrecisionVsNResult {
  std::vector<PrecisionRow> rows;
  std::vector<TrialRecord> records;
};
PrecisionVsNResult run_precision_vs_n(const PrecisionVsNOptions& opts);

struct DampingRow {
  double eta = 0.0;
  double sigma_xyz = 0.0;
  bool flagged = false;  // signal decayed before N half periods
};
struct DampingSweepOptions {
  CampaignOptions base = CampaignOptions::defaults();
  double eta_start = 0.0, eta_stop = 25.0, eta_step = 2.5;
  int half_periods = 2;
};
struct DampingSweepResult {
  std::vector<DampingRow> rows;
  double slope = 0.0;      // d sigma / d eta [m*s]
  double intercept = 0.0;  // [m]
  double r2 = 0.0;
  std::vector<TrialRecord> records;
};
DampingSweepResult run_damping_sweep(const DampingSweepOptions& opts);

struct ScalingRow {
  double cube_side = 0.0;  // [m]
  double z_max = 0.0;      // [m]; 0 when the criterion is never met
  bool met = false;
};
struct ScalingStudyOptions {
  CampaignOptions base = CampaignOptions::defaults();
  std::vector<double> cube_sides{0.0006, 0.000928, 0.0015, 0.002, 0.003};
  int half_periods = 6;
  double z_lo = 0.03, z_hi = 0.45;  // search bracket [m]
  double resolution = 0.005;        // [m]
  double criterion = 0.001;         // sigma_xyz threshold [m]
  double array_scale_beyond = 0.1;  // scale the array with the magnet past this depth [m]
  bool include_optimized = true;    // theta_max 30 deg, f_res 160 Hz device
};
struct ScalingStudyResult {
  std::vector<ScalingRow> rows;
  double slope = 0.0, intercept = 0.0, r2 = 0.0;  // z_max vs cube side
  double optimized_z_max = 0.0;
};
ScalingStudyResult run_scaling_study(const ScalingStudyOptions& opts);

struct SuperfastDemoOptions {
  CampaignOptions base = CampaignOptions::defaults();
  int n_seg = 4;
  double duration = 2.4;     // ring-down length [s]
  bool stepped = true;       // false: static device, sigma vs time
  double step_size = 0.005;  // [m]
  double travel = 0.05;      // [m]
};
struct SuperfastBin {
  double t_center = 0.0;
  double sigma_xyz = 0.0;
};
struct SuperfastDemoResult {
  double nominal_rate = 0.0;  // 2 f_res / N_seg [Hz]
  std::vector<LocalizationResult> segments;
  std::vector<double> truth_x;       // per segment [m]
  int outliers = 0;                  // x < -1 mm or x > 60 mm
  double sigma_first_window = 0.0;   // precision over the first 1.5 s [m]
  std::vector<SuperfastBin> bins;    // static variant: sigma over time
};
SuperfastDemoResult run_superfast_demo(const SuperfastDemoOptions& opts);

struct InterferenceRow {
  std::string tracker;  // "smol" | "static"
  bool scalpel = false;
  double mae_z = 0.0;  // differential MAE of the z estimate [m]
};
struct InterferenceStudyOptions {
  CampaignOptions base = CampaignOptions::defaults();
  std::vector<double> tracker_z{0.080, 0.085, 0.090, 0.095, 0.100};
  double scalpel_moment = 15.97e-3;  // [A*m^2]
  Vec3 scalpel_start{0.040, 0.040, 0.080};
  Vec3 scalpel_velocity{0.0, -0.030, 0.0};  // [m/s]
  double start_shift = 0.004;               // per repetition, along -y [m]
  int half_periods = 10;
  double dc_window = 0.100;         // static-magnet averaging window [s]
  double static_moment = 15.97e-3;  // static tracker moment [A*m^2]
};
struct InterferenceStudyResult {
  std::vector<InterferenceRow> rows;
  double static_degradation = 0.0;  // MAE ratio with/without scalpel
  double smol_change = 0.0;         // relative MAE change
};
InterferenceStudyResult run_interference_study(const InterferenceStudyOptions& opts);

/// sigma_xyz of repeated localizations at one pose (initialized at truth).
double measure_sigma_xyz(const Pose& truth, const CampaignOptions& base, int half_periods,
                         std::uint64_t point_tag);

}  // namespace smol
