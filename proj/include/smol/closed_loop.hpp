#pragma once

#include <optional>
#include <vector>

#include "smol/sim_lab.hpp"

namespace smol {

// Four air coils on a square rig driving in-plane gradient forces. Per-coil
// unit-current field maps are precomputed from an analytic circular-loop
// model on a regular grid and interpolated trilinearly.
class CoilModel {
 public:
  struct CoilSpec {
    Vec3 center;
    Vec3 axis;  // unit, positive-current field direction on the axis
    double loop_radius = 0.015;
    double turns = 150.0;
  };

  /// Opposing coils `opposing_distance` apart along +-x and +-y at height
  /// plane_z, axes pointing outward (a positive current pulls the robot
  /// toward that coil).
  static CoilModel square_rig(double plane_z, double opposing_distance = 0.084,
                              double loop_radius = 0.015, double turns = 150.0,
                              double grid_halfwidth = 0.030, double grid_step = 0.0005);

  int n_coils() const { return static_cast<int>(coils_.size()); }
  const CoilSpec& coil(int j) const { return coils_[static_cast<size_t>(j)]; }

  /// Interpolated unit-current field of coil j [T/A].
  Vec3 unit_field(int j, const Vec3& p) const;

  /// Field of coil j at current I, directly from the analytic loop model.
  Vec3 exact_field(int j, const Vec3& p, double current = 1.0) const;

  /// Combined field for a full current vector [A].
  Vec3 field(const Vec3& p, const Eigen::VectorXd& currents) const;

  /// Gradient of |B| by central differences on the interpolated map [T/m].
  Vec3 field_magnitude_gradient(const Vec3& p, const Eigen::VectorXd& currents) const;

 private:
  std::vector<CoilSpec> coils_;
  Vec3 grid_origin_{Vec3::Zero()};
  double step_ = 0.0005;
  Eigen::Vector3i dims_{Eigen::Vector3i::Zero()};
  // per coil, flattened (ix, iy, iz) -> Vec3
  std::vector<std::vector<Vec3>> maps_;

  Vec3 interpolate(const std::vector<Vec3>& map, const Vec3& p) const;
};

struct ControlConfig {
  double i_min = 6.0;               // [A]
  double i_max = 8.0;               // [A]
  double p_thr = 0.003;             // fine-maneuvering distance [m]
  double t_min = 0.030;             // [s]
  double t_max = 0.080;             // [s]
  double arrival_threshold = 8e-4;  // waypoint switch distance [m]
  double sharp_turn = deg2rad(30.0);

  void validate() const {
    if (!(i_min < i_max)) throw ConfigError("ControlConfig: i_min must be < i_max");
    if (!(t_min <= t_max)) throw ConfigError("ControlConfig: t_min must be <= t_max");
    if (!(p_thr > 0.0) || !(arrival_threshold > 0.0))
      throw ConfigError("ControlConfig: thresholds must be > 0");
  }
};

struct RobotState {
  Vec3 position{Vec3::Zero()};
  Eigen::Vector2d heading{1.0, 0.0};  // planar orientation, unit
  double mobility = 76.0;             // [m/s per N]
  double moment = 8.9e-4;             // [A*m^2]
  double orient_tau = 0.01;           // heading relaxation time constant [s]
};

/// Unit vector from the current position toward the goal; empty when the
/// points coincide (arrival).
std::optional<Eigen::Vector2d> desired_direction(const Eigen::Vector2d& p,
                                                 const Eigen::Vector2d& goal);

/// Drive current: I_min + (I_max - I_min) d / p_thr, clamped at I_max.
double drive_current(double distance, const ControlConfig& cfg);

/// Current ratio between coils j and k for a planar target direction,
/// lambda = (-b_k x D) / (b_j x D - b_k x D) with scalar planar crosses.
double coil_pair_ratio(const Eigen::Vector2d& b_j, const Eigen::Vector2d& b_k,
                       const Eigen::Vector2d& d);

/// Currents for the pair given lambda in [0, 1]: the stronger coil runs at
/// the drive current, the weaker at the ratio lambda/(1-lambda) (or its
/// reciprocal), so no coil exceeds the drive current.
std::pair<double, double> pair_currents(double lambda, double drive);

struct PairDrive {
  int j = -1, k = -1;
  double lambda = 0.0;
  Eigen::VectorXd currents;  // all coils [A]
  bool feasible = false;
};

/// Best feasible coil pair producing a field along d at position p.
PairDrive select_drive(const CoilModel& coils, const Vec3& p, const Eigen::Vector2d& d,
                       double drive);

/// t_min for gentle turns; Eq-style ramp t_min + (t_max - t_min)|alpha|/180deg
/// for sharp ones.
double actuation_time(double alpha, const ControlConfig& cfg);

enum class ForceMode { FieldProxy, Gradient };

struct RobotDriveParams {
  ForceMode mode = ForceMode::FieldProxy;
  double force_per_tesla = 0.116;  // field-proxy calibration [N/T]
};

/// Overdamped advance under a constant field for dt: translation along the
/// in-plane field with v = mobility * F, heading relaxing toward the field
/// with the first-order time constant.
RobotState step_robot(const RobotState& state, const Vec3& field, double dt,
                      const RobotDriveParams& drive = {},
                      const Vec3& field_gradient = Vec3::Zero());

struct CycleLog {
  int cycle = 0;
  double sim_time = 0.0;
  int waypoint = 0;
  Vec3 true_position{Vec3::Zero()};
  Vec3 est_position{Vec3::Zero()};
  Eigen::Vector2d heading{1.0, 0.0};
  Eigen::VectorXd currents;
  double t_act = 0.0;
  bool localized = false;
};

struct ClosedLoopSetup {
  CampaignOptions sensing = CampaignOptions::defaults();
  int half_periods = 2;
  double plane_z = 0.04;            // robot plane above the sensor array [m]
  ControlConfig control;
  RobotDriveParams drive;
  double excitation_overhead = 0.08;  // per localization [s]
  double substep = 0.002;             // actuation integration step [s]
  int max_cycles = 3000;
  int stall_cycles = 80;
};

struct ClosedLoopResult {
  std::vector<CycleLog> log;
  bool completed = false;
  int missed_waypoints = 0;
  int cycles = 0;
  double sim_time = 0.0;            // [s]
  double mean_position_error = 0.0;  // in-plane estimate vs truth [m]
  double mean_rate = 0.0;            // cycles / sim_time [Hz]
};

ClosedLoopResult run_closed_loop(const std::vector<Eigen::Vector2d>& waypoints,
                                 RobotState robot, const CoilModel& coils,
                                 const ClosedLoopSetup& setup);

}  // namespace smol
