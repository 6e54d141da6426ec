#include "smol/closed_loop.hpp"

#include <cmath>

namespace smol {

namespace {

// Field of a circular current loop (radius R, n turns, unit current) at
// cylindrical coordinates (rho, z) in the loop frame, via complete elliptic
// integrals.
void loop_field(double R, double turns, double rho, double z, double& b_rho, double& b_z) {
  const double c = kMu0 * turns / (2.0 * kPi);
  if (rho < 1e-9) {
    const double d = R * R + z * z;
    b_rho = 0.0;
    b_z = kMu0 * turns * R * R / (2.0 * std::pow(d, 1.5));
    return;
  }
  const double sum2 = (R + rho) * (R + rho) + z * z;
  const double dif2 = (R - rho) * (R - rho) + z * z;
  const double k = std::sqrt(4.0 * R * rho / sum2);
  const double K = std::comp_ellint_1(k);
  const double E = std::comp_ellint_2(k);
  const double root = std::sqrt(sum2);
  b_z = c / root * (K + E * (R * R - rho * rho - z * z) / dif2);
  b_rho = c * z / (rho * root) * (-K + E * (R * R + rho * rho + z * z) / dif2);
}

Vec3 loop_field_world(const CoilModel::CoilSpec& coil, const Vec3& p, double current) {
  const Vec3 rel = p - coil.center;
  const double z = rel.dot(coil.axis);
  const Vec3 radial = rel - z * coil.axis;
  const double rho = radial.norm();
  double b_rho, b_z;
  loop_field(coil.loop_radius, coil.turns, rho, z, b_rho, b_z);
  Vec3 b = b_z * coil.axis;
  if (rho > 1e-12) b += b_rho * (radial / rho);
  return current * b;
}

}  // namespace

CoilModel CoilModel::square_rig(double plane_z, double opposing_distance, double loop_radius,
                                double turns, double grid_halfwidth, double grid_step) {
  CoilModel model;
  const double r = opposing_distance / 2.0;
  for (const Vec3 dir : {Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(-1, 0, 0), Vec3(0, -1, 0)}) {
    CoilSpec c;
    c.center = dir * r + Vec3(0, 0, plane_z);
    c.axis = dir;
    c.loop_radius = loop_radius;
    c.turns = turns;
    model.coils_.push_back(c);
  }
  model.step_ = grid_step;
  const int nxy = static_cast<int>(std::round(2.0 * grid_halfwidth / grid_step)) + 1;
  const int nz = 7;
  model.dims_ = Eigen::Vector3i(nxy, nxy, nz);
  model.grid_origin_ =
      Vec3(-grid_halfwidth, -grid_halfwidth, plane_z - grid_step * (nz - 1) / 2.0);
  model.maps_.resize(model.coils_.size());
  for (size_t j = 0; j < model.coils_.size(); ++j) {
    auto& map = model.maps_[j];
    map.resize(static_cast<size_t>(nxy) * nxy * nz);
    for (int iz = 0; iz < nz; ++iz)
      for (int iy = 0; iy < nxy; ++iy)
        for (int ix = 0; ix < nxy; ++ix) {
          const Vec3 p = model.grid_origin_ + grid_step * Vec3(ix, iy, iz);
          map[(static_cast<size_t>(iz) * nxy + iy) * nxy + ix] =
              loop_field_world(model.coils_[j], p, 1.0);
        }
  }
  return model;
}

Vec3 CoilModel::interpolate(const std::vector<Vec3>& map, const Vec3& p) const {
  const Vec3 rel = (p - grid_origin_) / step_;
  const int nx = dims_(0), ny = dims_(1), nz = dims_(2);
  const auto clamp_cell = [](double v, int n) {
    int i = static_cast<int>(std::floor(v));
    i = std::max(0, std::min(i, n - 2));
    return i;
  };
  const int ix = clamp_cell(rel.x(), nx), iy = clamp_cell(rel.y(), ny),
            iz = clamp_cell(rel.z(), nz);
  const double fx = std::clamp(rel.x() - ix, 0.0, 1.0);
  const double fy = std::clamp(rel.y() - iy, 0.0, 1.0);
  const double fz = std::clamp(rel.z() - iz, 0.0, 1.0);
  auto at = [&](int dx, int dy, int dz) -> const Vec3& {
    return map[(static_cast<size_t>(iz + dz) * ny + (iy + dy)) * nx + (ix + dx)];
  };
  Vec3 out = Vec3::Zero();
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        const double w = (dx ? fx : 1.0 - fx) * (dy ? fy : 1.0 - fy) * (dz ? fz : 1.0 - fz);
        out += w * at(dx, dy, dz);
      }
  return out;
}

Vec3 CoilModel::unit_field(int j, const Vec3& p) const {
  return interpolate(maps_[static_cast<size_t>(j)], p);
}

Vec3 CoilModel::exact_field(int j, const Vec3& p, double current) const {
  return loop_field_world(coils_[static_cast<size_t>(j)], p, current);
}

Vec3 CoilModel::field(const Vec3& p, const Eigen::VectorXd& currents) const {
  Vec3 out = Vec3::Zero();
  for (int j = 0; j < n_coils(); ++j)
    if (currents(j) != 0.0) out += currents(j) * unit_field(j, p);
  return out;
}

Vec3 CoilModel::field_magnitude_gradient(const Vec3& p, const Eigen::VectorXd& currents) const {
  const double h = step_ / 2.0;
  Vec3 g;
  for (int a = 0; a < 3; ++a) {
    Vec3 plus = p, minus = p;
    plus(a) += h;
    minus(a) -= h;
    g(a) = (field(plus, currents).norm() - field(minus, currents).norm()) / (2.0 * h);
  }
  return g;
}

std::optional<Eigen::Vector2d> desired_direction(const Eigen::Vector2d& p,
                                                 const Eigen::Vector2d& goal) {
  const Eigen::Vector2d d = goal - p;
  const double n = d.norm();
  if (n < 1e-12) return std::nullopt;
  return Eigen::Vector2d(d / n);
}

double drive_current(double distance, const ControlConfig& cfg) {
  if (distance < 0.0) throw ConfigError("drive_current: distance must be >= 0");
  if (distance > cfg.p_thr) return cfg.i_max;
  return cfg.i_min + (cfg.i_max - cfg.i_min) * distance / cfg.p_thr;
}

namespace {
double cross2(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return a.x() * b.y() - a.y() * b.x();
}
}  // namespace

double coil_pair_ratio(const Eigen::Vector2d& b_j, const Eigen::Vector2d& b_k,
                       const Eigen::Vector2d& d) {
  const double cj = cross2(b_j, d);
  const double ck = cross2(b_k, d);
  const double denom = cj - ck;
  const double scale = std::max(b_j.norm(), b_k.norm()) * d.norm();
  if (std::abs(denom) < 1e-9 * scale)
    throw SingularityError("coil_pair_ratio: coil fields are parallel, pair infeasible");
  return -ck / denom;
}

std::pair<double, double> pair_currents(double lambda, double drive) {
  if (lambda < 0.0 || lambda > 1.0)
    throw ConfigError("pair_currents: lambda must lie in [0, 1]");
  if (lambda == 0.0) return {0.0, drive};
  if (lambda == 1.0) return {drive, 0.0};
  if (lambda < 0.5) return {drive * lambda / (1.0 - lambda), drive};
  if (lambda > 0.5) return {drive, drive * (1.0 - lambda) / lambda};
  return {drive, drive};
}

PairDrive select_drive(const CoilModel& coils, const Vec3& p, const Eigen::Vector2d& d,
                       double drive) {
  PairDrive best;
  best.currents = Eigen::VectorXd::Zero(coils.n_coils());
  double best_strength = 0.0;

  std::vector<Eigen::Vector2d> b(static_cast<size_t>(coils.n_coils()));
  for (int j = 0; j < coils.n_coils(); ++j) b[static_cast<size_t>(j)] = coils.unit_field(j, p).head<2>();

  // single-coil boundary case: a coil already pointing along d
  for (int j = 0; j < coils.n_coils(); ++j) {
    const Eigen::Vector2d& bj = b[static_cast<size_t>(j)];
    if (bj.norm() < 1e-15) continue;
    const double align = bj.normalized().dot(d);
    if (align > 1.0 - 1e-9) {
      const double strength = drive * bj.norm();
      if (strength > best_strength) {
        best = PairDrive{};
        best.j = j;
        best.k = -1;
        best.lambda = 1.0;
        best.currents = Eigen::VectorXd::Zero(coils.n_coils());
        best.currents(j) = drive;
        best.feasible = true;
        best_strength = strength;
      }
    }
  }

  for (int j = 0; j < coils.n_coils(); ++j) {
    for (int k = j + 1; k < coils.n_coils(); ++k) {
      double lambda;
      try {
        lambda = coil_pair_ratio(b[static_cast<size_t>(j)], b[static_cast<size_t>(k)], d);
      } catch (const SingularityError&) {
        continue;
      }
      if (lambda <= 0.0 || lambda >= 1.0) continue;
      const auto [ij, ik] = pair_currents(lambda, drive);
      const Eigen::Vector2d combined =
          ij * b[static_cast<size_t>(j)] + ik * b[static_cast<size_t>(k)];
      if (combined.dot(d) <= 0.0) continue;  // pair points backwards
      const double strength = combined.norm();
      if (strength > best_strength) {
        best = PairDrive{};
        best.j = j;
        best.k = k;
        best.lambda = lambda;
        best.currents = Eigen::VectorXd::Zero(coils.n_coils());
        best.currents(j) = ij;
        best.currents(k) = ik;
        best.feasible = true;
        best_strength = strength;
      }
    }
  }
  return best;
}

double actuation_time(double alpha, const ControlConfig& cfg) {
  const double a = std::abs(wrap_angle(alpha));
  if (a <= cfg.sharp_turn) return cfg.t_min;
  return cfg.t_min + (cfg.t_max - cfg.t_min) * a / kPi;
}

RobotState step_robot(const RobotState& state, const Vec3& field, double dt,
                      const RobotDriveParams& drive, const Vec3& field_gradient) {
  RobotState next = state;
  const Eigen::Vector2d b2 = field.head<2>();
  Vec3 force = Vec3::Zero();
  if (drive.mode == ForceMode::FieldProxy) {
    force = drive.force_per_tesla * field;
  } else {
    force = state.moment * field_gradient;
  }
  force.z() = 0.0;  // planar motion
  next.position += state.mobility * force * dt;

  if (b2.norm() > 1e-15) {
    const double target = std::atan2(b2.y(), b2.x());
    const double current = std::atan2(state.heading.y(), state.heading.x());
    const double blended =
        current + (1.0 - std::exp(-dt / state.orient_tau)) * wrap_angle(target - current);
    next.heading = Eigen::Vector2d(std::cos(blended), std::sin(blended));
  }
  return next;
}

ClosedLoopResult run_closed_loop(const std::vector<Eigen::Vector2d>& waypoints, RobotState robot,
                                 const CoilModel& coils, const ClosedLoopSetup& setup) {
  if (waypoints.empty()) throw ConfigError("run_closed_loop: no waypoints");
  setup.control.validate();
  const CampaignOptions& sensing = setup.sensing;

  ClosedLoopResult result;
  size_t target = 0;
  std::optional<Pose> warm;
  int cycles_on_target = 0;
  double best_distance = std::numeric_limits<double>::infinity();
  double err_acc = 0.0;
  int err_count = 0;

  for (int cycle = 0; cycle < setup.max_cycles && target < waypoints.size(); ++cycle) {
    result.cycles = cycle + 1;

    // sense: one SMOL fix of the robot's true pose under noise
    Pose truth;
    truth.position = robot.position;
    const double psi = std::atan2(robot.heading.y(), robot.heading.x());
    truth.orientation = quat_from_axis_angle(Vec3::UnitZ(), psi);

    TrialSpec spec;
    spec.truth = truth;
    spec.osc = sensing.osc;
    spec.magnet = sensing.magnet;
    spec.array = sensing.array;
    spec.filter = sensing.filter;
    spec.solver = sensing.solver;
    spec.half_periods = setup.half_periods;
    spec.signal_start = sensing.signal_start;
    spec.init = warm;

    LocalizationResult fix;
    bool localized = false;
    for (int attempt = 0; attempt < 2 && !localized; ++attempt) {
      // a failed fix is retried with a fresh excitation
      spec.noise = sensing.noise.with_seed(
          derive_seed(sensing.seed, 0xC1C0 + static_cast<std::uint64_t>(cycle), attempt));
      try {
        fix = run_localization_trial(spec);
        localized = fix.converged;
      } catch (const NoSignalError&) {
        localized = false;
      }
      result.sim_time += setup.excitation_overhead + setup.half_periods / (2.0 * sensing.osc.f_res);
    }
    Pose estimate = localized ? fix.pose : warm.value_or(truth);
    if (localized) warm = fix.pose;

    err_acc += (estimate.position.head<2>() - truth.position.head<2>()).norm();
    err_count++;

    CycleLog log;
    log.cycle = cycle;
    log.waypoint = static_cast<int>(target);
    log.true_position = truth.position;
    log.est_position = estimate.position;
    log.heading = robot.heading;
    log.localized = localized;
    log.currents = Eigen::VectorXd::Zero(coils.n_coils());

    // decide
    const Eigen::Vector2d p_est = estimate.position.head<2>();
    const Eigen::Vector2d goal = waypoints[target];
    const double distance = (goal - p_est).norm();
    if (distance <= setup.control.arrival_threshold) {
      // waypoint latched; never re-targeted
      ++target;
      cycles_on_target = 0;
      best_distance = std::numeric_limits<double>::infinity();
      log.sim_time = result.sim_time;
      result.log.push_back(log);
      continue;
    }
    if (distance < best_distance - 1e-5) {
      best_distance = distance;
      cycles_on_target = 0;
    } else if (++cycles_on_target > setup.stall_cycles) {
      ++target;
      ++result.missed_waypoints;
      cycles_on_target = 0;
      best_distance = std::numeric_limits<double>::infinity();
      log.sim_time = result.sim_time;
      result.log.push_back(log);
      continue;
    }

    const auto dir = desired_direction(p_est, goal);
    if (!dir) {
      ++target;
      continue;
    }
    const double drive = drive_current(distance, setup.control);
    const PairDrive pd = select_drive(coils, estimate.position, *dir, drive);
    if (!pd.feasible) {
      log.sim_time = result.sim_time;
      result.log.push_back(log);
      continue;
    }

    // heading error decides the actuation time (sharp turns act longer)
    const double est_psi = std::atan2(dir->y(), dir->x());
    const double cur_psi = std::atan2(robot.heading.y(), robot.heading.x());
    const double t_act = actuation_time(est_psi - cur_psi, setup.control);

    // act on the true robot with the commanded currents
    double remaining = t_act;
    while (remaining > 1e-9) {
      const double dt = std::min(setup.substep, remaining);
      const Vec3 b = coils.field(robot.position, pd.currents);
      const Vec3 grad = setup.drive.mode == ForceMode::Gradient
                            ? coils.field_magnitude_gradient(robot.position, pd.currents)
                            : Vec3::Zero();
      robot = step_robot(robot, b, dt, setup.drive, grad);
      remaining -= dt;
    }
    result.sim_time += t_act;

    log.currents = pd.currents;
    log.t_act = t_act;
    log.sim_time = result.sim_time;
    result.log.push_back(log);
  }

  result.completed = target >= waypoints.size();
  result.mean_position_error = err_count ? err_acc / err_count : 0.0;
  result.mean_rate = result.sim_time > 0 ? result.cycles / result.sim_time : 0.0;
  return result;
}

}  // namespace smol
