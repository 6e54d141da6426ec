#include "smol/magneto_model.hpp"

namespace smol {

SensorArray SensorArray::default_layout() {
  SensorArray array;
  array.sample_rate = 50000.0;
  const double pitch = 0.050;
  for (int iy = -1; iy <= 1; ++iy) {
    for (int ix = -1; ix <= 1; ++ix) {
      SensorSpec s;
      s.position = Vec3(ix * pitch, iy * pitch, 0.0);
      array.sensors.push_back(s);
    }
  }
  SensorSpec ref;
  ref.position = Vec3(-0.100, -0.100, 0.0);
  array.sensors.push_back(ref);
  array.reference_indices = {9};
  return array;
}

Eigen::Vector4d quat_from_axis_angle(const Vec3& axis, double angle) {
  const Vec3 u = axis.normalized();
  const double h = 0.5 * angle;
  const double s = std::sin(h);
  return {std::cos(h), u.x() * s, u.y() * s, u.z() * s};
}

Eigen::Vector4d quat_multiply(const Eigen::Vector4d& a, const Eigen::Vector4d& b) {
  return {a(0) * b(0) - a(1) * b(1) - a(2) * b(2) - a(3) * b(3),
          a(0) * b(1) + a(1) * b(0) + a(2) * b(3) - a(3) * b(2),
          a(0) * b(2) - a(1) * b(3) + a(2) * b(0) + a(3) * b(1),
          a(0) * b(3) + a(1) * b(2) - a(2) * b(1) + a(3) * b(0)};
}

MagnetState magnet_state(double t, const Vec3& position, const Mat3& rotation,
                         const OscillatorParams& p, double moment_magnitude) {
  const double theta = deflection_angle(t, p);
  const double c = std::cos(theta), s = std::sin(theta);
  MagnetState state;
  state.dipole_position = position + p.arm_length * (rotation * Vec3(s, 0.0, c));
  // R_q * R_y(theta) * (m, 0, 0) with R_y applied analytically.
  state.moment = rotation * Vec3(moment_magnitude * c, 0.0, -moment_magnitude * s);
  return state;
}

MagnetState magnet_state(double t, const Pose& pose, const OscillatorParams& p,
                         const MagnetSpec& mag) {
  return magnet_state(t, pose.position, quat_rotation_matrix(pose.orientation), p, mag.moment());
}

double sensor_reading(double t, const Pose& pose, const OscillatorParams& p, const MagnetSpec& mag,
                      const SensorSpec& sensor) {
  const MagnetState state = magnet_state(t, pose, p, mag);
  const Vec3 r = sensor.position - state.dipole_position;
  return dipole_field(state.moment, r).dot(sensor.axis);
}

namespace {

SignalFrame synthesize_core(const std::function<Pose(double)>& pose_at, const OscillatorParams& p,
                            const MagnetSpec& mag, const SensorArray& array, double duration,
                            ExcitationMode mode, const ExcitationSettings& exc) {
  if (!(duration > 0.0)) throw ConfigError("synthesize_signal: duration must be > 0");
  p.validate();
  mag.validate();
  array.validate();

  const double rate = array.sample_rate;
  const double moment = mag.moment();
  const int n_ch = array.size();

  // In WithExcitation mode the ring-down also covers the coil ring-down
  // buffer ahead of the usable signal.
  double ringdown = duration;
  Eigen::Index n_lead = 0;
  double exc_duration = 0.0;
  if (mode == ExcitationMode::WithExcitation) {
    exc_duration = exc.cycles / p.f_res;
    n_lead = static_cast<Eigen::Index>(std::llround(exc_duration * rate));
    ringdown += exc.buffer_time;
  }
  const auto n_signal = static_cast<Eigen::Index>(std::llround(ringdown * rate));

  SignalFrame frame;
  frame.sample_rate = rate;
  frame.units = SignalUnits::Tesla;
  frame.start_time = 0.0;
  frame.samples.resize(n_lead + n_signal, n_ch);

  // Excitation phase: the drive field is beyond the sensor range, so the
  // recorded values are clipped placeholders alternating with the drive.
  for (Eigen::Index k = 0; k < n_lead; ++k) {
    const double t = static_cast<double>(k) / rate;
    const double drive = std::sin(2.0 * kPi * p.f_res * t);
    for (int c = 0; c < n_ch; ++c)
      frame.samples(k, c) = (drive >= 0.0 ? 1.0 : -1.0) * array.sensors[c].range;
  }

  // Ring-down: oscillation clock starts at the end of the excitation window.
  for (Eigen::Index k = 0; k < n_signal; ++k) {
    const double t = static_cast<double>(k) / rate;
    const Pose pose = pose_at(t);
    const Mat3 R = quat_rotation_matrix(pose.orientation);
    const MagnetState state = magnet_state(t, pose.position, R, p, moment);
    for (int c = 0; c < n_ch; ++c) {
      const Vec3 r = array.sensors[c].position - state.dipole_position;
      frame.samples(n_lead + k, c) = dipole_field(state.moment, r).dot(array.sensors[c].axis);
    }
  }

  if (mode == ExcitationMode::WithExcitation) frame.start_time = -exc_duration;
  return frame;
}

}  // namespace

SignalFrame synthesize_signal(const Pose& pose, const OscillatorParams& p, const MagnetSpec& mag,
                              const SensorArray& array, double duration, ExcitationMode mode,
                              const ExcitationSettings& exc) {
  return synthesize_core([&pose](double) { return pose; }, p, mag, array, duration, mode, exc);
}

SignalFrame synthesize_signal_moving(const std::function<Pose(double)>& pose_at,
                                     const OscillatorParams& p, const MagnetSpec& mag,
                                     const SensorArray& array, double duration, ExcitationMode mode,
                                     const ExcitationSettings& exc) {
  return synthesize_core(pose_at, p, mag, array, duration, mode, exc);
}

}  // namespace smol
