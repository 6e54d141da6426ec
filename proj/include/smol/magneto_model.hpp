#pragma once

#include <functional>

#include "smol/types.hpp"

namespace smol {

/// Torque of an external field on a magnetic moment: tau = m x B.
template <typename DerivedM, typename DerivedB>
Eigen::Matrix<typename DerivedM::Scalar, 3, 1> magnetic_torque(
    const Eigen::MatrixBase<DerivedM>& moment, const Eigen::MatrixBase<DerivedB>& field) {
  return moment.cross(field);
}

/// Envelope D(t) of the ring-down, in [0, 1].
inline double damping_factor(double t, const OscillatorParams& p) {
  switch (p.law) {
    case DampingLaw::Linear:
      return std::max(0.0, 1.0 - p.eta * t);
    case DampingLaw::Exponential:
      return std::exp(-p.eta * t);
  }
  return 1.0;
}

/// Cantilever deflection theta(t) = theta_max * cos(2*pi*f_res*t + phi) * D(t).
inline double deflection_angle(double t, const OscillatorParams& p) {
  return p.theta_max * std::cos(2.0 * kPi * p.f_res * t + p.phi) * damping_factor(t, p);
}

/// Ideal dipole field at displacement r from the dipole center:
/// B = mu0 / (4*pi*|r|^3) * (3*rhat*rhat^T - I) * m.
template <typename DerivedM, typename DerivedR>
Eigen::Matrix<typename DerivedM::Scalar, 3, 1> dipole_field(
    const Eigen::MatrixBase<DerivedM>& moment, const Eigen::MatrixBase<DerivedR>& r,
    double min_distance = 1e-6) {
  using Scalar = typename DerivedM::Scalar;
  const Scalar dist = r.norm();
  if (dist < static_cast<Scalar>(min_distance))
    throw SingularityError("dipole_field: evaluation point within minimum distance of the dipole");
  const Eigen::Matrix<Scalar, 3, 1> rhat = r / dist;
  const Scalar scale = static_cast<Scalar>(kMu0 / (4.0 * kPi)) / (dist * dist * dist);
  return scale * (Scalar(3) * rhat * rhat.dot(moment) - moment);
}

/// Rotation matrix of a unit quaternion (q0, q1, q2, q3), scalar part first.
/// Quaternions within 1e-3 of unit norm are renormalized; larger deviations are rejected.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, 3, 3> quat_rotation_matrix(
    const Eigen::MatrixBase<Derived>& q) {
  using Scalar = typename Derived::Scalar;
  EIGEN_STATIC_ASSERT_VECTOR_SPECIFIC_SIZE(Derived, 4);
  const Scalar n = q.norm();
  if (std::abs(static_cast<double>(n) - 1.0) > 1e-3)
    throw InvalidQuaternionError("quat_rotation_matrix: quaternion norm deviates beyond 1e-3");
  const Scalar q0 = q(0) / n, q1 = q(1) / n, q2 = q(2) / n, q3 = q(3) / n;
  Eigen::Matrix<Scalar, 3, 3> R;
  R << Scalar(0.5) - q2 * q2 - q3 * q3, q1 * q2 - q3 * q0, q1 * q3 + q2 * q0,
       q1 * q2 + q3 * q0, Scalar(0.5) - q1 * q1 - q3 * q3, q2 * q3 - q1 * q0,
       q1 * q3 - q2 * q0, q2 * q3 + q1 * q0, Scalar(0.5) - q1 * q1 - q2 * q2;
  return Scalar(2) * R;
}

/// Rotation matrix about the y-axis.
template <typename Scalar = double>
Eigen::Matrix<Scalar, 3, 3> rot_y(Scalar theta) {
  const Scalar c = std::cos(theta), s = std::sin(theta);
  Eigen::Matrix<Scalar, 3, 3> R;
  R << c, Scalar(0), s,
       Scalar(0), Scalar(1), Scalar(0),
       -s, Scalar(0), c;
  return R;
}

/// Quaternion (q0,q1,q2,q3) for a rotation of `angle` about the given axis.
Eigen::Vector4d quat_from_axis_angle(const Vec3& axis, double angle);

/// Hamilton product a*b, scalar part first.
Eigen::Vector4d quat_multiply(const Eigen::Vector4d& a, const Eigen::Vector4d& b);

struct MagnetState {
  Vec3 dipole_position;  // [m]
  Vec3 moment;           // [A*m^2]
};

/// Magnet center and moment vector at time t. The magnet rides on a circular
/// path of radius arm_length in the intrinsic x-z plane; the rest moment
/// points along intrinsic +x and tilts with the deflection about intrinsic y.
MagnetState magnet_state(double t, const Pose& pose, const OscillatorParams& p,
                         const MagnetSpec& mag);

/// Same as magnet_state but reuses a precomputed device rotation matrix.
MagnetState magnet_state(double t, const Vec3& position, const Mat3& rotation,
                         const OscillatorParams& p, double moment_magnitude);

/// Flux density projected onto the sensor axis [T]. Displacement convention:
/// r = sensor_position - dipole_position (equivalent to the summed-vector
/// convention by the even parity of the dipole field).
double sensor_reading(double t, const Pose& pose, const OscillatorParams& p, const MagnetSpec& mag,
                      const SensorSpec& sensor);

enum class ExcitationMode { SignalOnly, WithExcitation };

struct ExcitationSettings {
  int cycles = 5;               // excitation cycles at f_res
  double buffer_time = 0.020;   // coil ring-down buffer [s]
};

/// Noise-free multi-channel signal sampled at array.sample_rate. In
/// WithExcitation mode the frame is prepended with a saturated excitation
/// window followed by the ring-down; the oscillation clock (t = 0 of the
/// deflection law) starts when the excitation ends.
SignalFrame synthesize_signal(const Pose& pose, const OscillatorParams& p, const MagnetSpec& mag,
                              const SensorArray& array, double duration,
                              ExcitationMode mode = ExcitationMode::SignalOnly,
                              const ExcitationSettings& exc = {});

/// Generalization for a device in motion: pose_at(t) gives the pose at
/// oscillation time t. SignalOnly frames start at t = 0.
SignalFrame synthesize_signal_moving(const std::function<Pose(double)>& pose_at,
                                     const OscillatorParams& p, const MagnetSpec& mag,
                                     const SensorArray& array, double duration,
                                     ExcitationMode mode = ExcitationMode::SignalOnly,
                                     const ExcitationSettings& exc = {});

}  // namespace smol
