#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace smol {

inline constexpr double kMu0 = 1.25663706212e-6;  // vacuum permeability [T*m/A]
inline constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
  a = std::fmod(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  if (a > kPi) a -= 2.0 * kPi;
  return a;
}

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SingularityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InvalidQuaternionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NoSignalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// 6-DoF pose: position in the world frame (sensor plane at z = 0, +z toward
// the device) and a unit quaternion (scalar part first) mapping the device
// intrinsic frame to the world frame.
struct Pose {
  Vec3 position{Vec3::Zero()};
  Eigen::Vector4d orientation{1.0, 0.0, 0.0, 0.0};  // (q0, q1, q2, q3)

  void normalize() { orientation.normalize(); }

  double quaternion_norm_error() const { return std::abs(orientation.norm() - 1.0); }
};

enum class DampingLaw { Linear, Exponential };

// Motion law of the cantilever: theta(t) = theta_max * cos(2*pi*f_res*t + phi) * D(t).
struct OscillatorParams {
  double f_res = 103.5;                        // resonance frequency [Hz]
  double theta_max = deg2rad(17.8);            // maximum deflection angle [rad]
  double eta = 1.1;                            // damping coefficient [1/s]
  double phi = 0.0;                            // oscillation phase [rad]
  double arm_length = 1.5e-3;                  // rotation center to magnet [m]
  DampingLaw law = DampingLaw::Linear;

  void validate() const {
    if (!(f_res > 0.0)) throw ConfigError("OscillatorParams: f_res must be > 0");
    if (!(theta_max > 0.0 && theta_max < kPi / 2.0))
      throw ConfigError("OscillatorParams: theta_max must be in (0, pi/2)");
    if (!(eta >= 0.0)) throw ConfigError("OscillatorParams: eta must be >= 0");
    if (!(arm_length > 0.0)) throw ConfigError("OscillatorParams: arm_length must be > 0");
  }
};

struct MagnetSpec {
  double remanence = 1.398;   // [T]
  double volume = 0.8e-9;     // [m^3]

  double moment() const { return remanence * volume / kMu0; }  // [A*m^2]

  void validate() const {
    if (!(remanence > 0.0)) throw ConfigError("MagnetSpec: remanence must be > 0");
    if (!(volume > 0.0)) throw ConfigError("MagnetSpec: volume must be > 0");
  }
};

// Single-axis magnetometer.
struct SensorSpec {
  Vec3 position{Vec3::Zero()};   // [m]
  Vec3 axis{0.0, 0.0, 1.0};      // unit measurement direction
  double range = 10e-6;          // +- clipping level [T]
  double quantization = 0.1e-9;  // resolution step [T]
};

struct SensorArray {
  std::vector<SensorSpec> sensors;
  double sample_rate = 50000.0;        // [Hz]
  std::vector<int> reference_indices;  // one reference sensor per measurement direction

  int size() const { return static_cast<int>(sensors.size()); }

  bool is_reference(int i) const {
    for (int r : reference_indices)
      if (r == i) return true;
    return false;
  }

  /// Indices of the non-reference (measurement) sensors, in array order.
  std::vector<int> measurement_indices() const {
    std::vector<int> out;
    for (int i = 0; i < size(); ++i)
      if (!is_reference(i)) out.push_back(i);
    return out;
  }

  /// Reference sensor serving the measurement direction of sensor i.
  int reference_for(int i) const {
    const Vec3& axis = sensors[i].axis;
    for (int r : reference_indices) {
      if (r >= 0 && r < size() && std::abs(sensors[r].axis.dot(axis)) > 1.0 - 1e-6) return r;
    }
    throw ConfigError("SensorArray: no reference sensor for the measurement direction of channel " +
                      std::to_string(i));
  }

  void validate() const {
    if (!(sample_rate > 0.0)) throw ConfigError("SensorArray: sample_rate must be > 0");
    if (sensors.empty()) throw ConfigError("SensorArray: empty sensor list");
    for (size_t i = 0; i < sensors.size(); ++i) {
      if (std::abs(sensors[i].axis.norm() - 1.0) > 1e-9)
        throw ConfigError("SensorArray: sensor " + std::to_string(i) + " axis is not unit-norm");
    }
    for (int r : reference_indices)
      if (r < 0 || r >= size()) throw ConfigError("SensorArray: reference index out of range");
    // Each represented measurement direction must map to exactly one reference.
    for (int i = 0; i < size(); ++i) {
      if (is_reference(i)) continue;
      int count = 0;
      for (int r : reference_indices)
        if (std::abs(sensors[r].axis.dot(sensors[i].axis)) > 1.0 - 1e-6) ++count;
      if (count != 1)
        throw ConfigError("SensorArray: direction of sensor " + std::to_string(i) + " has " +
                          std::to_string(count) + " reference sensors (want exactly 1)");
    }
  }

  /// 3x3 grid of z-axis sensors (50 mm pitch) plus a far z-axis reference.
  static SensorArray default_layout();
};

enum class SignalUnits { Tesla, TeslaPerSecond };

// Time-aligned multi-channel series; rows are samples, columns are channels.
struct SignalFrame {
  double start_time = 0.0;   // [s]
  double sample_rate = 0.0;  // [Hz]
  SignalUnits units = SignalUnits::Tesla;
  Eigen::MatrixXd samples;

  Eigen::Index n_samples() const { return samples.rows(); }
  Eigen::Index n_channels() const { return samples.cols(); }
  double dt() const { return 1.0 / sample_rate; }
  double time_at(Eigen::Index k) const { return start_time + static_cast<double>(k) / sample_rate; }
  double end_time() const { return time_at(n_samples() - 1); }

  /// Linear interpolation of channel ch at time t (t inside the frame span).
  double value_at(double t, Eigen::Index ch) const {
    const double x = (t - start_time) * sample_rate;
    const auto k = static_cast<Eigen::Index>(std::floor(x));
    if (k < 0 || k >= n_samples() - 1) {
      if (k == n_samples() - 1 && x - static_cast<double>(k) < 1e-9) return samples(k, ch);
      throw std::out_of_range("SignalFrame::value_at: time outside frame span");
    }
    const double w = x - static_cast<double>(k);
    return (1.0 - w) * samples(k, ch) + w * samples(k + 1, ch);
  }
};

}  // namespace smol
