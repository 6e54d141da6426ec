#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "smol/closed_loop.hpp"
#include "smol/pose_solver.hpp"
#include "smol/sim_lab.hpp"

namespace smol::io {

inline constexpr const char* kVersion = "1.0.0";

/// FNV-1a over the raw bytes of a file; stable across runs.
std::uint64_t file_hash(const std::filesystem::path& path);

// Sensor layout file: a JSON object with a sensor list (position_mm, axis,
// range_uT, quantization_nT), sample_rate_hz, and reference_index (one index
// or a list).
SensorArray load_sensor_array(const std::filesystem::path& path);
void save_sensor_array(const SensorArray& array, const std::filesystem::path& path);

// Device parameter file, written by `calibrate` and consumed by later
// commands. Units at the file boundary: Hz, deg, 1/s, mm, T, mm^3.
struct DeviceFile {
  OscillatorParams osc;
  MagnetSpec magnet;
  bool calibrated = false;
};
DeviceFile load_device(const std::filesystem::path& path);
void save_device(const DeviceFile& device, const std::filesystem::path& path);

/// Noise trace CSV with a header line and rows time_s,value_T.
RecordedTrace load_noise_trace(const std::filesystem::path& path);

/// Frame export, one column per channel plus a leading time column.
void save_frame_csv(const SignalFrame& frame, const std::filesystem::path& path);
SignalFrame load_frame_csv(const std::filesystem::path& path);

/// Waypoint path file: header then rows x_mm,y_mm.
std::vector<Eigen::Vector2d> load_waypoints(const std::filesystem::path& path);

/// One JSON-lines record per localization: pose in mm and quaternion, SSE,
/// R^2, iterations, convergence, segment timestamp.
std::string localization_jsonl(const LocalizationResult& result);
std::string trial_record_jsonl(const TrialRecord& record);

struct RunManifest {
  std::string command;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::string version = kVersion;
  std::string started;
  std::string finished;
  std::vector<std::string> outputs;
};
void save_manifest(const RunManifest& manifest, const std::filesystem::path& path);

std::string timestamp_now();

}  // namespace smol::io
