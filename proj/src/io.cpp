#include "smol/io.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace smol::io {

using nlohmann::json;

namespace {

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
  }
  return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write file: " + path.string());
  out << text;
}

Vec3 vec3_of(const json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 3)
    throw ConfigError("field '" + field + "' must be a 3-element array");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

}  // namespace

std::uint64_t file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open file for hashing: " + path.string());
  std::uint64_t h = 0xCBF29CE484222325ull;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001B3ull;
    }
    if (!in) break;
  }
  return h;
}

SensorArray load_sensor_array(const std::filesystem::path& path) {
  const json j = read_json(path);
  SensorArray array;
  if (!j.contains("sensors")) throw ConfigError(path.string() + ": missing field 'sensors'");
  if (!j.contains("sample_rate_hz"))
    throw ConfigError(path.string() + ": missing field 'sample_rate_hz'");
  array.sample_rate = j["sample_rate_hz"].get<double>();
  for (const auto& js : j["sensors"]) {
    SensorSpec s;
    s.position = vec3_of(js.at("position_mm"), "position_mm") * 1e-3;
    s.axis = vec3_of(js.at("axis"), "axis").normalized();
    s.range = js.value("range_uT", 10.0) * 1e-6;
    s.quantization = js.value("quantization_nT", 0.1) * 1e-9;
    array.sensors.push_back(s);
  }
  if (j.contains("reference_index")) {
    const auto& r = j["reference_index"];
    if (r.is_array())
      for (const auto& v : r) array.reference_indices.push_back(v.get<int>());
    else
      array.reference_indices.push_back(r.get<int>());
  }
  array.validate();
  return array;
}

void save_sensor_array(const SensorArray& array, const std::filesystem::path& path) {
  json j;
  j["sample_rate_hz"] = array.sample_rate;
  j["reference_index"] = array.reference_indices;
  j["sensors"] = json::array();
  for (const auto& s : array.sensors) {
    json js;
    js["position_mm"] = {s.position.x() * 1e3, s.position.y() * 1e3, s.position.z() * 1e3};
    js["axis"] = {s.axis.x(), s.axis.y(), s.axis.z()};
    js["range_uT"] = s.range * 1e6;
    js["quantization_nT"] = s.quantization * 1e9;
    j["sensors"].push_back(js);
  }
  write_text(path, j.dump(2) + "\n");
}

DeviceFile load_device(const std::filesystem::path& path) {
  const json j = read_json(path);
  DeviceFile d;
  d.osc.f_res = j.at("f_res_hz").get<double>();
  d.osc.theta_max = deg2rad(j.at("theta_max_deg").get<double>());
  d.osc.eta = j.at("eta_per_s").get<double>();
  d.osc.phi = j.value("phi_rad", 0.0);
  d.osc.arm_length = j.value("arm_length_mm", 1.5) * 1e-3;
  const std::string law = j.value("damping_law", "linear");
  if (law == "linear")
    d.osc.law = DampingLaw::Linear;
  else if (law == "exponential")
    d.osc.law = DampingLaw::Exponential;
  else
    throw ConfigError(path.string() + ": damping_law must be 'linear' or 'exponential'");
  d.magnet.remanence = j.value("remanence_t", 1.398);
  d.magnet.volume = j.value("volume_mm3", 0.8) * 1e-9;
  d.calibrated = j.value("calibrated", false);
  d.osc.validate();
  d.magnet.validate();
  return d;
}

void save_device(const DeviceFile& device, const std::filesystem::path& path) {
  json j;
  j["f_res_hz"] = device.osc.f_res;
  j["theta_max_deg"] = rad2deg(device.osc.theta_max);
  j["eta_per_s"] = device.osc.eta;
  j["phi_rad"] = device.osc.phi;
  j["arm_length_mm"] = device.osc.arm_length * 1e3;
  j["damping_law"] = device.osc.law == DampingLaw::Linear ? "linear" : "exponential";
  j["remanence_t"] = device.magnet.remanence;
  j["volume_mm3"] = device.magnet.volume * 1e9;
  j["calibrated"] = device.calibrated;
  write_text(path, j.dump(2) + "\n");
}

RecordedTrace load_noise_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open noise trace: " + path.string());
  std::string line;
  std::getline(in, line);  // header
  std::vector<double> times, values;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    double t, v;
    if (std::sscanf(line.c_str(), "%lf,%lf", &t, &v) != 2)
      throw ConfigError(path.string() + ": expected rows 'time_s,value_T'");
    times.push_back(t);
    values.push_back(v);
  }
  if (times.size() < 2) throw ConfigError(path.string() + ": trace needs at least 2 samples");
  RecordedTrace trace;
  trace.sample_rate = (times.size() - 1) / (times.back() - times.front());
  trace.values = Eigen::Map<const Eigen::VectorXd>(values.data(), values.size());
  return trace;
}

void save_frame_csv(const SignalFrame& frame, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "time_s";
  for (Eigen::Index c = 0; c < frame.n_channels(); ++c) out << ",ch" << c;
  out << "\n# units="
      << (frame.units == SignalUnits::Tesla ? "T" : "T_per_s")
      << " sample_rate_hz=" << frame.sample_rate << "\n";
  char buf[64];
  for (Eigen::Index k = 0; k < frame.n_samples(); ++k) {
    std::snprintf(buf, sizeof(buf), "%.9f", frame.time_at(k));
    out << buf;
    for (Eigen::Index c = 0; c < frame.n_channels(); ++c) {
      std::snprintf(buf, sizeof(buf), ",%.12e", frame.samples(k, c));
      out << buf;
    }
    out << "\n";
  }
  write_text(path, out.str());
}

SignalFrame load_frame_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open frame CSV: " + path.string());
  std::string header;
  std::getline(in, header);
  const Eigen::Index channels = std::count(header.begin(), header.end(), ',');
  std::string meta;
  std::getline(in, meta);
  SignalFrame frame;
  frame.units = meta.find("T_per_s") != std::string::npos ? SignalUnits::TeslaPerSecond
                                                          : SignalUnits::Tesla;
  const auto pos = meta.find("sample_rate_hz=");
  if (pos == std::string::npos) throw ConfigError(path.string() + ": missing sample_rate_hz");
  frame.sample_rate = std::stod(meta.substr(pos + 15));
  std::vector<double> data;
  std::string line;
  double t0 = 0.0;
  bool first = true;
  Eigen::Index rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::getline(ls, cell, ',');
    if (first) {
      t0 = std::stod(cell);
      first = false;
    }
    for (Eigen::Index c = 0; c < channels; ++c) {
      if (!std::getline(ls, cell, ','))
        throw ConfigError(path.string() + ": short row in frame CSV");
      data.push_back(std::stod(cell));
    }
    ++rows;
  }
  frame.start_time = t0;
  frame.samples.resize(rows, channels);
  for (Eigen::Index k = 0; k < rows; ++k)
    for (Eigen::Index c = 0; c < channels; ++c) frame.samples(k, c) = data[k * channels + c];
  return frame;
}

std::vector<Eigen::Vector2d> load_waypoints(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open waypoint file: " + path.string());
  std::string line;
  std::getline(in, line);  // header
  std::vector<Eigen::Vector2d> out;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    double x, y;
    if (std::sscanf(line.c_str(), "%lf,%lf", &x, &y) != 2)
      throw ConfigError(path.string() + ": expected rows 'x_mm,y_mm'");
    out.emplace_back(x * 1e-3, y * 1e-3);
  }
  if (out.empty()) throw ConfigError(path.string() + ": no waypoints");
  return out;
}

std::string localization_jsonl(const LocalizationResult& r) {
  json j;
  j["position_mm"] = {r.pose.position.x() * 1e3, r.pose.position.y() * 1e3,
                      r.pose.position.z() * 1e3};
  j["quaternion"] = {r.pose.orientation(0), r.pose.orientation(1), r.pose.orientation(2),
                     r.pose.orientation(3)};
  j["sse"] = r.sse;
  if (r.r2)
    j["r2"] = *r.r2;
  else
    j["r2"] = nullptr;
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  j["timestamp_s"] = r.timestamp;
  return j.dump();
}

std::string trial_record_jsonl(const TrialRecord& rec) {
  json j = json::parse(localization_jsonl(rec.result));
  j["point"] = rec.point;
  j["repeat"] = rec.repeat;
  j["truth_value"] = rec.truth_value;
  j["truth_position_mm"] = {rec.truth.position.x() * 1e3, rec.truth.position.y() * 1e3,
                            rec.truth.position.z() * 1e3};
  j["truth_quaternion"] = {rec.truth.orientation(0), rec.truth.orientation(1),
                           rec.truth.orientation(2), rec.truth.orientation(3)};
  return j.dump();
}

void save_manifest(const RunManifest& m, const std::filesystem::path& path) {
  json j;
  j["command"] = m.command;
  j["config_hash"] = m.config_hash;
  j["seed"] = m.seed;
  j["version"] = m.version;
  j["started"] = m.started;
  j["finished"] = m.finished;
  j["outputs"] = m.outputs;
  write_text(path, j.dump(2) + "\n");
}

std::string timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

}  // namespace smol::io
