#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "smol/io.hpp"

using namespace smol;
namespace fs = std::filesystem;

namespace {

const fs::path kTmp = fs::temp_directory_path() / "smol_io_test";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
}

int run_cli(const std::string& cmd_args) {
  const std::string cmd = std::string(SMOL_CLI_PATH) + " " + cmd_args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

}  // namespace

TEST_CASE("sensor array round trip and validation") {
  fs::create_directories(kTmp);
  const SensorArray array = SensorArray::default_layout();
  io::save_sensor_array(array, kTmp / "array.json");
  const SensorArray loaded = io::load_sensor_array(kTmp / "array.json");
  CHECK(loaded.size() == array.size());
  CHECK(loaded.sample_rate == array.sample_rate);
  CHECK(loaded.reference_indices == array.reference_indices);
  for (int i = 0; i < array.size(); ++i) {
    CHECK((loaded.sensors[i].position - array.sensors[i].position).norm() < 1e-12);
    CHECK((loaded.sensors[i].axis - array.sensors[i].axis).norm() < 1e-12);
  }
  CHECK(io::load_sensor_array(std::string(SMOL_DATA_DIR) + "/default_array.json").size() == 10);
  CHECK_THROWS_AS(io::load_sensor_array(kTmp / "missing.json"), ConfigError);
}

TEST_CASE("device file round trip") {
  fs::create_directories(kTmp);
  io::DeviceFile device;
  device.osc = paper_device();
  device.osc.law = DampingLaw::Exponential;
  device.calibrated = true;
  io::save_device(device, kTmp / "device.json");
  const io::DeviceFile loaded = io::load_device(kTmp / "device.json");
  CHECK(loaded.osc.f_res == doctest::Approx(103.5));
  CHECK(loaded.osc.theta_max == doctest::Approx(deg2rad(17.8)));
  CHECK(loaded.osc.law == DampingLaw::Exponential);
  CHECK(loaded.calibrated);
  CHECK(loaded.magnet.moment() == doctest::Approx(8.9e-4).epsilon(2e-3));
}

TEST_CASE("frame CSV round trip") {
  fs::create_directories(kTmp);
  SignalFrame frame;
  frame.sample_rate = 50000.0;
  frame.units = SignalUnits::TeslaPerSecond;
  frame.samples.resize(40, 3);
  for (Eigen::Index k = 0; k < 40; ++k)
    for (Eigen::Index c = 0; c < 3; ++c)
      frame.samples(k, c) = std::sin(0.1 * static_cast<double>(k) + c) * 1e-6;
  io::save_frame_csv(frame, kTmp / "frame.csv");
  const SignalFrame loaded = io::load_frame_csv(kTmp / "frame.csv");
  CHECK(loaded.n_samples() == 40);
  CHECK(loaded.n_channels() == 3);
  CHECK(loaded.units == SignalUnits::TeslaPerSecond);
  CHECK(loaded.sample_rate == doctest::Approx(50000.0));
  CHECK((loaded.samples - frame.samples).cwiseAbs().maxCoeff() < 1e-16);
}

TEST_CASE("noise trace and waypoint loaders") {
  fs::create_directories(kTmp);
  spit(kTmp / "trace.csv", "time_s,value_T\n0.0,1e-9\n0.001,2e-9\n0.002,1.5e-9\n");
  const RecordedTrace trace = io::load_noise_trace(kTmp / "trace.csv");
  CHECK(trace.sample_rate == doctest::Approx(1000.0));
  CHECK(trace.values.size() == 3);

  spit(kTmp / "wp.csv", "x_mm,y_mm\n1.0,2.0\n-3.5,4.0\n");
  const auto wp = io::load_waypoints(kTmp / "wp.csv");
  CHECK(wp.size() == 2);
  CHECK(wp[1].x() == doctest::Approx(-0.0035));

  const auto bundled = io::load_waypoints(std::string(SMOL_DATA_DIR) + "/r_path.csv");
  CHECK(bundled.size() >= 15);
}

TEST_CASE("jsonl records") {
  LocalizationResult r;
  r.pose.position = Vec3(0.001, -0.002, 0.08);
  r.sse = 1.5e-9;
  r.r2 = 0.9999;
  r.iterations = 12;
  r.converged = true;
  r.timestamp = 0.025;
  const std::string line = io::localization_jsonl(r);
  CHECK(line.find("\"converged\":true") != std::string::npos);
  CHECK(line.find("\"iterations\":12") != std::string::npos);
  CHECK(line.find("position_mm") != std::string::npos);
}

TEST_CASE("cli") {
  const fs::path dir = kTmp / "cli";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string data = SMOL_DATA_DIR;

  SUBCASE("version") { CHECK(run_cli("version") == 0); }

  SUBCASE("simulate writes frames and a manifest, deterministically") {
    spit(dir / "sim.json",
         "{\"seed\": 5, \"duration_s\": 0.08, \"pose\": {\"position_mm\": [0,0,80]},"
         "\"device\": {\"calibrated\": true}, \"array_file\": \"" + data +
             "/default_array.json\"}");
    CHECK(run_cli("simulate -c " + (dir / "sim.json").string() + " -o " + (dir / "a").string()) ==
          0);
    CHECK(fs::exists(dir / "a" / "raw.csv"));
    CHECK(fs::exists(dir / "a" / "filtered.csv"));
    CHECK(fs::exists(dir / "a" / "manifest.json"));
    CHECK(run_cli("simulate -c " + (dir / "sim.json").string() + " -o " + (dir / "b").string()) ==
          0);
    CHECK(slurp(dir / "a" / "raw.csv") == slurp(dir / "b" / "raw.csv"));
    CHECK(slurp(dir / "a" / "filtered.csv") == slurp(dir / "b" / "filtered.csv"));
    const std::string manifest = slurp(dir / "a" / "manifest.json");
    CHECK(manifest.find("raw.csv") != std::string::npos);
    CHECK(manifest.find("config_hash") != std::string::npos);
  }

  SUBCASE("missing layout file fails with a diagnostic") {
    spit(dir / "bad.json",
         "{\"array_file\": \"nope_not_here.json\", \"pose\": {\"position_mm\": [0,0,80]}}");
    CHECK(run_cli("simulate -c " + (dir / "bad.json").string() + " -o " +
                  (dir / "x").string()) == 2);
  }

  SUBCASE("localize runs end to end on a synthesized scenario") {
    spit(dir / "loc.json",
         "{\"seed\": 3, \"half_periods\": 2, \"pose\": {\"position_mm\": [2,1,80]},"
         "\"init\": {\"position_mm\": [0,0,80]},"
         "\"device\": {\"calibrated\": true}}");
    CHECK(run_cli("localize -c " + (dir / "loc.json").string() + " -o " +
                  (dir / "loc").string()) == 0);
    const std::string rec = slurp(dir / "loc" / "results.jsonl");
    CHECK(rec.find("\"converged\":true") != std::string::npos);
  }

  SUBCASE("localize on an all-zero frame is a no-signal error") {
    SignalFrame zeros;
    zeros.sample_rate = 50000.0;
    zeros.samples = Eigen::MatrixXd::Zero(5000, 10);
    io::save_frame_csv(zeros, dir / "zeros.csv");
    spit(dir / "zero.json",
         "{\"half_periods\": 2, \"frame_csv\": \"zeros.csv\", \"device\": {\"calibrated\": true}}");
    CHECK(run_cli("localize -c " + (dir / "zero.json").string() + " -o " +
                  (dir / "z").string()) == 3);
  }

  SUBCASE("uncalibrated device is rejected with a pointer to calibrate") {
    spit(dir / "uncal.json",
         "{\"half_periods\": 2, \"pose\": {\"position_mm\": [0,0,80]},"
         "\"device\": {\"calibrated\": false}}");
    const std::string cmd = std::string(SMOL_CLI_PATH) + " localize -c " +
                            (dir / "uncal.json").string() + " -o " + (dir / "u").string() +
                            " 2>" + (dir / "err.txt").string();
    const int rc = WEXITSTATUS(std::system(cmd.c_str()));
    CHECK(rc == 2);
    CHECK(slurp(dir / "err.txt").find("calibrate") != std::string::npos);
  }

  SUBCASE("calibrate writes a calibrated device file") {
    spit(dir / "cal.json",
         "{\"seed\": 4, \"known_z_mm\": 80, \"frames\": 1, \"half_periods\": 8,"
         "\"device\": {\"calibrated\": false, \"theta_max_deg\": 15.0, \"eta_per_s\": 0.7},"
         "\"truth\": {\"theta_max_deg\": 17.8, \"eta_per_s\": 1.1}}");
    CHECK(run_cli("calibrate -c " + (dir / "cal.json").string() + " -o " +
                  (dir / "cal").string()) == 0);
    const io::DeviceFile dev = io::load_device(dir / "cal" / "device.json");
    CHECK(dev.calibrated);
    CHECK(rad2deg(dev.osc.theta_max) == doctest::Approx(17.8).epsilon(0.05));
  }
}
