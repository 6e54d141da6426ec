// smol: simulate, filter, and solve small-scale magneto-oscillatory
// localization scenarios from JSON configs.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "smol/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace smol;

namespace {

struct CliArgs {
  fs::path config;
  fs::path out_dir;
  std::optional<std::uint64_t> seed;
  int jobs = 0;
  bool partial = false;
};

json load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return j;
}

fs::path resolve_out_dir(const CliArgs& args) {
  if (!args.out_dir.empty()) return args.out_dir;
  if (const char* env = std::getenv("SMOL_OUT_DIR")) return fs::path(env);
  return fs::path("smol_out");
}

fs::path sibling(const fs::path& config, const std::string& rel) {
  const fs::path p(rel);
  if (p.is_absolute()) return p;
  return config.parent_path() / p;
}

Pose parse_pose(const json& j, double reference_z) {
  Pose pose = reference_pose(reference_z);
  if (j.contains("position_mm")) {
    const auto& p = j["position_mm"];
    pose.position = Vec3(p[0].get<double>(), p[1].get<double>(), p[2].get<double>()) * 1e-3;
  }
  if (j.contains("quaternion")) {
    const auto& q = j["quaternion"];
    pose.orientation = Eigen::Vector4d(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(),
                                       q[3].get<double>());
    pose.normalize();
  }
  return pose;
}

// Shared campaign setup: device (inline or file), array, noise, solver knobs.
CampaignOptions parse_campaign(const json& cfg, const CliArgs& args, const fs::path& config_path,
                               bool needs_calibrated_device) {
  CampaignOptions base = CampaignOptions::defaults();
  bool calibrated = false;

  if (cfg.contains("device_file")) {
    const io::DeviceFile dev = io::load_device(sibling(config_path, cfg["device_file"]));
    base.osc = dev.osc;
    base.magnet = dev.magnet;
    calibrated = dev.calibrated;
  } else if (cfg.contains("device")) {
    const json& d = cfg["device"];
    base.osc.f_res = d.value("f_res_hz", base.osc.f_res);
    base.osc.theta_max = deg2rad(d.value("theta_max_deg", rad2deg(base.osc.theta_max)));
    base.osc.eta = d.value("eta_per_s", base.osc.eta);
    base.osc.arm_length = d.value("arm_length_mm", base.osc.arm_length * 1e3) * 1e-3;
    if (d.value("damping_law", "linear") == std::string("exponential"))
      base.osc.law = DampingLaw::Exponential;
    base.magnet.remanence = d.value("remanence_t", base.magnet.remanence);
    base.magnet.volume = d.value("volume_mm3", base.magnet.volume * 1e9) * 1e-9;
    calibrated = d.value("calibrated", false);
    base.osc.validate();
    base.magnet.validate();
  } else {
    calibrated = true;  // bundled reference device
  }
  if (needs_calibrated_device && !calibrated)
    throw ConfigError(
        "device parameters are not calibrated; run `smol calibrate` against a known depth first "
        "(theta_max and eta must be fitted before localization)");

  if (cfg.contains("array_file"))
    base.array = io::load_sensor_array(sibling(config_path, cfg["array_file"]));
  base.noise = make_default_noise(base.array);
  if (cfg.contains("noise")) {
    const json& n = cfg["noise"];
    if (n.contains("mains_amplitude_nt")) {
      const double scale = n["mains_amplitude_nt"].get<double>() * 1e-9 / base.noise.mains_amplitude;
      base.noise.mains_amplitude *= scale;
      for (auto& h : base.noise.harmonics) h.amplitude *= scale;
    }
    if (n.contains("white_sigma_nt")) base.noise.white_sigma = n["white_sigma_nt"].get<double>() * 1e-9;
    if (n.contains("zero") && n["zero"].get<bool>()) {
      base.noise.mains_amplitude = 0.0;
      base.noise.harmonics.clear();
      base.noise.white_sigma = 0.0;
    }
    if (n.contains("trace_csv"))
      base.noise.recorded = io::load_noise_trace(sibling(config_path, n["trace_csv"]));
  }

  base.repeats = cfg.value("repeats", 20);
  base.reference_z = cfg.value("reference_z_mm", 80.0) * 1e-3;
  base.seed = args.seed.value_or(cfg.value("seed", 1));
  base.noise.seed = base.seed;
  base.jobs = args.jobs;
  return base;
}

void write_jsonl(const fs::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  for (const auto& line : lines) out << line << "\n";
}

int finish(const CliArgs& args, const json& cfg, const std::string& command,
           io::RunManifest manifest, const fs::path& out_dir) {
  manifest.command = command;
  manifest.config_hash = io::file_hash(args.config);
  manifest.seed = args.seed.value_or(cfg.value("seed", 1));
  manifest.finished = io::timestamp_now();
  io::save_manifest(manifest, out_dir / "manifest.json");
  return 0;
}

int cmd_simulate(const CliArgs& args) {
  const json cfg = load_config(args.config);
  const fs::path out_dir = resolve_out_dir(args);
  fs::create_directories(out_dir);
  io::RunManifest manifest;
  manifest.started = io::timestamp_now();

  CampaignOptions base = parse_campaign(cfg, args, args.config, false);
  const Pose pose = parse_pose(cfg.value("pose", json::object()), base.reference_z);
  const double duration = cfg.value("duration_s", 0.5);
  const bool with_excitation = cfg.value("mode", "signal-only") == std::string("with-excitation");

  SignalFrame frame =
      synthesize_signal(pose, base.osc, base.magnet, base.array, duration,
                        with_excitation ? ExcitationMode::WithExcitation
                                        : ExcitationMode::SignalOnly);
  if (cfg.value("apply_noise", true)) {
    frame = inject_noise(frame, base.noise);
    frame = saturate_quantize(frame, base.array);
  }
  io::save_frame_csv(frame, out_dir / "raw.csv");
  manifest.outputs.push_back("raw.csv");
  if (cfg.value("write_filtered", true)) {
    io::save_frame_csv(filter_chain(frame, base.array, base.filter), out_dir / "filtered.csv");
    manifest.outputs.push_back("filtered.csv");
  }
  return finish(args, cfg, "simulate", manifest, out_dir);
}

int cmd_localize(const CliArgs& args) {
  const json cfg = load_config(args.config);
  const fs::path out_dir = resolve_out_dir(args);
  fs::create_directories(out_dir);
  io::RunManifest manifest;
  manifest.started = io::timestamp_now();

  CampaignOptions base = parse_campaign(cfg, args, args.config, true);
  const int N = cfg.value("half_periods", 2);

  SignalFrame raw;
  double search_start = base.signal_start;
  if (cfg.contains("frame_csv")) {
    raw = io::load_frame_csv(sibling(args.config, cfg["frame_csv"]));
    search_start = cfg.value("search_start_s", 0.0);
  } else {
    const Pose truth = parse_pose(cfg.value("pose", json::object()), base.reference_z);
    const double duration = base.signal_start + 3.0 / base.osc.f_res +
                            N / (2.0 * base.osc.f_res) + 0.008;
    raw = synthesize_signal(truth, base.osc, base.magnet, base.array, duration);
    raw = inject_noise(raw, base.noise);
    raw = saturate_quantize(raw, base.array);
  }

  const SignalFrame filtered = filter_chain(raw, base.array, base.filter);
  AnchorOptions aopts;
  aopts.chain = base.filter;
  aopts.eta = base.osc.eta;
  aopts.law = base.osc.law;
  aopts.search_start = search_start;
  const PhaseAnchor anchor = estimate_phase_anchor(filtered, base.osc.f_res, aopts);
  const SampledObservations obs =
      downsample_half_periods(filtered, base.osc.f_res, N, anchor.anchor_time);

  FitContext ctx;
  ctx.osc = base.osc;
  ctx.osc.phi = anchor.phi;
  ctx.magnet = base.magnet;
  ctx.array = base.array;
  ctx.filter = base.filter;
  std::optional<Pose> init;
  if (cfg.contains("init")) init = parse_pose(cfg["init"], base.reference_z);
  const LocalizationResult result = localize(obs, ctx, init, base.solver);

  write_jsonl(out_dir / "results.jsonl", {io::localization_jsonl(result)});
  manifest.outputs.push_back("results.jsonl");
  std::cout << io::localization_jsonl(result) << "\n";
  const int rc = finish(args, cfg, "localize", manifest, out_dir);
  if (!result.converged && !args.partial) {
    std::cerr << "localization did not converge\n";
    return 4;
  }
  return rc;
}

int cmd_calibrate(const CliArgs& args) {
  const json cfg = load_config(args.config);
  const fs::path out_dir = resolve_out_dir(args);
  fs::create_directories(out_dir);
  io::RunManifest manifest;
  manifest.started = io::timestamp_now();

  CampaignOptions base = parse_campaign(cfg, args, args.config, false);
  if (!cfg.contains("known_z_mm"))
    throw ConfigError(
        "calibrate requires known_z_mm: positioning the device at a known depth resolves the "
        "theta_max-depth amplitude degeneracy");
  const double known_z = cfg["known_z_mm"].get<double>() * 1e-3;
  const int N = cfg.value("half_periods", 20);
  const int n_frames = cfg.value("frames", 2);

  // Ground truth for the synthetic calibration frames.
  CampaignOptions truth = base;
  if (cfg.contains("truth")) {
    const json& t = cfg["truth"];
    truth.osc.theta_max = deg2rad(t.value("theta_max_deg", rad2deg(truth.osc.theta_max)));
    truth.osc.eta = t.value("eta_per_s", truth.osc.eta);
  }
  Pose truth_pose = reference_pose(known_z);

  std::vector<SignalFrame> frames;
  for (int i = 0; i < n_frames; ++i) {
    OscillatorParams osc = truth.osc;
    osc.phi = 0.4 + 1.3 * i;
    SignalFrame f = synthesize_signal(truth_pose, osc, truth.magnet, base.array,
                                      base.signal_start + 0.05 + N / (2.0 * osc.f_res) + 0.02);
    f = inject_noise(f, base.noise.with_seed(derive_seed(base.seed, 11, i)));
    f = saturate_quantize(f, base.array);
    frames.push_back(std::move(f));
  }

  FitContext ctx;
  ctx.osc = base.osc;
  ctx.magnet = base.magnet;
  ctx.array = base.array;
  ctx.filter = base.filter;
  Pose init = reference_pose(known_z);
  const CalibrationResult result = calibrate(frames, ctx, known_z, init, N, base.solver);

  io::DeviceFile out_device;
  out_device.osc = result.osc;
  out_device.magnet = base.magnet;
  out_device.calibrated = result.converged;
  io::save_device(out_device, out_dir / "device.json");
  manifest.outputs.push_back("device.json");

  json summary;
  summary["theta_max_deg"] = rad2deg(result.osc.theta_max);
  summary["eta_per_s"] = result.osc.eta;
  summary["sse"] = result.sse;
  summary["r2"] = result.r2 ? json(*result.r2) : json(nullptr);
  summary["converged"] = result.converged;
  std::ofstream(out_dir / "calibration.json") << summary.dump(2) << "\n";
  manifest.outputs.push_back("calibration.json");
  std::cout << summary.dump() << "\n";
  const int rc = finish(args, cfg, "calibrate", manifest, out_dir);
  return result.converged || args.partial ? rc : 4;
}

int cmd_sweep(const CliArgs& args) {
  const json cfg = load_config(args.config);
  const fs::path out_dir = resolve_out_dir(args);
  fs::create_directories(out_dir);
  io::RunManifest manifest;
  manifest.started = io::timestamp_now();

  CampaignOptions base = parse_campaign(cfg, args, args.config, true);
  const std::string kind = cfg.value("kind", "translation");

  bool all_points_ok = true;
  json summary;
  std::vector<std::string> records;

  if (kind == "translation" || kind == "rotation") {
    SweepResult result;
    if (kind == "translation") {
      TranslationSweepOptions opts;
      opts.base = base;
      opts.axis = cfg.value("axis", "x")[0];
      opts.start = cfg.value("start_mm", -25.0) * 1e-3;
      opts.stop = cfg.value("stop_mm", 25.0) * 1e-3;
      opts.step = cfg.value("step_mm", 5.0) * 1e-3;
      opts.half_periods = cfg.value("half_periods", 2);
      result = run_translation_sweep(opts);
    } else {
      RotationSweepOptions opts;
      opts.base = base;
      opts.axis = cfg.value("axis", "z")[0];
      opts.start = deg2rad(cfg.value("start_deg", 0.0));
      opts.stop = deg2rad(cfg.value("stop_deg", 340.0));
      opts.step = deg2rad(cfg.value("step_deg", 20.0));
      opts.half_periods = cfg.value("half_periods", 2);
      result = run_rotation_sweep(opts);
    }
    std::ofstream(out_dir / "report.csv") << result.report.to_csv();
    std::ofstream(out_dir / "report.json") << result.report.to_json() << "\n";
    for (const auto& rec : result.records) records.push_back(io::trial_record_jsonl(rec));
    write_jsonl(out_dir / "records.jsonl", records);
    manifest.outputs = {"report.csv", "report.json", "records.jsonl"};
    all_points_ok = result.flagged_points.empty();
    summary["flagged_points"] = result.flagged_points;
    summary["report"] = json::parse(result.report.to_json());
  } else if (kind == "precision_vs_n") {
    PrecisionVsNOptions opts;
    opts.base = base;
    if (cfg.contains("n_values")) opts.n_values = cfg["n_values"].get<std::vector<int>>();
    opts.overhead = cfg.value("overhead_s", 0.08);
    const PrecisionVsNResult result = run_precision_vs_n(opts);
    std::ostringstream csv;
    csv << "N,sigma_x_mm,sigma_y_mm,sigma_z_mm,sigma_xyz_mm,f_loc_hz\n";
    csv.precision(9);
    for (const auto& row : result.rows)
      csv << row.half_periods << ',' << row.sigma_x * 1e3 << ',' << row.sigma_y * 1e3 << ','
          << row.sigma_z * 1e3 << ',' << row.sigma_xyz * 1e3 << ',' << row.f_loc << "\n";
    std::ofstream(out_dir / "report.csv") << csv.str();
    for (const auto& rec : result.records) records.push_back(io::trial_record_jsonl(rec));
    write_jsonl(out_dir / "records.jsonl", records);
    manifest.outputs = {"report.csv", "records.jsonl"};
    for (const auto& row : result.rows) {
      summary["rows"].push_back({{"N", row.half_periods},
                                 {"sigma_xyz_mm", row.sigma_xyz * 1e3},
                                 {"f_loc_hz", row.f_loc}});
    }
  } else if (kind == "damping") {
    DampingSweepOptions opts;
    opts.base = base;
    opts.eta_start = cfg.value("eta_start", 0.0);
    opts.eta_stop = cfg.value("eta_stop", 25.0);
    opts.eta_step = cfg.value("eta_step", 2.5);
    opts.half_periods = cfg.value("half_periods", 2);
    const DampingSweepResult result = run_damping_sweep(opts);
    std::ostringstream csv;
    csv << "eta_per_s,sigma_xyz_mm,flagged\n";
    csv.precision(9);
    for (const auto& row : result.rows)
      csv << row.eta << ',' << row.sigma_xyz * 1e3 << ',' << (row.flagged ? 1 : 0) << "\n";
    std::ofstream(out_dir / "report.csv") << csv.str();
    manifest.outputs = {"report.csv"};
    summary["slope_um_s"] = result.slope * 1e6;
    summary["r2"] = result.r2;
    for (const auto& row : result.rows) all_points_ok = all_points_ok && !row.flagged;
  } else if (kind == "scaling") {
    ScalingStudyOptions opts;
    opts.base = base;
    if (cfg.contains("cube_sides_mm")) {
      opts.cube_sides.clear();
      for (const auto& v : cfg["cube_sides_mm"]) opts.cube_sides.push_back(v.get<double>() * 1e-3);
    }
    opts.half_periods = cfg.value("half_periods", 2);
    opts.include_optimized = cfg.value("include_optimized", true);
    const ScalingStudyResult result = run_scaling_study(opts);
    std::ostringstream csv;
    csv << "cube_side_mm,z_max_mm,met\n";
    csv.precision(9);
    for (const auto& row : result.rows)
      csv << row.cube_side * 1e3 << ',' << row.z_max * 1e3 << ',' << (row.met ? 1 : 0) << "\n";
    std::ofstream(out_dir / "report.csv") << csv.str();
    manifest.outputs = {"report.csv"};
    summary["linear_r2"] = result.r2;
    summary["optimized_z_max_mm"] = result.optimized_z_max * 1e3;
    for (const auto& row : result.rows) all_points_ok = all_points_ok && row.met;
  } else {
    throw ConfigError("unknown sweep kind '" + kind + "'");
  }

  std::ofstream(out_dir / "summary.json") << summary.dump(2) << "\n";
  manifest.outputs.push_back("summary.json");
  const int rc = finish(args, cfg, "sweep", manifest, out_dir);
  if (!all_points_ok && !args.partial) {
    std::cerr << "sweep finished with flagged points (re-run with --partial to accept)\n";
    return 4;
  }
  return rc;
}

int cmd_superfast(const CliArgs& args) {
  const json cfg = load_config(args.config);
  const fs::path out_dir = resolve_out_dir(args);
  fs::create_directories(out_dir);
  io::RunManifest manifest;
  manifest.started = io::timestamp_now();

  SuperfastDemoOptions opts;
  opts.base = parse_campaign(cfg, args, args.config, true);
  opts.n_seg = cfg.value("n_seg", 4);
  opts.duration = cfg.value("duration_s", 2.4);
  opts.stepped = cfg.value("motion", "stepped") == std::string("stepped");
  const SuperfastDemoResult result = run_superfast_demo(opts);

  std::vector<std::string> lines;
  for (size_t i = 0; i < result.segments.size(); ++i) {
    json j = json::parse(io::localization_jsonl(result.segments[i]));
    j["truth_x_mm"] = result.truth_x[i] * 1e3;
    lines.push_back(j.dump());
  }
  write_jsonl(out_dir / "segments.jsonl", lines);
  json summary;
  summary["nominal_rate_hz"] = result.nominal_rate;
  summary["outliers"] = result.outliers;
  summary["sigma_first_1p5s_mm"] = result.sigma_first_window * 1e3;
  summary["segments"] = result.segments.size();
  std::ofstream(out_dir / "summary.json") << summary.dump(2) << "\n";
  manifest.outputs = {"segments.jsonl", "summary.json"};
  std::cout << summary.dump() << "\n";
  return finish(args, cfg, "superfast", manifest, out_dir);
}

int cmd_interference(const CliArgs& args) {
  const json cfg = load_config(args.config);
  const fs::path out_dir = resolve_out_dir(args);
  fs::create_directories(out_dir);
  io::RunManifest manifest;
  manifest.started = io::timestamp_now();

  InterferenceStudyOptions opts;
  opts.base = parse_campaign(cfg, args, args.config, true);
  opts.scalpel_moment = cfg.value("scalpel_moment_mam2", 15.97) * 1e-3;
  opts.static_moment = cfg.value("static_moment_mam2", 15.97) * 1e-3;
  opts.half_periods = cfg.value("half_periods", 10);
  if (cfg.contains("tracker_z_mm")) {
    opts.tracker_z.clear();
    for (const auto& v : cfg["tracker_z_mm"]) opts.tracker_z.push_back(v.get<double>() * 1e-3);
  }
  const InterferenceStudyResult result = run_interference_study(opts);

  std::ostringstream csv;
  csv << "tracker,scalpel,mae_z_mm\n";
  csv.precision(9);
  for (const auto& row : result.rows)
    csv << row.tracker << ',' << (row.scalpel ? 1 : 0) << ',' << row.mae_z * 1e3 << "\n";
  std::ofstream(out_dir / "report.csv") << csv.str();
  json summary;
  summary["static_degradation"] = result.static_degradation;
  summary["smol_change"] = result.smol_change;
  std::ofstream(out_dir / "summary.json") << summary.dump(2) << "\n";
  manifest.outputs = {"report.csv", "summary.json"};
  std::cout << summary.dump() << "\n";
  return finish(args, cfg, "interference", manifest, out_dir);
}

int cmd_control(const CliArgs& args) {
  const json cfg = load_config(args.config);
  const fs::path out_dir = resolve_out_dir(args);
  fs::create_directories(out_dir);
  io::RunManifest manifest;
  manifest.started = io::timestamp_now();

  ClosedLoopSetup setup;
  setup.sensing = parse_campaign(cfg, args, args.config, true);
  setup.plane_z = cfg.value("plane_z_mm", 40.0) * 1e-3;
  setup.half_periods = cfg.value("half_periods", 2);
  if (!cfg.contains("waypoints_csv")) throw ConfigError("control requires waypoints_csv");
  const auto waypoints = io::load_waypoints(sibling(args.config, cfg["waypoints_csv"]));

  const CoilModel coils = CoilModel::square_rig(setup.plane_z);
  RobotState robot;
  robot.position = Vec3(cfg.value("start_x_mm", waypoints.front().x() * 1e3 - 3.0) * 1e-3,
                        cfg.value("start_y_mm", waypoints.front().y() * 1e3 - 3.0) * 1e-3,
                        setup.plane_z);
  const ClosedLoopResult result = run_closed_loop(waypoints, robot, coils, setup);

  std::vector<std::string> lines;
  for (const auto& log : result.log) {
    json j;
    j["cycle"] = log.cycle;
    j["sim_time_s"] = log.sim_time;
    j["waypoint"] = log.waypoint;
    j["true_position_mm"] = {log.true_position.x() * 1e3, log.true_position.y() * 1e3,
                             log.true_position.z() * 1e3};
    j["est_position_mm"] = {log.est_position.x() * 1e3, log.est_position.y() * 1e3,
                            log.est_position.z() * 1e3};
    j["currents_a"] = std::vector<double>(log.currents.data(),
                                          log.currents.data() + log.currents.size());
    j["t_act_s"] = log.t_act;
    j["localized"] = log.localized;
    lines.push_back(j.dump());
  }
  write_jsonl(out_dir / "trajectory.jsonl", lines);
  json summary;
  summary["completed"] = result.completed;
  summary["missed_waypoints"] = result.missed_waypoints;
  summary["cycles"] = result.cycles;
  summary["sim_time_s"] = result.sim_time;
  summary["mean_rate_hz"] = result.mean_rate;
  summary["mean_position_error_mm"] = result.mean_position_error * 1e3;
  std::ofstream(out_dir / "summary.json") << summary.dump(2) << "\n";
  manifest.outputs = {"trajectory.jsonl", "summary.json"};
  std::cout << summary.dump() << "\n";
  const int rc = finish(args, cfg, "control", manifest, out_dir);
  if ((!result.completed || result.missed_waypoints > 0) && !args.partial) {
    std::cerr << "path not completed cleanly\n";
    return 4;
  }
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"small-scale magneto-oscillatory localization toolbox"};
  app.require_subcommand(1);

  CliArgs args;
  const auto add_common = [&](CLI::App* cmd, bool needs_config = true) {
    if (needs_config)
      cmd->add_option("-c,--config", args.config, "JSON config file")->required();
    cmd->add_option("-o,--out", args.out_dir, "output directory (default: $SMOL_OUT_DIR)");
    cmd->add_option("--seed", args.seed, "override the config seed");
    cmd->add_option("-j,--jobs", args.jobs, "worker threads for campaign trials");
    cmd->add_flag("--partial", args.partial, "accept per-point failures with exit 0");
  };

  auto* simulate = app.add_subcommand("simulate", "synthesize sensor frames");
  auto* localize_cmd = app.add_subcommand("localize", "one 6-DoF localization");
  auto* calibrate_cmd = app.add_subcommand("calibrate", "fit theta_max and eta at a known depth");
  auto* sweep = app.add_subcommand("sweep", "accuracy / precision / damping / scaling campaigns");
  auto* superfast = app.add_subcommand("superfast", "segmented single-ring-down localization");
  auto* interference = app.add_subcommand("interference", "moving-tool robustness comparison");
  auto* control = app.add_subcommand("control", "closed-loop gradient actuation");
  auto* version = app.add_subcommand("version", "print the tool version");
  for (auto* cmd : {simulate, localize_cmd, calibrate_cmd, sweep, superfast, interference, control})
    add_common(cmd);

  CLI11_PARSE(app, argc, argv);

  try {
    if (version->parsed()) {
      std::cout << "smol " << smol::io::kVersion << "\n";
      return 0;
    }
    if (simulate->parsed()) return cmd_simulate(args);
    if (localize_cmd->parsed()) return cmd_localize(args);
    if (calibrate_cmd->parsed()) return cmd_calibrate(args);
    if (sweep->parsed()) return cmd_sweep(args);
    if (superfast->parsed()) return cmd_superfast(args);
    if (interference->parsed()) return cmd_interference(args);
    if (control->parsed()) return cmd_control(args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NoSignalError& e) {
    std::cerr << "no-signal error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
