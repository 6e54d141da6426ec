#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>

#include "smol/io.hpp"
#include "smol/sim_lab.hpp"

using namespace smol;

namespace {
CampaignOptions light_base(int repeats, std::uint64_t seed) {
  CampaignOptions base = CampaignOptions::defaults();
  base.repeats = repeats;
  base.seed = seed;
  base.jobs = 2;
  return base;
}
}  // namespace

TEST_CASE("derive_seed and parallel_for") {
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 2, 4));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 3));
  CHECK(derive_seed(1, 2, 3) != derive_seed(2, 2, 3));

  std::vector<int> hits(100, 0);
  std::atomic<int> total{0};
  parallel_for(100, 4, [&](int i) {
    hits[static_cast<size_t>(i)]++;
    total++;
  });
  CHECK(total == 100);
  for (int h : hits) CHECK(h == 1);
}

TEST_CASE("translation sweep achieves sub-millimeter differential MAE") {
  TranslationSweepOptions opts;
  opts.base = light_base(6, 21);
  opts.axis = 'x';
  opts.start = -0.010;
  opts.stop = 0.010;
  opts.step = 0.005;
  opts.half_periods = 2;
  const SweepResult res = run_translation_sweep(opts);

  CHECK(res.flagged_points.empty());
  CHECK(res.records.size() == 5 * 6);
  REQUIRE(res.report.rows.size() == 3);
  const auto& row_x = res.report.rows[0];
  CHECK(row_x.axis == "x");
  CHECK(row_x.mae < 1.0);       // mm
  CHECK(row_x.trend_r2 > 0.99);
  CHECK(res.report.sigma_xyz < 1.0);
  // every aggregate value traces back to a stored per-trial record
  for (const auto& rec : res.records) CHECK(rec.result.iterations >= 0);
}

TEST_CASE("translation sweep campaigns are byte-reproducible") {
  TranslationSweepOptions opts;
  opts.base = light_base(3, 77);
  opts.start = -0.005;
  opts.stop = 0.005;
  opts.step = 0.005;
  const SweepResult a = run_translation_sweep(opts);
  const SweepResult b = run_translation_sweep(opts);
  REQUIRE(a.records.size() == b.records.size());
  for (size_t i = 0; i < a.records.size(); ++i)
    CHECK(io::trial_record_jsonl(a.records[i]) == io::trial_record_jsonl(b.records[i]));
  CHECK(a.report.to_csv() == b.report.to_csv());
}

TEST_CASE("rotation sweep with circular statistics") {
  RotationSweepOptions opts;
  opts.base = light_base(4, 31);
  opts.axis = 'z';
  opts.start = 0.0;
  opts.stop = deg2rad(90.0);
  opts.step = deg2rad(30.0);
  opts.half_periods = 2;
  const SweepResult res = run_rotation_sweep(opts);
  REQUIRE(res.report.rows.size() == 1);
  CHECK(res.report.rows[0].axis == "phi_z");
  CHECK(res.report.rows[0].mae < 4.0);  // deg

  // wraparound: a sweep crossing 0/360 treats both sides as identical angles
  RotationSweepOptions wrap = opts;
  wrap.start = deg2rad(350.0);
  wrap.stop = deg2rad(370.0);
  wrap.step = deg2rad(10.0);
  const SweepResult res2 = run_rotation_sweep(wrap);
  CHECK(res2.report.rows[0].mae < 4.0);
}

TEST_CASE("precision improves with N and the rate drops") {
  PrecisionVsNOptions opts;
  opts.base = light_base(8, 13);
  opts.n_values = {1, 6, 20};
  const PrecisionVsNResult res = run_precision_vs_n(opts);
  REQUIRE(res.rows.size() == 3);
  CHECK(res.rows[0].sigma_xyz > res.rows[2].sigma_xyz);
  CHECK(res.rows[0].f_loc > res.rows[1].f_loc);
  CHECK(res.rows[1].f_loc > res.rows[2].f_loc);
  // f_loc(N) = 1 / (overhead + N half periods)
  CHECK(res.rows[0].f_loc ==
        doctest::Approx(1.0 / (0.08 + 1.0 / (2.0 * 103.5))).epsilon(1e-9));
  CHECK(!res.records.empty());
}

TEST_CASE("damping sweep has a positive slope with eta = 0 the best point") {
  DampingSweepOptions opts;
  opts.base = light_base(6, 17);
  opts.eta_start = 0.0;
  opts.eta_stop = 20.0;
  opts.eta_step = 10.0;
  opts.half_periods = 2;
  const DampingSweepResult res = run_damping_sweep(opts);
  REQUIRE(res.rows.size() == 3);
  CHECK(res.slope > 0.0);
  CHECK(res.rows[0].sigma_xyz == doctest::Approx(
            std::min({res.rows[0].sigma_xyz, res.rows[1].sigma_xyz, res.rows[2].sigma_xyz})));
  for (const auto& row : res.rows) CHECK(!row.flagged);
}

TEST_CASE("superfast demo") {
  SUBCASE("static device stays in band with zero outliers") {
    SuperfastDemoOptions opts;
    opts.base = light_base(1, 23);
    opts.n_seg = 4;
    opts.duration = 0.8;
    opts.stepped = false;
    const SuperfastDemoResult res = run_superfast_demo(opts);
    CHECK(res.nominal_rate == doctest::Approx(51.75));
    CHECK(res.outliers == 0);
    CHECK(res.segments.size() >= 30);
    CHECK(!res.bins.empty());
    CHECK(res.sigma_first_window < 1e-3);
    // later bins lose precision as the ring-down decays
    CHECK(res.bins.back().sigma_xyz > res.bins.front().sigma_xyz);
  }
  SUBCASE("stepped motion is resolved") {
    SuperfastDemoOptions opts;
    opts.base = light_base(1, 29);
    opts.n_seg = 4;
    opts.duration = 1.0;
    opts.stepped = true;
    opts.travel = 0.02;
    opts.step_size = 0.005;
    const SuperfastDemoResult res = run_superfast_demo(opts);
    CHECK(res.sigma_first_window < 1e-3);
    int good = 0;
    for (size_t i = 0; i < res.segments.size(); ++i) {
      if (!res.segments[i].converged) continue;
      if (std::abs(res.segments[i].pose.position.x() - res.truth_x[i]) < 2e-3) ++good;
    }
    CHECK(good > static_cast<int>(res.segments.size()) * 7 / 10);
  }
}

TEST_CASE("interference study separates the two trackers") {
  InterferenceStudyOptions opts;
  opts.base = light_base(5, 37);
  opts.tracker_z = {0.080, 0.090};
  opts.half_periods = 10;
  const InterferenceStudyResult res = run_interference_study(opts);
  REQUIRE(res.rows.size() == 4);
  CHECK(res.static_degradation > 3.0);
  CHECK(res.smol_change < 0.5);
  // zero scalpel moment collapses both arms onto their baselines
  InterferenceStudyOptions null_opts = opts;
  null_opts.scalpel_moment = 0.0;
  const InterferenceStudyResult none = run_interference_study(null_opts);
  CHECK(none.static_degradation == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(none.smol_change == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("scaling probe finds a finite localization depth") {
  ScalingStudyOptions opts;
  opts.base = light_base(8, 41);
  opts.cube_sides = {0.000928};
  opts.half_periods = 2;
  opts.resolution = 0.010;
  opts.z_lo = 0.05;
  opts.z_hi = 0.25;
  opts.include_optimized = false;
  const ScalingStudyResult res = run_scaling_study(opts);
  REQUIRE(res.rows.size() == 1);
  CHECK(res.rows[0].met);
  CHECK(res.rows[0].z_max > 0.07);
  CHECK(res.rows[0].z_max < 0.20);
  MESSAGE("real-device z_max (8 repeats, 10 mm) = ", res.rows[0].z_max * 1e3, " mm");
}
