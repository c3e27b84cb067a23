#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "oracles/oracles.hpp"
#include "rhec/bench.hpp"
#include "rhec/error.hpp"

using namespace rhec;

namespace {

ScenarioConfig quiet_straight(double duration) {
  ScenarioConfig c = parse_config(
      "path.kind = straight\n"
      "path.length_m = 40\n"
      "start.lateral_m = 0\n"
      "terrain.mu = 1\nterrain.kappa = 1\n"
      "sensor.sigma_x = 0\nsensor.sigma_y = 0\nsensor.sigma_nu = 0\nsensor.sigma_omega = 0\n");
  c.duration = duration;
  return c;
}

RunLog make_log(const std::vector<std::pair<double, double>>& xy) {
  RunLog log;
  for (std::size_t i = 0; i < xy.size(); ++i) {
    LogRow r;
    r.t = static_cast<double>(i) * kSamplePeriod;
    r.x_meas = xy[i].first;
    r.y_meas = xy[i].second;
    log.rows.push_back(r);
  }
  return log;
}

}  // namespace

TEST_CASE("config parsing") {
  const ScenarioConfig c = parse_config("# comment\npath.kind = straight   # trailing\n\ncontroller.q_variant = Q1\n");
  CHECK(c.path.kind == "straight");
  CHECK(c.controller.Q(2, 2) == 10.0);
  CHECK(c.controller.Q_N(2, 2) == 100.0);
  CHECK_THROWS_AS(parse_config("no.such_key = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("path.kind\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("terrain.mu = abc\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("controller.q_variant = Q7\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/file.cfg"), ConfigError);

  ScenarioConfig d = c;
  set_config_value(d, "run.nu_cmd", "0.4");
  CHECK(d.plant.nu_cmd == 0.4);
  CHECK(d.controller.nu_cmd == 0.4);
}

TEST_CASE("canonical text round-trips and hashes stably") {
  ScenarioConfig c;
  c.terrain.mu = 0.85;
  const ScenarioConfig back = parse_config(c.canonical());
  CHECK(back.canonical() == c.canonical());
  CHECK(config_hash(back) == config_hash(c));
  ScenarioConfig d = c;
  d.sensor.seed = 2;
  CHECK(config_hash(d) != config_hash(c));
}

TEST_CASE("path generation") {
  SUBCASE("straight") {
    PathSpec s;
    s.kind = "straight";
    const ReferencePath p = generate_path(s);
    CHECK(p.size() == 201);
    CHECK(p.length() == doctest::Approx(20.0));
    for (std::size_t i = 0; i < p.segments(); ++i) CHECK(p.segment_straight(i));
  }
  SUBCASE("rows are one pitch apart") {
    PathSpec s;
    s.passes = 4;
    s.turn_rows = 3;
    const ReferencePath p = generate_path(s);
    std::vector<double> lane_y;
    for (std::size_t i = 0; i < p.segments(); ++i) {
      if (!p.segment_straight(i)) continue;
      const double y = p.points()[i][1];
      if (lane_y.empty() || std::abs(lane_y.back() - y) > 1e-9) lane_y.push_back(y);
    }
    REQUIRE(lane_y.size() == 4);
    // lane order 0, K, 1, K+1
    CHECK(lane_y[0] == doctest::Approx(0.0));
    CHECK(lane_y[1] == doctest::Approx(3 * 0.78));
    CHECK(lane_y[2] - lane_y[0] == doctest::Approx(0.78).epsilon(1e-12));
    CHECK(lane_y[3] - lane_y[1] == doctest::Approx(0.78).epsilon(1e-12));
  }
  SUBCASE("s-curve arcs have the configured curvature") {
    PathSpec s;
    s.kind = "s-curve";
    s.radius = 5.0;
    const ReferencePath p = generate_path(s);
    int arcs = 0, off = 0;
    for (std::size_t i = 1; i + 1 < p.size(); ++i) {
      if (p.segment_straight(i - 1) || p.segment_straight(i)) continue;
      const double k = oracle::three_point_curvature(p.points()[i - 1], p.points()[i], p.points()[i + 1]);
      if (std::abs(k - 0.2) >= 0.01 * 0.2) ++off;
      ++arcs;
    }
    CHECK(arcs > 100);
    CHECK(off <= 1);  // the inflection vertex between the two arcs
  }
  SUBCASE("bad specs") {
    PathSpec s;
    s.kind = "spiral";
    CHECK_THROWS_AS(generate_path(s), InvalidArgument);
    s = PathSpec{};
    s.spacing = 0.0;
    CHECK_THROWS_AS(generate_path(s), InvalidArgument);
  }
}

TEST_CASE("euclidean error") {
  ScenarioConfig cfg;
  cfg.path.kind = "straight";
  cfg.include_transient = true;
  const ReferencePath path = generate_path(cfg.path);
  CHECK(euclidean_error(make_log({{5.0, 0.0}, {6.0, 0.0}}), path, cfg).mean == 0.0);
  const ErrorSeries e = euclidean_error(make_log({{5.0, 0.1}, {6.0, -0.1}}), path, cfg);
  CHECK(e.mean == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(e.max == doctest::Approx(0.1).epsilon(1e-12));

  ScenarioConfig rows;
  rows.include_transient = true;
  const ReferencePath rp = generate_path(rows.path);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ux(-3.0, 23.0), uy(-3.0, 20.0);
  std::vector<std::pair<double, double>> pts;
  for (int i = 0; i < 1000; ++i) pts.emplace_back(ux(rng), uy(rng));
  const ErrorSeries er = euclidean_error(make_log(pts), rp, rows);
  for (int i = 0; i < 1000; ++i) {
    const auto b = oracle::brute_nearest(rp.points(), {pts[i].first, pts[i].second});
    CHECK(std::abs(er.series[i] - b.distance) < 1e-9);
  }
}

TEST_CASE("transient cutoff") {
  ScenarioConfig cfg;
  CHECK(transient_cutoff({0.3, 0.2, 0.04, 0.3}, kSamplePeriod, cfg) == 2);
  cfg.transient_skip = 1.0;
  CHECK(transient_cutoff({0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01}, kSamplePeriod, cfg) == 5);
  cfg.include_transient = true;
  CHECK(transient_cutoff({0.3, 0.2}, kSamplePeriod, cfg) == 0);
}

TEST_CASE("violations") {
  CHECK(count_violations({0.05, 0.05}, {true, true}) == 0);
  CHECK(count_violations({0.05, 0.13}, {true, true}) == 1);
  CHECK(count_violations({0.05, 0.13}, {true, false}) == 0);
  CHECK(count_violations({0.13, 0.13, 0.13}, {true, true, true}, 0.12, 1) == 2);
}

TEST_CASE("median") {
  CHECK(median({}) == 0.0);
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 3.0, 2.0}) == 2.5);
}

TEST_CASE("timing statistics") {
  RunLog log;
  for (int i = 0; i < 10; ++i) {
    LogRow r;
    r.estimate_valid = true;
    r.prep_est_us = 100.0;
    r.fb_est_us = 100.0;
    r.prep_ctl_us = 100.0;
    r.fb_ctl_us = 100.0 + i;
    log.rows.push_back(r);
  }
  const auto rows = timing_stats(log);
  REQUIRE(rows.size() == 7);
  CHECK(rows[0].stats.min == 100.0);
  CHECK(rows[0].stats.avg == 100.0);
  CHECK(rows[0].stats.max == 100.0);
  CHECK(rows[2].stats.avg == doctest::Approx(rows[0].stats.avg + rows[1].stats.avg));
  CHECK(rows[5].stats.avg == doctest::Approx(rows[3].stats.avg + rows[4].stats.avg));
  CHECK(rows[6].stats.avg == doctest::Approx(rows[2].stats.avg + rows[5].stats.avg));
  CHECK(rows[6].stats.max == 404.5 + 4.5);
  CHECK(rows[2].reference_avg_ms == 0.4832);
  CHECK(rows[5].reference_avg_ms == 0.3966);
  CHECK(rows[6].reference_avg_ms == 0.88);
  std::ostringstream os;
  print_timing_table(os, rows);
  CHECK(os.str().find("RHEC") != std::string::npos);
}

TEST_CASE("noise-free slip-free run stays on the line") {
  const ScenarioConfig cfg = quiet_straight(60.0);
  const RunLog log = run_scenario(cfg);
  CHECK(log.rows.size() == 300);
  double worst = 0.0;
  for (const auto& r : log.rows) worst = std::max(worst, std::abs(r.y_true));
  CHECK(worst < 0.005);
}

TEST_CASE("closed-loop log invariants") {
  ScenarioConfig cfg;
  cfg.duration = 40.0;
  cfg.terrain.mu = 0.85;
  cfg.terrain.kappa = 0.75;
  const RunLog log = run_scenario(cfg);
  CHECK(log.rows.size() == 200);
  CHECK_FALSE(log.rows[0].estimate_valid);
  CHECK(log.rows[0].omega_cmd == 0.0);
  for (const auto& r : log.rows) {
    CHECK(std::abs(r.omega_cmd) <= cfg.controller.omega_max + 1e-10);
    if (!r.estimate_valid) continue;
    CHECK(r.mu_est >= 0.0);
    CHECK(r.mu_est <= 1.0);
    CHECK(r.kappa_est >= 0.0);
    CHECK(r.kappa_est <= 1.0);
  }
  const RunSummary s = summarize(log, cfg, "b");
  CHECK(s.max_abs_omega <= cfg.controller.omega_max + 1e-10);
  CHECK(std::isfinite(s.mean_error));
  CHECK(s.min_arrival_margin >= -1e-9);
}

TEST_CASE("csv output") {
  ScenarioConfig cfg;
  cfg.duration = 10.0;
  const RunLog a = run_scenario(cfg);
  const RunLog b = run_scenario(cfg);
  std::ostringstream sa, sb;
  write_csv(sa, a);
  write_csv(sb, b);
  CHECK(sa.str() == sb.str());
  std::istringstream in(sa.str());
  std::string header;
  std::getline(in, header);
  CHECK(header == kCsvHeader);
  CHECK(header.rfind("t,x_true,y_true,theta_true,mu_true,kappa_true,x_meas", 0) == 0);
  int lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == 50);
}

TEST_CASE("compare checks thresholds") {
  ScenarioConfig c = quiet_straight(10.0);
  c.max_mean_error = 0.0;
  c.include_transient = true;
  c.start_lateral = 0.2;
  const Comparison cmp = compare_runs({{"a", c}}, 2);
  CHECK(cmp.runs.size() == 2);
  CHECK(cmp.breached);
  ScenarioConfig other = c;
  other.duration = 20.0;
  CHECK_THROWS_AS(compare_runs({{"a", c}, {"b", other}}, 1), ConfigError);
  CHECK_THROWS_AS(compare_runs({{"a", c}}, 0), ConfigError);
}
