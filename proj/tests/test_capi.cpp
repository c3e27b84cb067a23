#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "rhec/rhec.h"

namespace {

rhec_config* parse(const char* text) {
  rhec_config* cfg = nullptr;
  REQUIRE(rhec_config_parse(text, &cfg) == RHEC_OK);
  return cfg;
}

}  // namespace

TEST_CASE("version and status strings") {
  CHECK(std::string(rhec_version()) == "1.0.0");
  CHECK(std::string(rhec_status_string(RHEC_OK)).size() > 0);
  CHECK(std::string(rhec_status_string(RHEC_ERR_ACCEPTANCE)).size() > 0);
}

TEST_CASE("config errors") {
  rhec_config* cfg = nullptr;
  CHECK(rhec_config_parse("controller.q_variant = Q7\n", &cfg) == RHEC_ERR_CONFIG);
  CHECK(cfg == nullptr);
  CHECK(std::string(rhec_last_error()).find("q_variant") != std::string::npos);
  CHECK(rhec_config_load("/nonexistent.cfg", &cfg) == RHEC_ERR_CONFIG);
  CHECK(rhec_config_new(nullptr) == RHEC_ERR_INVALID_ARGUMENT);

  REQUIRE(rhec_config_new(&cfg) == RHEC_OK);
  CHECK(rhec_config_set(cfg, "no.such_key", "1") == RHEC_ERR_CONFIG);
  CHECK(rhec_config_set(cfg, "terrain.mu", "2") == RHEC_OK);
  CHECK(rhec_config_validate(cfg) == RHEC_ERR_CONFIG);
  rhec_config_free(cfg);
  rhec_config_free(nullptr);
}

TEST_CASE("string convention and hashing") {
  rhec_config* a = parse("terrain.mu = 0.85\n");
  size_t needed = 0;
  CHECK(rhec_config_canonical(a, nullptr, 0, &needed) == RHEC_OK);
  REQUIRE(needed > 1);
  std::vector<char> buf(needed);
  CHECK(rhec_config_canonical(a, buf.data(), buf.size(), &needed) == RHEC_OK);
  CHECK(std::strlen(buf.data()) + 1 == needed);
  char small[8];
  CHECK(rhec_config_canonical(a, small, sizeof small, &needed) == RHEC_OK);
  CHECK(std::strlen(small) == sizeof small - 1);

  rhec_config* b = nullptr;
  REQUIRE(rhec_config_clone(a, &b) == RHEC_OK);
  uint64_t ha = 0, hb = 0;
  rhec_config_hash(a, &ha);
  rhec_config_hash(b, &hb);
  CHECK(ha == hb);
  rhec_config_set(b, "sensor.seed", "9");
  rhec_config_hash(b, &hb);
  CHECK(ha != hb);
  rhec_config_free(a);
  rhec_config_free(b);
}

TEST_CASE("run and columns") {
  rhec_config* cfg = parse("path.kind = straight\nrun.duration_s = 8\n");
  rhec_run* run = nullptr;
  REQUIRE(rhec_run_scenario(cfg, &run) == RHEC_OK);
  size_t rows = 0;
  REQUIRE(rhec_run_rows(run, &rows) == RHEC_OK);
  CHECK(rows == 40);
  std::vector<double> t(rows), w(rows);
  CHECK(rhec_run_column(run, "t", t.data(), rows) == RHEC_OK);
  CHECK(t[5] == doctest::Approx(1.0));
  CHECK(rhec_run_column(run, "omega_cmd", w.data(), rows) == RHEC_OK);
  for (double v : w) CHECK(std::abs(v) <= 0.1 + 1e-10);
  CHECK(rhec_run_column(run, "prep_est_us", w.data(), rows) == RHEC_OK);
  for (double v : w) CHECK(v == 0.0);
  CHECK(rhec_run_column(run, "nope", w.data(), rows) == RHEC_ERR_INVALID_ARGUMENT);
  CHECK(rhec_run_column(run, "t", w.data(), rows - 1) == RHEC_ERR_INVALID_ARGUMENT);

  rhec_summary s{};
  REQUIRE(rhec_run_summary(run, &s) == RHEC_OK);
  CHECK(s.rows == rows);
  CHECK(s.max_abs_omega <= 0.1 + 1e-10);
  CHECK(rhec_run_write_csv(run, "/nonexistent/dir/x.csv") == RHEC_ERR_IO);
  rhec_run_free(run);
  rhec_config_free(cfg);
}

TEST_CASE("compare") {
  rhec_config* a = parse("path.kind = straight\nrun.duration_s = 6\nacceptance.max_mean_error_m = 0\n"
                         "run.include_transient = true\n");
  const rhec_config* cfgs[] = {a};
  const char* labels[] = {"a"};
  rhec_comparison* cmp = nullptr;
  REQUIRE(rhec_compare(cfgs, labels, 1, 2, 1, &cmp) == RHEC_OK);
  int breached = 0;
  CHECK(rhec_comparison_breached(cmp, &breached) == RHEC_OK);
  CHECK(breached == 1);
  size_t needed = 0;
  CHECK(rhec_comparison_report(cmp, nullptr, 0, &needed) == RHEC_OK);
  CHECK(needed > 1);
  rhec_comparison_free(cmp);
  CHECK(rhec_compare(cfgs, labels, 1, 0, 1, &cmp) == RHEC_ERR_CONFIG);
  rhec_config_free(a);
}

TEST_CASE("numerical helpers") {
  const double s[3] = {0.0, 0.0, 0.0};
  const double p[3] = {0.5, 1.0, 1.0};
  double next[3];
  REQUIRE(rhec_integrate_step(s, 0.0, p, 0.2, next) == RHEC_OK);
  CHECK(next[0] == doctest::Approx(0.1));
  CHECK(next[1] == 0.0);
  CHECK(rhec_integrate_step(s, 0.0, p, 0.0, next) == RHEC_ERR_INVALID_ARGUMENT);

  // row-major: H = [[2, 1], [1, 2]], interior optimum of g = (-3, -3) is (1, 1)
  const double H[4] = {2.0, 1.0, 1.0, 2.0};
  const double g[2] = {-3.0, -3.0};
  const double lb[2] = {-5.0, -5.0};
  const double ub[2] = {5.0, 0.5};
  double z[2];
  REQUIRE(rhec_solve_box_qp(2, H, g, lb, ub, z) == RHEC_OK);
  CHECK(z[1] == doctest::Approx(0.5));
  CHECK(z[0] == doctest::Approx(1.25));
  CHECK(rhec_solve_box_qp(2, H, g, ub, lb, z) != RHEC_OK);
}

TEST_CASE("selftest") {
  size_t needed = 0;
  int failures = -1;
  std::vector<char> buf(1 << 16);
  REQUIRE(rhec_selftest(buf.data(), buf.size(), &needed, &failures) == RHEC_OK);
  CHECK(failures == 0);
  CHECK(std::string(buf.data()).find("PASS") != std::string::npos);
}
