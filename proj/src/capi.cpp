#include "rhec/rhec.h"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <new>
#include <sstream>
#include <string>

#include "rhec/bench.hpp"
#include "rhec/box_qp.hpp"
#include "rhec/error.hpp"
#include "rhec/model.hpp"
#include "rhec/selftest.hpp"

struct rhec_config {
  rhec::ScenarioConfig cfg;
};

struct rhec_run {
  rhec::ScenarioConfig cfg;
  rhec::RunLog log;
};

struct rhec_comparison {
  rhec::Comparison cmp;
};

namespace {

thread_local std::string g_last_error;

rhec_status fail(rhec_status status, const std::string& msg) {
  g_last_error = msg;
  return status;
}

rhec_status from_kind(rhec::ErrorKind kind) {
  switch (kind) {
    case rhec::ErrorKind::InvalidArgument: return RHEC_ERR_INVALID_ARGUMENT;
    case rhec::ErrorKind::Config: return RHEC_ERR_CONFIG;
    case rhec::ErrorKind::Numerical: return RHEC_ERR_NUMERICAL;
    case rhec::ErrorKind::Io: return RHEC_ERR_IO;
  }
  return RHEC_ERR_INTERNAL;
}

// Runs `f` and converts any exception into a status code.
template <class F>
rhec_status guarded(F&& f) {
  try {
    g_last_error.clear();
    return f();
  } catch (const rhec::Error& e) {
    return fail(from_kind(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(RHEC_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(RHEC_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(RHEC_ERR_INTERNAL, "unknown error");
  }
}

rhec_status copy_string(const std::string& s, char* buf, size_t cap, size_t* needed) {
  if (needed) *needed = s.size() + 1;
  if (buf && cap > 0) {
    const size_t n = std::min(cap - 1, s.size());
    std::memcpy(buf, s.data(), n);
    buf[n] = '\0';
  }
  return RHEC_OK;
}

#define RHEC_REQUIRE(cond, msg) \
  if (!(cond)) return fail(RHEC_ERR_INVALID_ARGUMENT, msg)

double column_value(const rhec::LogRow& r, int idx, bool timing) {
  switch (idx) {
    case 0: return r.t;
    case 1: return r.x_true;
    case 2: return r.y_true;
    case 3: return r.theta_true;
    case 4: return r.mu_true;
    case 5: return r.kappa_true;
    case 6: return r.x_meas;
    case 7: return r.y_meas;
    case 8: return r.nu_meas;
    case 9: return r.omega_meas;
    case 10: return r.x_est;
    case 11: return r.y_est;
    case 12: return r.theta_est;
    case 13: return r.nu_est;
    case 14: return r.mu_est;
    case 15: return r.kappa_est;
    case 16: return r.omega_cmd;
    case 17: return r.eucl_err;
    case 18: return r.kkt_est;
    case 19: return r.kkt_ctl;
    case 20: return timing ? r.prep_est_us : 0.0;
    case 21: return timing ? r.fb_est_us : 0.0;
    case 22: return timing ? r.prep_ctl_us : 0.0;
    case 23: return timing ? r.fb_ctl_us : 0.0;
  }
  return 0.0;
}

int column_index(const char* name) {
  std::stringstream header(rhec::kCsvHeader);
  std::string col;
  for (int i = 0; std::getline(header, col, ','); ++i)
    if (col == name) return i;
  return -1;
}

}  // namespace

extern "C" {

const char* rhec_version(void) { return "1.0.0"; }

const char* rhec_last_error(void) { return g_last_error.c_str(); }

const char* rhec_status_string(rhec_status status) {
  switch (status) {
    case RHEC_OK: return "ok";
    case RHEC_ERR_INVALID_ARGUMENT: return "invalid argument";
    case RHEC_ERR_CONFIG: return "configuration error";
    case RHEC_ERR_NUMERICAL: return "numerical failure";
    case RHEC_ERR_ACCEPTANCE: return "acceptance breach";
    case RHEC_ERR_IO: return "i/o error";
    case RHEC_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

rhec_status rhec_config_new(rhec_config** out) {
  RHEC_REQUIRE(out, "out is null");
  return guarded([&] {
    *out = new rhec_config{};
    return RHEC_OK;
  });
}

rhec_status rhec_config_load(const char* path, rhec_config** out) {
  RHEC_REQUIRE(path && out, "null argument");
  return guarded([&] {
    *out = new rhec_config{rhec::load_config(path)};
    return RHEC_OK;
  });
}

rhec_status rhec_config_parse(const char* text, rhec_config** out) {
  RHEC_REQUIRE(text && out, "null argument");
  return guarded([&] {
    *out = new rhec_config{rhec::parse_config(text)};
    return RHEC_OK;
  });
}

rhec_status rhec_config_clone(const rhec_config* cfg, rhec_config** out) {
  RHEC_REQUIRE(cfg && out, "null argument");
  return guarded([&] {
    *out = new rhec_config{*cfg};
    return RHEC_OK;
  });
}

rhec_status rhec_config_set(rhec_config* cfg, const char* key, const char* value) {
  RHEC_REQUIRE(cfg && key && value, "null argument");
  return guarded([&] {
    rhec::set_config_value(cfg->cfg, key, value);
    return RHEC_OK;
  });
}

rhec_status rhec_config_validate(const rhec_config* cfg) {
  RHEC_REQUIRE(cfg, "config is null");
  return guarded([&] {
    cfg->cfg.validate();
    return RHEC_OK;
  });
}

rhec_status rhec_config_hash(const rhec_config* cfg, uint64_t* out) {
  RHEC_REQUIRE(cfg && out, "null argument");
  return guarded([&] {
    *out = rhec::config_hash(cfg->cfg);
    return RHEC_OK;
  });
}

rhec_status rhec_config_canonical(const rhec_config* cfg, char* buf, size_t cap, size_t* needed) {
  RHEC_REQUIRE(cfg, "config is null");
  return guarded([&] { return copy_string(cfg->cfg.canonical(), buf, cap, needed); });
}

void rhec_config_free(rhec_config* cfg) { delete cfg; }

rhec_status rhec_run_scenario(const rhec_config* cfg, rhec_run** out) {
  RHEC_REQUIRE(cfg && out, "null argument");
  return guarded([&] {
    auto* run = new rhec_run{cfg->cfg, {}};
    try {
      run->log = rhec::run_scenario(cfg->cfg);
    } catch (...) {
      delete run;
      throw;
    }
    *out = run;
    return RHEC_OK;
  });
}

rhec_status rhec_run_summary(const rhec_run* run, rhec_summary* out) {
  RHEC_REQUIRE(run && out, "null argument");
  return guarded([&] {
    const rhec::RunSummary s = rhec::summarize(run->log, run->cfg, "");
    out->mean_error = s.mean_error;
    out->max_error = s.max_error;
    out->violations = s.violations;
    out->kkt_ctl_median_first = s.kkt_ctl_median_first;
    out->kkt_ctl_median_last = s.kkt_ctl_median_last;
    out->kkt_est_mean = s.kkt_est_mean;
    out->max_abs_omega = s.max_abs_omega;
    out->min_arrival_margin = s.min_arrival_margin;
    out->avg_step_us = s.avg_step_us;
    out->max_step_us = s.max_step_us;
    out->rows = run->log.rows.size();
    return RHEC_OK;
  });
}

rhec_status rhec_run_rows(const rhec_run* run, size_t* out) {
  RHEC_REQUIRE(run && out, "null argument");
  *out = run->log.rows.size();
  return RHEC_OK;
}

rhec_status rhec_run_column(const rhec_run* run, const char* name, double* out, size_t cap) {
  RHEC_REQUIRE(run && name && out, "null argument");
  const int idx = column_index(name);
  if (idx < 0) return fail(RHEC_ERR_INVALID_ARGUMENT, std::string("unknown column '") + name + "'");
  const auto& rows = run->log.rows;
  if (cap < rows.size()) return fail(RHEC_ERR_INVALID_ARGUMENT, "output buffer too small");
  for (size_t i = 0; i < rows.size(); ++i) out[i] = column_value(rows[i], idx, run->log.timing);
  return RHEC_OK;
}

rhec_status rhec_run_write_csv(const rhec_run* run, const char* path) {
  RHEC_REQUIRE(run && path, "null argument");
  return guarded([&] {
    std::ofstream os(path, std::ios::binary);
    if (!os) return fail(RHEC_ERR_IO, std::string("cannot write '") + path + "'");
    rhec::write_csv(os, run->log);
    if (!os) return fail(RHEC_ERR_IO, std::string("write failed for '") + path + "'");
    return RHEC_OK;
  });
}

rhec_status rhec_run_write_meta(const rhec_run* run, const char* path) {
  RHEC_REQUIRE(run && path, "null argument");
  return guarded([&] {
    std::ofstream os(path);
    if (!os) return fail(RHEC_ERR_IO, std::string("cannot write '") + path + "'");
    rhec::write_meta(os, run->log, run->cfg);
    if (!os) return fail(RHEC_ERR_IO, std::string("write failed for '") + path + "'");
    return RHEC_OK;
  });
}

rhec_status rhec_run_timing_table(const rhec_run* run, char* buf, size_t cap, size_t* needed) {
  RHEC_REQUIRE(run, "run is null");
  return guarded([&] {
    std::ostringstream os;
    rhec::print_timing_table(os, rhec::timing_stats(run->log));
    return copy_string(os.str(), buf, cap, needed);
  });
}

void rhec_run_free(rhec_run* run) { delete run; }

rhec_status rhec_compare(const rhec_config* const* configs, const char* const* labels, size_t count, int seeds,
                         uint64_t first_seed, rhec_comparison** out) {
  RHEC_REQUIRE(configs && out && count > 0, "null argument");
  return guarded([&] {
    std::vector<std::pair<std::string, rhec::ScenarioConfig>> list;
    for (size_t i = 0; i < count; ++i) {
      if (!configs[i]) return fail(RHEC_ERR_INVALID_ARGUMENT, "null config in list");
      std::string label = labels && labels[i] ? labels[i] : "config" + std::to_string(i);
      list.emplace_back(std::move(label), configs[i]->cfg);
    }
    *out = new rhec_comparison{rhec::compare_runs(list, seeds, first_seed)};
    return RHEC_OK;
  });
}

rhec_status rhec_comparison_report(const rhec_comparison* cmp, char* buf, size_t cap, size_t* needed) {
  RHEC_REQUIRE(cmp, "comparison is null");
  return guarded([&] {
    std::ostringstream os;
    rhec::print_comparison(os, cmp->cmp);
    return copy_string(os.str(), buf, cap, needed);
  });
}

rhec_status rhec_comparison_breached(const rhec_comparison* cmp, int* out) {
  RHEC_REQUIRE(cmp && out, "null argument");
  *out = cmp->cmp.breached ? 1 : 0;
  return RHEC_OK;
}

void rhec_comparison_free(rhec_comparison* cmp) { delete cmp; }

rhec_status rhec_selftest(char* buf, size_t cap, size_t* needed, int* failures) {
  return guarded([&] {
    std::ostringstream os;
    const int n = rhec::run_selftest(os);
    if (failures) *failures = n;
    return copy_string(os.str(), buf, cap, needed);
  });
}

rhec_status rhec_integrate_step(const double state[3], double omega, const double params[3], double dt,
                                double next[3]) {
  RHEC_REQUIRE(state && params && next, "null argument");
  return guarded([&] {
    const rhec::RobotState s = rhec::integrate_step(rhec::KinematicModel::Traction, {state[0], state[1], state[2]},
                                                    rhec::ControlInput{omega}, {params[0], params[1], params[2]}, dt);
    next[0] = s.x;
    next[1] = s.y;
    next[2] = s.theta;
    return RHEC_OK;
  });
}

rhec_status rhec_solve_box_qp(size_t n, const double* H, const double* g, const double* lb, const double* ub,
                              double* z) {
  RHEC_REQUIRE(n > 0 && H && g && lb && ub && z, "null argument");
  return guarded([&] {
    const auto m = static_cast<Eigen::Index>(n);
    const Eigen::MatrixXd Hm = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(H, m, m);
    const auto r = rhec::solve_box_qp(Hm, Eigen::Map<const Eigen::VectorXd>(g, m), Eigen::Map<const Eigen::VectorXd>(lb, m),
                                      Eigen::Map<const Eigen::VectorXd>(ub, m));
    Eigen::Map<Eigen::VectorXd>(z, m) = r.z;
    return RHEC_OK;
  });
}

}  // extern "C"
