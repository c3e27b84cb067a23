// Command-line front end. Links only against the C API.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rhec/rhec.h"

namespace {

struct ConfigDeleter {
  void operator()(rhec_config* c) const { rhec_config_free(c); }
};
struct RunDeleter {
  void operator()(rhec_run* r) const { rhec_run_free(r); }
};
struct ComparisonDeleter {
  void operator()(rhec_comparison* c) const { rhec_comparison_free(c); }
};
using ConfigPtr = std::unique_ptr<rhec_config, ConfigDeleter>;
using RunPtr = std::unique_ptr<rhec_run, RunDeleter>;
using ComparisonPtr = std::unique_ptr<rhec_comparison, ComparisonDeleter>;

// Maps a status to the process exit code, reporting the error on stderr.
int report(rhec_status st, const std::string& context) {
  if (st == RHEC_OK) return 0;
  std::fprintf(stderr, "error: %s: %s (%s)\n", context.c_str(), rhec_last_error(), rhec_status_string(st));
  switch (st) {
    case RHEC_ERR_CONFIG:
    case RHEC_ERR_INVALID_ARGUMENT: return 2;
    case RHEC_ERR_NUMERICAL: return 3;
    case RHEC_ERR_ACCEPTANCE: return 4;
    default: return 1;
  }
}

template <class Fn>
std::string fetch_string(Fn&& fn) {
  size_t needed = 0;
  if (fn(nullptr, 0, &needed) != RHEC_OK) return {};
  std::string s(needed, '\0');
  fn(s.data(), s.size(), &needed);
  s.resize(needed > 0 ? needed - 1 : 0);
  return s;
}

int load(const std::string& path, ConfigPtr& out) {
  rhec_config* c = nullptr;
  const int rc = report(rhec_config_load(path.c_str(), &c), path);
  out.reset(c);
  return rc;
}

int apply_seed(rhec_config* cfg, long long seed) {
  if (seed < 0) return 0;
  return report(rhec_config_set(cfg, "sensor.seed", std::to_string(seed).c_str()), "--seed");
}

void print_summary(const rhec_summary& s) {
  std::printf("rows              %zu\n", s.rows);
  std::printf("mean error [m]    %.5f\n", s.mean_error);
  std::printf("max error [m]     %.5f\n", s.max_error);
  std::printf("violations        %d\n", s.violations);
  std::printf("kkt_ctl q1 / q4   %.4g / %.4g\n", s.kkt_ctl_median_first, s.kkt_ctl_median_last);
  std::printf("max |omega_cmd|   %.6f\n", s.max_abs_omega);
  std::printf("min arrival margin %.3g\n", s.min_arrival_margin);
}

int cmd_run(const std::string& config, long long seed, const std::string& out_dir, bool timing) {
  ConfigPtr cfg;
  if (int rc = load(config, cfg)) return rc;
  if (int rc = apply_seed(cfg.get(), seed)) return rc;
  if (timing) {
    if (int rc = report(rhec_config_set(cfg.get(), "run.timing", "true"), "--timing")) return rc;
  }
  rhec_run* raw = nullptr;
  if (int rc = report(rhec_run_scenario(cfg.get(), &raw), config)) return rc;
  RunPtr run(raw);

  rhec_summary s{};
  if (int rc = report(rhec_run_summary(run.get(), &s), "summary")) return rc;
  print_summary(s);
  if (timing) {
    std::fputs(fetch_string([&](char* b, size_t c, size_t* n) { return rhec_run_timing_table(run.get(), b, c, n); })
                   .c_str(),
               stdout);
  }

  if (!out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
      std::fprintf(stderr, "error: cannot create '%s': %s\n", out_dir.c_str(), ec.message().c_str());
      return 1;
    }
    const std::string canonical =
        fetch_string([&](char* b, size_t c, size_t* n) { return rhec_config_canonical(cfg.get(), b, c, n); });
    const auto seed_pos = canonical.find("sensor.seed = ");
    std::string seed_str = "0";
    if (seed_pos != std::string::npos) {
      const auto start = seed_pos + 14;
      seed_str = canonical.substr(start, canonical.find('\n', start) - start);
    }
    const std::string stem =
        (std::filesystem::path(out_dir) / (std::filesystem::path(config).stem().string() + "_seed" + seed_str))
            .string();
    if (int rc = report(rhec_run_write_csv(run.get(), (stem + ".csv").c_str()), "csv")) return rc;
    if (int rc = report(rhec_run_write_meta(run.get(), (stem + ".meta").c_str()), "meta")) return rc;
    std::printf("wrote %s.csv\n", stem.c_str());
  }
  return 0;
}

int cmd_compare(const std::vector<std::string>& configs, int seeds, long long first_seed) {
  std::vector<ConfigPtr> owned;
  std::vector<const rhec_config*> ptrs;
  std::vector<std::string> labels;
  for (const auto& path : configs) {
    ConfigPtr c;
    if (int rc = load(path, c)) return rc;
    ptrs.push_back(c.get());
    owned.push_back(std::move(c));
    labels.push_back(std::filesystem::path(path).stem().string());
  }
  std::vector<const char*> label_ptrs;
  for (const auto& l : labels) label_ptrs.push_back(l.c_str());

  rhec_comparison* raw = nullptr;
  if (int rc = report(rhec_compare(ptrs.data(), label_ptrs.data(), ptrs.size(), seeds,
                                   static_cast<uint64_t>(first_seed), &raw),
                      "compare"))
    return rc;
  ComparisonPtr cmp(raw);
  std::fputs(fetch_string([&](char* b, size_t c, size_t* n) { return rhec_comparison_report(cmp.get(), b, c, n); })
                 .c_str(),
             stdout);
  int breached = 0;
  rhec_comparison_breached(cmp.get(), &breached);
  return breached ? 4 : 0;
}

int cmd_sweep(const std::string& config, const std::string& key, const std::vector<std::string>& values, int seeds,
              long long first_seed) {
  ConfigPtr base;
  if (int rc = load(config, base)) return rc;
  std::vector<ConfigPtr> owned;
  std::vector<const rhec_config*> ptrs;
  std::vector<std::string> labels;
  for (const auto& v : values) {
    rhec_config* c = nullptr;
    if (int rc = report(rhec_config_clone(base.get(), &c), "clone")) return rc;
    owned.emplace_back(c);
    if (int rc = report(rhec_config_set(c, key.c_str(), v.c_str()), key + "=" + v)) return rc;
    if (int rc = report(rhec_config_validate(c), key + "=" + v)) return rc;
    ptrs.push_back(c);
    labels.push_back(key + "=" + v);
  }
  std::vector<const char*> label_ptrs;
  for (const auto& l : labels) label_ptrs.push_back(l.c_str());
  rhec_comparison* raw = nullptr;
  if (int rc = report(rhec_compare(ptrs.data(), label_ptrs.data(), ptrs.size(), seeds,
                                   static_cast<uint64_t>(first_seed), &raw),
                      "sweep"))
    return rc;
  ComparisonPtr cmp(raw);
  std::fputs(fetch_string([&](char* b, size_t c, size_t* n) { return rhec_comparison_report(cmp.get(), b, c, n); })
                 .c_str(),
             stdout);
  int breached = 0;
  rhec_comparison_breached(cmp.get(), &breached);
  return breached ? 4 : 0;
}

int cmd_selftest() {
  int failures = 0;
  size_t needed = 0;
  std::string text(1 << 16, '\0');
  if (int rc = report(rhec_selftest(text.data(), text.size(), &needed, &failures), "selftest")) return rc;
  text.resize(std::min(needed, text.size()) - 1);
  std::fputs(text.c_str(), stdout);
  std::printf("%d failure(s)\n", failures);
  return failures == 0 ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Receding-horizon estimation and control benchmark"};
  app.require_subcommand(1);
  app.set_version_flag("--version", rhec_version());

  std::string config;
  long long seed = -1;
  std::string out_dir;
  bool timing = false;
  auto* run = app.add_subcommand("run", "Run one closed-loop scenario");
  run->add_option("--config", config, "Config file")->required();
  run->add_option("--seed", seed, "Sensor noise seed (overrides sensor.seed)");
  run->add_option("--out", out_dir, "Directory for the CSV log and run metadata");
  run->add_flag("--timing", timing, "Record per-phase timings and print the timing table");

  std::vector<std::string> configs;
  int seeds = 20;
  long long first_seed = 1;
  auto* compare = app.add_subcommand("compare", "Paired multi-seed comparison of configs");
  compare->add_option("--configs", configs, "Config files")->required()->expected(1, -1);
  compare->add_option("--seeds", seeds, "Number of seeds")->check(CLI::PositiveNumber);
  compare->add_option("--first-seed", first_seed, "First seed");

  std::string key;
  std::vector<std::string> values;
  int sweep_seeds = 1;
  auto* sweep = app.add_subcommand("sweep", "Vary one config key");
  sweep->add_option("--config", config, "Base config file")->required();
  sweep->add_option("--param", key, "Config key to vary")->required();
  sweep->add_option("--values", values, "Values to try")->required()->expected(1, -1);
  sweep->add_option("--seeds", sweep_seeds, "Seeds per value")->check(CLI::PositiveNumber);
  sweep->add_option("--first-seed", first_seed, "First seed");

  auto* selftest = app.add_subcommand("selftest", "Run the oracle checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (*run) return cmd_run(config, seed, out_dir, timing);
  if (*compare) return cmd_compare(configs, seeds, first_seed);
  if (*sweep) return cmd_sweep(config, key, values, sweep_seeds, first_seed);
  if (*selftest) return cmd_selftest();
  return 2;
}
