#pragma once

// Closed-loop scenario runner and metrics.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rhec/ekf.hpp"
#include "rhec/mhe.hpp"
#include "rhec/nmpc.hpp"
#include "rhec/sim.hpp"

namespace rhec {

enum class EstimatorKind { Mhe, Ekf };

struct PathSpec {
  std::string kind = "rows";  ///< straight | s-curve | rows
  double length = 20.0;       ///< straight run / pass length [m]
  double spacing = 0.1;       ///< waypoint spacing [m]
  double pitch = 0.78;        ///< row pitch [m]
  int passes = 3;
  int turn_rows = 21;         ///< lanes skipped by each headland turn
  double radius = 8.0;        ///< s-curve arc radius [m]
  bool backward = false;
};

struct ScenarioConfig {
  PathSpec path;
  double start_lateral = 0.3;  ///< initial offset to the left of the path start [m]
  double start_heading = 0.0;  ///< initial heading offset [rad]
  TerrainProfile terrain;
  SensorSpec sensor;
  PlantConfig plant;
  EstimatorKind estimator = EstimatorKind::Mhe;
  int q_variant = 3;
  EstimatorConfig mhe;
  EkfConfig ekf;
  ControllerConfig controller = ControllerConfig::with_q_variant(3);
  double duration = 120.0;        ///< [s]
  double transient_skip = 0.0;    ///< [s]
  bool include_transient = false;
  double on_track_threshold = 0.05;
  double violation_limit = 0.12;
  bool timing = false;            ///< fill the timing columns (not deterministic)
  std::optional<double> max_mean_error;  ///< acceptance thresholds for compare
  std::optional<int> max_violations;

  /// Canonical key=value text of every setting, used for hashing.
  std::string canonical() const;
  void validate() const;
};

/// Applies one key=value setting. Throws ConfigError for unknown keys or bad values.
void set_config_value(ScenarioConfig& cfg, const std::string& key, const std::string& value);
/// Flat key = value lines; '#' starts a comment.
ScenarioConfig parse_config(const std::string& text);
ScenarioConfig load_config(const std::string& file);
std::uint64_t config_hash(const ScenarioConfig& cfg);

ReferencePath generate_path(const PathSpec& spec);

struct LogRow {
  double t = 0.0;
  double x_true = 0.0, y_true = 0.0, theta_true = 0.0, mu_true = 0.0, kappa_true = 0.0;
  double x_meas = 0.0, y_meas = 0.0, nu_meas = 0.0, omega_meas = 0.0;
  double x_est = 0.0, y_est = 0.0, theta_est = 0.0, nu_est = 0.0, mu_est = 0.0, kappa_est = 0.0;
  double omega_cmd = 0.0;
  double eucl_err = 0.0;
  double kkt_est = 0.0, kkt_ctl = 0.0;
  double prep_est_us = 0.0, fb_est_us = 0.0, prep_ctl_us = 0.0, fb_ctl_us = 0.0;
  // not written to the CSV
  bool straight = true;
  bool estimate_valid = false;
  double arrival_margin = 0.0;
  double reference_s = 0.0;
};

struct RunLog {
  std::vector<LogRow> rows;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  double wall_clock_s = 0.0;
  int regularization_events = 0;
  bool timing = false;  ///< timing columns are written as zeros unless set
};

/// Optional per-step hook for the converged-controller comparison.
struct RunOptions {
  int estimator_gn_iterations = 0;   ///< 0 keeps the configured value
  int controller_gn_iterations = 0;
};

RunLog run_scenario(const ScenarioConfig& cfg, const RunOptions& options = {});

struct ErrorSeries {
  std::vector<double> series;
  std::vector<bool> straight;
  std::size_t cutoff = 0;  ///< first index used by the mean
  double mean = 0.0;
  double max = 0.0;
};

/// Distance from the measured position to the nearest path point.
ErrorSeries euclidean_error(const RunLog& log, const ReferencePath& path, const ScenarioConfig& cfg);
std::size_t transient_cutoff(const std::vector<double>& series, double sample_period, const ScenarioConfig& cfg);
/// Samples above `limit` on straight segments, from index `from` on.
int count_violations(const std::vector<double>& series, const std::vector<bool>& straight, double limit = 0.12,
                     std::size_t from = 0);

struct PhaseStats {
  double min = 0.0, avg = 0.0, max = 0.0;
};

struct TimingRow {
  std::string module;
  std::string phase;
  PhaseStats stats;        ///< [us]
  double reference_avg_ms = 0.0;  ///< 0 when the reference lists none
};

std::vector<TimingRow> timing_stats(const RunLog& log);
void print_timing_table(std::ostream& os, const std::vector<TimingRow>& rows);

struct RunSummary {
  std::string label;
  std::uint64_t seed = 0;
  double mean_error = 0.0;
  double max_error = 0.0;
  int violations = 0;
  double kkt_ctl_median_first = 0.0;
  double kkt_ctl_median_last = 0.0;
  double kkt_est_mean = 0.0;
  double max_abs_omega = 0.0;
  double min_arrival_margin = 0.0;
  double avg_step_us = 0.0;
  double max_step_us = 0.0;
};

RunSummary summarize(const RunLog& log, const ScenarioConfig& cfg, const std::string& label);

struct Comparison {
  std::vector<RunSummary> runs;
  bool breached = false;
  std::vector<std::string> breaches;
};

/// Runs each config over seeds first_seed .. first_seed + seeds - 1 (paired
/// noise streams) and checks the acceptance thresholds of each config.
Comparison compare_runs(const std::vector<std::pair<std::string, ScenarioConfig>>& configs, int seeds,
                        std::uint64_t first_seed = 1);
void print_comparison(std::ostream& os, const Comparison& cmp);

extern const char* const kCsvHeader;
void write_csv(std::ostream& os, const RunLog& log);
void write_meta(std::ostream& os, const RunLog& log, const ScenarioConfig& cfg);

/// Median of a copy of `v`; 0 for an empty input.
double median(std::vector<double> v);

}  // namespace rhec
