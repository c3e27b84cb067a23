#include "rhec/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <functional>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "rhec/error.hpp"

namespace rhec {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

using Clock = std::chrono::steady_clock;

double elapsed_us(Clock::time_point t0) {
  return std::chrono::duration<double, std::micro>(Clock::now() - t0).count();
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("bad number for " + key + ": '" + v + "'");
  }
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long i = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError("bad integer for " + key + ": '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("bad boolean for " + key + ": '" + v + "'");
}

void apply_q_variant(ScenarioConfig& cfg, int variant) {
  const ControllerConfig q = ControllerConfig::with_q_variant(variant);
  cfg.q_variant = variant;
  cfg.controller.Q = q.Q;
  cfg.controller.Q_N = q.Q_N;
}

using Setter = std::function<void(ScenarioConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"path.kind",
       [](ScenarioConfig& c, const std::string& k, const std::string& v) {
         if (v != "straight" && v != "s-curve" && v != "rows") throw ConfigError("unknown " + k + ": '" + v + "'");
         c.path.kind = v;
       }},
      {"path.length_m", [](ScenarioConfig& c, auto& k, auto& v) { c.path.length = to_double(k, v); }},
      {"path.spacing_m", [](ScenarioConfig& c, auto& k, auto& v) { c.path.spacing = to_double(k, v); }},
      {"path.pitch_m", [](ScenarioConfig& c, auto& k, auto& v) { c.path.pitch = to_double(k, v); }},
      {"path.passes", [](ScenarioConfig& c, auto& k, auto& v) { c.path.passes = static_cast<int>(to_int(k, v)); }},
      {"path.turn_rows", [](ScenarioConfig& c, auto& k, auto& v) { c.path.turn_rows = static_cast<int>(to_int(k, v)); }},
      {"path.radius_m", [](ScenarioConfig& c, auto& k, auto& v) { c.path.radius = to_double(k, v); }},
      {"start.lateral_m", [](ScenarioConfig& c, auto& k, auto& v) { c.start_lateral = to_double(k, v); }},
      {"start.heading_rad", [](ScenarioConfig& c, auto& k, auto& v) { c.start_heading = to_double(k, v); }},
      {"terrain.mu", [](ScenarioConfig& c, auto& k, auto& v) { c.terrain.mu = to_double(k, v); }},
      {"terrain.kappa", [](ScenarioConfig& c, auto& k, auto& v) { c.terrain.kappa = to_double(k, v); }},
      {"terrain.step_time_s",
       [](ScenarioConfig& c, auto& k, auto& v) {
         // "inf" disables the step
         c.terrain.step_time = v == "inf" ? std::numeric_limits<double>::infinity() : to_double(k, v);
       }},
      {"terrain.step_mu", [](ScenarioConfig& c, auto& k, auto& v) { c.terrain.step_mu = to_double(k, v); }},
      {"terrain.step_kappa", [](ScenarioConfig& c, auto& k, auto& v) { c.terrain.step_kappa = to_double(k, v); }},
      {"terrain.perturbation", [](ScenarioConfig& c, auto& k, auto& v) { c.terrain.perturbation = to_double(k, v); }},
      {"terrain.perturbation_seed",
       [](ScenarioConfig& c, auto& k, auto& v) { c.terrain.perturbation_seed = static_cast<std::uint64_t>(to_int(k, v)); }},
      {"sensor.seed", [](ScenarioConfig& c, auto& k, auto& v) { c.sensor.seed = static_cast<std::uint64_t>(to_int(k, v)); }},
      {"sensor.sigma_x", [](ScenarioConfig& c, auto& k, auto& v) { c.sensor.sigma_x = to_double(k, v); }},
      {"sensor.sigma_y", [](ScenarioConfig& c, auto& k, auto& v) { c.sensor.sigma_y = to_double(k, v); }},
      {"sensor.sigma_nu", [](ScenarioConfig& c, auto& k, auto& v) { c.sensor.sigma_nu = to_double(k, v); }},
      {"sensor.sigma_omega", [](ScenarioConfig& c, auto& k, auto& v) { c.sensor.sigma_omega = to_double(k, v); }},
      {"plant.tau_s", [](ScenarioConfig& c, auto& k, auto& v) { c.plant.actuator_tau = to_double(k, v); }},
      {"plant.substep_s", [](ScenarioConfig& c, auto& k, auto& v) { c.plant.substep = to_double(k, v); }},
      {"plant.track_width_m", [](ScenarioConfig& c, auto& k, auto& v) { c.plant.track_width = to_double(k, v); }},
      {"run.nu_cmd",
       [](ScenarioConfig& c, auto& k, auto& v) {
         c.plant.nu_cmd = to_double(k, v);
         c.controller.nu_cmd = c.plant.nu_cmd;
       }},
      {"estimator.kind",
       [](ScenarioConfig& c, const std::string& k, const std::string& v) {
         if (v == "mhe") c.estimator = EstimatorKind::Mhe;
         else if (v == "ekf") c.estimator = EstimatorKind::Ekf;
         else throw ConfigError("unknown " + k + ": '" + v + "'");
       }},
      {"estimator.horizon", [](ScenarioConfig& c, auto& k, auto& v) { c.mhe.horizon = static_cast<int>(to_int(k, v)); }},
      {"estimator.gn_iterations",
       [](ScenarioConfig& c, auto& k, auto& v) { c.mhe.gauss_newton_iterations = static_cast<int>(to_int(k, v)); }},
      {"controller.q_variant",
       [](ScenarioConfig& c, const std::string& k, const std::string& v) {
         std::string s = v;
         if (!s.empty() && (s[0] == 'Q' || s[0] == 'q')) s = s.substr(1);
         apply_q_variant(c, static_cast<int>(to_int(k, s)));
       }},
      {"controller.horizon", [](ScenarioConfig& c, auto& k, auto& v) { c.controller.horizon = static_cast<int>(to_int(k, v)); }},
      {"controller.d0_m", [](ScenarioConfig& c, auto& k, auto& v) { c.controller.forward_offset = to_double(k, v); }},
      {"controller.omega_max", [](ScenarioConfig& c, auto& k, auto& v) { c.controller.omega_max = to_double(k, v); }},
      {"controller.r", [](ScenarioConfig& c, auto& k, auto& v) { c.controller.R = to_double(k, v); }},
      {"controller.gn_iterations",
       [](ScenarioConfig& c, auto& k, auto& v) { c.controller.gauss_newton_iterations = static_cast<int>(to_int(k, v)); }},
      {"run.duration_s", [](ScenarioConfig& c, auto& k, auto& v) { c.duration = to_double(k, v); }},
      {"run.transient_skip_s", [](ScenarioConfig& c, auto& k, auto& v) { c.transient_skip = to_double(k, v); }},
      {"run.include_transient", [](ScenarioConfig& c, auto& k, auto& v) { c.include_transient = to_bool(k, v); }},
      {"run.on_track_m", [](ScenarioConfig& c, auto& k, auto& v) { c.on_track_threshold = to_double(k, v); }},
      {"run.violation_limit_m", [](ScenarioConfig& c, auto& k, auto& v) { c.violation_limit = to_double(k, v); }},
      {"run.timing", [](ScenarioConfig& c, auto& k, auto& v) { c.timing = to_bool(k, v); }},
      {"acceptance.max_mean_error_m", [](ScenarioConfig& c, auto& k, auto& v) { c.max_mean_error = to_double(k, v); }},
      {"acceptance.max_violations",
       [](ScenarioConfig& c, auto& k, auto& v) { c.max_violations = static_cast<int>(to_int(k, v)); }},
  };
  return table;
}

Eigen::Vector2d heading_vec(double a) { return {std::cos(a), std::sin(a)}; }

// Appends an arc around `center`, from angle a0 sweeping by `sweep`, excluding its first point.
void append_arc(std::vector<Eigen::Vector2d>& pts, std::vector<bool>& straight, const Eigen::Vector2d& center,
                double radius, double a0, double sweep, double spacing) {
  const int n = std::max(2, static_cast<int>(std::ceil(radius * std::abs(sweep) / spacing)));
  for (int i = 1; i <= n; ++i) {
    pts.push_back(center + radius * heading_vec(a0 + sweep * i / n));
    straight.push_back(false);
  }
}

void append_line(std::vector<Eigen::Vector2d>& pts, std::vector<bool>& straight, const Eigen::Vector2d& to,
                 double spacing) {
  const Eigen::Vector2d from = pts.back();
  const int n = std::max(1, static_cast<int>(std::lround((to - from).norm() / spacing)));
  for (int i = 1; i <= n; ++i) {
    pts.push_back(from + (to - from) * (static_cast<double>(i) / n));
    straight.push_back(true);
  }
}

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string ScenarioConfig::canonical() const {
  std::ostringstream os;
  auto kv = [&os](const char* k, const std::string& v) { os << k << " = " << v << '\n'; };
  kv("path.kind", path.kind);
  kv("path.length_m", fmt(path.length));
  kv("path.spacing_m", fmt(path.spacing));
  kv("path.pitch_m", fmt(path.pitch));
  kv("path.passes", std::to_string(path.passes));
  kv("path.turn_rows", std::to_string(path.turn_rows));
  kv("path.radius_m", fmt(path.radius));
  kv("start.lateral_m", fmt(start_lateral));
  kv("start.heading_rad", fmt(start_heading));
  kv("terrain.mu", fmt(terrain.mu));
  kv("terrain.kappa", fmt(terrain.kappa));
  kv("terrain.step_time_s", fmt(terrain.step_time));
  kv("terrain.step_mu", fmt(terrain.step_mu));
  kv("terrain.step_kappa", fmt(terrain.step_kappa));
  kv("terrain.perturbation", fmt(terrain.perturbation));
  kv("terrain.perturbation_seed", std::to_string(terrain.perturbation_seed));
  kv("sensor.seed", std::to_string(sensor.seed));
  kv("sensor.sigma_x", fmt(sensor.sigma_x));
  kv("sensor.sigma_y", fmt(sensor.sigma_y));
  kv("sensor.sigma_nu", fmt(sensor.sigma_nu));
  kv("sensor.sigma_omega", fmt(sensor.sigma_omega));
  kv("plant.tau_s", fmt(plant.actuator_tau));
  kv("plant.substep_s", fmt(plant.substep));
  kv("plant.track_width_m", fmt(plant.track_width));
  kv("run.nu_cmd", fmt(plant.nu_cmd));
  kv("estimator.kind", estimator == EstimatorKind::Mhe ? "mhe" : "ekf");
  kv("estimator.horizon", std::to_string(mhe.horizon));
  kv("estimator.gn_iterations", std::to_string(mhe.gauss_newton_iterations));
  kv("controller.q_variant", std::to_string(q_variant));
  kv("controller.horizon", std::to_string(controller.horizon));
  kv("controller.d0_m", fmt(controller.forward_offset));
  kv("controller.omega_max", fmt(controller.omega_max));
  kv("controller.r", fmt(controller.R));
  kv("controller.gn_iterations", std::to_string(controller.gauss_newton_iterations));
  kv("run.duration_s", fmt(duration));
  kv("run.transient_skip_s", fmt(transient_skip));
  kv("run.include_transient", include_transient ? "true" : "false");
  kv("run.on_track_m", fmt(on_track_threshold));
  kv("run.violation_limit_m", fmt(violation_limit));
  kv("run.timing", timing ? "true" : "false");
  if (max_mean_error) kv("acceptance.max_mean_error_m", fmt(*max_mean_error));
  if (max_violations) kv("acceptance.max_violations", std::to_string(*max_violations));
  return os.str();
}

void ScenarioConfig::validate() const {
  if (!(path.length > 0.0) || !(path.spacing > 0.0) || !(path.pitch > 0.0) || !(path.radius > 0.0))
    throw ConfigError("path dimensions must be positive");
  if (path.passes < 1 || path.turn_rows < 1) throw ConfigError("rows path needs passes >= 1 and turn_rows >= 1");
  if (path.backward) throw ConfigError("backward driving is not supported in closed-loop runs");
  terrain.validate();
  sensor.validate();
  plant.validate();
  mhe.validate();
  ekf.validate();
  controller.validate();
  if (!(plant.nu_cmd > 0.0)) throw ConfigError("commanded speed must be positive");
  const double span = mhe.horizon * kSamplePeriod;
  if (!(duration > span)) throw ConfigError("run duration must exceed the estimator horizon span");
  if (!(transient_skip >= 0.0) || !(on_track_threshold > 0.0) || !(violation_limit > 0.0))
    throw ConfigError("metric thresholds must be positive");
}

void set_config_value(ScenarioConfig& cfg, const std::string& key, const std::string& value) {
  const auto& table = setters();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  try {
    it->second(cfg, key, value);
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    if (msg.find(key) != std::string::npos) throw;
    throw ConfigError(key + ": " + msg);
  }
}

ScenarioConfig parse_config(const std::string& text) {
  ScenarioConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    try {
      set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

ScenarioConfig load_config(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config file '" + file + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::uint64_t config_hash(const ScenarioConfig& cfg) {
  // FNV-1a
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : cfg.canonical()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

ReferencePath generate_path(const PathSpec& spec) {
  if (!(spec.length > 0.0) || !(spec.spacing > 0.0)) throw InvalidArgument("path length and spacing must be positive");
  std::vector<Eigen::Vector2d> pts{Eigen::Vector2d::Zero()};
  std::vector<bool> straight;
  if (spec.kind == "straight") {
    append_line(pts, straight, {spec.length, 0.0}, spec.spacing);
  } else if (spec.kind == "s-curve") {
    if (!(spec.radius > 0.0)) throw InvalidArgument("s-curve radius must be positive");
    const double r = spec.radius;
    append_line(pts, straight, {spec.length, 0.0}, spec.spacing);
    // left quarter turn, then right quarter turn
    append_arc(pts, straight, {spec.length, r}, r, -kPi / 2, kPi / 2, spec.spacing);
    const Eigen::Vector2d p = pts.back();
    append_arc(pts, straight, {p[0] + r, p[1]}, r, kPi, -kPi / 2, spec.spacing);
    append_line(pts, straight, pts.back() + Eigen::Vector2d(spec.length, 0.0), spec.spacing);
  } else if (spec.kind == "rows") {
    if (spec.passes < 1 || spec.turn_rows < 1 || !(spec.pitch > 0.0)) throw InvalidArgument("degenerate rows path");
    // Lane order 0, K, 1, K+1, ...: every headland turn is a counter-clockwise
    // half circle spanning K or K-1 rows.
    const int K = spec.turn_rows;
    auto lane = [K](int j) { return j % 2 == 0 ? j / 2 : K + j / 2; };
    for (int j = 0; j < spec.passes; ++j) {
      const double y = lane(j) * spec.pitch;
      const bool east = j % 2 == 0;
      if (j > 0) {
        const double y_prev = lane(j - 1) * spec.pitch;
        const double r = std::abs(y - y_prev) / 2.0;
        if (!(r > 0.0)) throw InvalidArgument("rows turn has zero radius");
        const Eigen::Vector2d center(pts.back()[0], (y + y_prev) / 2.0);
        // leaving eastbound: from -pi/2 to pi/2; leaving westbound: from pi/2 to 3pi/2
        append_arc(pts, straight, center, r, east ? kPi / 2 : -kPi / 2, kPi, spec.spacing);
      }
      append_line(pts, straight, {east ? spec.length : 0.0, y}, spec.spacing);
    }
  } else {
    throw InvalidArgument("unknown path kind '" + spec.kind + "'");
  }
  return ReferencePath(std::move(pts), std::move(straight), spec.backward);
}

RunLog run_scenario(const ScenarioConfig& cfg_in, const RunOptions& options) {
  ScenarioConfig cfg = cfg_in;
  cfg.validate();
  if (options.estimator_gn_iterations > 0) cfg.mhe.gauss_newton_iterations = options.estimator_gn_iterations;
  if (options.controller_gn_iterations > 0)
    cfg.controller.gauss_newton_iterations = options.controller_gn_iterations;
  cfg.mhe.sample_period = kSamplePeriod;
  cfg.ekf.sample_period = kSamplePeriod;
  cfg.controller.sample_period = kSamplePeriod;

  const auto wall0 = Clock::now();
  const ReferencePath path = generate_path(cfg.path);
  const Eigen::Vector2d p0 = path.position(0.0);
  const double h0 = path.heading(0.0);
  const RobotState start{p0[0] - cfg.start_lateral * std::sin(h0), p0[1] + cfg.start_lateral * std::cos(h0),
                         h0 + cfg.start_heading};

  Plant plant(cfg.plant, cfg.terrain, start);
  Sensor sensor(cfg.sensor);
  std::optional<MovingHorizonEstimator> mhe;
  std::optional<ExtendedKalmanFilter> ekf;
  if (cfg.estimator == EstimatorKind::Mhe) mhe.emplace(cfg.mhe);
  else ekf.emplace(cfg.ekf);
  PathTrackingController controller(cfg.controller);

  RunLog log;
  log.config_hash = config_hash(cfg_in);
  log.seed = cfg.sensor.seed;
  log.timing = cfg.timing;
  const auto ticks = static_cast<std::size_t>(std::llround(cfg.duration / kSamplePeriod));
  log.rows.reserve(ticks);
  std::optional<double> hint;

  for (std::size_t k = 0; k < ticks; ++k) {
    LogRow row;
    try {
      row.t = static_cast<double>(k) * kSamplePeriod;
      const RobotState& truth = plant.truth();
      const TractionPair tr = plant.traction();
      row.x_true = truth.x;
      row.y_true = truth.y;
      row.theta_true = truth.theta;
      row.mu_true = tr.mu;
      row.kappa_true = tr.kappa;

      auto t0 = Clock::now();
      if (mhe) mhe->prepare();
      else ekf->prepare();
      row.prep_est_us = elapsed_us(t0);
      t0 = Clock::now();
      controller.prepare();
      row.prep_ctl_us = elapsed_us(t0);

      MeasurementSample z = sense(plant, sensor);
      z.t = row.t;
      row.x_meas = z.x;
      row.y_meas = z.y;
      row.nu_meas = z.nu;
      row.omega_meas = z.omega;

      t0 = Clock::now();
      const std::optional<Estimate> est = mhe ? mhe->feedback(z) : ekf->feedback(z);
      row.fb_est_us = elapsed_us(t0);

      ControlInput u{0.0};
      if (est) {
        row.estimate_valid = true;
        row.x_est = est->state.x;
        row.y_est = est->state.y;
        row.theta_est = est->state.theta;
        row.nu_est = est->params.nu;
        row.mu_est = est->params.mu;
        row.kappa_est = est->params.kappa;
        row.kkt_est = mhe ? mhe->solution().kkt : 0.0;
        if (mhe) row.arrival_margin = mhe->arrival().bound_margin(cfg.mhe);

        t0 = Clock::now();
        const ReferenceHorizon ref = generate_reference(path, est->state, cfg.controller, z.omega, hint);
        u = controller.feedback(est->state, est->params, ref);
        row.fb_ctl_us = elapsed_us(t0);
        hint = ref.closest_s;
        row.reference_s = ref.closest_s;
        row.kkt_ctl = controller.solution().kkt;
      } else {
        row.x_est = row.y_est = row.theta_est = row.nu_est = row.mu_est = row.kappa_est = kNaN;
        row.kkt_est = row.kkt_ctl = 0.0;
      }
      row.omega_cmd = u.omega;
      if (mhe) mhe->record_applied(u);

      const ClosestPoint cp = closest_point(path, z.x, z.y);
      row.eucl_err = cp.distance;
      row.straight = path.segment_straight(cp.segment);

      plant_step(plant, u, kSamplePeriod);
    } catch (const Error& e) {
      const std::string msg = "row " + std::to_string(k) + ": " + e.what();
      if (e.kind() == ErrorKind::Config) throw ConfigError(msg);
      throw NumericalError(msg);
    }
    log.rows.push_back(row);
  }
  if (mhe) log.regularization_events = mhe->regularization_events();
  log.wall_clock_s = std::chrono::duration<double>(Clock::now() - wall0).count();
  return log;
}

std::size_t transient_cutoff(const std::vector<double>& series, double sample_period, const ScenarioConfig& cfg) {
  if (cfg.include_transient) return 0;
  std::size_t skip = static_cast<std::size_t>(std::ceil(cfg.transient_skip / sample_period - 1e-9));
  std::size_t first_on = series.size();
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (series[i] < cfg.on_track_threshold) {
      first_on = i;
      break;
    }
  }
  return std::min(series.size(), std::max(skip, first_on));
}

ErrorSeries euclidean_error(const RunLog& log, const ReferencePath& path, const ScenarioConfig& cfg) {
  ErrorSeries out;
  out.series.reserve(log.rows.size());
  out.straight.reserve(log.rows.size());
  for (const auto& r : log.rows) {
    const ClosestPoint cp = closest_point(path, r.x_meas, r.y_meas);
    out.series.push_back(cp.distance);
    out.straight.push_back(path.segment_straight(cp.segment));
  }
  out.cutoff = transient_cutoff(out.series, kSamplePeriod, cfg);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = out.cutoff; i < out.series.size(); ++i) {
    sum += out.series[i];
    out.max = std::max(out.max, out.series[i]);
    ++n;
  }
  out.mean = n > 0 ? sum / static_cast<double>(n) : kNaN;
  if (n == 0) out.max = kNaN;
  return out;
}

int count_violations(const std::vector<double>& series, const std::vector<bool>& straight, double limit,
                     std::size_t from) {
  int count = 0;
  for (std::size_t i = from; i < series.size(); ++i) {
    const bool on_straight = straight.empty() || straight[i];
    if (on_straight && series[i] > limit) ++count;
  }
  return count;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

std::vector<TimingRow> timing_stats(const RunLog& log) {
  struct Acc {
    double min = std::numeric_limits<double>::infinity(), max = 0.0, sum = 0.0;
    std::size_t n = 0;
    void add(double v) {
      min = std::min(min, v);
      max = std::max(max, v);
      sum += v;
      ++n;
    }
    PhaseStats stats() const { return n == 0 ? PhaseStats{} : PhaseStats{min, sum / static_cast<double>(n), max}; }
  };
  Acc ep, ef, eo, cp, cf, co, all;
  for (const auto& r : log.rows) {
    if (!r.estimate_valid) continue;
    ep.add(r.prep_est_us);
    ef.add(r.fb_est_us);
    eo.add(r.prep_est_us + r.fb_est_us);
    cp.add(r.prep_ctl_us);
    cf.add(r.fb_ctl_us);
    co.add(r.prep_ctl_us + r.fb_ctl_us);
    all.add(r.prep_est_us + r.fb_est_us + r.prep_ctl_us + r.fb_ctl_us);
  }
  // Reference averages (ms) for a Raspberry Pi 3 class target; no per-phase split.
  return {
      {"RHE", "Preparation", ep.stats(), 0.0}, {"RHE", "Feedback", ef.stats(), 0.0},
      {"RHE", "Overall", eo.stats(), 0.4832},  {"RHC", "Preparation", cp.stats(), 0.0},
      {"RHC", "Feedback", cf.stats(), 0.0},    {"RHC", "Overall", co.stats(), 0.3966},
      {"RHEC", "Overall", all.stats(), 0.88},
  };
}

void print_timing_table(std::ostream& os, const std::vector<TimingRow>& rows) {
  os << std::left << std::setw(6) << "Module" << std::setw(13) << "Phase" << std::right << std::setw(11) << "min [ms]"
     << std::setw(11) << "avg [ms]" << std::setw(11) << "max [ms]" << std::setw(16) << "ref avg [ms]" << '\n';
  os << std::fixed << std::setprecision(4);
  for (const auto& r : rows) {
    os << std::left << std::setw(6) << r.module << std::setw(13) << r.phase << std::right << std::setw(11)
       << r.stats.min / 1000.0 << std::setw(11) << r.stats.avg / 1000.0 << std::setw(11) << r.stats.max / 1000.0;
    if (r.reference_avg_ms > 0.0) os << std::setw(16) << r.reference_avg_ms;
    else os << std::setw(16) << "-";
    os << '\n';
  }
  os.unsetf(std::ios::fixed);
  os << std::setprecision(6);
}

RunSummary summarize(const RunLog& log, const ScenarioConfig& cfg, const std::string& label) {
  RunSummary s;
  s.label = label;
  s.seed = log.seed;
  const ReferencePath path = generate_path(cfg.path);
  const ErrorSeries err = euclidean_error(log, path, cfg);
  s.mean_error = err.mean;
  s.max_error = err.max;
  s.violations = count_violations(err.series, err.straight, cfg.violation_limit, err.cutoff);

  std::vector<double> kkt;
  double kkt_est_sum = 0.0;
  double step_sum = 0.0;
  std::size_t valid = 0;
  s.min_arrival_margin = std::numeric_limits<double>::infinity();
  for (const auto& r : log.rows) {
    s.max_abs_omega = std::max(s.max_abs_omega, std::abs(r.omega_cmd));
    if (!r.estimate_valid) continue;
    kkt.push_back(r.kkt_ctl);
    kkt_est_sum += r.kkt_est;
    const double step = r.prep_est_us + r.fb_est_us + r.prep_ctl_us + r.fb_ctl_us;
    step_sum += step;
    s.max_step_us = std::max(s.max_step_us, step);
    if (cfg.estimator == EstimatorKind::Mhe) s.min_arrival_margin = std::min(s.min_arrival_margin, r.arrival_margin);
    ++valid;
  }
  if (cfg.estimator != EstimatorKind::Mhe) s.min_arrival_margin = kNaN;
  const std::size_t q = kkt.size() / 4;
  s.kkt_ctl_median_first = median({kkt.begin(), kkt.begin() + static_cast<std::ptrdiff_t>(q)});
  s.kkt_ctl_median_last = median({kkt.end() - static_cast<std::ptrdiff_t>(q), kkt.end()});
  s.kkt_est_mean = valid > 0 ? kkt_est_sum / static_cast<double>(valid) : 0.0;
  s.avg_step_us = valid > 0 ? step_sum / static_cast<double>(valid) : 0.0;
  return s;
}

Comparison compare_runs(const std::vector<std::pair<std::string, ScenarioConfig>>& configs, int seeds,
                        std::uint64_t first_seed) {
  if (configs.empty()) throw ConfigError("compare needs at least one config");
  if (seeds < 1) throw ConfigError("compare needs at least one seed");
  const auto& ref = configs.front().second;
  for (const auto& [label, c] : configs) {
    if (c.path.kind != ref.path.kind || c.path.length != ref.path.length || c.path.passes != ref.path.passes ||
        c.path.pitch != ref.path.pitch || c.path.turn_rows != ref.path.turn_rows || c.path.radius != ref.path.radius ||
        c.duration != ref.duration)
      throw ConfigError("compared configs must share path and duration ('" + label + "' differs)");
  }
  // One independent stack per (seed, config); results are reduced in order.
  std::vector<std::future<RunSummary>> jobs;
  std::vector<ScenarioConfig> runs;
  for (int i = 0; i < seeds; ++i) {
    for (const auto& [label, base] : configs) {
      ScenarioConfig c = base;
      c.sensor.seed = first_seed + static_cast<std::uint64_t>(i);
      runs.push_back(c);
      jobs.push_back(std::async(std::launch::async, [c, label] { return summarize(run_scenario(c), c, label); }));
    }
  }
  Comparison cmp;
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    RunSummary s = jobs[j].get();
    const ScenarioConfig& c = runs[j];
    const std::string& label = s.label;
    if (c.max_mean_error && !(s.mean_error <= *c.max_mean_error)) {
      cmp.breached = true;
      cmp.breaches.push_back(label + " seed " + std::to_string(s.seed) + ": mean error " + fmt(s.mean_error) +
                             " m > " + fmt(*c.max_mean_error) + " m");
    }
    if (c.max_violations && s.violations > *c.max_violations) {
      cmp.breached = true;
      cmp.breaches.push_back(label + " seed " + std::to_string(s.seed) + ": " + std::to_string(s.violations) +
                             " violations > " + std::to_string(*c.max_violations));
    }
    cmp.runs.push_back(std::move(s));
  }
  return cmp;
}

void print_comparison(std::ostream& os, const Comparison& cmp) {
  os << std::left << std::setw(24) << "config" << std::right << std::setw(6) << "seed" << std::setw(12) << "mean [m]"
     << std::setw(12) << "max [m]" << std::setw(8) << "viol" << std::setw(13) << "kkt_ctl q1" << std::setw(13)
     << "kkt_ctl q4" << std::setw(12) << "avg [ms]" << '\n';
  std::map<std::string, std::vector<const RunSummary*>> by_label;
  std::vector<std::string> order;
  for (const auto& s : cmp.runs) {
    if (!by_label.count(s.label)) order.push_back(s.label);
    by_label[s.label].push_back(&s);
    os << std::left << std::setw(24) << s.label << std::right << std::setw(6) << s.seed << std::setw(12)
       << std::setprecision(5) << s.mean_error << std::setw(12) << s.max_error << std::setw(8) << s.violations
       << std::setw(13) << std::setprecision(3) << s.kkt_ctl_median_first << std::setw(13) << s.kkt_ctl_median_last
       << std::setw(12) << std::setprecision(4) << s.avg_step_us / 1000.0 << '\n';
  }
  os << '\n' << std::left << std::setw(24) << "config" << std::right << std::setw(6) << "runs" << std::setw(14)
     << "mean err [m]" << std::setw(14) << "max err [m]" << std::setw(12) << "viol total" << '\n';
  for (const auto& label : order) {
    double mean = 0.0, mx = 0.0;
    int viol = 0;
    for (const auto* s : by_label[label]) {
      mean += s->mean_error;
      mx = std::max(mx, s->max_error);
      viol += s->violations;
    }
    const auto n = by_label[label].size();
    os << std::left << std::setw(24) << label << std::right << std::setw(6) << n << std::setw(14)
       << std::setprecision(5) << mean / static_cast<double>(n) << std::setw(14) << mx << std::setw(12) << viol << '\n';
  }
  for (const auto& b : cmp.breaches) os << "BREACH " << b << '\n';
  os << std::setprecision(6);
}

const char* const kCsvHeader =
    "t,x_true,y_true,theta_true,mu_true,kappa_true,x_meas,y_meas,nu_meas,omega_meas,x_est,y_est,theta_est,nu_est,"
    "mu_est,kappa_est,omega_cmd,eucl_err,kkt_est,kkt_ctl,prep_est_us,fb_est_us,prep_ctl_us,fb_ctl_us";

void write_csv(std::ostream& os, const RunLog& log) {
  os << kCsvHeader << '\n';
  char buf[64];
  for (const auto& r : log.rows) {
    double cols[] = {r.t,          r.x_true,     r.y_true,      r.theta_true, r.mu_true,  r.kappa_true,
                           r.x_meas,     r.y_meas,     r.nu_meas,     r.omega_meas, r.x_est,    r.y_est,
                           r.theta_est,  r.nu_est,     r.mu_est,      r.kappa_est,  r.omega_cmd, r.eucl_err,
                           r.kkt_est,    r.kkt_ctl,    0.0,           0.0,          0.0,        0.0};
    double* timing = cols + 20;
    if (log.timing) {
      timing[0] = r.prep_est_us;
      timing[1] = r.fb_est_us;
      timing[2] = r.prep_ctl_us;
      timing[3] = r.fb_ctl_us;
    }
    bool first = true;
    for (double v : cols) {
      if (!first) os << ',';
      first = false;
      std::snprintf(buf, sizeof buf, "%.10g", v);
      os << buf;
    }
    os << '\n';
  }
}

void write_meta(std::ostream& os, const RunLog& log, const ScenarioConfig& cfg) {
  os << "config_hash = " << hex64(log.config_hash) << '\n';
  os << "seed = " << log.seed << '\n';
  os << "rows = " << log.rows.size() << '\n';
  os << "wall_clock_s = " << log.wall_clock_s << '\n';
  os << "regularization_events = " << log.regularization_events << '\n';
  os << "# config\n" << cfg.canonical();
}

}  // namespace rhec
