#include "rhec/sim.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "rhec/error.hpp"

namespace rhec {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double unit_phase(std::uint64_t& state) {
  return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53 * 2.0 * kPi;
}

}  // namespace

void PlantConfig::validate() const {
  if (!(track_width > 0.0)) throw ConfigError("track width must be positive");
  if (!(nu_cmd >= 0.0)) throw ConfigError("commanded speed must be non-negative");
  if (!(actuator_tau >= 0.0)) throw ConfigError("actuator time constant must be non-negative");
  if (!(substep > 0.0)) throw ConfigError("plant substep must be positive");
}

TractionPair TerrainProfile::at(double t) const {
  double m = mu;
  double k = kappa;
  if (t >= step_time) {
    m += step_mu;
    k += step_kappa;
  }
  if (perturbation > 0.0) {
    // three incommensurate periods between 3 s and 20 s
    static constexpr std::array<double, 3> periods{20.0, 7.3, 3.1};
    std::uint64_t st = perturbation_seed;
    double wm = 0.0;
    double wk = 0.0;
    for (double T : periods) {
      wm += std::sin(2.0 * kPi * t / T + unit_phase(st));
      wk += std::sin(2.0 * kPi * t / T + unit_phase(st));
    }
    m += perturbation * wm / 3.0;
    k += perturbation * wk / 3.0;
  }
  return {std::clamp(m, 0.01, 1.0), std::clamp(k, 0.01, 1.0)};
}

void TerrainProfile::validate() const {
  auto in_range = [](double v) { return v > 0.0 && v <= 1.0; };
  if (!in_range(mu) || !in_range(kappa)) throw ConfigError("terrain traction must lie in (0, 1]");
  if (!(perturbation >= 0.0)) throw ConfigError("terrain perturbation must be non-negative");
  if (std::isfinite(step_time) && (!in_range(mu + step_mu) || !in_range(kappa + step_kappa)))
    throw ConfigError("terrain step leaves (0, 1]");
}

void SensorSpec::validate() const {
  if (!(sigma_x >= 0.0 && sigma_y >= 0.0 && sigma_nu >= 0.0 && sigma_omega >= 0.0))
    throw ConfigError("sensor standard deviations must be non-negative");
}

Plant::Plant(PlantConfig cfg, TerrainProfile terrain, RobotState initial)
    : cfg_(cfg), terrain_(terrain), pose_(initial), nu_(cfg.nu_cmd) {
  cfg_.validate();
  terrain_.validate();
}

void Plant::step(ControlInput command, double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("plant step needs dt > 0");
  const int n = std::max(1, static_cast<int>(std::lround(dt / cfg_.substep)));
  const double h = dt / n;
  const double decay = cfg_.actuator_tau > 0.0 ? std::exp(-h / cfg_.actuator_tau) : 0.0;
  for (int j = 0; j < n; ++j) {
    nu_ = cfg_.nu_cmd + (nu_ - cfg_.nu_cmd) * decay;
    omega_ = command.omega + (omega_ - command.omega) * decay;
    const TractionPair tr = terrain_.at(t_ + j * h);
    pose_ = integrate_step(KinematicModel::Traction, pose_, ControlInput{omega_}, ParameterVector{nu_, tr.mu, tr.kappa}, h);
  }
  t_ += dt;
}

void plant_step(Plant& plant, ControlInput command, double dt) { plant.step(command, dt); }

Sensor::Sensor(SensorSpec spec) : spec_(spec), rng_(spec.seed) { spec_.validate(); }

MeasurementSample Sensor::sample(const Plant& plant) {
  MeasurementSample z;
  z.t = plant.time();
  const RobotState& p = plant.truth();
  z.x = p.x + spec_.sigma_x * normal_(rng_);
  z.y = p.y + spec_.sigma_y * normal_(rng_);
  z.nu = plant.realized_nu() + spec_.sigma_nu * normal_(rng_);
  z.omega = plant.realized_omega() + spec_.sigma_omega * normal_(rng_);
  return z;
}

MeasurementSample sense(const Plant& plant, Sensor& sensor) { return sensor.sample(plant); }

}  // namespace rhec
