#pragma once

// Ground-truth plant for closed-loop runs: traction-augmented kinematics with
// a terrain schedule, optional first-order actuator lag and Gaussian sensing.

#include <cstdint>
#include <limits>
#include <random>

#include "rhec/model.hpp"

namespace rhec {

struct PlantConfig {
  double track_width = 0.48;  ///< b [m]; kept for geometry, unused by the kinematics
  double nu_cmd = 0.5;        ///< [m/s]
  double actuator_tau = 0.0;  ///< [s], 0 = ideal actuators
  double substep = kSamplePeriod / 10.0;

  void validate() const;
};

struct TractionPair {
  double mu = 1.0;
  double kappa = 1.0;
};

struct TerrainProfile {
  double mu = 0.85;
  double kappa = 0.75;
  double step_time = std::numeric_limits<double>::infinity();  ///< [s]
  double step_mu = 0.0;      ///< added to mu from step_time on
  double step_kappa = 0.0;
  double perturbation = 0.0; ///< amplitude of the band-limited wobble
  std::uint64_t perturbation_seed = 1;

  /// Traction at time t, clamped into [0.01, 1]. Pure.
  TractionPair at(double t) const;
  void validate() const;
};

struct SensorSpec {
  double sigma_x = 0.03;
  double sigma_y = 0.03;
  double sigma_nu = 0.05;
  double sigma_omega = 0.0175;
  std::uint64_t seed = 1;

  void validate() const;
};

class Plant {
 public:
  Plant(PlantConfig cfg, TerrainProfile terrain, RobotState initial);

  const RobotState& truth() const { return pose_; }
  double time() const { return t_; }
  double realized_nu() const { return nu_; }
  double realized_omega() const { return omega_; }
  TractionPair traction() const { return terrain_.at(t_); }
  const PlantConfig& config() const { return cfg_; }

  void step(ControlInput command, double dt);

 private:
  PlantConfig cfg_;
  TerrainProfile terrain_;
  RobotState pose_;
  double nu_;
  double omega_ = 0.0;
  double t_ = 0.0;
};

void plant_step(Plant& plant, ControlInput command, double dt);

class Sensor {
 public:
  explicit Sensor(SensorSpec spec);
  /// Truth (x, y, nu, omega) of the actuators plus noise; draws x, y, nu,
  /// omega in that order.
  MeasurementSample sample(const Plant& plant);

 private:
  SensorSpec spec_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

MeasurementSample sense(const Plant& plant, Sensor& sensor);

}  // namespace rhec
