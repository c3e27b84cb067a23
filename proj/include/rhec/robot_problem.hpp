#pragma once

#include "rhec/model.hpp"
#include "rhec/rti.hpp"

namespace rhec {

/// Shooting dynamics for the traction-augmented model: x = (x, y, theta),
/// u = (omega), p = (nu, mu, kappa), one RK4 step of `dt` per interval.
DynamicsFn robot_dynamics(double dt);

}  // namespace rhec
