#include "rhec/robot_problem.hpp"

namespace rhec {

DynamicsFn robot_dynamics(double dt) {
  return [dt](const Eigen::VectorXd& x, const Eigen::VectorXd& u, const Eigen::VectorXd& p) {
    const auto sens = sensitivities(KinematicModel::Traction, RobotState{x[0], x[1], x[2]}, ControlInput{u[0]},
                                    ParameterVector{p[0], p[1], p[2]}, dt);
    DynamicsEval ev;
    ev.next = sens.next.vec();
    ev.A = sens.A;
    ev.Bu = sens.Bu;
    ev.Bp = sens.Bp;
    return ev;
  };
}

}  // namespace rhec
