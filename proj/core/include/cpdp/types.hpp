#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace cpdp {

using Vec3 = Eigen::Vector3d;

// Joint name -> position in metres.
using JointPositions = std::map<std::string, Vec3>;

// One observed skeleton frame.
struct PoseFrame {
  double t = 0.0;
  JointPositions joints;
};

}  // namespace cpdp
