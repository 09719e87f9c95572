#pragma once

#include "touchmap/camera.hpp"

#include <array>
#include <string>
#include <vector>

namespace touchmap {

inline constexpr int kJointCount = 26;

enum class Side { Left, Right };

std::string_view to_string(Side side);
Side side_from_string(std::string_view s);  // throws Parse

/// Halpe-26 joint indices.
namespace joint {
inline constexpr int Nose = 0, LEye = 1, REye = 2, LEar = 3, REar = 4, LShoulder = 5,
                     RShoulder = 6, LElbow = 7, RElbow = 8, LWrist = 9, RWrist = 10, LHip = 11,
                     RHip = 12, LKnee = 13, RKnee = 14, LAnkle = 15, RAnkle = 16, Head = 17,
                     Neck = 18, Hip = 19, LBigToe = 20, RBigToe = 21, LSmallToe = 22,
                     RSmallToe = 23, LHeel = 24, RHeel = 25;
}

struct Bone {
  int a = 0, b = 0;
  double nominal_length = 0;  // meters
};

struct SideJoints {
  int wrist, elbow, shoulder;
};

struct JointSchema {
  std::array<std::string, kJointCount> names;
  std::vector<Bone> bones;
  SideJoints left{joint::LWrist, joint::LElbow, joint::LShoulder};
  SideJoints right{joint::RWrist, joint::RElbow, joint::RShoulder};
  std::array<int, 4> torso{joint::LHip, joint::RHip, joint::LShoulder, joint::RShoulder};

  const SideJoints& side(Side s) const { return s == Side::Left ? left : right; }

  /// Halpe-26 layout with nominal bone lengths taken from the standing template.
  static JointSchema halpe26();

  /// Throws InvalidArgument unless the bone graph spans all joints with positive lengths.
  void validate() const;
};

/// Standing template in the person frame (x forward, y left, z up, origin on the floor
/// between the feet). Bone lengths of the schema equal the template's exactly.
const std::array<Vec3, kJointCount>& standing_template();

}  // namespace touchmap
