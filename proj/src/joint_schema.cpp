#include "touchmap/joint_schema.hpp"

#include "touchmap/error.hpp"

#include <numeric>

namespace touchmap {

std::string_view to_string(Side side) { return side == Side::Left ? "left" : "right"; }

Side side_from_string(std::string_view s) {
  if (s == "left") return Side::Left;
  if (s == "right") return Side::Right;
  throw Error(ErrorKind::Parse, "side must be 'left' or 'right', got '" + std::string(s) + "'");
}

const std::array<Vec3, kJointCount>& standing_template() {
  static const std::array<Vec3, kJointCount> t = [] {
    std::array<Vec3, kJointCount> p;
    using namespace joint;
    p[Nose] = {0.10, 0.0, 1.60};
    p[LEye] = {0.08, 0.035, 1.63};
    p[REye] = {0.08, -0.035, 1.63};
    p[LEar] = {0.0, 0.075, 1.60};
    p[REar] = {0.0, -0.075, 1.60};
    p[LShoulder] = {0.0, 0.19, 1.42};
    p[RShoulder] = {0.0, -0.19, 1.42};
    p[LElbow] = {0.0, 0.21, 1.12};
    p[RElbow] = {0.0, -0.21, 1.12};
    p[LWrist] = {0.03, 0.21, 0.86};
    p[RWrist] = {0.03, -0.21, 0.86};
    p[LHip] = {0.0, 0.10, 0.92};
    p[RHip] = {0.0, -0.10, 0.92};
    p[LKnee] = {0.02, 0.10, 0.50};
    p[RKnee] = {0.02, -0.10, 0.50};
    p[LAnkle] = {0.0, 0.10, 0.08};
    p[RAnkle] = {0.0, -0.10, 0.08};
    p[Head] = {0.0, 0.0, 1.72};
    p[Neck] = {0.0, 0.0, 1.45};
    p[Hip] = {0.0, 0.0, 0.95};
    p[LBigToe] = {0.15, 0.12, 0.02};
    p[RBigToe] = {0.15, -0.12, 0.02};
    p[LSmallToe] = {0.13, 0.16, 0.02};
    p[RSmallToe] = {0.13, -0.16, 0.02};
    p[LHeel] = {-0.05, 0.10, 0.02};
    p[RHeel] = {-0.05, -0.10, 0.02};
    return p;
  }();
  return t;
}

JointSchema JointSchema::halpe26() {
  using namespace joint;
  JointSchema s;
  s.names = {"nose",       "left_eye",    "right_eye",      "left_ear",        "right_ear",
             "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",   "left_wrist",
             "right_wrist", "left_hip",   "right_hip",      "left_knee",       "right_knee",
             "left_ankle", "right_ankle", "head",           "neck",            "hip",
             "left_big_toe", "right_big_toe", "left_small_toe", "right_small_toe", "left_heel",
             "right_heel"};
  const std::vector<std::pair<int, int>> edges = {
      {Hip, LHip},       {Hip, RHip},         {LHip, LKnee},       {LKnee, LAnkle},
      {RHip, RKnee},     {RKnee, RAnkle},     {LAnkle, LHeel},     {LAnkle, LBigToe},
      {LAnkle, LSmallToe}, {RAnkle, RHeel},   {RAnkle, RBigToe},   {RAnkle, RSmallToe},
      {Hip, Neck},       {Neck, Head},        {Neck, LShoulder},   {Neck, RShoulder},
      {LShoulder, LElbow}, {LElbow, LWrist},  {RShoulder, RElbow}, {RElbow, RWrist},
      {Neck, Nose},      {Nose, LEye},        {Nose, REye},        {LEye, LEar},
      {REye, REar}};
  const auto& t = standing_template();
  for (auto [a, b] : edges) s.bones.push_back({a, b, (t[a] - t[b]).norm()});
  return s;
}

void JointSchema::validate() const {
  std::array<int, kJointCount> parent;
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& b : bones) {
    if (b.a < 0 || b.b < 0 || b.a >= kJointCount || b.b >= kJointCount)
      throw Error(ErrorKind::InvalidArgument, "bone joint index out of range");
    if (!(b.nominal_length > 0)) throw Error(ErrorKind::InvalidArgument, "bone length must be > 0");
    parent[find(b.a)] = find(b.b);
  }
  for (int k = 1; k < kJointCount; ++k)
    if (find(k) != find(0)) throw Error(ErrorKind::InvalidArgument, "bone graph is not connected");
}

}  // namespace touchmap
