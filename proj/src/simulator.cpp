#include "touchmap/simulator.hpp"

#include "touchmap/error.hpp"
#include "touchmap/evaluation.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace touchmap {
namespace {

using nlohmann::json;

constexpr double kOcclusionMargin = 0.05;  // m
constexpr double kPalmThickness = 0.015;   // m, half-thickness of the hand blob

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t hash_key(std::uint64_t seed, std::uint64_t stream, std::uint64_t a, std::uint64_t b,
                       std::uint64_t c, std::uint64_t d) {
  std::uint64_t h = splitmix(seed);
  for (std::uint64_t x : {stream, a, b, c, d}) h = splitmix(h ^ x);
  return h;
}

double to_unit(std::uint64_t h) { return (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53; }

Vec3 vec3(const json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorKind::Config, "expected [x, y, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

double segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (a + t * ab - p).norm();
}

double capsule_radius(int a, int b) {
  using namespace joint;
  auto is = [&](int x, int y) { return (a == x && b == y) || (a == y && b == x); };
  if (is(Hip, Neck)) return 0.14;
  if (is(Neck, Head)) return 0.09;
  return 0.05;
}

Mat3 rot_z(double rad) {
  Mat3 r;
  r << std::cos(rad), -std::sin(rad), 0, std::sin(rad), std::cos(rad), 0, 0, 0, 1;
  return r;
}

struct BodyPose {
  Vec2 position;
  double facing;  // radians
};

BodyPose trajectory(const std::vector<Waypoint>& wps, int frame) {
  if (wps.empty()) return {Vec2::Zero(), 0};
  if (frame <= wps.front().frame) return {wps.front().position, wps.front().facing_deg * std::numbers::pi / 180};
  if (frame >= wps.back().frame) return {wps.back().position, wps.back().facing_deg * std::numbers::pi / 180};
  for (std::size_t i = 1; i < wps.size(); ++i) {
    if (frame > wps[i].frame) continue;
    const auto& a = wps[i - 1];
    const auto& b = wps[i];
    const double s = static_cast<double>(frame - a.frame) / (b.frame - a.frame);
    double dphi = std::remainder(b.facing_deg - a.facing_deg, 360.0);
    return {a.position + s * (b.position - a.position), (a.facing_deg + s * dphi) * std::numbers::pi / 180};
  }
  return {wps.back().position, wps.back().facing_deg * std::numbers::pi / 180};
}

/// Blob vertices in the hand frame (f toward the fingers, s lateral, p palm normal).
std::vector<Vec3> blob_local(int n, Side side) {
  const double sg = side == Side::Left ? 1.0 : -1.0;
  std::vector<Vec3> v;
  v.reserve(n);
  v.emplace_back(0.100, 0.065 * sg, 0.0);   // thumb
  v.emplace_back(0.185, 0.030 * sg, 0.0);   // index
  v.emplace_back(0.190, 0.008 * sg, 0.0);   // middle
  v.emplace_back(0.180, -0.014 * sg, 0.0);  // ring
  v.emplace_back(0.160, -0.035 * sg, 0.0);  // little
  const int m = n - 5;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < m; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / m;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * i;
    const double x = r * std::cos(phi), y = r * std::sin(phi);
    // Slight taper toward the wrist.
    v.emplace_back(0.09 + 0.08 * x, 0.045 * y * (1.0 + 0.1 * x), kPalmThickness * z);
  }
  return v;
}

HandPose pose_hand(const Vec3& wrist, Vec3 f, Vec3 p, Side side, const HandSchema& schema) {
  f.normalize();
  p = (p - p.dot(f) * f).normalized();
  const Vec3 s = p.cross(f);
  HandPose h;
  for (const auto& l : blob_local(schema.vertex_count, side))
    h.vertices.push_back(wrist + kPalmThickness * p + l.x() * f + l.y() * s + l.z() * p);
  h.anchors = compute_anchors(h.vertices, schema);
  return h;
}

Vec3 any_perpendicular(const Vec3& n) {
  Vec3 t = std::abs(n.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX();
  return (t - t.dot(n) * n).normalized();
}

}  // namespace

double hashed_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t a, std::uint64_t b,
                      std::uint64_t c, std::uint64_t d) {
  return to_unit(hash_key(seed, stream, a, b, c, d));
}

double hashed_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t a, std::uint64_t b,
                     std::uint64_t c, std::uint64_t d) {
  const std::uint64_t h = hash_key(seed, stream, a, b, c, d);
  const double u1 = to_unit(h), u2 = to_unit(splitmix(h));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// ---- primitives

std::optional<double> SurfacePrimitive::intersect(const Vec3& o, const Vec3& d) const {
  constexpr double kEps = 1e-9;
  switch (type) {
    case Type::Box: {
      double t0 = -std::numeric_limits<double>::infinity(), t1 = std::numeric_limits<double>::infinity();
      for (int i = 0; i < 3; ++i) {
        if (std::abs(d[i]) < 1e-15) {
          if (o[i] < a[i] || o[i] > b[i]) return std::nullopt;
          continue;
        }
        double ta = (a[i] - o[i]) / d[i], tb = (b[i] - o[i]) / d[i];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
      }
      if (t1 < t0) return std::nullopt;
      if (t0 > kEps) return t0;
      if (t1 > kEps) return t1;
      return std::nullopt;
    }
    case Type::Plane: {
      const double den = d.dot(b);
      if (std::abs(den) < 1e-12) return std::nullopt;
      const double t = (a - o).dot(b) / den;
      if (t > kEps) return t;
      return std::nullopt;
    }
    case Type::Sphere: {
      const Vec3 oc = o - a;
      const double bq = oc.dot(d), c = oc.squaredNorm() - radius * radius;
      const double h = bq * bq - c;
      if (h < 0) return std::nullopt;
      const double s = std::sqrt(h);
      if (-bq - s > kEps) return -bq - s;
      if (-bq + s > kEps) return -bq + s;
      return std::nullopt;
    }
  }
  return std::nullopt;
}

Vec3 SurfacePrimitive::closest_point(const Vec3& p) const {
  switch (type) {
    case Type::Box: {
      const Vec3 c = p.cwiseMax(a).cwiseMin(b);
      if (c != p) return c;
      // Inside: snap to the nearest face.
      Vec3 q = p;
      double best = std::numeric_limits<double>::infinity();
      int axis = 0;
      bool to_max = false;
      for (int i = 0; i < 3; ++i) {
        if (p[i] - a[i] < best) best = p[i] - a[i], axis = i, to_max = false;
        if (b[i] - p[i] < best) best = b[i] - p[i], axis = i, to_max = true;
      }
      q[axis] = to_max ? b[axis] : a[axis];
      return q;
    }
    case Type::Plane:
      return p - (p - a).dot(b) * b;
    case Type::Sphere: {
      const Vec3 d = p - a;
      const double n = d.norm();
      return n > 0 ? Vec3(a + radius * d / n) : Vec3(a + radius * Vec3::UnitZ());
    }
  }
  return p;
}

double SurfacePrimitive::distance(const Vec3& p) const { return (closest_point(p) - p).norm(); }

Vec3 SurfacePrimitive::normal_at(const Vec3& p) const {
  switch (type) {
    case Type::Box: {
      const Vec3 q = closest_point(p);
      const Vec3 size = b - a;
      double best = std::numeric_limits<double>::infinity();
      Vec3 n = Vec3::UnitZ();
      for (int i = 0; i < 3; ++i) {
        const double da = std::abs(q[i] - a[i]) / std::max(size[i], 1e-9);
        const double db = std::abs(b[i] - q[i]) / std::max(size[i], 1e-9);
        if (db < best) best = db, n = Vec3::Unit(i);
        if (da < best) best = da, n = -Vec3::Unit(i);
      }
      return n;
    }
    case Type::Plane:
      return b;
    case Type::Sphere:
      return (closest_point(p) - a).normalized();
  }
  return Vec3::UnitZ();
}

std::optional<double> intersect_capsule(const Vec3& o, const Vec3& d, const Capsule& c) {
  const Vec3 ba = c.b - c.a, oa = o - c.a;
  const double baba = ba.dot(ba), bard = ba.dot(d), baoa = ba.dot(oa), rdoa = d.dot(oa), oaoa = oa.dot(oa);
  const double r2 = c.radius * c.radius;
  std::optional<double> best;
  auto take = [&](double t) {
    if (t > 1e-9 && (!best || t < *best)) best = t;
  };
  const double A = baba - bard * bard;
  if (A > 1e-12) {
    const double B = baba * rdoa - baoa * bard;
    const double C = baba * oaoa - baoa * baoa - r2 * baba;
    const double h = B * B - A * C;
    if (h >= 0) {
      const double t = (-B - std::sqrt(h)) / A;
      const double y = baoa + t * bard;
      if (y > 0 && y < baba) take(t);
    }
  }
  for (const Vec3* end : {&c.a, &c.b}) {
    const Vec3 oc = o - *end;
    const double B = d.dot(oc), C = oc.squaredNorm() - r2;
    const double h = B * B - C;
    if (h >= 0) take(-B - std::sqrt(h));
  }
  return best;
}

// ---- scene parsing

void SceneConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::Config, "scene: " + m); };
  if (!(fps > 0)) fail("fps must be > 0");
  if (frame_count < 0) fail("frame_count must be >= 0");
  if (cameras.empty()) fail("at least one camera is required");
  if (cameras.size() > 32) fail("at most 32 cameras are supported");
  std::set<std::string> cam_ids;
  for (const auto& c : cameras)
    if (!cam_ids.insert(c.id).second) fail("duplicate camera id " + c.id);
  if (hand_vertex_count < 12) fail("hand vertex_count must be >= 12");
  for (const auto& [id, name] : labels)
    if (id < 1 || id > 255) fail("label ids must be in 1..255");
  for (const auto& s : surfaces) {
    if (s.label != 0 && !labels.count(s.label)) fail("surface label " + std::to_string(s.label) + " not in labels");
    if (s.type == SurfacePrimitive::Type::Box && (s.b.array() < s.a.array()).any()) fail("box min > max");
    if (s.type == SurfacePrimitive::Type::Sphere && !(s.radius > 0)) fail("sphere radius must be > 0");
  }
  std::set<int> ids;
  for (const auto& p : persons) {
    if (p.id < 1 || !ids.insert(p.id).second) fail("person ids must be unique and >= 1");
    if (p.waypoints.empty()) fail("person " + std::to_string(p.id) + " has no waypoints");
    for (std::size_t i = 0; i < p.waypoints.size(); ++i) {
      const auto& w = p.waypoints[i];
      if (i && w.frame <= p.waypoints[i - 1].frame) fail("waypoint frames must increase");
      if (w.position.x() < room_min.x() || w.position.x() > room_max.x() || w.position.y() < room_min.y() ||
          w.position.y() > room_max.y())
        fail("person " + std::to_string(p.id) + " leaves the room");
    }
    for (const auto& t : p.touches) {
      if (t.dwell_frames < 1 || t.reach_frames < 1 || t.retract_frames < 1)
        fail("touch phases need at least one frame each");
      if (!labels.count(t.label)) fail("touch label " + std::to_string(t.label) + " not in labels");
      double d = std::numeric_limits<double>::infinity();
      for (const auto& s : surfaces)
        if (s.label == t.label) d = std::min(d, s.distance(t.target));
      if (!(d < 0.01)) fail("touch target is not on a surface with label " + std::to_string(t.label));
    }
  }
  for (const auto& b : noise.body_blackouts)
    if (!ids.count(b.person) || b.frames < 0) fail("blackout references an unknown person");
  if (noise.pixel_sigma < 0 || noise.depth_sigma < 0 || noise.hand_vertex_jitter < 0 || noise.dropout_prob < 0 ||
      noise.dropout_prob > 1)
    fail("noise parameters out of range");
}

void SceneConfig::resolve_targets() {
  for (auto& p : persons)
    for (auto& t : p.touches) {
      const SurfacePrimitive* best = nullptr;
      for (const auto& s : surfaces)
        if (s.label == t.label && (!best || s.distance(t.target) < best->distance(t.target))) best = &s;
      if (best) t.normal = best->normal_at(t.target);
    }
}

SceneConfig parse_scene(const std::string& text) {
  SceneConfig sc;
  try {
    const json j = json::parse(text);
    sc.fps = j.value("fps", 30.0);
    sc.frame_count = j.at("frame_count").get<int>();
    sc.seed = j.value("seed", std::uint64_t{1});
    if (j.contains("room")) {
      sc.room_min = vec3(j["room"].at("min"));
      sc.room_max = vec3(j["room"].at("max"));
    }
    for (const auto& c : j.at("cameras")) {
      CameraSpec cs;
      cs.id = c.at("id").get<std::string>();
      cs.position = vec3(c.at("position"));
      cs.look_at = vec3(c.at("look_at"));
      cs.fx = c.value("fx", 500.0);
      cs.fy = c.value("fy", cs.fx);
      cs.width = c.value("width", 640);
      cs.height = c.value("height", 480);
      cs.cx = c.value("cx", cs.width / 2.0);
      cs.cy = c.value("cy", cs.height / 2.0);
      sc.cameras.push_back(cs);
    }
    const json labels = j.value("labels", json::object());
    for (const auto& [k, v] : labels.items()) sc.labels[std::stoi(k)] = v.get<std::string>();
    for (const auto& s : j.value("surfaces", json::array())) {
      SurfacePrimitive p;
      const std::string type = s.at("type").get<std::string>();
      p.label = s.value("label", 0);
      if (type == "box") {
        p.type = SurfacePrimitive::Type::Box;
        p.a = vec3(s.at("min"));
        p.b = vec3(s.at("max"));
      } else if (type == "plane") {
        p.type = SurfacePrimitive::Type::Plane;
        p.a = vec3(s.at("point"));
        p.b = vec3(s.at("normal")).normalized();
      } else if (type == "sphere") {
        p.type = SurfacePrimitive::Type::Sphere;
        p.a = vec3(s.at("center"));
        p.radius = s.at("radius").get<double>();
      } else {
        throw Error(ErrorKind::Config, "scene: unknown surface type '" + type + "'");
      }
      sc.surfaces.push_back(p);
    }
    for (const auto& pj : j.value("persons", json::array())) {
      PersonScript ps;
      ps.id = pj.at("id").get<int>();
      for (const auto& w : pj.at("waypoints")) {
        const auto& pos = w.at("position");
        ps.waypoints.push_back({w.at("frame").get<int>(), Vec2(pos.at(0).get<double>(), pos.at(1).get<double>()),
                                w.value("facing_deg", 0.0)});
      }
      for (const auto& t : pj.value("touches", json::array())) {
        TouchScript ts;
        ts.side = side_from_string(t.at("side").get<std::string>());
        ts.target = vec3(t.at("target"));
        ts.label = t.at("label").get<int>();
        ts.start = t.at("start").get<int>();
        ts.reach_frames = t.value("reach_frames", ts.reach_frames);
        ts.dwell_frames = t.value("dwell_frames", ts.dwell_frames);
        ts.retract_frames = t.value("retract_frames", ts.retract_frames);
        ts.hover = t.value("hover", ts.hover);
        ps.touches.push_back(ts);
      }
      sc.persons.push_back(ps);
    }
    if (j.contains("hand")) sc.hand_vertex_count = j["hand"].value("vertex_count", sc.hand_vertex_count);
    if (j.contains("noise")) {
      const auto& n = j["noise"];
      sc.noise.pixel_sigma = n.value("pixel_sigma", 0.0);
      sc.noise.confidence_base = n.value("confidence_base", 0.95);
      sc.noise.partial_occlusion_penalty = n.value("partial_occlusion_penalty", 0.3);
      sc.noise.dropout_prob = n.value("dropout_prob", 0.0);
      sc.noise.depth_sigma = n.value("depth_sigma", 0.0);
      sc.noise.hand_vertex_jitter = n.value("hand_vertex_jitter", 0.0);
      for (const auto& b : n.value("body_blackouts", json::array()))
        sc.noise.body_blackouts.push_back({b.at("person").get<int>(), b.at("start").get<int>(), b.at("frames").get<int>()});
    }
    if (j.contains("grid_frames")) sc.grid_frames = j["grid_frames"].get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Config, std::string("scene: ") + e.what());
  }
  sc.validate();
  sc.resolve_targets();
  return sc;
}

SceneConfig read_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scene(ss.str());
}

Calibration scene_calibration(const SceneConfig& scene) {
  Calibration c;
  for (const auto& cs : scene.cameras)
    c.cameras.push_back(make_look_at_camera(cs.id, cs.position, cs.look_at, cs.fx, cs.fy, cs.cx, cs.cy, cs.width, cs.height));
  return c;
}

HandSchema blob_hand_schema(int vertex_count) {
  HandSchema s;
  s.vertex_count = vertex_count;
  s.fingertip_indices = {0, 1, 2, 3, 4};
  for (int i = 5; i < vertex_count; ++i) s.palm_indices.push_back(i);
  return s;
}

HandSchema read_hand_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  try {
    const json j = json::parse(in);
    HandSchema s;
    s.vertex_count = j.at("vertex_count").get<int>();
    s.palm_indices = j.at("palm_indices").get<std::vector<int>>();
    const auto tips = j.at("fingertip_indices").get<std::vector<int>>();
    if (tips.size() != 5) throw Error(ErrorKind::Parse, path.string() + ": need 5 fingertip indices");
    std::copy(tips.begin(), tips.end(), s.fingertip_indices.begin());
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
  }
}

// ---- skeleton

ArmSolution solve_two_bone(const Vec3& shoulder, const Vec3& rest_elbow, const Vec3& target,
                           double upper, double lower) {
  ArmSolution out;
  Vec3 to = target - shoulder;
  double d = to.norm();
  const Vec3 u = d > 1e-12 ? Vec3(to / d) : Vec3(-Vec3::UnitZ());
  const double reach = upper + lower;
  if (d > reach) {
    d = reach;
    out.clamped = true;
  }
  d = std::max(d, std::abs(upper - lower) + 1e-9);
  const Vec3 pole = rest_elbow - shoulder;
  Vec3 n = pole - pole.dot(u) * u;
  n = n.norm() > 1e-9 ? Vec3(n.normalized()) : any_perpendicular(u);
  const double a = (upper * upper - lower * lower + d * d) / (2 * d);
  const double h = std::sqrt(std::max(0.0, upper * upper - a * a));
  out.elbow = shoulder + a * u + h * n;
  out.wrist = shoulder + d * u;
  return out;
}

PersonPose sample_skeleton(const PersonScript& person, int frame, const HandSchema& hand_schema) {
  PersonPose pose;
  pose.id = person.id;
  const BodyPose bp = trajectory(person.waypoints, frame);
  const Mat3 R = rot_z(bp.facing);
  const Vec3 origin(bp.position.x(), bp.position.y(), 0);
  const auto& tpl = standing_template();
  for (int k = 0; k < kJointCount; ++k) pose.joints[k] = R * tpl[k] + origin;

  const JointSchema schema = JointSchema::halpe26();
  const Vec3 lateral_left = R * Vec3::UnitY();
  for (Side side : {Side::Left, Side::Right}) {
    const auto& sj = schema.side(side);
    const Vec3 S = pose.joints[sj.shoulder], E0 = pose.joints[sj.elbow], W0 = pose.joints[sj.wrist];
    const double L1 = (E0 - S).norm(), L2 = (W0 - E0).norm();

    const TouchScript* active = nullptr;
    for (const auto& t : person.touches)
      if (t.side == side && frame >= t.start && frame <= t.end()) {
        active = &t;
        break;
      }

    // Reach: rise beside the body to hover height, then swing over to the hover point
    // with the palm already facing the surface. Retract mirrors it.
    Vec3 goal = W0;
    bool touch_orientation = false;
    if (active) {
      const Vec3 hover = active->target + active->hover * active->normal;
      Vec3 lift = W0;
      lift.z() = std::max(W0.z(), hover.z());
      double s = 1;  // 0 at the surface side of the path, 1 at rest
      if (frame < active->dwell_start())
        s = 1 - static_cast<double>(frame - active->start + 1) / active->reach_frames;
      else if (frame > active->dwell_stop())
        s = static_cast<double>(frame - active->dwell_stop()) / active->retract_frames;
      if (frame >= active->dwell_start() && frame <= active->dwell_stop()) {
        goal = active->target;
        touch_orientation = true;
      } else if (s <= 0.5) {
        goal = hover + 2 * s * (lift - hover);
        touch_orientation = true;
      } else {
        goal = lift + (2 * s - 1) * (W0 - lift);
      }
    }
    const ArmSolution arm = active ? solve_two_bone(S, E0, goal, L1, L2) : ArmSolution{E0, W0, false};
    pose.joints[sj.elbow] = arm.elbow;
    pose.joints[sj.wrist] = arm.wrist;
    pose.clamped[static_cast<int>(side)] = arm.clamped;

    Vec3 f = (W0 - E0).normalized();
    Vec3 p = (lateral_left - lateral_left.dot(f) * f).normalized();
    if (touch_orientation) {
      const Vec3 n = active->normal;
      const Vec3 forearm = (arm.wrist - arm.elbow).normalized();
      f = forearm - forearm.dot(n) * n;
      if (f.norm() < 0.2) f = any_perpendicular(n);
      f.normalize();
      p = n;
    }
    pose.hands[static_cast<int>(side)] = pose_hand(arm.wrist, f, p, side, hand_schema);
  }
  return pose;
}

// ---- rendering

SceneRenderer::SceneRenderer(SceneConfig scene)
    : scene_(std::move(scene)), calib_(scene_calibration(scene_)), hand_schema_(blob_hand_schema(scene_.hand_vertex_count)) {
  scene_.validate();
}

std::vector<PersonPose> SceneRenderer::poses(int frame) const {
  std::vector<PersonPose> out;
  for (const auto& p : scene_.persons) out.push_back(sample_skeleton(p, frame, hand_schema_));
  return out;
}

std::vector<Capsule> SceneRenderer::capsules(const std::vector<PersonPose>& poses) const {
  static const JointSchema schema = JointSchema::halpe26();
  std::vector<Capsule> out;
  for (const auto& p : poses)
    for (const auto& b : schema.bones) out.push_back({p.joints[b.a], p.joints[b.b], capsule_radius(b.a, b.b), b.a, b.b});
  return out;
}

std::optional<SceneRenderer::Hit> SceneRenderer::raycast(const Vec3& o, const Vec3& d,
                                                         const std::vector<Capsule>& capsules,
                                                         const std::optional<Vec3>& skip_point) const {
  std::optional<Hit> best;
  for (const auto& s : scene_.surfaces)
    if (auto t = s.intersect(o, d); t && (!best || *t < best->t)) best = Hit{*t, s.label};
  for (const auto& c : capsules) {
    if (skip_point && segment_distance(*skip_point, c.a, c.b) <= c.radius + 1e-9) continue;
    if (auto t = intersect_capsule(o, d, c); t && (!best || *t < best->t)) best = Hit{*t, 0};
  }
  return best;
}

RenderedFrame SceneRenderer::render(int frame) const {
  static const JointSchema schema = JointSchema::halpe26();
  std::vector<std::vector<int>> neighbours(kJointCount);
  for (const auto& b : schema.bones) {
    neighbours[b.a].push_back(b.b);
    neighbours[b.b].push_back(b.a);
  }
  const auto& nz = scene_.noise;
  const std::uint64_t seed = scene_.seed;

  RenderedFrame out;
  out.input.frame = frame;
  out.poses = poses(frame);
  const auto caps = capsules(out.poses);
  out.visibility.assign(out.poses.size(), {});
  // Keypoint detectors infer self-occluded joints, so only other people and the
  // scene hide a joint.
  const std::size_t per_person = schema.bones.size();
  std::vector<std::vector<Capsule>> others(out.poses.size());
  for (std::size_t pi = 0; pi < out.poses.size(); ++pi)
    for (std::size_t c = 0; c < caps.size(); ++c)
      if (c / per_person != pi) others[pi].push_back(caps[c]);

  for (std::size_t ci = 0; ci < calib_.cameras.size(); ++ci) {
    const auto& cal = calib_.cameras[ci];
    const Vec3 C = cal.center();
    CameraDetections cd;
    cd.camera_index = static_cast<int>(ci);
    std::vector<std::pair<std::uint64_t, std::size_t>> order;
    for (std::size_t pi = 0; pi < out.poses.size(); ++pi)
      order.emplace_back(hash_key(seed, 5, ci, frame, out.poses[pi].id, 0), pi);
    std::sort(order.begin(), order.end());

    for (const auto& [h, pi] : order) {
      const auto& pose = out.poses[pi];
      std::array<bool, kJointCount> vis{};
      std::array<Vec2, kJointCount> px{};
      for (int k = 0; k < kJointCount; ++k) {
        const Vec3& X = pose.joints[k];
        const Vec3 pc = cal.to_camera(X);
        if (pc.z() <= 0.05) continue;
        const Vec2 uv = project(X, cal);
        if (uv.x() < 0 || uv.y() < 0 || uv.x() > cal.image_width - 1 || uv.y() > cal.image_height - 1) continue;
        const Vec3 ray = X - C;
        const double dist = ray.norm();
        const auto hit = raycast(C, ray / dist, others[pi]);
        if (hit && hit->t < dist - kOcclusionMargin) continue;
        vis[k] = true;
        px[k] = uv;
        out.visibility[pi][k] |= 1u << ci;
      }

      const bool dropped = nz.dropout_prob > 0 && hashed_uniform(seed, 1, ci, frame, pose.id, 0) < nz.dropout_prob;
      if (dropped) continue;
      const bool blackout = std::any_of(nz.body_blackouts.begin(), nz.body_blackouts.end(), [&](const BodyBlackout& b) {
        return b.person == pose.id && frame >= b.start && frame < b.start + b.frames;
      });

      if (!blackout && std::any_of(vis.begin(), vis.end(), [](bool b) { return b; })) {
        PersonDetection det;
        for (int k = 0; k < kJointCount; ++k) {
          if (!vis[k]) continue;
          const bool partial = std::any_of(neighbours[k].begin(), neighbours[k].end(), [&](int n) { return !vis[n]; });
          double c = nz.confidence_base - (partial ? nz.partial_occlusion_penalty : 0.0);
          c = std::clamp(c, 0.0, 1.0);
          if (c <= 0) continue;
          Vec2 uv = px[k];
          if (nz.pixel_sigma > 0) {
            const std::uint64_t key = static_cast<std::uint64_t>(pose.id) * 64 + k;
            uv += nz.pixel_sigma * Vec2(hashed_normal(seed, 2, ci, frame, key, 0), hashed_normal(seed, 2, ci, frame, key, 1));
          }
          det.joints[k] = {uv, c};
        }
        cd.persons.push_back(det);
      }

      for (Side side : {Side::Left, Side::Right}) {
        const int s = static_cast<int>(side);
        if (!vis[schema.side(side).wrist]) continue;
        HandInstance hi;
        hi.camera_id = cal.camera_id;
        hi.camera_index = static_cast<int>(ci);
        hi.detection_index = static_cast<int>(out.input.hands.size());
        hi.side = side;
        double sq = 0;
        const auto& verts = pose.hands[s].vertices;
        for (std::size_t v = 0; v < verts.size(); ++v) {
          Vec3 x = cal.to_camera(verts[v]);
          if (nz.hand_vertex_jitter > 0) {
            const std::uint64_t key = static_cast<std::uint64_t>(pose.id) * 2 + s;
            const Vec3 j(hashed_normal(seed, 3, ci, frame, key, 3 * v), hashed_normal(seed, 3, ci, frame, key, 3 * v + 1),
                         hashed_normal(seed, 3, ci, frame, key, 3 * v + 2));
            x += nz.hand_vertex_jitter * j;
            sq += (nz.hand_vertex_jitter * j).squaredNorm();
          }
          hi.vertices.push_back(x);
        }
        hi.sigma_fit = verts.empty() ? 0.0 : std::sqrt(sq / verts.size());
        out.input.hands.push_back(std::move(hi));
      }
    }
    out.input.bodies.push_back(std::move(cd));
  }
  return out;
}

double SceneRenderer::depth(int camera_index, int u, int v, int frame, const std::vector<Capsule>& capsules) const {
  const auto& cal = calib_.cameras.at(camera_index);
  const Vec3 dc((u - cal.cx) / cal.fx, (v - cal.cy) / cal.fy, 1.0);
  const double len = dc.norm();
  const Vec3 dw = cal.R().transpose() * (dc / len);
  const auto hit = raycast(cal.center(), dw, capsules);
  if (!hit) return 0.0;
  double z = hit->t / len;
  if (scene_.noise.depth_sigma > 0)
    z += scene_.noise.depth_sigma * hashed_normal(scene_.seed, 4, camera_index, frame, u, v);
  const double mm = std::round(z * 1000.0);
  if (mm < 1 || mm > 65535) return 0.0;
  return mm / 1000.0;
}

void SceneRenderer::render_grids(int camera_index, int frame, LabelGrid& labels, DepthGridMm& depth_grid) const {
  const auto& cal = calib_.cameras.at(camera_index);
  const auto caps = capsules(poses(frame));
  labels = LabelGrid(cal.image_width, cal.image_height, 0);
  depth_grid = DepthGridMm(cal.image_width, cal.image_height, 0);
  for (int v = 0; v < cal.image_height; ++v)
    for (int u = 0; u < cal.image_width; ++u) {
      const Vec3 dc((u - cal.cx) / cal.fx, (v - cal.cy) / cal.fy, 1.0);
      const double len = dc.norm();
      const auto hit = raycast(cal.center(), cal.R().transpose() * (dc / len), caps);
      if (!hit) continue;
      labels.at(u, v) = static_cast<std::uint8_t>(hit->label);
      depth_grid.at(u, v) = static_cast<std::uint16_t>(std::lround(depth(camera_index, u, v, frame, caps) * 1000.0));
    }
}

std::vector<TruthEpisode> SceneRenderer::truth_episodes() const {
  std::vector<TruthEpisode> out;
  for (const auto& p : scene_.persons)
    for (const auto& t : p.touches) {
      TruthEpisode e;
      e.person = p.id;
      e.side = t.side;
      e.label = t.label;
      e.t_start = t.dwell_start();
      e.t_stop = t.dwell_stop();
      e.point = t.target;
      const auto pose = sample_skeleton(p, t.dwell_start(), hand_schema_);
      const Vec3 wrist = pose.joints[JointSchema::halpe26().side(t.side).wrist];
      e.distance = (wrist - t.target).norm();
      e.clamped = pose.clamped[static_cast<int>(t.side)];
      out.push_back(e);
    }
  std::sort(out.begin(), out.end(), [](const TruthEpisode& a, const TruthEpisode& b) {
    return std::tie(a.t_start, a.person, a.side, a.label) < std::tie(b.t_start, b.person, b.side, b.label);
  });
  return out;
}

SceneDepthProvider::SceneDepthProvider(const SceneRenderer& renderer, int frame)
    : renderer_(renderer), frame_(frame), capsules_(renderer.capsules(renderer.poses(frame))) {}

double SceneDepthProvider::depth(int camera_index, int u, int v) const {
  const auto& cal = renderer_.calibration().cameras.at(camera_index);
  if (u < 0 || v < 0 || u >= cal.image_width || v >= cal.image_height) return 0.0;
  return renderer_.depth(camera_index, u, v, frame_, capsules_);
}

// ---- dataset emission

void emit_dataset(const SceneConfig& scene, const std::string& scene_text, const std::filesystem::path& out) {
  namespace fs = std::filesystem;
  fs::create_directories(out / "gt");
  fs::create_directories(out / "grids");
  const SceneRenderer r(scene);
  auto open = [](const fs::path& p) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw Error(ErrorKind::Io, "cannot write " + p.string());
    return os;
  };

  write_calibration(out / "calibration.json", r.calibration());
  write_label_table(out / "labels.txt", scene.labels);
  {
    auto os = open(out / "meta.json");
    os << "{\"fps\": " << format_fixed(scene.fps, 3) << ", \"frame_count\": " << scene.frame_count
       << ", \"seed\": " << scene.seed << "}\n";
  }
  {
    const auto& hs = r.hand_schema();
    auto os = open(out / "hand_schema.json");
    os << "{\"vertex_count\": " << hs.vertex_count << ", \"fingertip_indices\": [";
    for (int i = 0; i < 5; ++i) os << (i ? ", " : "") << hs.fingertip_indices[i];
    os << "], \"palm_indices\": [";
    for (std::size_t i = 0; i < hs.palm_indices.size(); ++i) os << (i ? ", " : "") << hs.palm_indices[i];
    os << "]}\n";
  }
  {
    auto os = open(out / "scene.json");
    os << scene_text;
  }

  auto det = open(out / "detections.jsonl");
  auto gt_tracks = open(out / "gt" / "tracks.jsonl");
  auto gt_vis = open(out / "gt" / "visibility.jsonl");
  const JointSchema schema = JointSchema::halpe26();
  for (int f = 0; f < scene.frame_count; ++f) {
    const auto rf = r.render(f);
    for (const auto& cd : rf.input.bodies) {
      std::vector<HandInstance> hands;
      for (const auto& h : rf.input.hands)
        if (h.camera_index == cd.camera_index) hands.push_back(h);
      write_detection_line(det, f, r.calibration().cameras[cd.camera_index].camera_id, cd.persons, hands);
    }
    std::vector<std::pair<int, Side>> hidden;
    for (std::size_t pi = 0; pi < rf.poses.size(); ++pi) {
      const auto& pose = rf.poses[pi];
      gt_tracks << "{\"frame\":" << f << ",\"id\":" << pose.id << ",\"joints\":[";
      for (int k = 0; k < kJointCount; ++k) {
        const auto& X = pose.joints[k];
        gt_tracks << (k ? "," : "") << '[' << format_fixed(X.x(), 5) << ',' << format_fixed(X.y(), 5) << ','
                  << format_fixed(X.z(), 5) << ",1]";
      }
      gt_tracks << "],\"visible\":[";
      for (int k = 0; k < kJointCount; ++k) gt_tracks << (k ? "," : "") << rf.visibility[pi][k];
      gt_tracks << "],\"hands\":{";
      for (Side side : {Side::Left, Side::Right}) {
        gt_tracks << (side == Side::Right ? "," : "") << '"' << to_string(side) << "\":[";
        const auto& a = pose.hands[static_cast<int>(side)].anchors;
        for (int i = 0; i < 6; ++i)
          gt_tracks << (i ? "," : "") << '[' << format_fixed(a[i].x(), 5) << ',' << format_fixed(a[i].y(), 5) << ','
                    << format_fixed(a[i].z(), 5) << ']';
        gt_tracks << ']';
        if (rf.visibility[pi][schema.side(side).wrist] == 0) hidden.emplace_back(pose.id, side);
      }
      gt_tracks << "}}\n";
    }
    gt_vis << "{\"frame\":" << f << ",\"hidden_hands\":[";
    for (std::size_t i = 0; i < hidden.size(); ++i)
      gt_vis << (i ? "," : "") << '[' << hidden[i].first << ",\"" << to_string(hidden[i].second) << "\"]";
    gt_vis << "]}\n";
  }

  std::vector<EpisodeRecord> episodes;
  auto touches = open(out / "gt" / "touches.jsonl");
  for (const auto& e : r.truth_episodes()) {
    episodes.push_back({e.person, e.side, e.label, e.t_start, e.t_stop, e.point, e.distance});
    touches << "{\"person_id\":" << e.person << ",\"side\":\"" << to_string(e.side) << "\",\"surface_label\":" << e.label
            << ",\"t_start\":" << e.t_start << ",\"t_stop\":" << e.t_stop
            << ",\"clamped\":" << (e.clamped ? "true" : "false") << "}\n";
  }
  write_episodes_csv(out / "gt" / "episodes.csv", episodes);

  std::set<int> grid_frames(scene.grid_frames.begin(), scene.grid_frames.end());
  for (int f : grid_frames) {
    if (f < 0 || f >= scene.frame_count) continue;
    for (std::size_t ci = 0; ci < r.calibration().cameras.size(); ++ci) {
      LabelGrid lg;
      DepthGridMm dg;
      r.render_grids(static_cast<int>(ci), f, lg, dg);
      const std::string stem = r.calibration().cameras[ci].camera_id + "_" + std::to_string(f);
      write_label_grid(out / "grids" / (stem + ".lbl"), lg);
      write_depth_grid(out / "grids" / (stem + ".dep"), dg);
    }
  }
}

}  // namespace touchmap
