#pragma once

#include "touchmap/depth.hpp"
#include "touchmap/hand_fusion.hpp"
#include "touchmap/io.hpp"
#include "touchmap/joint_schema.hpp"
#include "touchmap/person_tracker.hpp"
#include "touchmap/stream_io.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace touchmap {

struct SurfacePrimitive {
  enum class Type { Box, Plane, Sphere };
  Type type = Type::Box;
  int label = 0;  // 0 = unlabelled (floor, occluders)
  Vec3 a = Vec3::Zero();  // box min / plane point / sphere center
  Vec3 b = Vec3::Zero();  // box max / plane unit normal
  double radius = 0;

  /// Smallest ray parameter t > 0 with o + t d on the surface.
  std::optional<double> intersect(const Vec3& o, const Vec3& d) const;
  double distance(const Vec3& p) const;
  Vec3 closest_point(const Vec3& p) const;
  Vec3 normal_at(const Vec3& p) const;
};

struct Capsule {
  Vec3 a, b;
  double radius;
  int joint_a, joint_b;
};

std::optional<double> intersect_capsule(const Vec3& o, const Vec3& d, const Capsule& c);

struct Waypoint {
  int frame = 0;
  Vec2 position = Vec2::Zero();
  double facing_deg = 0;
};

struct TouchScript {
  Side side = Side::Right;
  Vec3 target = Vec3::Zero();
  int label = 0;
  int start = 0;
  int reach_frames = 6;
  int dwell_frames = 60;
  int retract_frames = 4;
  double hover = 0.20;  // m, approach point off the surface along its normal
  Vec3 normal = Vec3::UnitZ();  // surface normal at the target, set by resolve_targets

  int dwell_start() const { return start + reach_frames; }
  int dwell_stop() const { return start + reach_frames + dwell_frames - 1; }
  int end() const { return dwell_stop() + retract_frames; }
};

struct PersonScript {
  int id = 0;
  std::vector<Waypoint> waypoints;
  std::vector<TouchScript> touches;
};

struct CameraSpec {
  std::string id;
  Vec3 position = Vec3::Zero();
  Vec3 look_at = Vec3::Zero();
  double fx = 500, fy = 500, cx = 320, cy = 240;
  int width = 640, height = 480;
};

struct BodyBlackout {
  int person = 0;
  int start = 0;
  int frames = 0;
};

struct NoiseConfig {
  double pixel_sigma = 0;
  double confidence_base = 0.95;
  double partial_occlusion_penalty = 0.3;
  double dropout_prob = 0;
  double depth_sigma = 0;
  double hand_vertex_jitter = 0;
  std::vector<BodyBlackout> body_blackouts;  // body detections dropped in every camera
};

struct SceneConfig {
  double fps = 30;
  int frame_count = 0;
  std::uint64_t seed = 1;
  Vec3 room_min{-4, -4, 0}, room_max{4, 4, 3};
  std::vector<CameraSpec> cameras;
  LabelTable labels;
  std::vector<SurfacePrimitive> surfaces;
  std::vector<PersonScript> persons;
  int hand_vertex_count = 778;
  NoiseConfig noise;
  std::vector<int> grid_frames{0};

  /// Throws Config on invalid scenes (bad labels, dwell < 1, waypoints outside the room,
  /// touch targets off their surface).
  void validate() const;
  /// Sets each touch's normal from the nearest surface carrying its label.
  void resolve_targets();
};

SceneConfig read_scene(const std::filesystem::path& path);
SceneConfig parse_scene(const std::string& text);

Calibration scene_calibration(const SceneConfig& scene);

/// Blob hand topology: fingertips are vertices 0..4, the rest form the palm ellipsoid.
HandSchema blob_hand_schema(int vertex_count);

/// Counter-based normal deviate keyed by (seed, stream, a, b, c, d).
double hashed_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t a, std::uint64_t b,
                     std::uint64_t c, std::uint64_t d);
double hashed_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t a, std::uint64_t b,
                      std::uint64_t c, std::uint64_t d);

struct ArmSolution {
  Vec3 elbow, wrist;
  bool clamped = false;
};

/// Two-bone reach in the plane through shoulder, target and the rest elbow.
ArmSolution solve_two_bone(const Vec3& shoulder, const Vec3& rest_elbow, const Vec3& target,
                           double upper, double lower);

struct HandPose {
  std::vector<Vec3> vertices;  // world
  Anchors anchors{};
};

struct PersonPose {
  int id = 0;
  std::array<Vec3, kJointCount> joints{};
  std::array<HandPose, 2> hands;  // indexed by Side
  std::array<bool, 2> clamped{};
};

/// Rigid template at the trajectory pose plus scripted arm articulation.
PersonPose sample_skeleton(const PersonScript& person, int frame, const HandSchema& hand_schema);

/// Ground truth episode of a scripted touch (dwell frames).
struct TruthEpisode {
  int person = 0;
  Side side = Side::Right;
  int label = 0;
  int t_start = 0, t_stop = 0;
  Vec3 point = Vec3::Zero();
  double distance = 0;
  bool clamped = false;
};

struct RenderedFrame {
  FrameInput input;
  std::vector<PersonPose> poses;
  // Per person, per joint: bitmask of cameras seeing the joint.
  std::vector<std::array<std::uint32_t, kJointCount>> visibility;
};

class SceneRenderer {
 public:
  explicit SceneRenderer(SceneConfig scene);

  const SceneConfig& scene() const { return scene_; }
  const Calibration& calibration() const { return calib_; }
  const HandSchema& hand_schema() const { return hand_schema_; }

  std::vector<PersonPose> poses(int frame) const;
  std::vector<Capsule> capsules(const std::vector<PersonPose>& poses) const;

  struct Hit {
    double t = 0;
    int label = 0;
  };
  /// First hit along the ray among surfaces and body capsules. Capsules touching or
  /// containing `skip_point` (when given) are ignored.
  std::optional<Hit> raycast(const Vec3& o, const Vec3& d, const std::vector<Capsule>& capsules,
                             const std::optional<Vec3>& skip_point = std::nullopt) const;

  RenderedFrame render(int frame) const;

  /// Noisy depth in meters (quantized to mm) at pixel (u, v); 0 when nothing is hit.
  double depth(int camera_index, int u, int v, int frame, const std::vector<Capsule>& capsules) const;
  void render_grids(int camera_index, int frame, LabelGrid& labels, DepthGridMm& depth) const;

  std::vector<TruthEpisode> truth_episodes() const;

 private:
  SceneConfig scene_;
  Calibration calib_;
  HandSchema hand_schema_;
};

/// Depth provider that ray-casts the scene for one frame on demand.
class SceneDepthProvider final : public DepthProvider {
 public:
  SceneDepthProvider(const SceneRenderer& renderer, int frame);
  double depth(int camera_index, int u, int v) const override;

 private:
  const SceneRenderer& renderer_;
  int frame_;
  std::vector<Capsule> capsules_;
};

/// Writes the dataset: calibration.json, meta.json, labels.txt, hand_schema.json,
/// scene.json, detections.jsonl, grids/, gt/.
void emit_dataset(const SceneConfig& scene, const std::string& scene_text,
                  const std::filesystem::path& out);

HandSchema read_hand_schema(const std::filesystem::path& path);

}  // namespace touchmap
