#pragma once

#include "touchmap/camera.hpp"
#include "touchmap/depth.hpp"
#include "touchmap/hungarian.hpp"
#include "touchmap/io.hpp"
#include "touchmap/joint_schema.hpp"

#include <array>
#include <optional>
#include <span>
#include <vector>

namespace touchmap {

struct JointDetection {
  Vec2 pixel = Vec2::Zero();
  double confidence = 0;  // 0 marks an undetected joint
};

/// One 2-D skeleton from one camera.
struct PersonDetection {
  std::array<JointDetection, kJointCount> joints{};
};

struct CameraDetections {
  int camera_index = 0;
  std::vector<PersonDetection> persons;
};

struct TrackerConfig {
  double tau_joint = 0.3;
  double tau_mpjpe = 60.0;  // px
  double tau_epi = 5.0;     // px
  int v_min = 2;
  double eps_tri = 8.0;   // px
  double eps_init = 5.0;  // px
  int patch_w = 5;        // px
  double sigma_max_sq = 0.05 * 0.05;  // m^2
  double alpha = 0.7;
  double beta = 1.3;
  double lambda = 0.92;
  double e_init = 0.3;
  double delta_e_up = 0.2;
  double e_on = 0.6;
  double e_off = 0.1;
  double r_reuse = 0.5;  // m
  int max_inactive_frames = 90;
  // Birth hypotheses need this many shared confident joints per camera pair and this
  // many triangulated joints overall.
  int min_shared_joints = 3;
  int min_birth_joints = 5;
  // Birth candidates closer than this to a track updated in the same frame are
  // duplicates of that track and are dropped.
  double r_duplicate = 0.25;  // m

  /// Throws Config on violated invariants.
  void validate() const;
};

struct PersonTrack {
  int id = 0;
  std::array<Vec3, kJointCount> X{};
  std::array<bool, kJointCount> available{};
  std::array<int, kJointCount> joint_update_frame{};  // -1 if never set
  double existence = 0;
  bool confirmed = false;
  int born_frame = 0;
  int last_update_frame = -1;
  int idle_frames = 0;
  std::vector<int> last_association;  // per camera: detection index or -1

  bool has_joints() const;
  /// Mean of available joints.
  std::optional<Vec3> centroid() const;
};

/// Per-camera association result: (track index, detection index) pairs.
struct CameraAssociation {
  std::vector<Match> matches;
  std::vector<int> unmatched_detections;
  CostMatrix cost;
};

/// Cost matrix of mean pixel error over joints confident in the detection and
/// available in the track, gated by tau_mpjpe, solved with hungarian_assign.
CameraAssociation associate_camera(std::span<const PersonTrack> tracks,
                                   std::span<const PersonDetection> dets,
                                   const CameraCalibration& cal, const TrackerConfig& cfg);

/// Mean per-joint pixel error; nullopt when no joint qualifies.
std::optional<double> mpjpe_cost(const PersonTrack& track, const PersonDetection& det,
                                 const CameraCalibration& cal, const TrackerConfig& cfg);

struct MatchedView {
  int camera_index = 0;
  const PersonDetection* detection = nullptr;
};

/// Pairwise fundamental matrices F[i][j] (x_j^T F x_i = 0); empty entries on the diagonal.
using FundamentalTable = std::vector<std::vector<Mat3>>;
FundamentalTable fundamental_table(const Calibration& calib);

/// Greedy pairwise-consistent view subset for one joint (camera indices into `views`).
std::vector<int> consistent_views(std::span<const MatchedView> views, int joint,
                                  const FundamentalTable& F, const TrackerConfig& cfg);

/// Triangulates each joint from a pairwise-consistent view set; accepted joints are
/// written into the track. Returns the updated joint indices.
std::vector<int> update_triangulated(PersonTrack& track, std::span<const MatchedView> views,
                                     const Calibration& calib, const FundamentalTable& F,
                                     const TrackerConfig& cfg, int frame);

/// Lifts unresolved joints from depth patches and keeps the largest bone-consistent
/// component (triangulated joints act as fixed nodes). Returns the lifted joints.
std::vector<int> depth_lift(PersonTrack& track, std::span<const int> triangulated,
                            std::span<const MatchedView> views, const DepthProvider& depth,
                            const Calibration& calib, const JointSchema& schema,
                            const TrackerConfig& cfg, int frame);

/// Bone plausibility: alpha*L <= |a - b| <= beta*L.
bool bone_ok(const Vec3& a, const Vec3& b, double nominal, const TrackerConfig& cfg);

struct SpawnResult {
  std::vector<int> created_ids;
  std::vector<int> reused_ids;
};

/// Groups unmatched detections across cameras, triangulates hypotheses seen in >= 2
/// cameras and either adopts them into a stale track within r_reuse or creates a track.
SpawnResult spawn_tracks(std::vector<PersonTrack>& tracks, std::span<const CameraDetections> dets,
                         std::span<const std::pair<int, int>> unmatched,  // (camera, detection)
                         std::span<const char> updated_this_frame, const Calibration& calib,
                         const FundamentalTable& F, const TrackerConfig& cfg, int frame,
                         int& next_id);

struct LifecycleResult {
  std::vector<int> confirmed_ids;
  std::vector<int> removed_ids;
};

/// Existence update: +delta_e_up (capped at 1) when updated, *lambda when idle; tracks
/// born this frame keep E_init. Confirms at E >= E_on, removes at E <= E_off or after
/// more than max_inactive_frames idle frames.
LifecycleResult step_lifecycle(std::vector<PersonTrack>& tracks, std::span<const char> updated,
                               int frame, const TrackerConfig& cfg);

/// Owns the track set and runs the per-frame stages in order.
struct TrackerStats {
  long triangulated_joints = 0;
  long lifted_joints = 0;
  int births = 0;
  int reuses = 0;
};

class PersonTracker {
 public:
  PersonTracker(Calibration calib, JointSchema schema, TrackerConfig cfg);

  /// Processes one synchronized frame and returns the confirmed tracks.
  std::vector<PersonTrack> track_frame(int frame, std::span<const CameraDetections> dets,
                                       const DepthProvider* depth);

  const std::vector<PersonTrack>& tracks() const { return tracks_; }
  const Calibration& calibration() const { return calib_; }
  const JointSchema& schema() const { return schema_; }
  const TrackerStats& stats() const { return stats_; }

 private:
  Calibration calib_;
  JointSchema schema_;
  TrackerConfig cfg_;
  FundamentalTable F_;
  std::vector<PersonTrack> tracks_;
  int next_id_ = 1;
  TrackerStats stats_;
};

}  // namespace touchmap
