#pragma once

#include "touchmap/camera.hpp"
#include "touchmap/joint_schema.hpp"
#include "touchmap/person_tracker.hpp"

#include <array>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace touchmap {

/// Vertex topology metadata: which vertices form the palm and the five fingertips.
struct HandSchema {
  int vertex_count = 778;
  std::vector<int> palm_indices;
  std::array<int, 5> fingertip_indices{};

  /// Throws InvalidArgument on empty palm set or out-of-range indices.
  void validate() const;
};

/// Palm center first, then the five fingertips.
using Anchors = std::array<Vec3, 6>;

Anchors compute_anchors(std::span<const Vec3> vertices, const HandSchema& schema);

struct HandInstance {
  std::string camera_id;
  int camera_index = 0;
  int detection_index = 0;
  Side side = Side::Right;
  std::vector<Vec3> vertices;  // camera frame, meters
  double sigma_fit = 0;
};

struct FusedHand {
  int frame = 0;
  Side side = Side::Right;
  std::vector<Vec3> vertices_world;
  Vec3 palm_center = Vec3::Zero();
  Anchors anchors{};
  double sigma_fit = 0;
  std::string camera_id;  // camera of the member the vertices come from
  std::vector<std::string> source_cameras;
  int hand_track_id = -1;
  std::optional<int> person_id;
};

/// Camera-frame vertices to world frame.
std::vector<Vec3> to_world(const HandInstance& h, const CameraCalibration& cal);

/// A single-camera fusion candidate.
FusedHand make_candidate(const HandInstance& h, const CameraCalibration& cal,
                         const HandSchema& schema, int frame);

/// DBSCAN with neighbourhoods |p - q| <= eps (self included) and core points having at
/// least min_pts neighbours. Noise points come back as singleton clusters. Clusters are
/// ordered by their first point in input order; border points go to the first cluster
/// that reaches them.
std::vector<std::vector<int>> dbscan(std::span<const Vec3> points, double eps, int min_pts);

/// Per-side DBSCAN over palm centers. Returns clusters as indices into `hands`; left-side
/// clusters first.
std::vector<std::vector<int>> cluster_hands(std::span<const FusedHand> hands, double eps, int min_pts);

/// Member with the lowest sigma_fit (ties to the smallest camera id); source_cameras lists
/// every member's camera. Throws EmptyCluster.
FusedHand select_representative(std::span<const FusedHand> members);

struct HandAssociationConfig {
  double v_max = 3.0;       // m/s
  double delta = 0.05;      // m
  double tau_assoc = 0.35;  // m
  double eps = 0.08;        // m, clustering radius
  int min_pts = 1;
  int max_hand_gap_frames = 15;

  double gate(double dt) const { return v_max * dt + delta; }
  void validate() const;
};

struct HandTrackState {
  int id = 0;
  Side side = Side::Right;
  Vec3 last_palm = Vec3::Zero();
  int last_frame = 0;
  std::optional<int> person;             // person in the last frame it was seen
  std::optional<int> first_person;       // first person it was ever associated with
};

struct SlotKey {
  int tier = 3;  // 0 wrist, 1 elbow, 2 shoulder
  double distance = 0;
  auto operator<=>(const SlotKey&) const = default;
};

struct AssociationState {
  struct Slot {
    int hand_track_id = -1;
    Vec3 palm = Vec3::Zero();
    int frame = 0;
  };
  std::map<std::pair<int, Side>, Slot> slots;  // (person id, side)
  std::map<int, HandTrackState> hand_tracks;
  std::map<std::pair<int, int>, int> votes;  // (fragment id, persistent id) -> count
  int next_hand_track_id = 1;
};

/// Closest side joint of `person` to `palm` as (tier, distance); nullopt if none of the
/// side's wrist, elbow or shoulder is available.
std::optional<SlotKey> side_distance(const PersonTrack& person, Side side, const Vec3& palm,
                                     const JointSchema& schema);

/// Links fused hands to hand tracks (same side, within the gate scaled by elapsed frames),
/// creating tracks for the rest and dropping stale ones. Sets hand_track_id.
void link_hand_tracks(std::vector<FusedHand>& fused, AssociationState& state, int frame,
                      double dt, const HandAssociationConfig& cfg);

/// Persistence pass, then greedy slot assignment ranked by (tier, distance) with eviction.
/// Sets person_id, refreshes the slots and casts re-association votes.
void associate_hands(std::vector<FusedHand>& fused, std::span<const PersonTrack> persons,
                     AssociationState& state, const JointSchema& schema,
                     const HandAssociationConfig& cfg);

/// Greedy one-to-one selection by descending count (count >= min_votes). An id is used
/// at most once as a source and once as a target and never in both roles, so no chains
/// form. Pairs listed in `coexisting` (ordered low, high) are skipped.
std::map<int, int> stitch_ids(const std::map<std::pair<int, int>, int>& votes,
                              const std::set<std::pair<int, int>>& coexisting = {},
                              int min_votes = 3);

/// Per-frame coordinator: candidates, clustering, representatives, linking, association.
class HandFuser {
 public:
  HandFuser(Calibration calib, HandSchema schema, JointSchema joints, HandAssociationConfig cfg,
            double fps);

  std::vector<FusedHand> fuse_frame(int frame, std::span<const HandInstance> hands,
                                    std::span<const PersonTrack> persons);

  const AssociationState& state() const { return state_; }

 private:
  Calibration calib_;
  HandSchema schema_;
  JointSchema joints_;
  HandAssociationConfig cfg_;
  double dt_;
  AssociationState state_;
};

}  // namespace touchmap
