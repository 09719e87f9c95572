#pragma once

#include "touchmap/camera.hpp"
#include "touchmap/contact_detector.hpp"
#include "touchmap/joint_schema.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace touchmap {

/// One person in one frame, as stored in tracks.jsonl (predicted or ground truth).
struct TrackRecord {
  int id = 0;
  std::array<Vec3, kJointCount> joints{};
  std::array<bool, kJointCount> available{};
  double existence = 1.0;
};

using TrackStream = std::map<int, std::vector<TrackRecord>>;  // frame -> persons

/// Episode row of episodes.csv; person_id is empty for unassociated hands.
struct EpisodeRecord {
  std::optional<int> person_id;
  Side side = Side::Right;
  int surface_label = 0;
  int t_start = 0;
  int t_stop = 0;
  Vec3 point = Vec3::Zero();
  double min_distance = 0;
};

/// (person id, side) pairs whose hand is not visible, per frame.
using VisibilityMask = std::map<int, std::set<std::pair<int, Side>>>;

TrackStream read_tracks(const std::filesystem::path& path);
void write_track_line(std::ostream& os, int frame, const TrackRecord& r, bool with_existence);
std::vector<EpisodeRecord> read_episodes(const std::filesystem::path& path);
void write_episodes_csv(const std::filesystem::path& path, const std::vector<EpisodeRecord>& episodes);
void write_episodes_jsonl(const std::filesystem::path& path, const std::vector<EpisodeRecord>& episodes);
VisibilityMask read_visibility(const std::filesystem::path& path);

EpisodeRecord to_record(const ContactEpisode& e);

/// Mean of available torso joints projected on the floor (z dropped).
std::optional<Vec2> floor_center(const TrackRecord& r, const JointSchema& schema);

struct FrameCorrespondence {
  int frame = 0;
  std::vector<int> gt_ids;
  std::vector<int> pred_ids;
  std::vector<std::pair<int, int>> matches;  // (gt id, pred id), per-frame Hungarian
  std::vector<std::pair<int, int>> gated;    // every (gt id, pred id) closer than the radius
};

/// Per frame: Hungarian over planar center distances with pairs at d >= radius forbidden.
std::vector<FrameCorrespondence> match_tracks(const TrackStream& pred, const TrackStream& gt,
                                              double radius, const JointSchema& schema);

struct MotMetrics {
  double idf1 = 0;
  long idtp = 0, idfp = 0, idfn = 0;
  int id_switches = 0;
  int fragments = 0;  // sum over gt ids of distinct matched predicted ids
  std::map<int, int> id_map;  // gt id -> predicted id under the global bijection
};

/// IDF1 over the optimal global bijection on gated co-occurrence counts; IDSW counts
/// frames where a gt id's matched prediction differs from its previous matched one.
MotMetrics mot_metrics(const std::vector<FrameCorrespondence>& corr);

struct ContactMetrics {
  bool valid = false;  // false when there are no ground-truth episodes
  double episode_recall = 0;
  double binary_f1 = 0;
  double binary_iou = 0;
  double semantic_f1 = 0;
  double semantic_iou = 0;
  double identity_accuracy = 0;
  int gt_episodes = 0;
  int detected_episodes = 0;
  int matched_pred_episodes = 0;
};

/// Per-frame predicted-to-gt id translation from the Hungarian matches.
using FrameIdMap = std::map<int, std::map<int, int>>;  // frame -> pred id -> gt id
FrameIdMap frame_id_map(const std::vector<FrameCorrespondence>& corr);

ContactMetrics contact_metrics(const std::vector<EpisodeRecord>& pred,
                               const std::vector<EpisodeRecord>& gt, const FrameIdMap& ids,
                               const VisibilityMask& hidden);

struct SetScores {
  long tp = 0, fp = 0, fn = 0;
  double f1() const { return tp + fp + fn == 0 ? 1.0 : 2.0 * tp / (2.0 * tp + fp + fn); }
  double iou() const { return tp + fp + fn == 0 ? 1.0 : static_cast<double>(tp) / (tp + fp + fn); }
};

/// Framewise positives as comparable keys. Binary keys carry label -1.
using FrameKey = std::tuple<int, int, int, int>;  // (person key, side, label, frame)
std::set<FrameKey> framewise_positives(const std::vector<EpisodeRecord>& episodes, bool with_label,
                                       const FrameIdMap* ids, const VisibilityMask& hidden);
SetScores compare_sets(const std::set<FrameKey>& pred, const std::set<FrameKey>& gt);

struct SweepRow {
  double tau_on = 0;
  double f1 = 0;
  double iou = 0;
};

/// Re-runs hysteresis and merging on cached samples per tau_on (tau_off = tau_on + 0.03).
std::vector<SweepRow> threshold_sweep(const std::vector<ContactSample>& samples,
                                      const ContactConfig& base, const std::vector<double>& grid,
                                      const std::vector<EpisodeRecord>& gt, const FrameIdMap& ids,
                                      const VisibilityMask& hidden);

/// Grid lo, lo+step, ... up to hi (inclusive within half a step).
std::vector<double> parse_grid(const std::string& spec);

struct EvalReport {
  MotMetrics mot;
  ContactMetrics contact;
  double mean_joint_error_m = 0;
  long joint_pairs = 0;
};

/// Mean 3D joint error over per-frame matched pairs and joints available in both.
double mean_joint_error(const TrackStream& pred, const TrackStream& gt,
                        const std::vector<FrameCorrespondence>& corr, long* count = nullptr);

void write_report(const std::filesystem::path& dir, const EvalReport& r);
std::string report_summary(const EvalReport& r);

}  // namespace touchmap
