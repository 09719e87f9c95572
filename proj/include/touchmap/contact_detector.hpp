#pragma once

#include "touchmap/hand_fusion.hpp"
#include "touchmap/semantic_map.hpp"

#include <map>
#include <optional>
#include <vector>

namespace touchmap {

struct ContactConfig {
  double tau_on = 0.12;   // m
  double tau_off = 0.15;  // m
  double ema_alpha = 0.5;
  int min_episode_frames = 3;
  int max_gap_frames = 2;

  /// Throws Config unless 0 < tau_on <= tau_off and 0 < ema_alpha <= 1.
  void validate() const;
};

struct ContactEpisode {
  std::optional<int> person_id;
  Side side = Side::Right;
  int surface_label = 0;
  int t_start = 0;
  int t_stop = 0;  // inclusive
  Vec3 contact_point = Vec3::Zero();
  double min_distance = 0;
  int hand_track_id = -1;
};

/// EMA on anchors; the first observation passes through.
Anchors smooth_anchors(const std::optional<Anchors>& prev, const Anchors& current, double alpha);

/// One hysteresis transition: on when d < tau_on, off when d > tau_off, else hold.
bool hysteresis_step(bool active, double distance, const ContactConfig& cfg);

struct LabelDistance {
  double distance = 0;
  Vec3 point = Vec3::Zero();  // surface point achieving it
};

/// Per present label: min over anchors of the distance to the nearest point of that label.
std::map<int, LabelDistance> label_distances(const Anchors& anchors, const SemanticCloud& cloud);

/// One hand-label distance observation in one frame.
struct ContactSample {
  int frame = 0;
  int hand_track_id = 0;
  Side side = Side::Right;
  std::optional<int> person_id;
  int label = 0;
  double distance = 0;
  Vec3 point = Vec3::Zero();
};

/// Per-hand anchor smoothing state, reset after a hand gap longer than max_gap_frames.
class AnchorSmoother {
 public:
  explicit AnchorSmoother(ContactConfig cfg) : cfg_(cfg) {}
  Anchors update(int hand_track_id, int frame, const Anchors& current);

 private:
  struct Entry {
    Anchors smoothed;
    int frame;
  };
  ContactConfig cfg_;
  std::map<int, Entry> state_;
};

/// Samples for every fused hand against every label present in the cloud, using
/// smoothed anchors.
std::vector<ContactSample> contact_samples(int frame, const std::vector<FusedHand>& hands,
                                           const SemanticCloud& cloud, AnchorSmoother& smoother);

/// Streaming hysteresis plus episode merging. Samples must arrive in non-decreasing frame
/// order. Each episode's person is the most frequent person over its active frames.
class ContactDetector {
 public:
  explicit ContactDetector(ContactConfig cfg);

  /// Returns true when the (hand, label) state machine is active after this sample.
  bool observe(const ContactSample& s);
  /// Closes episodes that can no longer be extended at `frame`.
  std::vector<ContactEpisode> flush_before(int frame);
  /// Closes everything.
  std::vector<ContactEpisode> finish();

 private:
  struct Key {
    int hand;
    int label;
    auto operator<=>(const Key&) const = default;
  };
  struct Open {
    int t_start = 0;
    int last_active = 0;
    double min_distance = 0;
    Vec3 point = Vec3::Zero();
    Side side = Side::Right;
    std::map<int, int> person_counts;  // -1 for unassociated
  };
  struct Machine {
    bool active = false;
    int last_frame = 0;
  };

  std::optional<ContactEpisode> close(const Key& k, const Open& o) const;

  ContactConfig cfg_;
  std::map<Key, Machine> machines_;
  std::map<Key, Open> open_;
  std::vector<ContactEpisode> pending_;
};

/// Merges sorted active frames into inclusive intervals, bridging gaps of at most
/// max_gap_frames and dropping intervals shorter than min_episode_frames.
std::vector<std::pair<int, int>> merge_intervals(const std::vector<int>& active_frames,
                                                 const ContactConfig& cfg);

/// Runs the detector over a complete sample list (sorted by frame).
std::vector<ContactEpisode> detect_episodes(const std::vector<ContactSample>& samples,
                                            const ContactConfig& cfg);

void sort_episodes(std::vector<ContactEpisode>& episodes);

}  // namespace touchmap
