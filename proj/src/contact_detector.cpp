#include "touchmap/contact_detector.hpp"

#include "touchmap/error.hpp"

#include <algorithm>
#include <limits>
#include <tuple>

namespace touchmap {

void ContactConfig::validate() const {
  if (!(tau_on > 0 && tau_off >= tau_on)) throw Error(ErrorKind::Config, "need 0 < tau_on <= tau_off");
  if (!(ema_alpha > 0 && ema_alpha <= 1)) throw Error(ErrorKind::Config, "ema_alpha must be in (0, 1]");
  if (min_episode_frames < 1 || max_gap_frames < 0)
    throw Error(ErrorKind::Config, "min_episode_frames >= 1 and max_gap_frames >= 0 required");
}

Anchors smooth_anchors(const std::optional<Anchors>& prev, const Anchors& current, double alpha) {
  if (!prev) return current;
  Anchors out;
  for (int i = 0; i < 6; ++i) out[i] = alpha * current[i] + (1 - alpha) * (*prev)[i];
  return out;
}

bool hysteresis_step(bool active, double distance, const ContactConfig& cfg) {
  if (!active) return distance < cfg.tau_on;
  return !(distance > cfg.tau_off);
}

std::map<int, LabelDistance> label_distances(const Anchors& anchors, const SemanticCloud& cloud) {
  std::map<int, LabelDistance> out;
  for (int label : cloud.present_labels()) {
    LabelDistance best{std::numeric_limits<double>::infinity(), Vec3::Zero()};
    for (const auto& a : anchors) {
      const auto hit = cloud.nearest_with_label(a, label);
      if (hit && hit->distance < best.distance) best = {hit->distance, hit->point};
    }
    out[label] = best;
  }
  return out;
}

Anchors AnchorSmoother::update(int hand_track_id, int frame, const Anchors& current) {
  auto it = state_.find(hand_track_id);
  std::optional<Anchors> prev;
  if (it != state_.end() && frame - it->second.frame - 1 <= cfg_.max_gap_frames) prev = it->second.smoothed;
  const Anchors s = smooth_anchors(prev, current, cfg_.ema_alpha);
  state_[hand_track_id] = {s, frame};
  return s;
}

std::vector<ContactSample> contact_samples(int frame, const std::vector<FusedHand>& hands,
                                           const SemanticCloud& cloud, AnchorSmoother& smoother) {
  std::vector<ContactSample> out;
  for (const auto& h : hands) {
    const Anchors a = smoother.update(h.hand_track_id, frame, h.anchors);
    if (cloud.empty()) continue;
    for (const auto& [label, ld] : label_distances(a, cloud))
      out.push_back({frame, h.hand_track_id, h.side, h.person_id, label, ld.distance, ld.point});
  }
  return out;
}

ContactDetector::ContactDetector(ContactConfig cfg) : cfg_(cfg) { cfg_.validate(); }

bool ContactDetector::observe(const ContactSample& s) {
  const Key k{s.hand_track_id, s.label};
  auto [mit, fresh] = machines_.try_emplace(k);
  Machine& m = mit->second;
  if (!fresh && s.frame - m.last_frame - 1 > cfg_.max_gap_frames) m.active = false;
  m.active = hysteresis_step(m.active, s.distance, cfg_);
  m.last_frame = s.frame;
  if (!m.active) return false;

  auto it = open_.find(k);
  if (it != open_.end() && s.frame - it->second.last_active - 1 > cfg_.max_gap_frames) {
    if (auto e = close(k, it->second)) pending_.push_back(*e);
    open_.erase(it);
    it = open_.end();
  }
  if (it == open_.end()) {
    Open o;
    o.t_start = s.frame;
    o.min_distance = std::numeric_limits<double>::infinity();
    o.side = s.side;
    it = open_.insert_or_assign(k, o).first;
  }
  Open& o = it->second;
  o.last_active = s.frame;
  if (s.distance < o.min_distance) {
    o.min_distance = s.distance;
    o.point = s.point;
  }
  ++o.person_counts[s.person_id.value_or(-1)];
  return true;
}

std::optional<ContactEpisode> ContactDetector::close(const Key& k, const Open& o) const {
  if (o.last_active - o.t_start + 1 < cfg_.min_episode_frames) return std::nullopt;
  ContactEpisode e;
  e.hand_track_id = k.hand;
  e.surface_label = k.label;
  e.side = o.side;
  e.t_start = o.t_start;
  e.t_stop = o.last_active;
  e.contact_point = o.point;
  e.min_distance = o.min_distance;
  int best = -1, best_n = -1;
  for (const auto& [p, n] : o.person_counts) {
    // Most frequent; a real person wins a tie against "none", then the smaller id.
    if (n > best_n || (n == best_n && best == -1 && p != -1)) {
      best = p;
      best_n = n;
    }
  }
  if (best >= 0) e.person_id = best;
  return e;
}

std::vector<ContactEpisode> ContactDetector::flush_before(int frame) {
  std::vector<ContactEpisode> out = std::move(pending_);
  pending_.clear();
  for (auto it = open_.begin(); it != open_.end();) {
    if (frame - it->second.last_active - 1 > cfg_.max_gap_frames) {
      if (auto e = close(it->first, it->second)) out.push_back(*e);
      it = open_.erase(it);
    } else {
      ++it;
    }
  }
  // A machine idle longer than the gap would be reset on its next sample anyway.
  std::erase_if(machines_, [&](const auto& kv) { return frame - kv.second.last_frame - 1 > cfg_.max_gap_frames; });
  return out;
}

std::vector<ContactEpisode> ContactDetector::finish() {
  std::vector<ContactEpisode> out = std::move(pending_);
  pending_.clear();
  for (const auto& [k, o] : open_)
    if (auto e = close(k, o)) out.push_back(*e);
  open_.clear();
  return out;
}

std::vector<std::pair<int, int>> merge_intervals(const std::vector<int>& active_frames,
                                                 const ContactConfig& cfg) {
  std::vector<std::pair<int, int>> out;
  auto emit = [&](int a, int b) {
    if (b - a + 1 >= cfg.min_episode_frames) out.emplace_back(a, b);
  };
  if (active_frames.empty()) return out;
  int start = active_frames[0], last = active_frames[0];
  for (std::size_t i = 1; i < active_frames.size(); ++i) {
    const int f = active_frames[i];
    if (f - last - 1 > cfg.max_gap_frames) {
      emit(start, last);
      start = f;
    }
    last = f;
  }
  emit(start, last);
  return out;
}

std::vector<ContactEpisode> detect_episodes(const std::vector<ContactSample>& samples,
                                            const ContactConfig& cfg) {
  ContactDetector det(cfg);
  std::vector<ContactEpisode> out;
  int current = std::numeric_limits<int>::min();
  for (const auto& s : samples) {
    if (s.frame != current) {
      for (auto& e : det.flush_before(s.frame)) out.push_back(std::move(e));
      current = s.frame;
    }
    det.observe(s);
  }
  for (auto& e : det.finish()) out.push_back(std::move(e));
  sort_episodes(out);
  return out;
}

void sort_episodes(std::vector<ContactEpisode>& episodes) {
  std::sort(episodes.begin(), episodes.end(), [](const ContactEpisode& a, const ContactEpisode& b) {
    return std::make_tuple(a.t_start, a.person_id.value_or(-1), a.side, a.surface_label, a.hand_track_id) <
           std::make_tuple(b.t_start, b.person_id.value_or(-1), b.side, b.surface_label, b.hand_track_id);
  });
}

}  // namespace touchmap
