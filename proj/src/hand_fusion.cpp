#include "touchmap/hand_fusion.hpp"

#include "touchmap/error.hpp"
#include "touchmap/hungarian.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <tuple>

namespace touchmap {

void HandSchema::validate() const {
  if (vertex_count <= 0) throw Error(ErrorKind::InvalidArgument, "hand vertex_count must be > 0");
  if (palm_indices.empty()) throw Error(ErrorKind::InvalidArgument, "hand schema needs palm indices");
  auto bad = [&](int i) { return i < 0 || i >= vertex_count; };
  if (std::any_of(palm_indices.begin(), palm_indices.end(), bad) ||
      std::any_of(fingertip_indices.begin(), fingertip_indices.end(), bad))
    throw Error(ErrorKind::InvalidArgument, "hand anchor index out of range");
}

Anchors compute_anchors(std::span<const Vec3> vertices, const HandSchema& schema) {
  if (static_cast<int>(vertices.size()) != schema.vertex_count)
    throw Error(ErrorKind::InvalidArgument, "hand has " + std::to_string(vertices.size()) +
                                                " vertices, schema expects " +
                                                std::to_string(schema.vertex_count));
  Anchors a;
  a[0] = Vec3::Zero();
  for (int i : schema.palm_indices) a[0] += vertices[i];
  a[0] /= static_cast<double>(schema.palm_indices.size());
  for (int f = 0; f < 5; ++f) a[f + 1] = vertices[schema.fingertip_indices[f]];
  return a;
}

std::vector<Vec3> to_world(const HandInstance& h, const CameraCalibration& cal) {
  std::vector<Vec3> out;
  out.reserve(h.vertices.size());
  for (const auto& v : h.vertices) out.push_back(cal.to_world(v));
  return out;
}

FusedHand make_candidate(const HandInstance& h, const CameraCalibration& cal,
                         const HandSchema& schema, int frame) {
  FusedHand f;
  f.frame = frame;
  f.side = h.side;
  f.vertices_world = to_world(h, cal);
  f.anchors = compute_anchors(f.vertices_world, schema);
  f.palm_center = f.anchors[0];
  f.sigma_fit = h.sigma_fit;
  f.camera_id = h.camera_id;
  f.source_cameras = {h.camera_id};
  return f;
}

std::vector<std::vector<int>> dbscan(std::span<const Vec3> points, double eps, int min_pts) {
  const int n = static_cast<int>(points.size());
  const double eps2 = eps * eps;
  std::vector<std::vector<int>> nbr(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if ((points[i] - points[j]).squaredNorm() <= eps2) nbr[i].push_back(j);

  std::vector<int> label(n, -1);
  std::vector<std::vector<int>> clusters;
  for (int i = 0; i < n; ++i) {
    if (label[i] >= 0) continue;
    if (static_cast<int>(nbr[i].size()) < min_pts) continue;
    const int c = static_cast<int>(clusters.size());
    clusters.emplace_back();
    std::vector<int> queue{i};
    label[i] = c;
    for (std::size_t q = 0; q < queue.size(); ++q) {
      const int p = queue[q];
      if (static_cast<int>(nbr[p].size()) < min_pts) continue;
      for (int r : nbr[p]) {
        if (label[r] >= 0) continue;
        label[r] = c;
        queue.push_back(r);
      }
    }
  }
  // Noise points become singletons.
  for (int i = 0; i < n; ++i)
    if (label[i] < 0) {
      label[i] = static_cast<int>(clusters.size());
      clusters.emplace_back();
    }
  for (int i = 0; i < n; ++i) clusters[label[i]].push_back(i);
  std::stable_sort(clusters.begin(), clusters.end(),
                   [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return clusters;
}

std::vector<std::vector<int>> cluster_hands(std::span<const FusedHand> hands, double eps, int min_pts) {
  std::vector<std::vector<int>> out;
  for (Side side : {Side::Left, Side::Right}) {
    std::vector<int> idx;
    std::vector<Vec3> pts;
    for (std::size_t i = 0; i < hands.size(); ++i)
      if (hands[i].side == side) {
        idx.push_back(static_cast<int>(i));
        pts.push_back(hands[i].palm_center);
      }
    for (auto& c : dbscan(pts, eps, min_pts)) {
      for (int& m : c) m = idx[m];
      out.push_back(std::move(c));
    }
  }
  return out;
}

FusedHand select_representative(std::span<const FusedHand> members) {
  if (members.empty()) throw Error(ErrorKind::EmptyCluster, "empty hand cluster");
  const FusedHand* best = &members[0];
  for (const auto& m : members)
    if (std::tie(m.sigma_fit, m.camera_id) < std::tie(best->sigma_fit, best->camera_id)) best = &m;
  FusedHand out = *best;
  out.source_cameras.clear();
  for (const auto& m : members) out.source_cameras.push_back(m.camera_id);
  std::sort(out.source_cameras.begin(), out.source_cameras.end());
  return out;
}

void HandAssociationConfig::validate() const {
  if (!(v_max > 0 && delta >= 0 && tau_assoc > 0 && eps > 0))
    throw Error(ErrorKind::Config, "hand association thresholds must be positive");
  if (min_pts < 1 || max_hand_gap_frames < 0) throw Error(ErrorKind::Config, "hand counts out of range");
}

std::optional<SlotKey> side_distance(const PersonTrack& person, Side side, const Vec3& palm,
                                     const JointSchema& schema) {
  const auto& sj = schema.side(side);
  const std::array<int, 3> order{sj.wrist, sj.elbow, sj.shoulder};
  std::optional<SlotKey> best;
  for (int tier = 0; tier < 3; ++tier) {
    const int k = order[tier];
    if (!person.available[k]) continue;
    const double d = (person.X[k] - palm).norm();
    if (!best || d < best->distance) best = SlotKey{tier, d};
  }
  return best;
}

void link_hand_tracks(std::vector<FusedHand>& fused, AssociationState& state, int frame,
                      double dt, const HandAssociationConfig& cfg) {
  for (auto it = state.hand_tracks.begin(); it != state.hand_tracks.end();) {
    if (frame - it->second.last_frame > cfg.max_hand_gap_frames) it = state.hand_tracks.erase(it);
    else ++it;
  }
  std::vector<HandTrackState*> tracks;
  for (auto& [id, t] : state.hand_tracks) tracks.push_back(&t);

  const double inf = std::numeric_limits<double>::infinity();
  CostMatrix cost = CostMatrix::Constant(static_cast<int>(tracks.size()), static_cast<int>(fused.size()), inf);
  for (std::size_t t = 0; t < tracks.size(); ++t) {
    const int elapsed = std::max(1, frame - tracks[t]->last_frame);
    const double gate = cfg.gate(elapsed * dt);
    for (std::size_t h = 0; h < fused.size(); ++h) {
      if (fused[h].side != tracks[t]->side) continue;
      const double d = (fused[h].palm_center - tracks[t]->last_palm).norm();
      if (d < gate) cost(static_cast<int>(t), static_cast<int>(h)) = d;
    }
  }
  for (auto& f : fused) f.hand_track_id = -1;
  for (const auto& [t, h] : hungarian_assign(cost, std::numeric_limits<double>::max()))
    fused[h].hand_track_id = tracks[t]->id;

  for (auto& f : fused) {
    if (f.hand_track_id < 0) {
      HandTrackState s;
      s.id = state.next_hand_track_id++;
      s.side = f.side;
      f.hand_track_id = s.id;
      state.hand_tracks.emplace(s.id, s);
    }
    auto& s = state.hand_tracks.at(f.hand_track_id);
    s.last_palm = f.palm_center;
    s.last_frame = frame;
  }
}

void associate_hands(std::vector<FusedHand>& fused, std::span<const PersonTrack> persons,
                     AssociationState& state, const JointSchema& schema,
                     const HandAssociationConfig& cfg) {
  std::map<int, const PersonTrack*> by_id;
  for (const auto& p : persons) by_id[p.id] = &p;

  struct Holder {
    int hand = -1;
    SlotKey key;
  };
  std::map<std::pair<int, Side>, Holder> slots;
  std::vector<std::optional<int>> assigned(fused.size());

  // Persistence: a linked hand keeps last frame's person while that person is tracked.
  for (std::size_t h = 0; h < fused.size(); ++h) {
    const auto& ht = state.hand_tracks.at(fused[h].hand_track_id);
    if (!ht.person || !by_id.count(*ht.person)) continue;
    const auto prev_slot = state.slots.find({*ht.person, fused[h].side});
    if (prev_slot == state.slots.end() || prev_slot->second.hand_track_id != ht.id) continue;
    const auto key = side_distance(*by_id[*ht.person], fused[h].side, fused[h].palm_center, schema);
    const std::pair slot{*ht.person, fused[h].side};
    if (slots.count(slot)) continue;
    slots[slot] = {static_cast<int>(h),
                   key.value_or(SlotKey{3, std::numeric_limits<double>::infinity()})};
    assigned[h] = *ht.person;
  }

  struct Candidate {
    SlotKey key;
    int hand;
    int person;
  };
  std::vector<Candidate> cands;
  for (std::size_t h = 0; h < fused.size(); ++h)
    for (const auto& p : persons) {
      const auto key = side_distance(p, fused[h].side, fused[h].palm_center, schema);
      if (key && key->distance < cfg.tau_assoc) cands.push_back({*key, static_cast<int>(h), p.id});
    }
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(a.key, a.hand, a.person) < std::tie(b.key, b.hand, b.person);
  });

  // Each eviction strictly lowers the key of the slot it happens in, so this terminates.
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& c : cands) {
      if (assigned[c.hand]) continue;
      const std::pair slot{c.person, fused[c.hand].side};
      auto it = slots.find(slot);
      if (it == slots.end()) {
        slots[slot] = {c.hand, c.key};
        assigned[c.hand] = c.person;
        continue;
      }
      if (c.key < it->second.key) {
        assigned[it->second.hand].reset();
        it->second = {c.hand, c.key};
        assigned[c.hand] = c.person;
        changed = true;
        break;
      }
    }
  }

  state.slots.clear();
  for (std::size_t h = 0; h < fused.size(); ++h) {
    auto& f = fused[h];
    auto& ht = state.hand_tracks.at(f.hand_track_id);
    f.person_id = assigned[h];
    ht.person = assigned[h];
    if (!assigned[h]) continue;
    state.slots[{*assigned[h], f.side}] = {ht.id, f.palm_center, f.frame};
    if (!ht.first_person) ht.first_person = assigned[h];
    else if (*ht.first_person != *assigned[h]) ++state.votes[{*assigned[h], *ht.first_person}];
  }
}

std::map<int, int> stitch_ids(const std::map<std::pair<int, int>, int>& votes,
                              const std::set<std::pair<int, int>>& coexisting, int min_votes) {
  std::vector<std::tuple<int, int, int>> entries;  // (-count, from, to)
  for (const auto& [k, n] : votes)
    if (n >= min_votes && k.first != k.second) entries.emplace_back(-n, k.first, k.second);
  std::sort(entries.begin(), entries.end());

  std::map<int, int> mapping;
  std::set<int> sources, targets;
  for (const auto& [neg, from, to] : entries) {
    if (sources.count(from) || targets.count(to) || targets.count(from) || sources.count(to)) continue;
    if (coexisting.count({std::min(from, to), std::max(from, to)})) continue;
    mapping[from] = to;
    sources.insert(from);
    targets.insert(to);
  }
  return mapping;
}

HandFuser::HandFuser(Calibration calib, HandSchema schema, JointSchema joints,
                     HandAssociationConfig cfg, double fps)
    : calib_(std::move(calib)), schema_(std::move(schema)), joints_(std::move(joints)), cfg_(cfg) {
  schema_.validate();
  cfg_.validate();
  if (!(fps > 0)) throw Error(ErrorKind::Config, "fps must be > 0");
  dt_ = 1.0 / fps;
}

std::vector<FusedHand> HandFuser::fuse_frame(int frame, std::span<const HandInstance> hands,
                                             std::span<const PersonTrack> persons) {
  std::vector<const HandInstance*> sorted;
  for (const auto& h : hands) sorted.push_back(&h);
  std::sort(sorted.begin(), sorted.end(), [](const HandInstance* a, const HandInstance* b) {
    return std::tie(a->camera_id, a->detection_index) < std::tie(b->camera_id, b->detection_index);
  });

  std::vector<FusedHand> candidates;
  for (const auto* h : sorted) candidates.push_back(make_candidate(*h, calib_.cameras.at(h->camera_index), schema_, frame));

  std::vector<FusedHand> fused;
  for (const auto& cluster : cluster_hands(candidates, cfg_.eps, cfg_.min_pts)) {
    std::vector<FusedHand> members;
    for (int m : cluster) members.push_back(candidates[m]);
    fused.push_back(select_representative(members));
  }
  link_hand_tracks(fused, state_, frame, dt_, cfg_);
  associate_hands(fused, persons, state_, joints_, cfg_);
  return fused;
}

}  // namespace touchmap
