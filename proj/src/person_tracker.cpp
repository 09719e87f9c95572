#include "touchmap/person_tracker.hpp"

#include "touchmap/error.hpp"
#include "touchmap/triangulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace touchmap {

void TrackerConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::Config, m); };
  if (!(tau_joint > 0 && tau_joint <= 1)) fail("tau_joint must be in (0, 1]");
  if (!(alpha < 1 && 1 < beta && alpha > 0)) fail("bone ratios need 0 < alpha < 1 < beta");
  if (!(e_off > 0 && e_off < e_on && e_on <= 1)) fail("need 0 < e_off < e_on <= 1");
  if (!(lambda > 0 && lambda < 1)) fail("lambda must be in (0, 1)");
  if (v_min < 2) fail("v_min must be >= 2");
  if (!(e_init > 0 && e_init <= 1)) fail("e_init must be in (0, 1]");
  if (!(delta_e_up > 0)) fail("delta_e_up must be > 0");
  if (patch_w < 1) fail("patch_w must be >= 1");
  if (!(tau_mpjpe > 0 && tau_epi > 0 && eps_tri > 0 && eps_init > 0 && sigma_max_sq >= 0 && r_reuse >= 0))
    fail("thresholds must be positive");
  if (max_inactive_frames < 0 || min_shared_joints < 1 || min_birth_joints < 1) fail("counts must be positive");
}

bool PersonTrack::has_joints() const {
  return std::any_of(available.begin(), available.end(), [](bool b) { return b; });
}

std::optional<Vec3> PersonTrack::centroid() const {
  Vec3 sum = Vec3::Zero();
  int n = 0;
  for (int k = 0; k < kJointCount; ++k)
    if (available[k]) {
      sum += X[k];
      ++n;
    }
  if (n == 0) return std::nullopt;
  return sum / n;
}

std::optional<double> mpjpe_cost(const PersonTrack& track, const PersonDetection& det,
                                 const CameraCalibration& cal, const TrackerConfig& cfg) {
  double sum = 0;
  int n = 0;
  for (int k = 0; k < kJointCount; ++k) {
    const auto& j = det.joints[k];
    if (!track.available[k] || j.confidence < cfg.tau_joint) continue;
    const Vec3 pc = cal.to_camera(track.X[k]);
    if (pc.z() <= 1e-6) continue;
    sum += (project(track.X[k], cal) - j.pixel).norm();
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

CameraAssociation associate_camera(std::span<const PersonTrack> tracks,
                                   std::span<const PersonDetection> dets,
                                   const CameraCalibration& cal, const TrackerConfig& cfg) {
  CameraAssociation out;
  const double inf = std::numeric_limits<double>::infinity();
  out.cost = CostMatrix::Constant(static_cast<int>(tracks.size()), static_cast<int>(dets.size()), inf);
  for (std::size_t t = 0; t < tracks.size(); ++t) {
    if (!tracks[t].has_joints()) continue;
    for (std::size_t d = 0; d < dets.size(); ++d)
      if (auto c = mpjpe_cost(tracks[t], dets[d], cal, cfg))
        out.cost(static_cast<int>(t), static_cast<int>(d)) = *c;
  }
  out.matches = hungarian_assign(out.cost, cfg.tau_mpjpe);
  std::vector<char> used(dets.size(), 0);
  for (const auto& m : out.matches) used[m.second] = 1;
  for (std::size_t d = 0; d < dets.size(); ++d)
    if (!used[d]) out.unmatched_detections.push_back(static_cast<int>(d));
  return out;
}

FundamentalTable fundamental_table(const Calibration& calib) {
  const std::size_t n = calib.cameras.size();
  FundamentalTable F(n, std::vector<Mat3>(n, Mat3::Zero()));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) F[i][j] = fundamental_matrix(calib.cameras[i], calib.cameras[j]);
  return F;
}

std::vector<int> consistent_views(std::span<const MatchedView> views, int joint,
                                  const FundamentalTable& F, const TrackerConfig& cfg) {
  std::vector<int> visible;
  for (std::size_t v = 0; v < views.size(); ++v)
    if (views[v].detection->joints[joint].confidence >= cfg.tau_joint) visible.push_back(static_cast<int>(v));
  if (static_cast<int>(visible.size()) < 2) return {};

  auto dist = [&](int a, int b) {
    const auto& va = views[a];
    const auto& vb = views[b];
    return epipolar_distance(va.detection->joints[joint].pixel, vb.detection->joints[joint].pixel,
                             F[va.camera_index][vb.camera_index]);
  };

  double best = std::numeric_limits<double>::infinity();
  int sa = -1, sb = -1;
  for (std::size_t i = 0; i < visible.size(); ++i)
    for (std::size_t j = i + 1; j < visible.size(); ++j) {
      const double d = dist(visible[i], visible[j]);
      if (d < best) {
        best = d;
        sa = visible[i];
        sb = visible[j];
      }
    }
  if (sa < 0 || best > cfg.tau_epi) return {};

  std::vector<int> set{sa, sb};
  for (int v : visible) {
    if (v == sa || v == sb) continue;
    const bool ok = std::all_of(set.begin(), set.end(), [&](int m) { return dist(v, m) <= cfg.tau_epi; });
    if (ok) set.push_back(v);
  }
  std::sort(set.begin(), set.end());
  return set;
}

std::vector<int> update_triangulated(PersonTrack& track, std::span<const MatchedView> views,
                                     const Calibration& calib, const FundamentalTable& F,
                                     const TrackerConfig& cfg, int frame) {
  std::vector<int> updated;
  for (int k = 0; k < kJointCount; ++k) {
    const auto set = consistent_views(views, k, F, cfg);
    if (static_cast<int>(set.size()) < cfg.v_min) continue;
    std::vector<WeightedObservation> obs;
    for (int v : set) {
      const auto& j = views[v].detection->joints[k];
      obs.push_back({&calib.cameras[views[v].camera_index], j.pixel, j.confidence});
    }
    try {
      const auto res = triangulate_weighted(obs);
      if (!(res.mean_reprojection_error < cfg.eps_tri)) continue;
      track.X[k] = res.point;
      track.available[k] = true;
      track.joint_update_frame[k] = frame;
      updated.push_back(k);
    } catch (const Error&) {
      // Degenerate geometry: the joint falls through to depth lifting.
    }
  }
  return updated;
}

bool bone_ok(const Vec3& a, const Vec3& b, double nominal, const TrackerConfig& cfg) {
  const double len = (a - b).norm();
  return cfg.alpha * nominal <= len && len <= cfg.beta * nominal;
}

std::vector<int> depth_lift(PersonTrack& track, std::span<const int> triangulated,
                            std::span<const MatchedView> views, const DepthProvider& depth,
                            const Calibration& calib, const JointSchema& schema,
                            const TrackerConfig& cfg, int frame) {
  struct Node {
    bool present = false;
    bool fixed = false;
    Vec3 X = Vec3::Zero();
    double confidence = 0;
  };
  std::array<Node, kJointCount> nodes{};
  for (int k : triangulated) {
    nodes[k].present = nodes[k].fixed = true;
    nodes[k].X = track.X[k];
    for (const auto& v : views) nodes[k].confidence = std::max(nodes[k].confidence, v.detection->joints[k].confidence);
  }

  bool any_candidate = false;
  for (int k = 0; k < kJointCount; ++k) {
    if (nodes[k].fixed) continue;
    double best_s = -1, best_var = 0;
    for (const auto& v : views) {
      const auto& j = v.detection->joints[k];
      if (j.confidence < cfg.tau_joint) continue;
      const auto& cal = calib.cameras[v.camera_index];
      const auto patch = depth_patch(depth, v.camera_index, j.pixel.x(), j.pixel.y(), cfg.patch_w,
                                     cal.image_width, cal.image_height);
      if (!patch || patch->variance > cfg.sigma_max_sq) continue;
      if (j.confidence > best_s || (j.confidence == best_s && patch->variance < best_var)) {
        best_s = j.confidence;
        best_var = patch->variance;
        nodes[k].X = backproject(j.pixel.x(), j.pixel.y(), patch->mean, cal);
        nodes[k].confidence = j.confidence;
        nodes[k].present = true;
      }
    }
    any_candidate = any_candidate || nodes[k].present;
  }
  if (!any_candidate) return {};

  std::array<int, kJointCount> parent;
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& b : schema.bones) {
    if (!nodes[b.a].present || !nodes[b.b].present) continue;
    if (bone_ok(nodes[b.a].X, nodes[b.b].X, b.nominal_length, cfg)) parent[find(b.a)] = find(b.b);
  }

  std::array<int, kJointCount> size{};
  std::array<double, kJointCount> top_conf{};
  for (int k = 0; k < kJointCount; ++k) {
    if (!nodes[k].present) continue;
    const int r = find(k);
    ++size[r];
    top_conf[r] = std::max(top_conf[r], nodes[k].confidence);
  }
  int best_root = -1;
  for (int k = 0; k < kJointCount; ++k) {
    if (!nodes[k].present || find(k) != k) continue;
    if (best_root < 0 || size[k] > size[best_root] ||
        (size[k] == size[best_root] && top_conf[k] > top_conf[best_root]))
      best_root = k;
  }

  std::vector<int> lifted;
  for (int k = 0; k < kJointCount; ++k) {
    if (!nodes[k].present || nodes[k].fixed || find(k) != best_root) continue;
    track.X[k] = nodes[k].X;
    track.available[k] = true;
    track.joint_update_frame[k] = frame;
    lifted.push_back(k);
  }
  return lifted;
}

SpawnResult spawn_tracks(std::vector<PersonTrack>& tracks, std::span<const CameraDetections> dets,
                         std::span<const std::pair<int, int>> unmatched,
                         std::span<const char> updated_this_frame, const Calibration& calib,
                         const FundamentalTable& F, const TrackerConfig& cfg, int frame,
                         int& next_id) {
  SpawnResult result;
  const int n = static_cast<int>(unmatched.size());
  auto det_of = [&](int i) -> const PersonDetection& {
    return dets[unmatched[i].first].persons[unmatched[i].second];
  };
  auto cam_of = [&](int i) { return dets[unmatched[i].first].camera_index; };

  // Pairwise affinity: mean epipolar distance over shared confident joints.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> aff(n, std::vector<double>(n, inf));
  struct Pair {
    double d;
    int a, b;
  };
  std::vector<Pair> pairs;
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      if (cam_of(a) == cam_of(b)) continue;
      const auto& da = det_of(a);
      const auto& db = det_of(b);
      double sum = 0;
      int shared = 0;
      for (int k = 0; k < kJointCount; ++k) {
        if (da.joints[k].confidence < cfg.tau_joint || db.joints[k].confidence < cfg.tau_joint) continue;
        sum += epipolar_distance(da.joints[k].pixel, db.joints[k].pixel, F[cam_of(a)][cam_of(b)]);
        ++shared;
      }
      if (shared < cfg.min_shared_joints) continue;
      aff[a][b] = aff[b][a] = sum / shared;
      if (aff[a][b] <= cfg.tau_epi) pairs.push_back({aff[a][b], a, b});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) {
    return std::tie(x.d, x.a, x.b) < std::tie(y.d, y.a, y.b);
  });

  // Greedy grouping: merge two groups when cameras are disjoint and every evaluable
  // cross pair is epipolar-consistent.
  std::vector<int> group(n);
  std::iota(group.begin(), group.end(), 0);
  std::vector<std::vector<int>> members(n);
  for (int i = 0; i < n; ++i) members[i] = {i};
  for (const auto& p : pairs) {
    const int ga = group[p.a], gb = group[p.b];
    if (ga == gb) continue;
    bool ok = true;
    for (int x : members[ga]) {
      for (int y : members[gb]) {
        if (cam_of(x) == cam_of(y)) ok = false;
        else if (std::isfinite(aff[x][y]) && aff[x][y] > cfg.tau_epi) ok = false;
      }
    }
    if (!ok) continue;
    const int keep = std::min(ga, gb), drop = std::max(ga, gb);
    for (int y : members[drop]) {
      group[y] = keep;
      members[keep].push_back(y);
    }
    members[drop].clear();
  }

  struct Candidate {
    std::vector<int> members;
    std::array<Vec3, kJointCount> X{};
    std::array<bool, kJointCount> ok{};
    Vec3 centroid = Vec3::Zero();
  };
  std::vector<Candidate> candidates;
  for (int g = 0; g < n; ++g) {
    if (members[g].size() < 2) continue;
    Candidate c;
    c.members = members[g];
    std::sort(c.members.begin(), c.members.end());
    int kept = 0;
    for (int k = 0; k < kJointCount; ++k) {
      std::vector<WeightedObservation> obs;
      for (int m : c.members) {
        const auto& j = det_of(m).joints[k];
        if (j.confidence >= cfg.tau_joint) obs.push_back({&calib.cameras[cam_of(m)], j.pixel, j.confidence});
      }
      if (obs.size() < 2) continue;
      try {
        const auto res = triangulate_weighted(obs);
        if (res.mean_reprojection_error < cfg.eps_init) {
          c.X[k] = res.point;
          c.ok[k] = true;
          c.centroid += res.point;
          ++kept;
        }
      } catch (const Error&) {
      }
    }
    if (kept < cfg.min_birth_joints) continue;
    c.centroid /= kept;
    candidates.push_back(std::move(c));
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.members.size() != b.members.size()) return a.members.size() > b.members.size();
    return a.members.front() < b.members.front();
  });

  std::vector<char> updated(updated_this_frame.begin(), updated_this_frame.end());
  updated.resize(tracks.size(), 0);
  for (const auto& c : candidates) {
    bool duplicate = false;
    int reuse = -1;
    double reuse_d = inf;
    for (std::size_t t = 0; t < tracks.size(); ++t) {
      const auto tc = tracks[t].centroid();
      if (!tc) continue;
      const double d = (*tc - c.centroid).norm();
      if (updated[t]) {
        if (d < cfg.r_duplicate) duplicate = true;
      } else if (d < cfg.r_reuse && d < reuse_d) {
        reuse_d = d;
        reuse = static_cast<int>(t);
      }
    }
    if (duplicate) continue;
    if (reuse >= 0) {
      auto& tr = tracks[reuse];
      for (int k = 0; k < kJointCount; ++k) {
        if (!c.ok[k]) continue;
        tr.X[k] = c.X[k];
        tr.available[k] = true;
        tr.joint_update_frame[k] = frame;
      }
      updated[reuse] = 1;
      result.reused_ids.push_back(tr.id);
      continue;
    }
    PersonTrack tr;
    tr.id = next_id++;
    tr.X = c.X;
    tr.available = c.ok;
    tr.joint_update_frame.fill(-1);
    for (int k = 0; k < kJointCount; ++k)
      if (c.ok[k]) tr.joint_update_frame[k] = frame;
    tr.existence = cfg.e_init;
    tr.confirmed = tr.existence >= cfg.e_on;
    tr.born_frame = frame;
    tr.last_update_frame = frame;
    tr.last_association.assign(calib.cameras.size(), -1);
    for (int m : c.members) tr.last_association[cam_of(m)] = unmatched[m].second;
    tracks.push_back(std::move(tr));
    updated.push_back(1);
    result.created_ids.push_back(tracks.back().id);
  }
  return result;
}

LifecycleResult step_lifecycle(std::vector<PersonTrack>& tracks, std::span<const char> updated,
                               int frame, const TrackerConfig& cfg) {
  LifecycleResult out;
  std::vector<PersonTrack> kept;
  kept.reserve(tracks.size());
  for (std::size_t t = 0; t < tracks.size(); ++t) {
    auto& tr = tracks[t];
    const bool up = t < updated.size() && updated[t];
    if (tr.born_frame == frame) {
      // Newborn tracks start at E_init.
    } else if (up) {
      tr.existence = std::min(1.0, tr.existence + cfg.delta_e_up);
      tr.last_update_frame = frame;
      tr.idle_frames = 0;
    } else {
      tr.existence *= cfg.lambda;
      ++tr.idle_frames;
    }
    if (!tr.confirmed && tr.existence >= cfg.e_on) {
      tr.confirmed = true;
      out.confirmed_ids.push_back(tr.id);
    }
    if (tr.existence <= cfg.e_off || tr.idle_frames > cfg.max_inactive_frames) {
      out.removed_ids.push_back(tr.id);
      continue;
    }
    kept.push_back(std::move(tr));
  }
  tracks = std::move(kept);
  return out;
}

PersonTracker::PersonTracker(Calibration calib, JointSchema schema, TrackerConfig cfg)
    : calib_(std::move(calib)), schema_(std::move(schema)), cfg_(cfg) {
  cfg_.validate();
  schema_.validate();
  F_ = fundamental_table(calib_);
}

std::vector<PersonTrack> PersonTracker::track_frame(int frame, std::span<const CameraDetections> dets,
                                                    const DepthProvider* depth) {
  const std::size_t n = tracks_.size();
  std::vector<std::vector<MatchedView>> views(n);
  std::vector<std::pair<int, int>> unmatched;
  for (auto& t : tracks_) t.last_association.assign(calib_.cameras.size(), -1);

  for (std::size_t p = 0; p < dets.size(); ++p) {
    const auto& cd = dets[p];
    const auto& cal = calib_.cameras.at(cd.camera_index);
    const auto assoc = associate_camera(tracks_, cd.persons, cal, cfg_);
    for (const auto& [t, d] : assoc.matches) {
      views[t].push_back({cd.camera_index, &cd.persons[d]});
      tracks_[t].last_association[cd.camera_index] = d;
    }
    for (int d : assoc.unmatched_detections) unmatched.emplace_back(static_cast<int>(p), d);
  }

  std::vector<char> updated(n, 0);
  for (std::size_t t = 0; t < n; ++t) {
    if (views[t].empty()) continue;
    const auto tri = update_triangulated(tracks_[t], views[t], calib_, F_, cfg_, frame);
    std::vector<int> lifted;
    if (depth) lifted = depth_lift(tracks_[t], tri, views[t], *depth, calib_, schema_, cfg_, frame);
    updated[t] = !tri.empty() || !lifted.empty();
    stats_.triangulated_joints += static_cast<long>(tri.size());
    stats_.lifted_joints += static_cast<long>(lifted.size());
  }

  const auto spawn = spawn_tracks(tracks_, dets, unmatched, updated, calib_, F_, cfg_, frame, next_id_);
  updated.resize(tracks_.size(), 0);
  stats_.births += static_cast<int>(spawn.created_ids.size());
  stats_.reuses += static_cast<int>(spawn.reused_ids.size());
  for (int id : spawn.reused_ids)
    for (std::size_t t = 0; t < tracks_.size(); ++t)
      if (tracks_[t].id == id) updated[t] = 1;

  step_lifecycle(tracks_, updated, frame, cfg_);

  std::vector<PersonTrack> out;
  for (const auto& t : tracks_)
    if (t.confirmed) out.push_back(t);
  return out;
}

}  // namespace touchmap
