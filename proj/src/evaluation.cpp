#include "touchmap/evaluation.hpp"

#include "touchmap/error.hpp"
#include "touchmap/hungarian.hpp"
#include "touchmap/io.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace touchmap {
namespace {

using nlohmann::json;

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  return out;
}

[[noreturn]] void parse_fail(const std::filesystem::path& path, int line, const std::string& msg) {
  throw Error(ErrorKind::Parse, path.string() + ":" + std::to_string(line) + ": " + msg);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

TrackStream read_tracks(const std::filesystem::path& path) {
  auto in = open_in(path);
  TrackStream out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      TrackRecord r;
      r.id = j.at("id").get<int>();
      r.existence = j.value("E", 1.0);
      const auto& joints = j.at("joints");
      if (joints.size() != kJointCount) parse_fail(path, n, "expected 26 joints");
      for (int k = 0; k < kJointCount; ++k) {
        const auto& q = joints[k];
        if (q.is_null()) continue;
        r.joints[k] = Vec3(q.at(0).get<double>(), q.at(1).get<double>(), q.at(2).get<double>());
        r.available[k] = q.size() < 4 || q.at(3).get<double>() > 0;
      }
      out[j.at("frame").get<int>()].push_back(r);
    } catch (const json::exception& e) {
      parse_fail(path, n, e.what());
    }
  }
  return out;
}

void write_track_line(std::ostream& os, int frame, const TrackRecord& r, bool with_existence) {
  os << "{\"frame\":" << frame << ",\"id\":" << r.id;
  if (with_existence) os << ",\"E\":" << format_fixed(r.existence, 4);
  os << ",\"joints\":[";
  for (int k = 0; k < kJointCount; ++k) {
    if (k) os << ',';
    if (!r.available[k]) {
      os << "null";
      continue;
    }
    os << '[' << format_fixed(r.joints[k].x(), 5) << ',' << format_fixed(r.joints[k].y(), 5) << ','
       << format_fixed(r.joints[k].z(), 5) << ",1]";
  }
  os << "]}\n";
}

std::vector<EpisodeRecord> read_episodes(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<EpisodeRecord> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (n == 1 || line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 9) parse_fail(path, n, "expected 9 fields");
    try {
      EpisodeRecord e;
      if (f[0] != "none") e.person_id = std::stoi(f[0]);
      e.side = side_from_string(f[1]);
      e.surface_label = std::stoi(f[2]);
      e.t_start = std::stoi(f[3]);
      e.t_stop = std::stoi(f[4]);
      e.point = Vec3(std::stod(f[5]), std::stod(f[6]), std::stod(f[7]));
      e.min_distance = std::stod(f[8]);
      if (e.t_stop < e.t_start) parse_fail(path, n, "t_stop before t_start");
      out.push_back(e);
    } catch (const std::logic_error& e) {
      parse_fail(path, n, std::string("bad number: ") + e.what());
    } catch (const Error& e) {
      parse_fail(path, n, e.what());
    }
  }
  return out;
}

void write_episodes_csv(const std::filesystem::path& path, const std::vector<EpisodeRecord>& episodes) {
  auto out = open_out(path);
  out << "person_id,side,surface_label,t_start,t_stop,px,py,pz,min_distance_m\n";
  for (const auto& e : episodes) {
    out << (e.person_id ? std::to_string(*e.person_id) : "none") << ',' << to_string(e.side) << ','
        << e.surface_label << ',' << e.t_start << ',' << e.t_stop << ',' << format_fixed(e.point.x(), 4)
        << ',' << format_fixed(e.point.y(), 4) << ',' << format_fixed(e.point.z(), 4) << ','
        << format_fixed(e.min_distance, 4) << '\n';
  }
}

void write_episodes_jsonl(const std::filesystem::path& path, const std::vector<EpisodeRecord>& episodes) {
  auto out = open_out(path);
  for (const auto& e : episodes) {
    out << "{\"person_id\":" << (e.person_id ? std::to_string(*e.person_id) : "null") << ",\"side\":\""
        << to_string(e.side) << "\",\"surface_label\":" << e.surface_label << ",\"t_start\":" << e.t_start
        << ",\"t_stop\":" << e.t_stop << ",\"contact_point\":[" << format_fixed(e.point.x(), 4) << ','
        << format_fixed(e.point.y(), 4) << ',' << format_fixed(e.point.z(), 4)
        << "],\"min_distance_m\":" << format_fixed(e.min_distance, 4) << "}\n";
  }
}

VisibilityMask read_visibility(const std::filesystem::path& path) {
  VisibilityMask out;
  if (!std::filesystem::exists(path)) return out;
  auto in = open_in(path);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      auto& set = out[j.at("frame").get<int>()];
      for (const auto& h : j.at("hidden_hands"))
        set.emplace(h.at(0).get<int>(), side_from_string(h.at(1).get<std::string>()));
    } catch (const json::exception& e) {
      parse_fail(path, n, e.what());
    }
  }
  return out;
}

EpisodeRecord to_record(const ContactEpisode& e) {
  return {e.person_id, e.side, e.surface_label, e.t_start, e.t_stop, e.contact_point, e.min_distance};
}

std::optional<Vec2> floor_center(const TrackRecord& r, const JointSchema& schema) {
  Vec2 sum = Vec2::Zero();
  int n = 0;
  for (int k : schema.torso)
    if (r.available[k]) {
      sum += r.joints[k].head<2>();
      ++n;
    }
  if (n == 0) return std::nullopt;
  return sum / n;
}

std::vector<FrameCorrespondence> match_tracks(const TrackStream& pred, const TrackStream& gt,
                                              double radius, const JointSchema& schema) {
  std::set<int> frames;
  for (const auto& [f, v] : pred) frames.insert(f);
  for (const auto& [f, v] : gt) frames.insert(f);
  static const std::vector<TrackRecord> none;
  std::vector<FrameCorrespondence> out;
  for (int f : frames) {
    const auto pit = pred.find(f);
    const auto git = gt.find(f);
    const auto& P = pit == pred.end() ? none : pit->second;
    const auto& G = git == gt.end() ? none : git->second;

    FrameCorrespondence c;
    c.frame = f;
    std::vector<std::pair<int, Vec2>> gc, pc;
    for (const auto& g : G)
      if (auto x = floor_center(g, schema)) gc.emplace_back(g.id, *x);
    for (const auto& p : P)
      if (auto x = floor_center(p, schema)) pc.emplace_back(p.id, *x);
    for (const auto& [id, x] : gc) c.gt_ids.push_back(id);
    for (const auto& [id, x] : pc) c.pred_ids.push_back(id);

    CostMatrix cost(static_cast<int>(gc.size()), static_cast<int>(pc.size()));
    for (std::size_t i = 0; i < gc.size(); ++i)
      for (std::size_t j = 0; j < pc.size(); ++j) {
        const double d = (gc[i].second - pc[j].second).norm();
        cost(static_cast<int>(i), static_cast<int>(j)) = d;
        if (d < radius) c.gated.emplace_back(gc[i].first, pc[j].first);
      }
    for (const auto& [i, j] : hungarian_assign(cost, radius)) c.matches.emplace_back(gc[i].first, pc[j].first);
    out.push_back(std::move(c));
  }
  return out;
}

MotMetrics mot_metrics(const std::vector<FrameCorrespondence>& corr) {
  MotMetrics m;
  std::map<int, int> gt_index, pred_index;
  std::map<std::pair<int, int>, long> co;
  long gt_total = 0, pred_total = 0;
  std::map<int, int> last_match;
  std::map<int, std::set<int>> matched_preds;
  for (const auto& c : corr) {
    for (int g : c.gt_ids) gt_index.emplace(g, 0);
    for (int p : c.pred_ids) pred_index.emplace(p, 0);
    gt_total += static_cast<long>(c.gt_ids.size());
    pred_total += static_cast<long>(c.pred_ids.size());
    for (const auto& gp : c.gated) ++co[gp];
    for (const auto& [g, p] : c.matches) {
      auto it = last_match.find(g);
      if (it != last_match.end() && it->second != p) ++m.id_switches;
      last_match[g] = p;
      matched_preds[g].insert(p);
    }
  }
  for (const auto& [g, s] : matched_preds) m.fragments += static_cast<int>(s.size());

  int i = 0;
  for (auto& [id, idx] : gt_index) idx = i++;
  i = 0;
  for (auto& [id, idx] : pred_index) idx = i++;
  CostMatrix cost = CostMatrix::Zero(static_cast<int>(gt_index.size()), static_cast<int>(pred_index.size()));
  for (const auto& [gp, n] : co) cost(gt_index[gp.first], pred_index[gp.second]) = -static_cast<double>(n);
  std::vector<int> gt_ids, pred_ids;
  for (const auto& [id, idx] : gt_index) gt_ids.push_back(id);
  for (const auto& [id, idx] : pred_index) pred_ids.push_back(id);
  // Every pair is admissible so the solver maximises total overlap rather than the
  // number of overlapping pairs; zero-overlap pairs are left out of the map.
  for (const auto& [r, c] : hungarian_assign(cost, 1.0)) {
    if (cost(r, c) == 0) continue;
    m.idtp += static_cast<long>(-cost(r, c));
    m.id_map[gt_ids[r]] = pred_ids[c];
  }
  m.idfn = gt_total - m.idtp;
  m.idfp = pred_total - m.idtp;
  const long denom = 2 * m.idtp + m.idfp + m.idfn;
  m.idf1 = denom == 0 ? 1.0 : 2.0 * m.idtp / denom;
  return m;
}

FrameIdMap frame_id_map(const std::vector<FrameCorrespondence>& corr) {
  FrameIdMap out;
  for (const auto& c : corr)
    for (const auto& [g, p] : c.matches) out[c.frame][p] = g;
  return out;
}

std::set<FrameKey> framewise_positives(const std::vector<EpisodeRecord>& episodes, bool with_label,
                                       const FrameIdMap* ids, const VisibilityMask& hidden) {
  std::set<FrameKey> out;
  for (const auto& e : episodes) {
    for (int f = e.t_start; f <= e.t_stop; ++f) {
      int key;
      bool mapped = true;
      if (!e.person_id) {
        key = -1;
        mapped = false;
      } else if (ids) {
        const auto fit = ids->find(f);
        const auto pit = fit == ids->end() ? std::map<int, int>::const_iterator{} : fit->second.find(*e.person_id);
        if (fit != ids->end() && pit != fit->second.end()) {
          key = pit->second;
        } else {
          key = -2 - *e.person_id;
          mapped = false;
        }
      } else {
        key = *e.person_id;
      }
      if (mapped) {
        const auto hit = hidden.find(f);
        if (hit != hidden.end() && hit->second.count({key, e.side})) continue;
      }
      out.emplace(key, static_cast<int>(e.side), with_label ? e.surface_label : -1, f);
    }
  }
  return out;
}

SetScores compare_sets(const std::set<FrameKey>& pred, const std::set<FrameKey>& gt) {
  SetScores s;
  for (const auto& k : pred) {
    if (gt.count(k)) ++s.tp;
    else ++s.fp;
  }
  s.fn = static_cast<long>(gt.size()) - s.tp;
  return s;
}

ContactMetrics contact_metrics(const std::vector<EpisodeRecord>& pred,
                               const std::vector<EpisodeRecord>& gt, const FrameIdMap& ids,
                               const VisibilityMask& hidden) {
  ContactMetrics m;
  m.gt_episodes = static_cast<int>(gt.size());
  if (gt.empty()) return m;
  m.valid = true;

  auto overlap = [](const EpisodeRecord& a, const EpisodeRecord& b) {
    return a.side == b.side && a.surface_label == b.surface_label && a.t_start <= b.t_stop && b.t_start <= a.t_stop;
  };
  for (const auto& g : gt)
    if (std::any_of(pred.begin(), pred.end(), [&](const EpisodeRecord& p) { return overlap(p, g); }))
      ++m.detected_episodes;
  m.episode_recall = static_cast<double>(m.detected_episodes) / m.gt_episodes;

  const auto bin = compare_sets(framewise_positives(pred, false, &ids, hidden), framewise_positives(gt, false, nullptr, hidden));
  const auto sem = compare_sets(framewise_positives(pred, true, &ids, hidden), framewise_positives(gt, true, nullptr, hidden));
  m.binary_f1 = bin.f1();
  m.binary_iou = bin.iou();
  m.semantic_f1 = sem.f1();
  m.semantic_iou = sem.iou();

  int correct = 0;
  for (const auto& p : pred) {
    std::map<int, int> gt_votes, pred_votes;
    bool matched = false;
    for (const auto& g : gt) {
      if (!overlap(p, g) || !g.person_id) continue;
      matched = true;
      for (int f = std::max(p.t_start, g.t_start); f <= std::min(p.t_stop, g.t_stop); ++f) {
        ++gt_votes[*g.person_id];
        if (!p.person_id) continue;
        const auto fit = ids.find(f);
        if (fit == ids.end()) continue;
        const auto pit = fit->second.find(*p.person_id);
        if (pit != fit->second.end()) ++pred_votes[pit->second];
      }
    }
    if (!matched) continue;
    ++m.matched_pred_episodes;
    // Ties are not broken by id so the score does not depend on how ids are numbered:
    // the episode is correct if some id is a top vote in both tallies.
    auto top = [](const std::map<int, int>& votes) {
      int best_n = 0;
      for (const auto& [id, n] : votes) best_n = std::max(best_n, n);
      std::set<int> ids;
      for (const auto& [id, n] : votes)
        if (n == best_n && n > 0) ids.insert(id);
      return ids;
    };
    const auto truth = top(gt_votes), claimed = top(pred_votes);
    if (std::any_of(claimed.begin(), claimed.end(), [&](int id) { return truth.count(id) > 0; })) ++correct;
  }
  m.identity_accuracy = m.matched_pred_episodes == 0 ? 0.0 : static_cast<double>(correct) / m.matched_pred_episodes;
  return m;
}

std::vector<SweepRow> threshold_sweep(const std::vector<ContactSample>& samples,
                                      const ContactConfig& base, const std::vector<double>& grid,
                                      const std::vector<EpisodeRecord>& gt, const FrameIdMap& ids,
                                      const VisibilityMask& hidden) {
  std::vector<SweepRow> rows;
  const auto gt_set = framewise_positives(gt, false, nullptr, hidden);
  for (double tau : grid) {
    ContactConfig cfg = base;
    cfg.tau_on = tau;
    cfg.tau_off = tau + 0.03;
    std::vector<EpisodeRecord> pred;
    for (const auto& e : detect_episodes(samples, cfg)) pred.push_back(to_record(e));
    const auto s = compare_sets(framewise_positives(pred, false, &ids, hidden), gt_set);
    rows.push_back({tau, s.f1(), s.iou()});
  }
  return rows;
}

std::vector<double> parse_grid(const std::string& spec) {
  std::vector<double> parts;
  std::istringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ':')) {
    try {
      parts.push_back(std::stod(tok));
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::Config, "bad grid '" + spec + "'");
    }
  }
  if (parts.size() == 1) return parts;
  if (parts.size() != 3 || !(parts[2] > 0) || parts[1] < parts[0])
    throw Error(ErrorKind::Config, "grid must be lo:hi:step with step > 0 and hi >= lo");
  std::vector<double> out;
  const int n = static_cast<int>(std::floor((parts[1] - parts[0]) / parts[2] + 0.5));
  for (int i = 0; i <= n; ++i) out.push_back(parts[0] + i * parts[2]);
  return out;
}

double mean_joint_error(const TrackStream& pred, const TrackStream& gt,
                        const std::vector<FrameCorrespondence>& corr, long* count) {
  double sum = 0;
  long n = 0;
  auto find = [](const TrackStream& s, int frame, int id) -> const TrackRecord* {
    const auto it = s.find(frame);
    if (it == s.end()) return nullptr;
    for (const auto& r : it->second)
      if (r.id == id) return &r;
    return nullptr;
  };
  for (const auto& c : corr)
    for (const auto& [g, p] : c.matches) {
      const auto* G = find(gt, c.frame, g);
      const auto* P = find(pred, c.frame, p);
      if (!G || !P) continue;
      for (int k = 0; k < kJointCount; ++k)
        if (G->available[k] && P->available[k]) {
          sum += (G->joints[k] - P->joints[k]).norm();
          ++n;
        }
    }
  if (count) *count = n;
  return n == 0 ? 0.0 : sum / n;
}

void write_report(const std::filesystem::path& dir, const EvalReport& r) {
  std::filesystem::create_directories(dir);
  const auto& c = r.contact;
  const std::vector<std::pair<std::string, std::string>> fields{
      {"idf1", format_fixed(r.mot.idf1, 6)},
      {"id_switches", std::to_string(r.mot.id_switches)},
      {"fragments", std::to_string(r.mot.fragments)},
      {"mean_joint_error_m", format_fixed(r.mean_joint_error_m, 6)},
      {"contact_valid", c.valid ? "true" : "false"},
      {"episode_recall", format_fixed(c.episode_recall, 6)},
      {"binary_contact_f1", format_fixed(c.binary_f1, 6)},
      {"binary_contact_iou", format_fixed(c.binary_iou, 6)},
      {"semantic_contact_f1", format_fixed(c.semantic_f1, 6)},
      {"episode_id_accuracy", format_fixed(c.identity_accuracy, 6)},
      {"gt_episodes", std::to_string(c.gt_episodes)},
      {"detected_episodes", std::to_string(c.detected_episodes)},
      {"matched_pred_episodes", std::to_string(c.matched_pred_episodes)},
  };
  {
    auto out = open_out(dir / "report.json");
    out << "{\n";
    for (std::size_t i = 0; i < fields.size(); ++i)
      out << "  \"" << fields[i].first << "\": " << fields[i].second << (i + 1 < fields.size() ? ",\n" : "\n");
    out << "}\n";
  }
  auto out = open_out(dir / "report.csv");
  for (std::size_t i = 0; i < fields.size(); ++i) out << fields[i].first << (i + 1 < fields.size() ? ',' : '\n');
  for (std::size_t i = 0; i < fields.size(); ++i) out << fields[i].second << (i + 1 < fields.size() ? ',' : '\n');
}

std::string report_summary(const EvalReport& r) {
  std::ostringstream os;
  os << "IDF1   IDSW   Recall   Binary Contact (F1 / IoU)   Semantic Contact F1   Episode ID Acc.\n";
  os << format_fixed(r.mot.idf1, 3) << "  " << r.mot.id_switches << "      "
     << format_fixed(r.contact.episode_recall, 3) << "    " << format_fixed(r.contact.binary_f1, 3) << " / "
     << format_fixed(r.contact.binary_iou, 3) << "               " << format_fixed(r.contact.semantic_f1, 3)
     << "                 " << format_fixed(r.contact.identity_accuracy, 3) << '\n';
  if (!r.contact.valid) os << "(no ground-truth episodes: contact metrics invalid)\n";
  return os.str();
}

}  // namespace touchmap
