#include "touchmap/pipeline.hpp"

#include "touchmap/error.hpp"
#include "touchmap/evaluation.hpp"
#include "touchmap/io.hpp"
#include "touchmap/semantic_map.hpp"
#include "touchmap/simulator.hpp"
#include "touchmap/stream_io.hpp"

#include "json.hpp"

#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <variant>

namespace touchmap {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

using FieldRef = std::variant<double*, int*, bool*, std::uint64_t*>;

void apply_fields(const json& j, const std::map<std::string, FieldRef>& fields, const std::string& section) {
  if (!j.is_object()) throw Error(ErrorKind::Config, "config: section '" + section + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    const auto it = fields.find(key);
    if (it == fields.end()) throw Error(ErrorKind::Config, "config: unknown key '" + section + key + "'");
    try {
      std::visit([&](auto* p) { *p = value.get<std::remove_pointer_t<decltype(p)>>(); }, it->second);
    } catch (const json::exception&) {
      throw Error(ErrorKind::Config, "config: bad value for '" + section + key + "'");
    }
  }
}

// Per-person id placeholder in buffered lines; replaced once stitching is known.
constexpr char kIdMark = '\x01';

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw Error(ErrorKind::Io, "cannot write " + p.string());
  return os;
}

std::string vec_json(const Vec3& v, int decimals) {
  return "[" + format_fixed(v.x(), decimals) + "," + format_fixed(v.y(), decimals) + "," + format_fixed(v.z(), decimals) + "]";
}

/// Buffered writer: lines carry the raw person id in front so the id can be rewritten.
class IdStream {
 public:
  IdStream(fs::path final_path, bool buffered)
      : final_(std::move(final_path)), tmp_(final_.string() + ".tmp"), buffered_(buffered),
        os_(open_out(buffered ? tmp_ : final_)) {}

  /// `line` contains kIdMark where the person id goes; `id` < 0 renders as null.
  void write(int id, const std::string& line, const char* null_text = "null") {
    if (buffered_) {
      os_ << id << '|' << null_text << '|' << line;
      return;
    }
    os_ << substitute(line, id, null_text);
  }

  void finish(const std::map<int, int>& mapping) {
    os_.close();
    if (!buffered_) return;
    std::ifstream in(tmp_);
    auto out = open_out(final_);
    std::string row;
    while (std::getline(in, row)) {
      const auto a = row.find('|');
      const auto b = row.find('|', a + 1);
      int id = std::stoi(row.substr(0, a));
      const auto it = mapping.find(id);
      if (it != mapping.end()) id = it->second;
      out << substitute(row.substr(b + 1), id, row.substr(a + 1, b - a - 1)) << '\n';
    }
    in.close();
    fs::remove(tmp_);
  }

 private:
  static std::string substitute(std::string line, int id, const std::string& null_text) {
    const auto pos = line.find(kIdMark);
    if (pos != std::string::npos) line.replace(pos, 1, id >= 0 ? std::to_string(id) : null_text);
    return line;
  }

  fs::path final_, tmp_;
  bool buffered_;
  std::ofstream os_;
};

struct GridIndex {
  std::map<int, std::set<std::string>> frames;  // frame -> camera ids with both grids
};

GridIndex index_grids(const fs::path& dir) {
  GridIndex gi;
  if (!fs::is_directory(dir)) return gi;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() != ".lbl") continue;
    const std::string stem = e.path().stem().string();
    const auto us = stem.rfind('_');
    if (us == std::string::npos) continue;
    int frame;
    try {
      frame = std::stoi(stem.substr(us + 1));
    } catch (const std::logic_error&) {
      continue;
    }
    if (fs::exists(dir / (stem + ".dep"))) gi.frames[frame].insert(stem.substr(0, us));
  }
  return gi;
}

}  // namespace

void PipelineConfig::validate() const {
  tracker.validate();
  contact.validate();
  fusion.validate();
  if (!(voxel_size > 0)) throw Error(ErrorKind::Config, "voxel_size must be > 0");
  if (!(eval_radius > 0)) throw Error(ErrorKind::Config, "eval_radius must be > 0");
  if (stride < 1) throw Error(ErrorKind::Config, "stride must be >= 1");
  if (min_stitch_votes < 1) throw Error(ErrorKind::Config, "min_stitch_votes must be >= 1");
}

PipelineConfig parse_pipeline_config(const std::string& text) {
  PipelineConfig c;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Config, std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorKind::Config, "config: top level must be an object");
  auto& t = c.tracker;
  const std::map<std::string, FieldRef> tracker{
      {"tau_joint", &t.tau_joint}, {"tau_mpjpe", &t.tau_mpjpe}, {"tau_epi", &t.tau_epi},
      {"v_min", &t.v_min}, {"eps_tri", &t.eps_tri}, {"eps_init", &t.eps_init},
      {"patch_w", &t.patch_w}, {"sigma_max_sq", &t.sigma_max_sq}, {"alpha", &t.alpha},
      {"beta", &t.beta}, {"lambda", &t.lambda}, {"e_init", &t.e_init},
      {"delta_e_up", &t.delta_e_up}, {"e_on", &t.e_on}, {"e_off", &t.e_off},
      {"r_reuse", &t.r_reuse}, {"max_inactive_frames", &t.max_inactive_frames},
      {"min_shared_joints", &t.min_shared_joints}, {"min_birth_joints", &t.min_birth_joints},
      {"r_duplicate", &t.r_duplicate}};
  auto& k = c.contact;
  const std::map<std::string, FieldRef> contact{
      {"tau_on", &k.tau_on}, {"tau_off", &k.tau_off}, {"ema_alpha", &k.ema_alpha},
      {"min_episode_frames", &k.min_episode_frames}, {"max_gap_frames", &k.max_gap_frames}};
  auto& f = c.fusion;
  const std::map<std::string, FieldRef> fusion{
      {"v_max", &f.v_max}, {"delta", &f.delta}, {"tau_assoc", &f.tau_assoc}, {"eps", &f.eps},
      {"min_pts", &f.min_pts}, {"max_hand_gap_frames", &f.max_hand_gap_frames}};
  const std::map<std::string, FieldRef> top{
      {"voxel_size", &c.voxel_size}, {"eval_radius", &c.eval_radius}, {"stride", &c.stride},
      {"static_map", &c.static_map}, {"seed", &c.seed}, {"min_stitch_votes", &c.min_stitch_votes}};

  json rest = json::object();
  for (const auto& [key, value] : j.items()) {
    if (key == "tracker") apply_fields(value, tracker, "tracker.");
    else if (key == "contact") apply_fields(value, contact, "contact.");
    else if (key == "fusion") apply_fields(value, fusion, "fusion.");
    else rest[key] = value;
  }
  apply_fields(rest, top, "");
  c.validate();
  return c;
}

PipelineConfig read_pipeline_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Config, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_pipeline_config(ss.str());
}

std::vector<ContactSample> read_contact_trace(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string() + " (run with --contact-trace)");
  std::vector<ContactSample> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (n == 1 || line.empty()) continue;
    std::stringstream ss(line);
    std::string frame, hand, side, person, label, dist;
    if (!std::getline(ss, frame, ',') || !std::getline(ss, hand, ',') || !std::getline(ss, side, ',') ||
        !std::getline(ss, person, ',') || !std::getline(ss, label, ',') || !std::getline(ss, dist, ','))
      throw Error(ErrorKind::Parse, path.string() + ":" + std::to_string(n) + ": expected 6 fields");
    try {
      ContactSample s;
      s.frame = std::stoi(frame);
      s.hand_track_id = std::stoi(hand);
      s.side = side_from_string(side);
      if (person != "none") s.person_id = std::stoi(person);
      s.label = std::stoi(label);
      s.distance = std::stod(dist);
      out.push_back(s);
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::Parse, path.string() + ":" + std::to_string(n) + ": bad number");
    }
  }
  return out;
}

RunSummary run_pipeline(const RunOptions& opt, const PipelineConfig& cfg_in, std::ostream& log) {
  PipelineConfig cfg = cfg_in;
  if (opt.static_map) cfg.static_map = true;
  cfg.validate();
  RunSummary summary;

  const Calibration calib = read_calibration(opt.calib);
  const LabelTable labels = fs::exists(opt.in / "labels.txt") ? read_label_table(opt.in / "labels.txt") : LabelTable{};
  const HandSchema hand_schema =
      fs::exists(opt.in / "hand_schema.json") ? read_hand_schema(opt.in / "hand_schema.json") : blob_hand_schema(778);
  double fps = 30;
  int frame_count = -1;
  if (fs::exists(opt.in / "meta.json")) {
    std::ifstream mi(opt.in / "meta.json");
    try {
      const json m = json::parse(mi);
      fps = m.value("fps", fps);
      frame_count = m.value("frame_count", frame_count);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::Parse, (opt.in / "meta.json").string() + ": " + e.what());
    }
  }

  std::optional<SceneRenderer> scene;
  if (fs::exists(opt.in / "scene.json")) {
    SceneConfig sc = read_scene(opt.in / "scene.json");
    if (scene_calibration(sc).cameras.size() == calib.cameras.size()) scene.emplace(std::move(sc));
  }
  const GridIndex grids = index_grids(opt.in / "grids");

  fs::create_directories(opt.out);
  const bool buffered = !opt.no_stitch;
  IdStream tracks_out(opt.out / "tracks.jsonl", buffered);
  IdStream hands_out(opt.out / "hand_tracks.jsonl", buffered);
  std::optional<IdStream> trace_out;
  if (opt.contact_trace) {
    trace_out.emplace(opt.out / "contact_trace.csv", buffered);
    trace_out->write(-1, "frame,hand_track_id,side,person_id,surface_label,distance_m\n");
  }

  PersonTracker tracker(calib, JointSchema::halpe26(), cfg.tracker);
  HandFuser fuser(calib, hand_schema, JointSchema::halpe26(), cfg.fusion, fps);
  AnchorSmoother smoother(cfg.contact);
  ContactDetector detector(cfg.contact);
  std::vector<ContactEpisode> episodes;
  std::set<std::pair<int, int>> coexisting;
  SemanticCloud cloud;
  bool have_cloud = false;

  auto build_map = [&](int frame, GridDepthProvider& depth) {
    std::vector<std::vector<LabeledPoint>> clouds;
    for (const auto& cam_id : grids.frames.at(frame)) {
      const int ci = calib.index_of(cam_id);
      if (ci < 0) continue;
      const std::string stem = cam_id + "_" + std::to_string(frame);
      const LabelGrid lg = read_label_grid(opt.in / "grids" / (stem + ".lbl"));
      depth.set(ci, read_depth_grid(opt.in / "grids" / (stem + ".dep")));
      auto pts = backproject_labeled(lg, depth, ci, calib.cameras[ci], cfg.stride);
      if (!labels.empty())
        std::erase_if(pts, [&](const LabeledPoint& p) { return !labels.count(p.label); });
      clouds.push_back(std::move(pts));
    }
    if (cfg.static_map && have_cloud) return;
    cloud = fuse_clouds(clouds, cfg.voxel_size, frame, labels);
    have_cloud = true;
  };

  auto process = [&](const FrameInput& in) {
    const int f = in.frame;
    std::optional<GridDepthProvider> grid_depth;
    std::optional<SceneDepthProvider> scene_depth;
    const DepthProvider* depth = nullptr;
    if (grids.frames.count(f)) {
      grid_depth.emplace();
      build_map(f, *grid_depth);
      depth = &*grid_depth;
    } else if (scene) {
      scene_depth.emplace(*scene, f);
      depth = &*scene_depth;
    }

    const auto confirmed = tracker.track_frame(f, in.bodies, depth);
    for (std::size_t a = 0; a < confirmed.size(); ++a)
      for (std::size_t b = a + 1; b < confirmed.size(); ++b)
        coexisting.emplace(std::min(confirmed[a].id, confirmed[b].id), std::max(confirmed[a].id, confirmed[b].id));
    auto fused = fuser.fuse_frame(f, in.hands, confirmed);

    for (const auto& t : confirmed) {
      TrackRecord r{t.id, t.X, t.available, t.existence};
      std::ostringstream os;
      write_track_line(os, f, r, true);
      std::string line = os.str();
      const std::string key = "\"id\":" + std::to_string(t.id);
      line.replace(line.find(key), key.size(), std::string("\"id\":") + kIdMark);
      tracks_out.write(t.id, line);
      ++summary.track_records;
    }
    for (const auto& h : fused) {
      std::ostringstream os;
      os << "{\"frame\":" << f << ",\"hand_track_id\":" << h.hand_track_id << ",\"side\":\"" << to_string(h.side)
         << "\",\"person_id\":" << kIdMark << ",\"source_cameras\":[";
      for (std::size_t i = 0; i < h.source_cameras.size(); ++i) os << (i ? "," : "") << '"' << h.source_cameras[i] << '"';
      os << "],\"sigma_fit\":" << format_fixed(h.sigma_fit, 6) << ",\"palm_center\":" << vec_json(h.palm_center, 4)
         << ",\"anchors\":[";
      for (int i = 0; i < 6; ++i) os << (i ? "," : "") << vec_json(h.anchors[i], 4);
      os << "]}\n";
      hands_out.write(h.person_id.value_or(-1), os.str());
    }

    for (auto& e : detector.flush_before(f)) episodes.push_back(std::move(e));
    if (have_cloud) {
      for (const auto& s : contact_samples(f, fused, cloud, smoother)) {
        detector.observe(s);
        if (trace_out) {
          std::ostringstream os;
          os << f << ',' << s.hand_track_id << ',' << to_string(s.side) << ',' << kIdMark << ',' << s.label << ','
             << format_fixed(std::min(s.distance, 1.0), 5) << '\n';
          trace_out->write(s.person_id.value_or(-1), os.str(), "none");
        }
      }
    }
    ++summary.frames;
  };

  DetectionReader reader(opt.in / "detections.jsonl", calib);
  int expected = 0;
  auto fill_missing = [&](int until) {
    for (; expected < until; ++expected) {
      ++summary.missing_frames;
      process(FrameInput{expected, {}, {}});
    }
  };
  while (auto in = reader.next()) {
    fill_missing(in->frame);
    process(*in);
    expected = in->frame + 1;
  }
  if (frame_count >= 0) fill_missing(frame_count);
  if (summary.missing_frames > 0) log << "warning: " << summary.missing_frames << " frames without detections\n";

  for (auto& e : detector.finish()) episodes.push_back(std::move(e));

  summary.tracker = tracker.stats();
  const auto& votes = fuser.state().votes;
  if (!opt.no_stitch) summary.stitched = stitch_ids(votes, coexisting, cfg.min_stitch_votes);
  tracks_out.finish(summary.stitched);
  hands_out.finish(summary.stitched);
  if (trace_out) trace_out->finish(summary.stitched);

  std::vector<EpisodeRecord> records;
  for (auto& e : episodes) {
    if (e.person_id) {
      const auto it = summary.stitched.find(*e.person_id);
      if (it != summary.stitched.end()) e.person_id = it->second;
    }
  }
  sort_episodes(episodes);
  for (const auto& e : episodes) records.push_back(to_record(e));
  write_episodes_csv(opt.out / "episodes.csv", records);
  write_episodes_jsonl(opt.out / "episodes.jsonl", records);
  summary.episodes = static_cast<int>(records.size());
  write_cloud_text(opt.out / "semantic_cloud.txt", cloud);

  auto lo = open_out(opt.out / "run_log.json");
  lo << "{\"seed\": " << cfg.seed << ", \"frames\": " << summary.frames << ", \"missing_frames\": " << summary.missing_frames
     << ", \"track_records\": " << summary.track_records << ", \"episodes\": " << summary.episodes << ", \"stitched\": {";
  bool first = true;
  for (const auto& [a, b] : summary.stitched) {
    lo << (first ? "" : ", ") << '"' << a << "\": " << b;
    first = false;
  }
  lo << "}, \"triangulated_joints\": " << summary.tracker.triangulated_joints
     << ", \"lifted_joints\": " << summary.tracker.lifted_joints << ", \"births\": " << summary.tracker.births
     << ", \"reuses\": " << summary.tracker.reuses << ", \"votes\": [";
  first = true;
  for (const auto& [k, n] : votes) {
    lo << (first ? "" : ", ") << '[' << k.first << ", " << k.second << ", " << n << ']';
    first = false;
  }
  lo << "]}\n";
  return summary;
}

}  // namespace touchmap
