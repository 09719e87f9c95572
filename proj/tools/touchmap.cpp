#include "touchmap/error.hpp"
#include "touchmap/evaluation.hpp"
#include "touchmap/pipeline.hpp"
#include "touchmap/simulator.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace touchmap;

namespace {

int exit_code(const Error& e) { return e.kind() == ErrorKind::Config ? 3 : 2; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorKind::Config, "cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

EvalReport evaluate_dirs(const fs::path& pred, const fs::path& gt, double radius, std::vector<FrameCorrespondence>* corr_out,
                         TrackStream* pred_tracks_out = nullptr) {
  const auto schema = JointSchema::halpe26();
  const TrackStream pt = read_tracks(pred / "tracks.jsonl");
  const TrackStream gtr = read_tracks(gt / "tracks.jsonl");
  const auto corr = match_tracks(pt, gtr, radius, schema);
  EvalReport r;
  r.mot = mot_metrics(corr);
  r.mean_joint_error_m = mean_joint_error(pt, gtr, corr, &r.joint_pairs);
  r.contact = contact_metrics(read_episodes(pred / "episodes.csv"), read_episodes(gt / "episodes.csv"), frame_id_map(corr),
                              read_visibility(gt / "visibility.jsonl"));
  if (corr_out) *corr_out = corr;
  if (pred_tracks_out) *pred_tracks_out = pt;
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-camera person tracking and hand-surface contact episodes"};
  app.require_subcommand(1);

  auto* sim = app.add_subcommand("simulate", "Render a synthetic scene into a dataset directory");
  std::string scene_path, sim_out;
  std::optional<std::uint64_t> seed;
  sim->add_option("--scene", scene_path, "Scene JSON")->required();
  sim->add_option("--out", sim_out, "Output dataset directory")->required();
  sim->add_option("--seed", seed, "Override the scene seed");

  auto* run = app.add_subcommand("run", "Track persons, fuse hands and detect contacts");
  RunOptions ro;
  std::string run_config;
  run->add_option("--calib", ro.calib, "Calibration JSON")->required();
  run->add_option("--in", ro.in, "Dataset directory")->required();
  run->add_option("--out", ro.out, "Output directory")->required();
  run->add_option("--config", run_config, "Pipeline config JSON");
  run->add_flag("--static-map", ro.static_map, "Build the semantic map once");
  run->add_flag("--no-stitch", ro.no_stitch, "Skip end-of-sequence ID stitching (single pass)");
  run->add_flag("--contact-trace", ro.contact_trace, "Write per-frame hand-surface distances");

  auto* eval = app.add_subcommand("evaluate", "Score predictions against ground truth");
  std::string pred_dir, gt_dir, eval_out;
  double radius = 0.2;
  eval->add_option("--pred", pred_dir, "Run output directory")->required();
  eval->add_option("--gt", gt_dir, "Ground-truth directory")->required();
  eval->add_option("--out", eval_out, "Report directory")->required();
  eval->add_option("--radius", radius, "Center matching radius (m)");

  auto* sweep = app.add_subcommand("sweep", "Contact F1/IoU over a tau_on grid");
  std::string sweep_in, sweep_gt, grid = "0.02:0.40:0.02", sweep_out, sweep_config;
  sweep->add_option("--in", sweep_in, "Run output directory (with contact_trace.csv)")->required();
  sweep->add_option("--gt", sweep_gt, "Ground-truth directory")->required();
  sweep->add_option("--grid", grid, "lo:hi:step");
  sweep->add_option("--out", sweep_out, "Output CSV")->required();
  sweep->add_option("--config", sweep_config, "Pipeline config JSON (contact settings)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) {
      std::string text = slurp(scene_path);
      if (seed) {
        auto j = nlohmann::json::parse(text, nullptr, false);
        if (j.is_discarded()) throw Error(ErrorKind::Config, "scene: not valid JSON");
        j["seed"] = *seed;
        text = j.dump(2) + "\n";
      }
      const SceneConfig scene = parse_scene(text);
      emit_dataset(scene, text, sim_out);
      std::cout << "simulated " << scene.frame_count << " frames, " << scene.persons.size() << " persons, "
                << scene.cameras.size() << " cameras -> " << sim_out << '\n';
    } else if (*run) {
      const PipelineConfig cfg = run_config.empty() ? parse_pipeline_config("{}") : read_pipeline_config(run_config);
      const auto s = run_pipeline(ro, cfg, std::cerr);
      std::cout << "frames " << s.frames << ", track records " << s.track_records << ", episodes " << s.episodes
                << ", stitched ids " << s.stitched.size() << '\n';
    } else if (*eval) {
      const EvalReport r = evaluate_dirs(pred_dir, gt_dir, radius, nullptr);
      write_report(eval_out, r);
      std::cout << report_summary(r);
    } else if (*sweep) {
      const PipelineConfig cfg = sweep_config.empty() ? parse_pipeline_config("{}") : read_pipeline_config(sweep_config);
      const auto values = parse_grid(grid);
      const auto schema = JointSchema::halpe26();
      const auto corr = match_tracks(read_tracks(fs::path(sweep_in) / "tracks.jsonl"),
                                     read_tracks(fs::path(sweep_gt) / "tracks.jsonl"), cfg.eval_radius, schema);
      const auto rows = threshold_sweep(read_contact_trace(fs::path(sweep_in) / "contact_trace.csv"), cfg.contact, values,
                                        read_episodes(fs::path(sweep_gt) / "episodes.csv"), frame_id_map(corr),
                                        read_visibility(fs::path(sweep_gt) / "visibility.jsonl"));
      std::ofstream out(sweep_out, std::ios::binary);
      if (!out) throw Error(ErrorKind::Io, "cannot write " + sweep_out);
      out << "tau_on_m,f1,iou\n";
      for (const auto& r : rows) out << format_fixed(r.tau_on, 3) << ',' << format_fixed(r.f1, 6) << ',' << format_fixed(r.iou, 6) << '\n';
      std::cout << "wrote " << rows.size() << " rows to " << sweep_out << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
