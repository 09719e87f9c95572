#pragma once

#include "touchmap/contact_detector.hpp"
#include "touchmap/hand_fusion.hpp"
#include "touchmap/person_tracker.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace touchmap {

struct PipelineConfig {
  TrackerConfig tracker;
  ContactConfig contact;
  HandAssociationConfig fusion;
  double voxel_size = 0.010;  // m
  double eval_radius = 0.2;   // m
  int stride = 2;             // px, label-grid sampling step for the semantic map
  bool static_map = false;
  std::uint64_t seed = 1;
  int min_stitch_votes = 3;

  void validate() const;
};

/// JSON: {"tracker": {...}, "contact": {...}, "fusion": {...}, "voxel_size": ..., ...}
/// with keys named after the config fields. Unknown keys are rejected (Config).
PipelineConfig read_pipeline_config(const std::filesystem::path& path);
PipelineConfig parse_pipeline_config(const std::string& text);

struct RunOptions {
  std::filesystem::path calib;
  std::filesystem::path in;
  std::filesystem::path out;
  bool static_map = false;
  bool no_stitch = false;
  bool contact_trace = false;
};

struct RunSummary {
  int frames = 0;
  int missing_frames = 0;
  int track_records = 0;
  int episodes = 0;
  std::map<int, int> stitched;
  TrackerStats tracker;
};

/// Runs every stage frame by frame and writes tracks.jsonl, hand_tracks.jsonl,
/// episodes.csv, episodes.jsonl, semantic_cloud.txt, run_log.json and, on request,
/// contact_trace.csv into options.out.
RunSummary run_pipeline(const RunOptions& options, const PipelineConfig& cfg, std::ostream& log);

/// contact_trace.csv rows as detector samples.
std::vector<ContactSample> read_contact_trace(const std::filesystem::path& path);

}  // namespace touchmap
