#pragma once

#include "touchmap/hand_fusion.hpp"
#include "touchmap/io.hpp"
#include "touchmap/person_tracker.hpp"

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace touchmap {

/// Everything observed in one synchronized frame.
struct FrameInput {
  int frame = 0;
  std::vector<CameraDetections> bodies;  // one entry per camera record
  std::vector<HandInstance> hands;
};

// detections.jsonl: one line per (frame, camera), frames non-decreasing:
// {"frame": f, "camera_id": "cam0",
//  "persons": [[[u, v, c] x 26], ...],            c = 0 marks a missing joint
//  "hands": [{"side": "left", "sigma_fit": s, "vertices": [x0, y0, z0, x1, ...]}]}
void write_detection_line(std::ostream& os, int frame, const std::string& camera_id,
                          const std::vector<PersonDetection>& persons,
                          const std::vector<HandInstance>& hands);

/// Streams detections.jsonl frame by frame. Parse errors carry file and line.
class DetectionReader {
 public:
  DetectionReader(const std::filesystem::path& path, const Calibration& calib);

  /// Next frame present in the stream, or nullopt at end of file.
  std::optional<FrameInput> next();

 private:
  bool read_line();

  std::filesystem::path path_;
  const Calibration& calib_;
  std::ifstream in_;
  int line_no_ = 0;
  std::optional<std::pair<int, std::pair<CameraDetections, std::vector<HandInstance>>>> pending_;
  int last_frame_ = -1;
};

}  // namespace touchmap
