#pragma once

#include <string>

namespace fixture {

// One person at a table; the right hand touches the table top between frames 16 and 35.
inline const std::string kTouchScene = R"({
  "frame_count": 50, "seed": 3,
  "room": {"min": [-3, -3, 0], "max": [3, 3, 3]},
  "cameras": [
    {"id": "c0", "position": [2.8, 2.8, 2.6], "look_at": [0, 0, 1]},
    {"id": "c1", "position": [-2.8, 2.8, 2.6], "look_at": [0, 0, 1]},
    {"id": "c2", "position": [-2.8, -2.8, 2.6], "look_at": [0, 0, 1]},
    {"id": "c3", "position": [2.8, -2.8, 2.6], "look_at": [0, 0, 1]}],
  "labels": {"1": "table"},
  "surfaces": [
    {"type": "plane", "label": 0, "point": [0, 0, 0], "normal": [0, 0, 1]},
    {"type": "box", "label": 1, "min": [-2.4, -0.4, 0], "max": [-1.4, 0.4, 1.0]}],
  "hand": {"vertex_count": 32},
  "persons": [
    {"id": 1, "waypoints": [{"frame": 0, "position": [-1.15, 0], "facing_deg": 180}],
     "touches": [{"side": "right", "target": [-1.45, 0.18, 1.0], "label": 1, "start": 10,
                  "reach_frames": 6, "dwell_frames": 20, "retract_frames": 4}]}]
})";

}  // namespace fixture
