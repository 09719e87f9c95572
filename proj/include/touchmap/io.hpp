#pragma once

#include "touchmap/camera.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace touchmap {

/// Row-major image grid.
template <typename T>
struct Grid {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Grid() = default;
  Grid(int w, int h, T fill = T{}) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  T& at(int u, int v) { return data[static_cast<std::size_t>(v) * width + u]; }
  const T& at(int u, int v) const { return data[static_cast<std::size_t>(v) * width + u]; }
  bool contains(int u, int v) const { return u >= 0 && v >= 0 && u < width && v < height; }
};

using LabelGrid = Grid<std::uint8_t>;
using DepthGridMm = Grid<std::uint16_t>;  // millimeters, 0 = invalid

using LabelTable = std::map<int, std::string>;

struct Calibration {
  std::string up_axis = "+z";
  std::vector<CameraCalibration> cameras;

  const CameraCalibration* find(const std::string& id) const;
  int index_of(const std::string& id) const;  // -1 if absent
};

// Calibration: JSON {"up_axis": "+z", "cameras": [{camera_id, fx, fy, cx, cy,
// image_width, image_height, T_cw: 16 numbers row-major}]}.
Calibration read_calibration(const std::filesystem::path& path);
void write_calibration(const std::filesystem::path& path, const Calibration& calib);

// LBL1: magic, u32 width, u32 height, width*height u8 labels, row-major.
LabelGrid read_label_grid(const std::filesystem::path& path);
void write_label_grid(const std::filesystem::path& path, const LabelGrid& grid);

// DEP1: magic, u32 width, u32 height, width*height u16 little-endian millimeters.
DepthGridMm read_depth_grid(const std::filesystem::path& path);
void write_depth_grid(const std::filesystem::path& path, const DepthGridMm& grid);

// Label table: one "id name" pair per line; '#' starts a comment.
LabelTable read_label_table(const std::filesystem::path& path);
void write_label_table(const std::filesystem::path& path, const LabelTable& table);

/// Fixed-precision decimal rendering used by every text writer.
std::string format_fixed(double value, int decimals);

}  // namespace touchmap
