#include "touchmap/io.hpp"

#include "touchmap/error.hpp"

#include "json.hpp"

#include <array>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace touchmap {
namespace fs = std::filesystem;
using nlohmann::json;

const CameraCalibration* Calibration::find(const std::string& id) const {
  for (const auto& c : cameras)
    if (c.camera_id == id) return &c;
  return nullptr;
}

int Calibration::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < cameras.size(); ++i)
    if (cameras[i].camera_id == id) return static_cast<int>(i);
  return -1;
}

Calibration read_calibration(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open calibration " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
  }
  Calibration calib;
  try {
    calib.up_axis = j.value("up_axis", std::string("+z"));
    for (const auto& c : j.at("cameras")) {
      CameraCalibration cal;
      cal.camera_id = c.at("camera_id").get<std::string>();
      cal.fx = c.at("fx").get<double>();
      cal.fy = c.at("fy").get<double>();
      cal.cx = c.at("cx").get<double>();
      cal.cy = c.at("cy").get<double>();
      cal.image_width = c.at("image_width").get<int>();
      cal.image_height = c.at("image_height").get<int>();
      const auto& t = c.at("T_cw");
      if (!t.is_array() || t.size() != 16) throw Error(ErrorKind::Parse, "T_cw must have 16 entries");
      for (int r = 0; r < 4; ++r)
        for (int k = 0; k < 4; ++k) cal.T_cw(r, k) = t[r * 4 + k].get<double>();
      cal.validate();
      calib.cameras.push_back(std::move(cal));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
  }
  if (calib.up_axis != "+z") throw Error(ErrorKind::Parse, path.string() + ": only up_axis +z is supported");
  return calib;
}

void write_calibration(const fs::path& path, const Calibration& calib) {
  json j;
  j["up_axis"] = calib.up_axis;
  j["cameras"] = json::array();
  for (const auto& c : calib.cameras) {
    json t = json::array();
    for (int r = 0; r < 4; ++r)
      for (int k = 0; k < 4; ++k) t.push_back(c.T_cw(r, k));
    j["cameras"].push_back({{"camera_id", c.camera_id},
                            {"fx", c.fx},
                            {"fy", c.fy},
                            {"cx", c.cx},
                            {"cy", c.cy},
                            {"image_width", c.image_width},
                            {"image_height", c.image_height},
                            {"T_cw", t}});
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& in, const fs::path& path) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) throw Error(ErrorKind::Parse, path.string() + ": truncated header");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void check_magic(std::istream& in, const char* magic, const fs::path& path) {
  char m[4];
  if (!in.read(m, 4) || std::memcmp(m, magic, 4) != 0)
    throw Error(ErrorKind::Parse, path.string() + ": bad magic, expected " + magic);
}

}  // namespace

LabelGrid read_label_grid(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  check_magic(in, "LBL1", path);
  const auto w = get_u32(in, path), h = get_u32(in, path);
  LabelGrid g(static_cast<int>(w), static_cast<int>(h));
  if (!in.read(reinterpret_cast<char*>(g.data.data()), static_cast<std::streamsize>(g.data.size())))
    throw Error(ErrorKind::Parse, path.string() + ": truncated label data");
  return g;
}

void write_label_grid(const fs::path& path, const LabelGrid& grid) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.write("LBL1", 4);
  put_u32(out, static_cast<std::uint32_t>(grid.width));
  put_u32(out, static_cast<std::uint32_t>(grid.height));
  out.write(reinterpret_cast<const char*>(grid.data.data()), static_cast<std::streamsize>(grid.data.size()));
}

DepthGridMm read_depth_grid(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  check_magic(in, "DEP1", path);
  const auto w = get_u32(in, path), h = get_u32(in, path);
  DepthGridMm g(static_cast<int>(w), static_cast<int>(h));
  std::vector<unsigned char> raw(g.data.size() * 2);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
    throw Error(ErrorKind::Parse, path.string() + ": truncated depth data");
  for (std::size_t i = 0; i < g.data.size(); ++i)
    g.data[i] = static_cast<std::uint16_t>(raw[2 * i] | (raw[2 * i + 1] << 8));
  return g;
}

void write_depth_grid(const fs::path& path, const DepthGridMm& grid) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.write("DEP1", 4);
  put_u32(out, static_cast<std::uint32_t>(grid.width));
  put_u32(out, static_cast<std::uint32_t>(grid.height));
  std::vector<char> raw(grid.data.size() * 2);
  for (std::size_t i = 0; i < grid.data.size(); ++i) {
    raw[2 * i] = static_cast<char>(grid.data[i] & 0xff);
    raw[2 * i + 1] = static_cast<char>(grid.data[i] >> 8);
  }
  out.write(raw.data(), static_cast<std::streamsize>(raw.size()));
}

LabelTable read_label_table(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  LabelTable table;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    int id;
    std::string name;
    if (!(ss >> id)) continue;
    if (!(ss >> name) || id < 0 || id > 255)
      throw Error(ErrorKind::Parse, path.string() + ":" + std::to_string(lineno) + ": expected '<id 0..255> <name>'");
    table[id] = name;
  }
  return table;
}

void write_label_table(const fs::path& path, const LabelTable& table) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  for (const auto& [id, name] : table) out << id << ' ' << name << '\n';
}

std::string format_fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
  std::string s(buf);
  if (s == "-0" || s.find_first_not_of("-0.") == std::string::npos) {
    // Normalize negative zero.
    if (!s.empty() && s[0] == '-') s.erase(0, 1);
  }
  return s;
}

}  // namespace touchmap
