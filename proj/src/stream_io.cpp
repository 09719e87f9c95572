#include "touchmap/stream_io.hpp"

#include "touchmap/error.hpp"

#include "json.hpp"

namespace touchmap {

using nlohmann::json;

void write_detection_line(std::ostream& os, int frame, const std::string& camera_id,
                          const std::vector<PersonDetection>& persons,
                          const std::vector<HandInstance>& hands) {
  os << "{\"frame\":" << frame << ",\"camera_id\":\"" << camera_id << "\",\"persons\":[";
  for (std::size_t p = 0; p < persons.size(); ++p) {
    if (p) os << ',';
    os << '[';
    for (int k = 0; k < kJointCount; ++k) {
      const auto& j = persons[p].joints[k];
      if (k) os << ',';
      if (j.confidence <= 0) {
        os << "[0,0,0]";
        continue;
      }
      os << '[' << format_fixed(j.pixel.x(), 3) << ',' << format_fixed(j.pixel.y(), 3) << ','
         << format_fixed(j.confidence, 3) << ']';
    }
    os << ']';
  }
  os << "],\"hands\":[";
  for (std::size_t h = 0; h < hands.size(); ++h) {
    if (h) os << ',';
    os << "{\"side\":\"" << to_string(hands[h].side) << "\",\"sigma_fit\":" << format_fixed(hands[h].sigma_fit, 6)
       << ",\"vertices\":[";
    for (std::size_t v = 0; v < hands[h].vertices.size(); ++v) {
      const auto& x = hands[h].vertices[v];
      if (v) os << ',';
      os << format_fixed(x.x(), 4) << ',' << format_fixed(x.y(), 4) << ',' << format_fixed(x.z(), 4);
    }
    os << "]}";
  }
  os << "]}\n";
}

DetectionReader::DetectionReader(const std::filesystem::path& path, const Calibration& calib)
    : path_(path), calib_(calib), in_(path) {
  if (!in_) throw Error(ErrorKind::Io, "cannot open " + path.string());
}

bool DetectionReader::read_line() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_no_;
    if (line.empty()) continue;
    auto fail = [&](const std::string& msg) -> void {
      throw Error(ErrorKind::Parse, path_.string() + ":" + std::to_string(line_no_) + ": " + msg);
    };
    try {
      const json j = json::parse(line);
      const int frame = j.at("frame").get<int>();
      if (frame < last_frame_) fail("frames must be non-decreasing");
      last_frame_ = frame;
      const std::string cam = j.at("camera_id").get<std::string>();
      const int ci = calib_.index_of(cam);
      if (ci < 0) fail("camera '" + cam + "' is not in the calibration");

      CameraDetections cd;
      cd.camera_index = ci;
      for (const auto& p : j.at("persons")) {
        if (p.size() != kJointCount) fail("person needs 26 joints");
        PersonDetection d;
        for (int k = 0; k < kJointCount; ++k) {
          const auto& q = p[k];
          if (q.size() != 3) fail("joint needs [u, v, confidence]");
          d.joints[k].pixel = Vec2(q[0].get<double>(), q[1].get<double>());
          d.joints[k].confidence = q[2].get<double>();
          if (d.joints[k].confidence < 0 || d.joints[k].confidence > 1) fail("confidence outside [0, 1]");
        }
        cd.persons.push_back(d);
      }
      std::vector<HandInstance> hands;
      int det = 0;
      for (const auto& h : j.value("hands", json::array())) {
        HandInstance hi;
        hi.camera_id = cam;
        hi.camera_index = ci;
        hi.detection_index = det++;
        hi.side = side_from_string(h.at("side").get<std::string>());
        hi.sigma_fit = h.at("sigma_fit").get<double>();
        if (!(hi.sigma_fit >= 0)) fail("sigma_fit must be >= 0");
        const auto& v = h.at("vertices");
        if (v.size() % 3 != 0) fail("vertex array length must be a multiple of 3");
        for (std::size_t i = 0; i < v.size(); i += 3)
          hi.vertices.emplace_back(v[i].get<double>(), v[i + 1].get<double>(), v[i + 2].get<double>());
        hands.push_back(std::move(hi));
      }
      pending_ = {frame, {std::move(cd), std::move(hands)}};
      return true;
    } catch (const json::exception& e) {
      fail(e.what());
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::Parse && std::string(e.what()).rfind(path_.string(), 0) == 0) throw;
      fail(e.what());
    }
  }
  return false;
}

std::optional<FrameInput> DetectionReader::next() {
  if (!pending_ && !read_line()) return std::nullopt;
  FrameInput out;
  out.frame = pending_->first;
  while (pending_ && pending_->first == out.frame) {
    out.bodies.push_back(std::move(pending_->second.first));
    for (auto& h : pending_->second.second) out.hands.push_back(std::move(h));
    pending_.reset();
    read_line();
  }
  return out;
}

}  // namespace touchmap
