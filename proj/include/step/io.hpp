#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "step/linking.hpp"
#include "step/metrics.hpp"
#include "step/model.hpp"
#include "step/simulator.hpp"

namespace step {

using json = nlohmann::json;

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;

/// FNV-1a 64-bit; stable content hash for manifests.
inline std::string content_hash(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Write-to-temp then rename; readers never observe partial files.
inline void atomic_write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// scenes

struct VideoScene {
  std::string name;
  Scene scene;
};

inline json tubelet_to_json(const Tubelet& t) {
  json boxes = json::array();
  for (const Box& b : t.boxes) boxes.push_back({b.x1, b.y1, b.x2, b.y2});
  return {{"start_frame", t.start_frame}, {"boxes", boxes}};
}

inline Tubelet tubelet_from_json(const json& j) {
  Tubelet t;
  t.start_frame = j.at("start_frame").get<std::int64_t>();
  for (const auto& b : j.at("boxes"))
    t.boxes.push_back(Box(b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
                          b.at(3).get<double>()));
  return t;
}

inline json scene_spec_to_json(const SceneSpec& s) {
  json families = json::array();
  for (Trajectory t : s.families) families.push_back(trajectory_name(t));
  return {{"width", s.frame.width},
          {"height", s.frame.height},
          {"frames", s.num_frames},
          {"actors", s.num_actors},
          {"classes", s.num_classes},
          {"trajectories", families},
          {"velocity", {s.min_velocity, s.max_velocity}},
          {"box_size", {s.min_box, s.max_box}},
          {"scale_rate", {s.min_scale_rate, s.max_scale_rate}},
          {"seed", s.seed}};
}

inline SceneSpec scene_spec_from_json(const json& j) {
  SceneSpec s;
  s.frame = {j.at("width").get<double>(), j.at("height").get<double>()};
  s.num_frames = j.at("frames").get<int>();
  s.num_actors = j.at("actors").get<int>();
  s.num_classes = j.at("classes").get<int>();
  s.families.clear();
  for (const auto& name : j.at("trajectories"))
    s.families.push_back(trajectory_from_name(name.get<std::string>()));
  s.min_velocity = j.at("velocity").at(0).get<double>();
  s.max_velocity = j.at("velocity").at(1).get<double>();
  s.min_box = j.at("box_size").at(0).get<double>();
  s.max_box = j.at("box_size").at(1).get<double>();
  s.min_scale_rate = j.at("scale_rate").at(0).get<double>();
  s.max_scale_rate = j.at("scale_rate").at(1).get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

inline std::string scenes_to_json(const std::vector<VideoScene>& scenes) {
  json out;
  out["version"] = kSchemaVersion;
  out["scenes"] = json::array();
  for (const VideoScene& vs : scenes) {
    json tubes = json::array();
    for (const GroundTruthTube& t : vs.scene.tubes) {
      json tube = tubelet_to_json(t.tubelet);
      tube["label"] = t.label;
      tubes.push_back(tube);
    }
    out["scenes"].push_back(
        {{"video", vs.name}, {"spec", scene_spec_to_json(vs.scene.spec)}, {"tubes", tubes}});
  }
  return out.dump(2) + "\n";
}

inline std::vector<VideoScene> scenes_from_json(const std::string& text) {
  const json j = json::parse(text);
  if (j.at("version").get<int>() != kSchemaVersion)
    throw std::runtime_error("scenes file: unsupported version");
  std::vector<VideoScene> out;
  for (const auto& s : j.at("scenes")) {
    VideoScene vs;
    vs.name = s.at("video").get<std::string>();
    vs.scene.spec = scene_spec_from_json(s.at("spec"));
    for (const auto& t : s.at("tubes"))
      vs.scene.tubes.push_back({t.at("label").get<int>(), tubelet_from_json(t)});
    out.push_back(std::move(vs));
  }
  return out;
}

// ---------------------------------------------------------------------------
// detections (JSON lines, one record per clip/proposal/step)

inline json detection_record_to_json(const DetectionRecord& r) {
  json tubelet = json::array();
  for (std::int64_t f = r.tubelet.start_frame; f < r.tubelet.range().end; ++f) {
    const Box& b = r.tubelet.box_at(f);
    tubelet.push_back(
        {{"frame", f}, {"x1", b.x1}, {"y1", b.y1}, {"x2", b.x2}, {"y2", b.y2}});
  }
  return {{"video", r.video},   {"clip", r.clip},       {"proposal_id", r.proposal},
          {"step", r.step},     {"probs", r.probs},     {"tubelet", tubelet}};
}

inline DetectionRecord detection_record_from_json(const json& j) {
  DetectionRecord r;
  r.video = j.at("video").get<std::string>();
  r.clip = j.at("clip").get<int>();
  r.proposal = j.at("proposal_id").get<int>();
  r.step = j.at("step").get<int>();
  r.probs = j.at("probs").get<std::vector<double>>();
  const auto& frames = j.at("tubelet");
  if (frames.empty()) throw std::runtime_error("detection record with empty tubelet");
  r.tubelet.start_frame = frames.at(0).at("frame").get<std::int64_t>();
  for (const auto& f : frames)
    r.tubelet.boxes.push_back(Box(f.at("x1").get<double>(), f.at("y1").get<double>(),
                                  f.at("x2").get<double>(), f.at("y2").get<double>()));
  return r;
}

inline std::string detections_to_jsonl(const std::vector<DetectionRecord>& records) {
  std::string out;
  for (const DetectionRecord& r : records) out += detection_record_to_json(r).dump() + "\n";
  return out;
}

inline std::vector<DetectionRecord> detections_from_jsonl(const std::string& text) {
  std::vector<DetectionRecord> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(detection_record_from_json(json::parse(line)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// linked tubes (JSON lines)

struct TubeRecord {
  std::string video;
  int label = 0;
  double score = 0;
  Tubelet tubelet;  // per-frame boxes over the trimmed interval
};

inline std::string tubes_to_jsonl(const std::vector<TubeRecord>& tubes) {
  std::string out;
  for (const TubeRecord& t : tubes) {
    json frames = json::array();
    for (std::int64_t f = t.tubelet.start_frame; f < t.tubelet.range().end; ++f) {
      const Box& b = t.tubelet.box_at(f);
      frames.push_back({{"frame", f}, {"x1", b.x1}, {"y1", b.y1}, {"x2", b.x2}, {"y2", b.y2}});
    }
    out += json{{"video", t.video}, {"class", t.label}, {"score", t.score}, {"frames", frames}}
               .dump() +
           "\n";
  }
  return out;
}

inline std::vector<TubeRecord> tubes_from_jsonl(const std::string& text) {
  std::vector<TubeRecord> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    TubeRecord t;
    t.video = j.at("video").get<std::string>();
    t.label = j.at("class").get<int>();
    t.score = j.at("score").get<double>();
    const auto& frames = j.at("frames");
    if (frames.empty()) throw std::runtime_error("tube record with no frames");
    t.tubelet.start_frame = frames.at(0).at("frame").get<std::int64_t>();
    for (const auto& f : frames)
      t.tubelet.boxes.push_back(Box(f.at("x1").get<double>(), f.at("y1").get<double>(),
                                    f.at("x2").get<double>(), f.at("y2").get<double>()));
    out.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// checkpoints

inline std::string heads_to_json(const std::vector<LinearHead>& heads) {
  json out;
  out["version"] = kSchemaVersion;
  out["kind"] = "linear_heads";
  out["steps"] = json::array();
  for (std::size_t s = 0; s < heads.size(); ++s) {
    const LinearHead& h = heads[s];
    out["steps"].push_back({{"step", s + 1},
                            {"feature_dim", h.feature_dim},
                            {"num_classes", h.num_classes},
                            {"num_frames", h.num_frames},
                            {"anticipation_frames", h.anticipation_frames},
                            {"w_cls", h.w_cls},
                            {"b_cls", h.b_cls},
                            {"w_reg", h.w_reg},
                            {"b_reg", h.b_reg},
                            {"w_ant_back", h.w_ant_back},
                            {"b_ant_back", h.b_ant_back},
                            {"w_ant_fwd", h.w_ant_fwd},
                            {"b_ant_fwd", h.b_ant_fwd}});
  }
  return out.dump() + "\n";
}

inline std::vector<LinearHead> heads_from_json(const std::string& text) {
  const json j = json::parse(text);
  if (j.at("version").get<int>() != kSchemaVersion)
    throw std::runtime_error("checkpoint: unsupported version");
  if (j.at("kind").get<std::string>() != "linear_heads")
    throw std::runtime_error("checkpoint: unexpected kind");
  std::vector<LinearHead> heads;
  for (const auto& s : j.at("steps")) {
    LinearHead h = LinearHead::zeros(s.at("feature_dim").get<int>(), s.at("num_classes").get<int>(),
                                     s.at("num_frames").get<int>(),
                                     s.at("anticipation_frames").get<int>());
    const auto load = [&s](const char* key, std::vector<double>& dst) {
      const auto v = s.at(key).get<std::vector<double>>();
      if (v.size() != dst.size()) throw std::runtime_error("checkpoint: shape mismatch");
      dst = v;
    };
    load("w_cls", h.w_cls);
    load("b_cls", h.b_cls);
    load("w_reg", h.w_reg);
    load("b_reg", h.b_reg);
    load("w_ant_back", h.w_ant_back);
    load("b_ant_back", h.b_ant_back);
    load("w_ant_fwd", h.w_ant_fwd);
    load("b_ant_fwd", h.b_ant_fwd);
    heads.push_back(std::move(h));
  }
  return heads;
}

// ---------------------------------------------------------------------------
// run manifest

inline std::string manifest_json(const std::string& command, std::uint64_t seed,
                                 const std::string& config_text, const json& inputs,
                                 const json& outputs) {
  json m;
  m["version"] = kSchemaVersion;
  m["tool"] = std::string("step ") + kToolVersion;
  m["command"] = command;
  m["seed"] = seed;
  m["config_hash"] = content_hash(config_text);
  m["inputs"] = inputs;
  m["outputs"] = outputs;
  return m.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// CSV + SVG helpers

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string dump() const {
    std::string out;
    for (std::size_t i = 0; i < header.size(); ++i)
      out += header[i] + (i + 1 < header.size() ? "," : "\n");
    for (const auto& row : rows)
      for (std::size_t i = 0; i < row.size(); ++i)
        out += row[i] + (i + 1 < row.size() ? "," : "\n");
    return out;
  }

  static CsvTable parse(const std::string& text) {
    CsvTable t;
    std::istringstream in(text);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::vector<std::string> cells;
      std::istringstream ls(line);
      std::string cell;
      while (std::getline(ls, cell, ',')) cells.push_back(cell);
      if (first) {
        t.header = cells;
        first = false;
      } else {
        t.rows.push_back(cells);
      }
    }
    return t;
  }

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    throw std::runtime_error("csv: no column named " + name);
  }
};

/// Minimal standalone SVG chart: one polyline per series, or bars for a
/// single series.
inline std::string svg_chart(const std::vector<std::string>& series_names,
                             const std::vector<std::vector<double>>& series,
                             const std::vector<double>& xs, bool bars, const std::string& title) {
  const double width = 720, height = 420, ml = 60, mr = 20, mt = 40, mb = 40;
  double ymax = 1e-12, ymin = 0;
  for (const auto& s : series)
    for (double v : s) {
      ymax = std::max(ymax, v);
      ymin = std::min(ymin, v);
    }
  double xmin = xs.empty() ? 0 : xs.front(), xmax = xs.empty() ? 1 : xs.back();
  if (xmax <= xmin) xmax = xmin + 1;
  const auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (width - ml - mr); };
  const auto py = [&](double y) {
    return height - mb - (y - ymin) / (ymax - ymin) * (height - mt - mb);
  };
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                  "#9467bd", "#8c564b", "#e377c2"};

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\">\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"16\">"
      << title << "</text>\n";
  svg << "<line x1=\"" << ml << "\" y1=\"" << height - mb << "\" x2=\"" << width - mr
      << "\" y2=\"" << height - mb << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
      << height - mb << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << ml << "\" y=\"" << height - mb + 16 << "\" font-size=\"11\">"
      << format_double(xmin) << "</text>\n";
  svg << "<text x=\"" << width - mr << "\" y=\"" << height - mb + 16
      << "\" text-anchor=\"end\" font-size=\"11\">" << format_double(xmax) << "</text>\n";
  svg << "<text x=\"" << ml - 6 << "\" y=\"" << py(ymax) << "\" text-anchor=\"end\" font-size=\"11\">"
      << format_double(ymax) << "</text>\n";
  svg << "<text x=\"" << ml - 6 << "\" y=\"" << height - mb << "\" text-anchor=\"end\" font-size=\"11\">"
      << format_double(ymin) << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = palette[s % 7];
    if (bars) {
      const double bw = (width - ml - mr) / std::max<std::size_t>(series[s].size(), 1) * 0.8;
      for (std::size_t i = 0; i < series[s].size(); ++i) {
        const double x = px(xs[i]) - bw / 2;
        svg << "<rect x=\"" << x << "\" y=\"" << py(series[s][i]) << "\" width=\"" << bw
            << "\" height=\"" << (height - mb - py(series[s][i])) << "\" fill=\"" << color
            << "\"/>\n";
      }
    } else {
      svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < series[s].size(); ++i)
        svg << px(xs[i]) << "," << py(series[s][i]) << " ";
      svg << "\"/>\n";
    }
    svg << "<text x=\"" << width - mr - 8 << "\" y=\"" << mt + 16 * (s + 1)
        << "\" text-anchor=\"end\" font-size=\"12\" fill=\"" << color << "\">" << series_names[s]
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace step
