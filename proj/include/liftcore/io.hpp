#pragma once

// File formats binding the pipeline stages: PFM depth/pointmap maps, PNG
// frames, binary PLY point clouds and Gaussian scenes (3DGS-compatible
// field naming), JSON pose/plan documents, and the distortion-field
// checkpoint. PFM follows the de facto convention: 'PF'/'Pf' header,
// dims, negative scale for little-endian, bottom-up rows, float32 samples.

#include "liftcore/core.hpp"
#include "liftcore/field.hpp"
#include "liftcore/matching.hpp"
#include "liftcore/trajectory.hpp"

#include <json.hpp>
#include <png.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace liftcore {

using Json = nlohmann::json;

namespace io {

// ---------------------------------------------------------------------------
// PFM

struct PfmData {
  int width = 0;
  int height = 0;
  int channels = 1;              // 1 or 3
  std::vector<float> data;       // row-major, top-left origin
};

inline void write_pfm(const std::filesystem::path& path, const PfmData& pfm) {
  check(pfm.channels == 1 || pfm.channels == 3, "pfm: channels must be 1 or 3");
  check(pfm.data.size() == static_cast<size_t>(pfm.width) * pfm.height * pfm.channels,
        "pfm: data size mismatch");
  std::ofstream f(path, std::ios::binary);
  check(f.good(), "pfm: cannot open for write: " + path.string());
  f << (pfm.channels == 3 ? "PF" : "Pf") << "\n"
    << pfm.width << " " << pfm.height << "\n" << "-1.0" << "\n";
  // bottom-up rows
  const size_t row = static_cast<size_t>(pfm.width) * pfm.channels;
  for (int y = pfm.height - 1; y >= 0; --y)
    f.write(reinterpret_cast<const char*>(&pfm.data[static_cast<size_t>(y) * row]),
            static_cast<std::streamsize>(row * sizeof(float)));
  check(f.good(), "pfm: write failed: " + path.string());
}

inline PfmData read_pfm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), "pfm: cannot open: " + path.string());
  std::string magic;
  f >> magic;
  PfmData pfm;
  if (magic == "PF") pfm.channels = 3;
  else if (magic == "Pf") pfm.channels = 1;
  else throw Error("pfm: bad magic in " + path.string());
  double scale = 0.0;
  f >> pfm.width >> pfm.height >> scale;
  check(pfm.width > 0 && pfm.height > 0, "pfm: bad dimensions in " + path.string());
  check(scale < 0.0, "pfm: big-endian files unsupported: " + path.string());
  f.get();  // single whitespace after the scale line
  const size_t row = static_cast<size_t>(pfm.width) * pfm.channels;
  pfm.data.resize(row * pfm.height);
  for (int y = pfm.height - 1; y >= 0; --y)
    f.read(reinterpret_cast<char*>(&pfm.data[static_cast<size_t>(y) * row]),
           static_cast<std::streamsize>(row * sizeof(float)));
  check(!f.fail(), "pfm: truncated file: " + path.string());
  return pfm;
}

inline void write_depth_pfm(const std::filesystem::path& path, const DepthMap& d) {
  PfmData pfm;
  pfm.width = d.width;
  pfm.height = d.height;
  pfm.channels = 1;
  pfm.data.assign(d.data.begin(), d.data.end());
  write_pfm(path, pfm);
}

inline DepthMap read_depth_pfm(const std::filesystem::path& path, DepthKind kind) {
  const PfmData pfm = read_pfm(path);
  check(pfm.channels == 1, "pfm: expected 1-channel depth: " + path.string());
  DepthMap d(pfm.width, pfm.height, kind);
  for (size_t i = 0; i < pfm.data.size(); ++i) d.data[i] = pfm.data[i];
  return d;
}

inline void write_pointmap_pfm(const std::filesystem::path& points_path,
                               const std::filesystem::path& conf_path,
                               const PointMap& pm) {
  PfmData pts;
  pts.width = pm.width;
  pts.height = pm.height;
  pts.channels = 3;
  pts.data.resize(pm.size() * 3);
  for (size_t i = 0; i < pm.size(); ++i)
    for (int c = 0; c < 3; ++c)
      pts.data[i * 3 + c] = static_cast<float>(pm.points[i](c));
  write_pfm(points_path, pts);

  PfmData conf;
  conf.width = pm.width;
  conf.height = pm.height;
  conf.channels = 1;
  conf.data.assign(pm.confidence.begin(), pm.confidence.end());
  write_pfm(conf_path, conf);
}

inline PointMap read_pointmap_pfm(const std::filesystem::path& points_path,
                                  const std::filesystem::path& conf_path,
                                  const std::string& frame_label = "") {
  const PfmData pts = read_pfm(points_path);
  check(pts.channels == 3, "pfm: expected 3-channel pointmap: " + points_path.string());
  PointMap pm(pts.width, pts.height, frame_label);
  for (size_t i = 0; i < pm.size(); ++i)
    pm.points[i] = Vec3(pts.data[i * 3], pts.data[i * 3 + 1], pts.data[i * 3 + 2]);
  const PfmData conf = read_pfm(conf_path);
  check(conf.channels == 1 && conf.width == pts.width && conf.height == pts.height,
        "pfm: confidence map mismatched: " + conf_path.string());
  for (size_t i = 0; i < pm.size(); ++i) pm.confidence[i] = conf.data[i];
  return pm;
}

// ---------------------------------------------------------------------------
// PNG (8-bit, gray or RGB)

inline void write_png(const std::filesystem::path& path, const Image& img) {
  check(img.channels == 1 || img.channels == 3, "png: channels must be 1 or 3");
  FILE* fp = std::fopen(path.c_str(), "wb");
  check(fp != nullptr, "png: cannot open for write: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(fp);
    throw Error("png: write failed: " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, img.width, img.height, 8,
               img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(static_cast<size_t>(img.width) * img.channels);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        row[static_cast<size_t>(x) * img.channels + c] = static_cast<png_byte>(
            std::lround(std::clamp(img.at(x, y, c), 0.0, 1.0) * 255.0));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

inline Image read_png(const std::filesystem::path& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  check(fp != nullptr, "png: cannot open: " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    std::fclose(fp);
    throw Error("png: read failed: " + path.string());
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int ch = static_cast<int>(png_get_channels(png, info));
  check(ch == 1 || ch == 3, "png: unsupported channel count in " + path.string());
  Image img(w, h, ch);
  std::vector<png_byte> row(static_cast<size_t>(w) * ch);
  for (int y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c)
        img.at(x, y, c) = row[static_cast<size_t>(x) * ch + c] / 255.0;
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return img;
}

// ---------------------------------------------------------------------------
// PLY

namespace plydetail {

struct Property { std::string type, name; };

struct Header {
  size_t vertex_count = 0;
  std::vector<Property> props;
  size_t data_offset = 0;
};

inline Header parse_header(const std::string& text, const std::string& where) {
  Header hd;
  size_t pos = 0;
  auto next_line = [&]() {
    const size_t e = text.find('\n', pos);
    check(e != std::string::npos, "ply: truncated header: " + where);
    std::string line = text.substr(pos, e - pos);
    pos = e + 1;
    return line;
  };
  check(next_line() == "ply", "ply: bad magic: " + where);
  check(next_line() == "format binary_little_endian 1.0",
        "ply: only binary little-endian supported: " + where);
  bool in_vertex = false;
  for (;;) {
    const std::string line = next_line();
    if (line == "end_header") break;
    if (line.rfind("comment", 0) == 0) continue;
    if (line.rfind("element", 0) == 0) {
      std::istringstream ss(line);
      std::string kw, name;
      size_t count;
      ss >> kw >> name >> count;
      in_vertex = name == "vertex";
      if (in_vertex) hd.vertex_count = count;
      continue;
    }
    if (line.rfind("property", 0) == 0 && in_vertex) {
      std::istringstream ss(line);
      std::string kw, type, name;
      ss >> kw >> type >> name;
      check(type != "list", "ply: list properties unsupported: " + where);
      hd.props.push_back({type, name});
    }
  }
  hd.data_offset = pos;
  return hd;
}

inline size_t type_size(const std::string& t) {
  if (t == "float" || t == "float32" || t == "int" || t == "int32" || t == "uint" || t == "uint32")
    return 4;
  if (t == "double" || t == "float64") return 8;
  if (t == "uchar" || t == "uint8" || t == "char" || t == "int8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  throw Error("ply: unknown property type " + t);
}

inline double read_scalar(const char* p, const std::string& t) {
  if (t == "float" || t == "float32") { float v; std::memcpy(&v, p, 4); return v; }
  if (t == "double" || t == "float64") { double v; std::memcpy(&v, p, 8); return v; }
  if (t == "uchar" || t == "uint8") { return static_cast<unsigned char>(*p); }
  if (t == "int" || t == "int32") { std::int32_t v; std::memcpy(&v, p, 4); return v; }
  if (t == "uint" || t == "uint32") { std::uint32_t v; std::memcpy(&v, p, 4); return v; }
  throw Error("ply: unhandled property type " + t);
}

}  // namespace plydetail

// Merged point cloud: positions, colors, confidence, source frame.
inline void write_ply_points(const std::filesystem::path& path,
                             const std::vector<MergedPoint>& cloud) {
  std::ofstream f(path, std::ios::binary);
  check(f.good(), "ply: cannot open for write: " + path.string());
  f << "ply\nformat binary_little_endian 1.0\n"
    << "element vertex " << cloud.size() << "\n"
    << "property float x\nproperty float y\nproperty float z\n"
    << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
    << "property float confidence\nproperty int source_frame\n"
    << "end_header\n";
  for (const auto& p : cloud) {
    float xyz[3] = {static_cast<float>(p.position.x()), static_cast<float>(p.position.y()),
                    static_cast<float>(p.position.z())};
    f.write(reinterpret_cast<const char*>(xyz), 12);
    unsigned char rgb[3];
    for (int c = 0; c < 3; ++c)
      rgb[c] = static_cast<unsigned char>(
          std::lround(std::clamp(p.color(c), 0.0, 1.0) * 255.0));
    f.write(reinterpret_cast<const char*>(rgb), 3);
    const float conf = static_cast<float>(p.confidence);
    f.write(reinterpret_cast<const char*>(&conf), 4);
    const std::int32_t src = p.source_frame_id;
    f.write(reinterpret_cast<const char*>(&src), 4);
  }
  check(f.good(), "ply: write failed: " + path.string());
}

inline std::vector<MergedPoint> read_ply_points(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), "ply: cannot open: " + path.string());
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const auto hd = plydetail::parse_header(text, path.string());
  size_t stride = 0;
  for (const auto& pr : hd.props) stride += plydetail::type_size(pr.type);
  check(text.size() >= hd.data_offset + stride * hd.vertex_count,
        "ply: truncated data: " + path.string());
  std::vector<MergedPoint> cloud(hd.vertex_count);
  for (size_t i = 0; i < hd.vertex_count; ++i) {
    const char* rec = text.data() + hd.data_offset + i * stride;
    size_t off = 0;
    for (const auto& pr : hd.props) {
      const double v = plydetail::read_scalar(rec + off, pr.type);
      off += plydetail::type_size(pr.type);
      auto& p = cloud[i];
      if (pr.name == "x") p.position.x() = v;
      else if (pr.name == "y") p.position.y() = v;
      else if (pr.name == "z") p.position.z() = v;
      else if (pr.name == "red") p.color.x() = v / 255.0;
      else if (pr.name == "green") p.color.y() = v / 255.0;
      else if (pr.name == "blue") p.color.z() = v / 255.0;
      else if (pr.name == "confidence") p.confidence = v;
      else if (pr.name == "source_frame") p.source_frame_id = static_cast<int>(v);
    }
  }
  return cloud;
}

// Gaussian scene in the common 3DGS PLY layout: float32 fields named x/y/z,
// nx/ny/nz, f_dc_0..2, opacity (inverse sigmoid), scale_0..2 (log),
// rot_0..3, so standard viewers open the output directly.
inline void write_ply_gaussians(const std::filesystem::path& path, const GaussianCloud& g) {
  std::ofstream f(path, std::ios::binary);
  check(f.good(), "ply: cannot open for write: " + path.string());
  f << "ply\nformat binary_little_endian 1.0\n"
    << "element vertex " << g.size() << "\n";
  for (const char* n : {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2",
                        "opacity", "scale_0", "scale_1", "scale_2",
                        "rot_0", "rot_1", "rot_2", "rot_3"})
    f << "property float " << n << "\n";
  f << "end_header\n";
  for (size_t i = 0; i < g.size(); ++i) {
    float rec[17];
    for (int c = 0; c < 3; ++c) rec[c] = static_cast<float>(g.centers[i](c));
    rec[3] = rec[4] = rec[5] = 0.0f;
    for (int c = 0; c < 3; ++c) rec[6 + c] = static_cast<float>(g.colors_sh[i](c));
    const double op = std::clamp(g.opacities[i], 1e-9, 1.0 - 1e-9);
    rec[9] = static_cast<float>(std::log(op / (1.0 - op)));
    for (int c = 0; c < 3; ++c) rec[10 + c] = static_cast<float>(std::log(g.scales[i](c)));
    rec[13] = static_cast<float>(g.rotations[i].w);
    rec[14] = static_cast<float>(g.rotations[i].x);
    rec[15] = static_cast<float>(g.rotations[i].y);
    rec[16] = static_cast<float>(g.rotations[i].z);
    f.write(reinterpret_cast<const char*>(rec), sizeof(rec));
  }
  check(f.good(), "ply: write failed: " + path.string());
}

inline GaussianCloud read_ply_gaussians(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), "ply: cannot open: " + path.string());
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const auto hd = plydetail::parse_header(text, path.string());
  size_t stride = 0;
  for (const auto& pr : hd.props) stride += plydetail::type_size(pr.type);
  check(text.size() >= hd.data_offset + stride * hd.vertex_count,
        "ply: truncated data: " + path.string());
  GaussianCloud g;
  g.resize(hd.vertex_count);
  for (size_t i = 0; i < hd.vertex_count; ++i) {
    const char* rec = text.data() + hd.data_offset + i * stride;
    size_t off = 0;
    Vec4 rot(1, 0, 0, 0);
    for (const auto& pr : hd.props) {
      const double v = plydetail::read_scalar(rec + off, pr.type);
      off += plydetail::type_size(pr.type);
      if (pr.name == "x") g.centers[i].x() = v;
      else if (pr.name == "y") g.centers[i].y() = v;
      else if (pr.name == "z") g.centers[i].z() = v;
      else if (pr.name == "f_dc_0") g.colors_sh[i].x() = v;
      else if (pr.name == "f_dc_1") g.colors_sh[i].y() = v;
      else if (pr.name == "f_dc_2") g.colors_sh[i].z() = v;
      else if (pr.name == "opacity") g.opacities[i] = 1.0 / (1.0 + std::exp(-v));
      else if (pr.name == "scale_0") g.scales[i].x() = std::exp(v);
      else if (pr.name == "scale_1") g.scales[i].y() = std::exp(v);
      else if (pr.name == "scale_2") g.scales[i].z() = std::exp(v);
      else if (pr.name == "rot_0") rot(0) = v;
      else if (pr.name == "rot_1") rot(1) = v;
      else if (pr.name == "rot_2") rot(2) = v;
      else if (pr.name == "rot_3") rot(3) = v;
    }
    g.rotations[i] = Quat(rot(0), rot(1), rot(2), rot(3)).normalized();
  }
  return g;
}

// ---------------------------------------------------------------------------
// JSON pose documents

inline Json pose_to_json(const Pose& p) {
  Json rows = Json::array();
  const Mat4 m = p.matrix();
  for (int r = 0; r < 4; ++r) {
    Json row = Json::array();
    for (int c = 0; c < 4; ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

inline Pose pose_from_json(const Json& j) {
  check(j.is_array() && j.size() == 4, "pose json: expected 4 rows");
  Mat4 m;
  for (int r = 0; r < 4; ++r) {
    check(j[r].is_array() && j[r].size() == 4, "pose json: expected 4 columns");
    for (int c = 0; c < 4; ++c) m(r, c) = j[r][c].get<double>();
  }
  return Pose::from_matrix(m);
}

struct PoseDocument {
  double focal = 0.0;
  std::map<int, Pose> poses;
  std::map<int, double> scales;  // per-frame depth scale (registration only)
};

inline void write_poses_json(const std::filesystem::path& path, const PoseDocument& doc) {
  Json j;
  j["schema_version"] = 1;
  j["focal"] = doc.focal;
  Json poses = Json::object();
  for (const auto& [id, p] : doc.poses) poses[std::to_string(id)] = pose_to_json(p);
  j["poses"] = std::move(poses);
  if (!doc.scales.empty()) {
    Json scales = Json::object();
    for (const auto& [id, s] : doc.scales) scales[std::to_string(id)] = s;
    j["scales"] = std::move(scales);
  }
  std::ofstream f(path);
  check(f.good(), "poses: cannot open for write: " + path.string());
  f << j.dump(2) << "\n";
}

inline PoseDocument read_poses_json(const std::filesystem::path& path) {
  std::ifstream f(path);
  check(f.good(), "poses: cannot open: " + path.string());
  const Json j = Json::parse(f);
  PoseDocument doc;
  doc.focal = j.at("focal").get<double>();
  for (const auto& [key, val] : j.at("poses").items())
    doc.poses[std::stoi(key)] = pose_from_json(val);
  if (j.contains("scales"))
    for (const auto& [key, val] : j.at("scales").items())
      doc.scales[std::stoi(key)] = val.get<double>();
  return doc;
}

// ---------------------------------------------------------------------------
// Trajectory plan document

inline Json plan_to_json(const TrajectoryPlan& plan) {
  Json j;
  j["schema_version"] = 1;
  j["l"] = plan.clip_length;
  j["D"] = plan.directions;
  j["step"] = plan.step;
  j["rot_step"] = plan.rot_step;
  j["normalizer"] = plan.normalizer;
  Json clips = Json::array();
  for (const auto& c : plan.clips) {
    Json jc;
    jc["clip_id"] = c.clip_id;
    jc["anchor_frame_id"] = c.anchor_frame_id;
    jc["stage"] = c.stage == ClipStage::first ? "first" : "second";
    jc["direction"] = direction_name(c.direction);
    Json poses = Json::array();
    for (const auto& p : c.poses) poses.push_back(pose_to_json(p));
    jc["poses"] = std::move(poses);
    jc["frame_ids"] = c.frame_ids;
    Json stamps = Json::array();
    for (const auto& s : c.stamps) stamps.push_back(Json::array({s.ti, s.tj}));
    jc["stamps"] = std::move(stamps);
    clips.push_back(std::move(jc));
  }
  j["clips"] = std::move(clips);
  Json frames = Json::array();
  for (const auto& fr : plan.frames) {
    Json jf;
    jf["frame_id"] = fr.frame_id;
    jf["clip_id"] = fr.clip_id;
    jf["index_in_clip"] = fr.index_in_clip;
    jf["step_i"] = fr.step_i;
    jf["step_j"] = fr.step_j;
    jf["stamp"] = Json::array({fr.stamp.ti, fr.stamp.tj});
    frames.push_back(std::move(jf));
  }
  j["frames"] = std::move(frames);
  return j;
}

inline TrajectoryPlan plan_from_json(const Json& j) {
  TrajectoryPlan plan;
  plan.clip_length = j.at("l").get<int>();
  plan.directions = j.at("D").get<int>();
  plan.step = j.at("step").get<double>();
  plan.rot_step = j.at("rot_step").get<double>();
  plan.normalizer = j.at("normalizer").get<double>();
  for (const auto& jc : j.at("clips")) {
    Clip c;
    c.clip_id = jc.at("clip_id").get<int>();
    c.anchor_frame_id = jc.at("anchor_frame_id").get<int>();
    c.stage = jc.at("stage").get<std::string>() == "first" ? ClipStage::first
                                                           : ClipStage::second;
    const auto dir = direction_from_name(jc.at("direction").get<std::string>());
    check(dir.has_value(), "plan json: bad direction");
    c.direction = *dir;
    for (const auto& jp : jc.at("poses")) c.poses.push_back(pose_from_json(jp));
    c.frame_ids = jc.at("frame_ids").get<std::vector<int>>();
    for (const auto& js : jc.at("stamps"))
      c.stamps.push_back(FrameStamp{js[0].get<double>(), js[1].get<double>()});
    plan.clips.push_back(std::move(c));
  }
  for (const auto& jf : j.at("frames")) {
    PlannedFrame fr;
    fr.frame_id = jf.at("frame_id").get<int>();
    fr.clip_id = jf.at("clip_id").get<int>();
    fr.index_in_clip = jf.at("index_in_clip").get<int>();
    fr.step_i = jf.at("step_i").get<int>();
    fr.step_j = jf.at("step_j").get<int>();
    fr.stamp = FrameStamp{jf.at("stamp")[0].get<double>(), jf.at("stamp")[1].get<double>()};
    plan.frames.push_back(fr);
  }
  return plan;
}

inline void write_plan_json(const std::filesystem::path& path, const TrajectoryPlan& plan) {
  std::ofstream f(path);
  check(f.good(), "plan: cannot open for write: " + path.string());
  f << plan_to_json(plan).dump(2) << "\n";
}

inline TrajectoryPlan read_plan_json(const std::filesystem::path& path) {
  std::ifstream f(path);
  check(f.good(), "plan: cannot open: " + path.string());
  return plan_from_json(Json::parse(f));
}

// ---------------------------------------------------------------------------
// Distortion-field checkpoint. Binary layout: magic 'LCFD', u32 version,
// then the config (i32 hidden_dim, base_res_i, base_res_j, mlp_hidden,
// level count + levels, u8 multiplicative flag, f64 bbox min/max), u64
// parameter count, raw float64 parameters. Bit-exact round trip.

inline void write_field_checkpoint(const std::filesystem::path& path,
                                   const DistortionField& field) {
  std::ofstream f(path, std::ios::binary);
  check(f.good(), "checkpoint: cannot open for write: " + path.string());
  auto put = [&f](const void* p, size_t nbytes) {
    f.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(nbytes));
  };
  const char magic[4] = {'L', 'C', 'F', 'D'};
  put(magic, 4);
  const std::uint32_t version = 1;
  put(&version, 4);
  const auto& cfg = field.config();
  const std::int32_t ints[4] = {cfg.hidden_dim, cfg.base_res_i, cfg.base_res_j, cfg.mlp_hidden};
  put(ints, sizeof(ints));
  const std::int32_t nlevels = static_cast<std::int32_t>(cfg.levels.size());
  put(&nlevels, 4);
  for (int lvl : cfg.levels) { std::int32_t v = lvl; put(&v, 4); }
  const std::uint8_t mult = cfg.multiplicative_scale ? 1 : 0;
  put(&mult, 1);
  double box[6] = {cfg.bbox_min.x(), cfg.bbox_min.y(), cfg.bbox_min.z(),
                   cfg.bbox_max.x(), cfg.bbox_max.y(), cfg.bbox_max.z()};
  put(box, sizeof(box));
  const std::uint64_t count = field.param_count();
  put(&count, 8);
  put(field.params().data(), count * sizeof(double));
  check(f.good(), "checkpoint: write failed: " + path.string());
}

inline DistortionField read_field_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), "checkpoint: cannot open: " + path.string());
  auto get = [&f, &path](void* p, size_t nbytes) {
    f.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(nbytes));
    check(!f.fail(), "checkpoint: truncated: " + path.string());
  };
  char magic[4];
  get(magic, 4);
  check(std::memcmp(magic, "LCFD", 4) == 0, "checkpoint: bad magic: " + path.string());
  std::uint32_t version = 0;
  get(&version, 4);
  check(version == 1, "checkpoint: unsupported version");
  FieldConfig cfg;
  std::int32_t ints[4];
  get(ints, sizeof(ints));
  cfg.hidden_dim = ints[0];
  cfg.base_res_i = ints[1];
  cfg.base_res_j = ints[2];
  cfg.mlp_hidden = ints[3];
  std::int32_t nlevels = 0;
  get(&nlevels, 4);
  check(nlevels > 0 && nlevels < 16, "checkpoint: bad level count");
  cfg.levels.resize(nlevels);
  for (auto& lvl : cfg.levels) { std::int32_t v; get(&v, 4); lvl = v; }
  std::uint8_t mult = 1;
  get(&mult, 1);
  cfg.multiplicative_scale = mult != 0;
  double box[6];
  get(box, sizeof(box));
  cfg.bbox_min = Vec3(box[0], box[1], box[2]);
  cfg.bbox_max = Vec3(box[3], box[4], box[5]);
  std::uint64_t count = 0;
  get(&count, 8);
  std::vector<double> params(count);
  get(params.data(), count * sizeof(double));
  return DistortionField::from_params(cfg, std::move(params));
}

}  // namespace io
}  // namespace liftcore
