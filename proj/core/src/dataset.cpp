// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#include "sparseview/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sparseview/image_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sparseview {

namespace {

constexpr int kManifestSchemaVersion = 1;

json camera_to_json(const Camera& cam) {
  json j;
  j["width"] = cam.width;
  j["height"] = cam.height;
  std::vector<double> k(9), t(16);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) k[r * 3 + c] = cam.K(r, c);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) t[r * 4 + c] = cam.T(r, c);
  j["K"] = k;
  j["T"] = t;
  return j;
}

Camera camera_from_json(const json& j) {
  Camera cam;
  cam.width = j.at("width").get<int>();
  cam.height = j.at("height").get<int>();
  const auto k = j.at("K").get<std::vector<double>>();
  const auto t = j.at("T").get<std::vector<double>>();
  if (k.size() != 9 || t.size() != 16) throw IoError("cameras.json: bad matrix size");
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) cam.K(r, c) = k[r * 3 + c];
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) cam.T(r, c) = t[r * 4 + c];
  return cam;
}

json vec3_to_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

Eigen::Vector3d vec3_from_json(const json& j) {
  return Eigen::Vector3d(j.at(0).get<double>(), j.at(1).get<double>(),
                         j.at(2).get<double>());
}

json texture_to_json(const scenes::Texture& tex) {
  json j;
  switch (tex.kind) {
    case scenes::Texture::Kind::Solid: j["kind"] = "solid"; break;
    case scenes::Texture::Kind::Checker: j["kind"] = "checker"; break;
    case scenes::Texture::Kind::Gradient: j["kind"] = "gradient"; break;
  }
  j["color_a"] = vec3_to_json(tex.color_a);
  j["color_b"] = vec3_to_json(tex.color_b);
  j["scale"] = tex.scale;
  j["direction"] = vec3_to_json(tex.direction);
  return j;
}

scenes::Texture texture_from_json(const json& j) {
  scenes::Texture tex;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "solid") tex.kind = scenes::Texture::Kind::Solid;
  else if (kind == "checker") tex.kind = scenes::Texture::Kind::Checker;
  else if (kind == "gradient") tex.kind = scenes::Texture::Kind::Gradient;
  else throw IoError("scene spec: unknown texture kind " + kind);
  if (j.contains("color_a")) tex.color_a = vec3_from_json(j.at("color_a"));
  if (j.contains("color_b")) tex.color_b = vec3_from_json(j.at("color_b"));
  if (j.contains("scale")) tex.scale = j.at("scale").get<double>();
  if (j.contains("direction")) tex.direction = vec3_from_json(j.at("direction"));
  return tex;
}

json spec_to_json_obj(const scenes::SceneSpec& spec) {
  json j;
  j["name"] = spec.name;
  j["width"] = spec.width;
  j["height"] = spec.height;
  j["z_near"] = spec.z_near;
  j["z_far"] = spec.z_far;
  j["background_color"] = vec3_to_json(spec.background_color);
  j["num_frames"] = spec.num_frames;
  json prims = json::array();
  for (const auto& p : spec.primitives) {
    json pj;
    switch (p.kind) {
      case scenes::Primitive::Kind::Plane:
        pj["kind"] = "plane";
        pj["plane_z"] = p.plane_z;
        break;
      case scenes::Primitive::Kind::Box:
        pj["kind"] = "box";
        pj["box_min"] = vec3_to_json(p.box_min);
        pj["box_max"] = vec3_to_json(p.box_max);
        break;
      case scenes::Primitive::Kind::Sphere:
        pj["kind"] = "sphere";
        pj["center"] = vec3_to_json(p.center);
        pj["radius"] = p.radius;
        break;
    }
    pj["texture"] = texture_to_json(p.texture);
    if (p.tint != 0.0) pj["tint"] = p.tint;
    if (p.velocity != Eigen::Vector3d::Zero()) pj["velocity"] = vec3_to_json(p.velocity);
    prims.push_back(pj);
  }
  j["primitives"] = prims;
  json cams = json::array();
  for (std::size_t v = 0; v < spec.cameras.size(); ++v) {
    json per_time = json::array();
    for (const Camera& cam : spec.cameras[v]) per_time.push_back(camera_to_json(cam));
    cams.push_back(per_time);
  }
  j["cameras"] = cams;
  return j;
}

scenes::SceneSpec spec_from_json_obj(const json& j) {
  scenes::SceneSpec spec;
  spec.name = j.value("name", std::string("scene"));
  spec.width = j.at("width").get<int>();
  spec.height = j.at("height").get<int>();
  spec.z_near = j.at("z_near").get<double>();
  spec.z_far = j.at("z_far").get<double>();
  if (j.contains("background_color"))
    spec.background_color = vec3_from_json(j.at("background_color"));
  spec.num_frames = j.value("num_frames", 1);
  for (const auto& pj : j.at("primitives")) {
    scenes::Primitive p;
    const std::string kind = pj.at("kind").get<std::string>();
    if (kind == "plane") {
      p.kind = scenes::Primitive::Kind::Plane;
      p.plane_z = pj.at("plane_z").get<double>();
    } else if (kind == "box") {
      p.kind = scenes::Primitive::Kind::Box;
      p.box_min = vec3_from_json(pj.at("box_min"));
      p.box_max = vec3_from_json(pj.at("box_max"));
    } else if (kind == "sphere") {
      p.kind = scenes::Primitive::Kind::Sphere;
      p.center = vec3_from_json(pj.at("center"));
      p.radius = pj.at("radius").get<double>();
    } else {
      throw IoError("scene spec: unknown primitive kind " + kind);
    }
    if (pj.contains("texture")) p.texture = texture_from_json(pj.at("texture"));
    p.tint = pj.value("tint", 0.0);
    if (pj.contains("velocity")) p.velocity = vec3_from_json(pj.at("velocity"));
    spec.primitives.push_back(p);
  }
  if (j.contains("cameras")) {
    for (const auto& per_view : j.at("cameras")) {
      std::vector<Camera> cams;
      for (const auto& cj : per_view) cams.push_back(camera_from_json(cj));
      spec.cameras.push_back(std::move(cams));
    }
  } else if (j.contains("camera_rig")) {
    // generator shorthand: cameras on a horizontal line, optional per-frame
    // translation, all looking at a fixed target
    const auto& rig = j.at("camera_rig");
    const int views = rig.value("views", 2);
    const double baseline = rig.value("baseline", 0.45);
    const double focal_px = rig.value("focal", 0.85 * spec.width);
    const Eigen::Vector3d target =
        rig.contains("target") ? vec3_from_json(rig.at("target"))
                               : Eigen::Vector3d(0, 0, 0.5 * (spec.z_near + spec.z_far));
    const Eigen::Vector3d motion =
        rig.contains("motion") ? vec3_from_json(rig.at("motion"))
                               : Eigen::Vector3d::Zero();
    for (int v = 0; v < views; ++v) {
      std::vector<Camera> cams;
      const double x0 = (v - (views - 1) / 2.0) * baseline;
      for (int t = 0; t < spec.num_frames; ++t) {
        Camera cam = Camera::pinhole(focal_px, focal_px, (spec.width - 1) / 2.0,
                                     (spec.height - 1) / 2.0, spec.width,
                                     spec.height);
        cam.T = Camera::look_at(Eigen::Vector3d(x0, 0, 0) + motion * t, target);
        cams.push_back(cam);
      }
      spec.cameras.push_back(std::move(cams));
    }
  } else {
    throw IoError("scene spec: missing cameras or camera_rig");
  }
  return spec;
}

std::string frame_name(int v, int t) {
  return "v" + std::to_string(v) + "_t" + std::to_string(t);
}

}  // namespace

std::string scene_spec_to_json(const scenes::SceneSpec& spec) {
  return spec_to_json_obj(spec).dump(2);
}

scenes::SceneSpec scene_spec_from_json(const std::string& json_text) {
  return spec_from_json_obj(json::parse(json_text));
}

void save_sparse_depth(const std::string& path,
                       const std::vector<scenes::SparseDepthPoint>& points) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out.precision(17);
  for (const auto& p : points) {
    out << p.view << " " << p.time << " " << p.x << " " << p.y << " " << p.z << "\n";
  }
}

std::vector<scenes::SparseDepthPoint> load_sparse_depth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::vector<scenes::SparseDepthPoint> points;
  scenes::SparseDepthPoint p;
  while (in >> p.view >> p.time >> p.x >> p.y >> p.z) points.push_back(p);
  return points;
}

void save_sparse_flow(const std::string& path,
                      const std::vector<scenes::SparseFlowMatch>& matches) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out.precision(17);
  for (const auto& m : matches) {
    out << m.v << " " << m.t << " " << m.x << " " << m.y << " " << m.u << " "
        << m.s << " " << m.x2 << " " << m.y2 << "\n";
  }
}

std::vector<scenes::SparseFlowMatch> load_sparse_flow(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::vector<scenes::SparseFlowMatch> matches;
  scenes::SparseFlowMatch m;
  while (in >> m.v >> m.t >> m.x >> m.y >> m.u >> m.s >> m.x2 >> m.y2) {
    matches.push_back(m);
  }
  return matches;
}

void save_cameras_json(const std::string& path,
                       const std::vector<std::vector<Camera>>& cameras) {
  json j;
  j["schema_version"] = kManifestSchemaVersion;
  json entries = json::array();
  for (std::size_t v = 0; v < cameras.size(); ++v) {
    for (std::size_t t = 0; t < cameras[v].size(); ++t) {
      json e = camera_to_json(cameras[v][t]);
      e["view"] = static_cast<int>(v);
      e["time"] = static_cast<int>(t);
      entries.push_back(e);
    }
  }
  j["cameras"] = entries;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << "\n";
}

std::vector<std::vector<Camera>> load_cameras_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  json j = json::parse(in);
  int max_view = -1, max_time = -1;
  for (const auto& e : j.at("cameras")) {
    max_view = std::max(max_view, e.at("view").get<int>());
    max_time = std::max(max_time, e.at("time").get<int>());
  }
  std::vector<std::vector<Camera>> cams(max_view + 1,
                                        std::vector<Camera>(max_time + 1));
  for (const auto& e : j.at("cameras")) {
    cams[e.at("view").get<int>()][e.at("time").get<int>()] = camera_from_json(e);
  }
  return cams;
}

void generate_dataset(const scenes::SceneSpec& spec, const std::string& out_dir,
                      const GenerateOptions& options) {
  fs::create_directories(fs::path(out_dir) / "rgb");
  fs::create_directories(fs::path(out_dir) / "depth");

  for (int v = 0; v < spec.num_views(); ++v) {
    for (int t = 0; t < spec.num_frames; ++t) {
      const scenes::GtRender gt = scenes::render_gt(spec, v, t);
      write_png((fs::path(out_dir) / "rgb" / (frame_name(v, t) + ".png")).string(),
                to_u8(gt.rgb));
      write_pfm((fs::path(out_dir) / "depth" / (frame_name(v, t) + ".pfm")).string(),
                gt.depth);
    }
  }

  save_cameras_json((fs::path(out_dir) / "cameras.json").string(), spec.cameras);

  std::vector<scenes::SparseDepthPoint> sd;
  for (int v = 0; v < spec.num_views(); ++v) {
    for (int t = 0; t < spec.num_frames; ++t) {
      auto pts = scenes::oracle_sparse_depth(spec, v, t, options.sparse_depth_count,
                                             options.sparse_depth_noise, options.seed);
      sd.insert(sd.end(), pts.begin(), pts.end());
    }
  }
  save_sparse_depth((fs::path(out_dir) / "sparse_depth.txt").string(), sd);

  std::vector<scenes::SparseFlowMatch> sf;
  for (int v = 0; v < spec.num_views(); ++v) {
    for (int u = 0; u < spec.num_views(); ++u) {
      for (int t = 0; t < spec.num_frames; ++t) {
        for (const int delta : {-options.sparse_flow_delta, options.sparse_flow_delta}) {
          const int s = t + delta;
          if (s < 0 || s >= spec.num_frames) continue;
          if (u == v && s == t) continue;
          auto ms = scenes::oracle_sparse_flow(spec, v, t, u, s,
                                               options.sparse_flow_count, 0.0,
                                               options.seed);
          sf.insert(sf.end(), ms.begin(), ms.end());
        }
      }
    }
  }
  save_sparse_flow((fs::path(out_dir) / "sparse_flow.txt").string(), sf);

  json manifest;
  manifest["schema_version"] = kManifestSchemaVersion;
  manifest["name"] = spec.name;
  manifest["num_views"] = spec.num_views();
  manifest["num_frames"] = spec.num_frames;
  manifest["width"] = spec.width;
  manifest["height"] = spec.height;
  manifest["z_near"] = spec.z_near;
  manifest["z_far"] = spec.z_far;
  manifest["scene_spec"] = spec_to_json_obj(spec);
  std::ofstream mout(fs::path(out_dir) / "manifest.json");
  if (!mout) throw IoError("cannot write manifest.json under " + out_dir);
  mout << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir) {
  const fs::path root(dir);
  std::ifstream min(root / "manifest.json");
  if (!min) throw IoError("missing manifest: " + (root / "manifest.json").string());
  json manifest = json::parse(min);
  if (manifest.at("schema_version").get<int>() != kManifestSchemaVersion) {
    throw IoError("manifest.json: unsupported schema version");
  }

  Dataset ds;
  ds.root = dir;
  ds.name = manifest.value("name", std::string("scene"));
  ds.num_views = manifest.at("num_views").get<int>();
  ds.num_frames = manifest.at("num_frames").get<int>();
  ds.width = manifest.at("width").get<int>();
  ds.height = manifest.at("height").get<int>();
  ds.z_near = manifest.at("z_near").get<double>();
  ds.z_far = manifest.at("z_far").get<double>();
  if (manifest.contains("scene_spec")) {
    ds.spec = spec_from_json_obj(manifest.at("scene_spec"));
    ds.has_spec = true;
  }

  ds.cameras = load_cameras_json((root / "cameras.json").string());
  ds.rgb.resize(ds.num_views);
  ds.depth.resize(ds.num_views);
  for (int v = 0; v < ds.num_views; ++v) {
    for (int t = 0; t < ds.num_frames; ++t) {
      const fs::path rgb_path = root / "rgb" / (frame_name(v, t) + ".png");
      const fs::path depth_path = root / "depth" / (frame_name(v, t) + ".pfm");
      if (!fs::exists(rgb_path)) throw IoError("missing rgb file: " + rgb_path.string());
      if (!fs::exists(depth_path))
        throw IoError("missing depth file: " + depth_path.string());
      ds.rgb[v].push_back(from_u8(read_png(rgb_path.string())));
      ds.depth[v].push_back(read_pfm(depth_path.string()));
    }
  }

  if (fs::exists(root / "sparse_depth.txt")) {
    ds.sparse_depth = load_sparse_depth((root / "sparse_depth.txt").string());
  }
  if (fs::exists(root / "sparse_flow.txt")) {
    ds.sparse_flow = load_sparse_flow((root / "sparse_flow.txt").string());
  }
  return ds;
}

}  // namespace sparseview
