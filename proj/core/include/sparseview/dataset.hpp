// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include "sparseview/scenes.hpp"

namespace sparseview {

/// On-disk dataset contract:
///   scene/rgb/v{V}_t{T}.png        8-bit color
///   scene/depth/v{V}_t{T}.pfm      float depth, camera-frame z
///   scene/cameras.json             K (3x3 row-major), T (4x4 row-major)
///   scene/manifest.json            schema version, sizes, depth range,
///                                  embedded scene spec when generated here
///   scene/sparse_depth.txt         lines: view t x y z
///   scene/sparse_flow.txt          lines: v t x y u s x' y'
struct Dataset {
  std::string root;
  std::string name = "scene";
  int num_views = 0;
  int num_frames = 0;
  int width = 0, height = 0;
  double z_near = 0, z_far = 0;
  std::vector<std::vector<Camera>> cameras;  // [view][time]
  std::vector<std::vector<ImageD>> rgb;      // [view][time]
  std::vector<std::vector<ImageD>> depth;    // [view][time]
  std::vector<scenes::SparseDepthPoint> sparse_depth;
  std::vector<scenes::SparseFlowMatch> sparse_flow;
  bool has_spec = false;
  scenes::SceneSpec spec;  // valid when has_spec

  const Camera& camera(int v, int t) const { return cameras[v][t]; }
};

struct GenerateOptions {
  int sparse_depth_count = 256;   // per view (frame 0)
  double sparse_depth_noise = 0.0;
  int sparse_flow_count = 128;    // per view pair and frame pair
  int sparse_flow_delta = 10;     // paired frames s in {t - delta, t + delta}
  std::uint64_t seed = 1;
};

/// Renders every (view, time) of the spec and writes the dataset layout.
void generate_dataset(const scenes::SceneSpec& spec, const std::string& out_dir,
                      const GenerateOptions& options);

Dataset load_dataset(const std::string& dir);

/// Serialization of the scene spec (used inside manifest.json and by the
/// gen-scene CLI input).
std::string scene_spec_to_json(const scenes::SceneSpec& spec);
scenes::SceneSpec scene_spec_from_json(const std::string& json_text);

void save_sparse_depth(const std::string& path,
                       const std::vector<scenes::SparseDepthPoint>& points);
std::vector<scenes::SparseDepthPoint> load_sparse_depth(const std::string& path);
void save_sparse_flow(const std::string& path,
                      const std::vector<scenes::SparseFlowMatch>& matches);
std::vector<scenes::SparseFlowMatch> load_sparse_flow(const std::string& path);

/// cameras.json (de)serialization shared with the render CLI's pose lists.
void save_cameras_json(const std::string& path,
                       const std::vector<std::vector<Camera>>& cameras);
std::vector<std::vector<Camera>> load_cameras_json(const std::string& path);

}  // namespace sparseview
