// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "sparseview/geometry.hpp"
#include "sparseview/image.hpp"

namespace sparseview::scenes {

struct Texture {
  enum class Kind { Solid, Checker, Gradient } kind = Kind::Solid;
  Eigen::Vector3d color_a = Eigen::Vector3d(0.8, 0.8, 0.8);
  Eigen::Vector3d color_b = Eigen::Vector3d(0.2, 0.2, 0.2);
  double scale = 0.5;  // checker cell size / gradient period (m)
  Eigen::Vector3d direction = Eigen::Vector3d(1.0, 0.35, 0.0);  // gradient axis

  Eigen::Vector3d sample(const Eigen::Vector3d& object_point) const;
};

struct Primitive {
  enum class Kind { Plane, Box, Sphere } kind = Kind::Plane;
  double plane_z = 5.0;                       // fronto-parallel plane (world z)
  Eigen::Vector3d box_min = Eigen::Vector3d::Zero();
  Eigen::Vector3d box_max = Eigen::Vector3d::Ones();
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 0.5;
  Texture texture;
  double tint = 0.0;                          // view-dependent term strength
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();  // m per frame

  Eigen::Vector3d offset_at(double t) const { return velocity * t; }
};

struct SceneSpec {
  std::string name = "scene";
  int width = 192;
  int height = 128;
  double z_near = 1.0;
  double z_far = 10.0;
  Eigen::Vector3d background_color = Eigen::Vector3d(0.05, 0.05, 0.08);
  int num_frames = 1;
  std::vector<std::vector<Camera>> cameras;  // [view][time]
  std::vector<Primitive> primitives;

  int num_views() const { return static_cast<int>(cameras.size()); }
  const Camera& camera(int view, int time) const { return cameras[view][time]; }
};

struct Hit {
  double depth = 0.0;  // camera-frame z along the ray parameterization
  int primitive = -1;
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  Eigen::Vector3d normal = Eigen::Vector3d::Zero();
};

/// First hit along the ray at frame time t, or nullopt for background.
std::optional<Hit> trace(const SceneSpec& spec, const Ray& ray, double t);

struct GtRender {
  ImageD rgb;    // 3 channels
  ImageD depth;  // 1 channel, camera-frame z; z_far where nothing is hit
};

GtRender render_gt(const SceneSpec& spec, int view, int time);

/// Binary map: primary-view pixel visible in the secondary view, decided by
/// retracing the reprojected point and comparing depths within rel_eps.
ImageU8 gt_visibility(const SceneSpec& spec, int primary_view, int secondary_view,
                      int time, double rel_eps = 5e-3);

struct GtFlow {
  ImageD flow;     // 3 channels: dx px, dy px, dz m (camera held fixed)
  ImageU8 valid;   // 1 where a primitive was hit and reprojection stayed valid
};

/// Object-motion flow from frame t to frame s observed in a fixed camera.
GtFlow gt_object_flow(const SceneSpec& spec, int view, int t, int s);

struct SparseDepthPoint {
  int view = 0;
  int time = 0;
  double x = 0, y = 0, z = 0;
};

struct SparseFlowMatch {
  int v = 0, t = 0;
  double x = 0, y = 0;
  int u = 0, s = 0;
  double x2 = 0, y2 = 0;
};

/// Keypoint depths on high-gradient image locations with optional
/// multiplicative noise; a deterministic stand-in for SfM output.
std::vector<SparseDepthPoint> oracle_sparse_depth(const SceneSpec& spec, int view,
                                                  int time, int count,
                                                  double noise,
                                                  std::uint64_t seed);

/// Matched pixel pairs between (view v, frame t) and (view u, frame s) drawn
/// from ground-truth correspondences at textured locations.
std::vector<SparseFlowMatch> oracle_sparse_flow(const SceneSpec& spec, int v, int t,
                                                int u, int s, int count,
                                                double perturb,
                                                std::uint64_t seed);

// Prefab scene constructors used by the CLI and tests.

/// Textured background plane plus a textured occluder box, viewed from
/// `views` cameras on a horizontal line. Seed varies layout and textures.
SceneSpec make_occluder_scene(std::uint64_t seed, int views, int width = 192,
                              int height = 128);

/// Static scene observed by a camera translating sideways over time.
SceneSpec make_static_dolly_scene(std::uint64_t seed, int frames, int width = 192,
                                  int height = 128);

/// Textured sprite (box) moving at constant velocity in front of a textured
/// background; camera may also move when with_camera_motion is set.
SceneSpec make_moving_sprite_scene(std::uint64_t seed, int frames,
                                   bool with_camera_motion, int width = 192,
                                   int height = 128);

/// Multi-camera rig observing a moving box, for dynamic-field fits.
SceneSpec make_dynamic_multiview_scene(std::uint64_t seed, int views, int frames,
                                       bool moving, int width = 192,
                                       int height = 128);

}  // namespace sparseview::scenes
