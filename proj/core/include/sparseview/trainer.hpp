// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "sparseview/checkpoint.hpp"
#include "sparseview/dataset.hpp"
#include "sparseview/losses.hpp"
#include "sparseview/optim.hpp"
#include "sparseview/render.hpp"

namespace sparseview::optim {

struct SamplingConfig {
  int n_coarse = 64;
  int n_fine = 0;        // > 0 enables the hierarchical fine pass
  bool jitter = true;
  int domain = 0;        // 0 linear depth, 1 normalized inverse depth
  double s_near = 0.0;
};

struct FieldConfig {
  std::string family = "tensor";  // voxel | tensor | hash | encoded
  int feature_dim = 8;
  // voxel / tensor
  int grid_res = 40;
  int rank_sigma = 6;
  int rank_color = 6;
  double sigma_max = 200.0;
  // hash
  int hash_levels = 4;
  int hash_base_resolution = 4;
  double hash_growth = 2.0;
  int hash_table_size = 1 << 14;
  int hash_features_per_level = 2;
  // encoded
  int position_degrees = 10;  // l_p
  // color decoder
  int view_degrees = 4;       // l_v
  int hidden = 64;
};

struct StaticFitConfig {
  FieldConfig field;
  SamplingConfig sampling;
  losses::LossWeights weights;
  std::vector<std::string> augmentations;  // subset of the four kinds
  AugmentationOptions aug_options;

  bool enable_vip = false;          // visibility head + PSV prior + L_v
  bool enable_sparse_depth = true;
  bool enable_cfc = false;          // needs sampling.n_fine > 0

  int psv_planes = 64;
  double psv_gamma = 10.0;
  int patch_size = 5;        // k
  double err_threshold = 0.1;  // e_tau

  int iterations = 2000;
  int batch_size = 512;
  int sparse_depth_batch = 96;
  double lr0 = 5e-4;
  double lr_final = 5e-6;
  std::uint64_t seed = 1;
  int threads = 0;  // 0 resolves SPARSEVIEW_THREADS, else 4

  std::vector<int> train_views;  // empty = all views (frame 0)
};

struct TrainLogEntry {
  int iter = 0;
  double loss = 0.0;
  double psnr = 0.0;
  double lr = 0.0;
};

std::string format_log(const std::vector<TrainLogEntry>& log);

struct StaticFitResult {
  RadianceModel main;
  std::optional<RadianceModel> fine;
  std::vector<RadianceModel> augmented;
  std::vector<TrainLogEntry> log;
  BoundingBox box;
};

StaticFitResult fit_static(const Dataset& data, const StaticFitConfig& config);

struct DynamicFitConfig {
  FieldConfig field;          // canonical scene field (time-conditioned color)
  SamplingConfig sampling;
  losses::LossWeights weights;
  HexPlaneMotionField::Config motion;

  bool enable_sparse_flow = true;
  int canonical_time = -1;  // -1 picks the middle frame

  int iterations = 2500;
  int batch_size = 512;
  int flow_batch = 32;  // match pairs per iteration
  double lr0 = 5e-4;
  double lr_final = 5e-6;
  std::uint64_t seed = 1;
  int threads = 0;

  std::vector<int> train_views;
};

struct DynamicFitResult {
  RadianceModel scene;
  HexPlaneMotionField motion;
  std::vector<TrainLogEntry> log;
  BoundingBox box;
  double canonical_time = 0.0;  // normalized
};

DynamicFitResult fit_dynamic(const Dataset& data, const DynamicFitConfig& config);

/// Scene bounding box covering the camera frustums over [z_near, z_far].
BoundingBox scene_bounds(const Dataset& data, const std::vector<int>& views);

RadianceModel build_model(const FieldConfig& config, const BoundingBox& box,
                          bool visibility_head, bool time_conditioned,
                          std::uint64_t seed);

struct RenderedImage {
  ImageD rgb;
  ImageD depth;
};

/// Full-frame render of a (possibly coarse+fine) model; motion/time apply to
/// dynamic checkpoints.
RenderedImage render_image(const RadianceModel& main, const RadianceModel* fine,
                           const HexPlaneMotionField* motion, double time,
                           const Camera& camera, const SamplingConfig& sampling,
                           double z_near, double z_far, int threads,
                           std::uint64_t seed = 0x72656e64);

Checkpoint to_checkpoint(StaticFitResult&& result, const Dataset& data,
                         const StaticFitConfig& config);
Checkpoint to_checkpoint(DynamicFitResult&& result, const Dataset& data,
                         const DynamicFitConfig& config);

}  // namespace sparseview::optim
