// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#include "sparseview/config.hpp"

#include <set>

#include <json.hpp>

using nlohmann::json;

namespace sparseview {

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known,
                    const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) {
      throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
  }
}

void parse_sampling(const json& j, optim::SamplingConfig& s) {
  reject_unknown(j, {"n_coarse", "n_fine", "jitter", "domain", "s_near"},
                 "sampling");
  s.n_coarse = j.value("n_coarse", s.n_coarse);
  s.n_fine = j.value("n_fine", s.n_fine);
  s.jitter = j.value("jitter", s.jitter);
  if (j.contains("domain")) {
    const std::string d = j.at("domain").get<std::string>();
    if (d == "linear") s.domain = 0;
    else if (d == "inverse") s.domain = 1;
    else throw ConfigError("sampling.domain must be linear or inverse");
  }
  s.s_near = j.value("s_near", s.s_near);
}

void parse_field(const json& j, optim::FieldConfig& f) {
  reject_unknown(j,
                 {"family", "feature_dim", "grid_res", "rank_sigma", "rank_color",
                  "sigma_max", "hash_levels", "hash_base_resolution", "hash_growth",
                  "hash_table_size", "hash_features_per_level", "position_degrees",
                  "view_degrees", "hidden"},
                 "field");
  f.family = j.value("family", f.family);
  f.feature_dim = j.value("feature_dim", f.feature_dim);
  f.grid_res = j.value("grid_res", f.grid_res);
  f.rank_sigma = j.value("rank_sigma", f.rank_sigma);
  f.rank_color = j.value("rank_color", f.rank_color);
  f.sigma_max = j.value("sigma_max", f.sigma_max);
  f.hash_levels = j.value("hash_levels", f.hash_levels);
  f.hash_base_resolution = j.value("hash_base_resolution", f.hash_base_resolution);
  f.hash_growth = j.value("hash_growth", f.hash_growth);
  f.hash_table_size = j.value("hash_table_size", f.hash_table_size);
  f.hash_features_per_level =
      j.value("hash_features_per_level", f.hash_features_per_level);
  f.position_degrees = j.value("position_degrees", f.position_degrees);
  f.view_degrees = j.value("view_degrees", f.view_degrees);
  f.hidden = j.value("hidden", f.hidden);
}

void parse_weights(const json& j, losses::LossWeights& w) {
  reject_unknown(j,
                 {"photo_main", "photo_aug", "sparse_depth", "vip",
                  "visibility_consistency", "aug_depth", "cfc",
                  "mass_concentration", "sparse_flow", "vip_warmup", "aug_warmup"},
                 "weights");
  w.photo_main = j.value("photo_main", w.photo_main);
  w.photo_aug = j.value("photo_aug", w.photo_aug);
  w.sparse_depth = j.value("sparse_depth", w.sparse_depth);
  w.vip = j.value("vip", w.vip);
  w.visibility_consistency =
      j.value("visibility_consistency", w.visibility_consistency);
  w.aug_depth = j.value("aug_depth", w.aug_depth);
  w.cfc = j.value("cfc", w.cfc);
  w.mass_concentration = j.value("mass_concentration", w.mass_concentration);
  w.sparse_flow = j.value("sparse_flow", w.sparse_flow);
  w.vip_warmup = j.value("vip_warmup", w.vip_warmup);
  w.aug_warmup = j.value("aug_warmup", w.aug_warmup);
}

void parse_train_common(const json& j, int& iterations, int& batch, double& lr0,
                        double& lr_final, std::uint64_t& seed, int& threads,
                        std::vector<int>& train_views) {
  iterations = j.value("iterations", iterations);
  batch = j.value("batch_size", batch);
  lr0 = j.value("lr0", lr0);
  lr_final = j.value("lr_final", lr_final);
  seed = j.value("seed", seed);
  threads = j.value("threads", threads);
  if (j.contains("train_views")) {
    train_views = j.at("train_views").get<std::vector<int>>();
  }
}

}  // namespace

FitRunConfig parse_fit_config(const std::string& json_text) {
  json j = json::parse(json_text);
  FitRunConfig cfg;
  reject_unknown(j,
                 {"mode", "field", "sampling", "weights", "augmentations",
                  "aug_options", "enable_vip", "enable_sparse_depth", "enable_cfc",
                  "enable_sparse_flow", "psv_planes", "psv_gamma", "patch_size",
                  "err_threshold", "iterations", "batch_size", "sparse_depth_batch",
                  "flow_batch", "lr0", "lr_final", "seed", "threads", "train_views",
                  "motion", "canonical_time"},
                 "fit config");
  cfg.mode = j.value("mode", cfg.mode);
  if (cfg.mode != "static" && cfg.mode != "dynamic") {
    throw ConfigError("mode must be static or dynamic");
  }

  if (cfg.mode == "static") {
    auto& c = cfg.static_fit;
    if (j.contains("field")) parse_field(j.at("field"), c.field);
    if (j.contains("sampling")) parse_sampling(j.at("sampling"), c.sampling);
    if (j.contains("weights")) parse_weights(j.at("weights"), c.weights);
    if (j.contains("augmentations")) {
      c.augmentations = j.at("augmentations").get<std::vector<std::string>>();
      for (const auto& a : c.augmentations) augmentation_kind_from_string(a);
    }
    if (j.contains("aug_options")) {
      const json& a = j.at("aug_options");
      reject_unknown(a,
                     {"smoothing_split_degree", "tensor_rank_scale",
                      "tensor_res_divisor", "tensor_near_raise", "hash_table_shift",
                      "hash_s_near"},
                     "aug_options");
      c.aug_options.smoothing_split_degree =
          a.value("smoothing_split_degree", c.aug_options.smoothing_split_degree);
      c.aug_options.tensor_rank_scale =
          a.value("tensor_rank_scale", c.aug_options.tensor_rank_scale);
      c.aug_options.tensor_res_divisor =
          a.value("tensor_res_divisor", c.aug_options.tensor_res_divisor);
      c.aug_options.tensor_near_raise =
          a.value("tensor_near_raise", c.aug_options.tensor_near_raise);
      c.aug_options.hash_table_shift =
          a.value("hash_table_shift", c.aug_options.hash_table_shift);
      c.aug_options.hash_s_near = a.value("hash_s_near", c.aug_options.hash_s_near);
    }
    c.enable_vip = j.value("enable_vip", c.enable_vip);
    c.enable_sparse_depth = j.value("enable_sparse_depth", c.enable_sparse_depth);
    c.enable_cfc = j.value("enable_cfc", c.enable_cfc);
    c.psv_planes = j.value("psv_planes", c.psv_planes);
    c.psv_gamma = j.value("psv_gamma", c.psv_gamma);
    c.patch_size = j.value("patch_size", c.patch_size);
    c.err_threshold = j.value("err_threshold", c.err_threshold);
    c.sparse_depth_batch = j.value("sparse_depth_batch", c.sparse_depth_batch);
    parse_train_common(j, c.iterations, c.batch_size, c.lr0, c.lr_final, c.seed,
                       c.threads, c.train_views);
  } else {
    auto& c = cfg.dynamic_fit;
    if (j.contains("field")) parse_field(j.at("field"), c.field);
    if (j.contains("sampling")) parse_sampling(j.at("sampling"), c.sampling);
    if (j.contains("weights")) parse_weights(j.at("weights"), c.weights);
    if (j.contains("motion")) {
      const json& m = j.at("motion");
      reject_unknown(m,
                     {"spatial_resolutions", "time_resolutions", "features",
                      "hidden"},
                     "motion");
      if (m.contains("spatial_resolutions")) {
        c.motion.spatial_resolutions =
            m.at("spatial_resolutions").get<std::vector<int>>();
      }
      if (m.contains("time_resolutions")) {
        c.motion.time_resolutions =
            m.at("time_resolutions").get<std::vector<int>>();
      }
      c.motion.features = m.value("features", c.motion.features);
      c.motion.hidden = m.value("hidden", c.motion.hidden);
      if (c.motion.spatial_resolutions.size() != c.motion.time_resolutions.size()) {
        throw ConfigError("motion resolutions must have matching level counts");
      }
    }
    c.enable_sparse_flow = j.value("enable_sparse_flow", c.enable_sparse_flow);
    c.canonical_time = j.value("canonical_time", c.canonical_time);
    c.flow_batch = j.value("flow_batch", c.flow_batch);
    parse_train_common(j, c.iterations, c.batch_size, c.lr0, c.lr_final, c.seed,
                       c.threads, c.train_views);
  }
  return cfg;
}

TvsRunConfig parse_tvs_config(const std::string& json_text) {
  json j = json::parse(json_text);
  TvsRunConfig cfg;
  reject_unknown(j,
                 {"planes", "flow", "infill_iterations", "beta", "smooth_lambda",
                  "frame_now", "view", "k", "bound"},
                 "tvs config");
  cfg.tvs.planes = j.value("planes", cfg.tvs.planes);
  if (j.contains("flow")) {
    const json& f = j.at("flow");
    reject_unknown(f,
                   {"radius_xy", "s_z", "levels", "temp_scale",
                    "smooth_iterations", "smooth_a", "two_d_only"},
                   "flow");
    cfg.tvs.flow.radius_xy = f.value("radius_xy", cfg.tvs.flow.radius_xy);
    cfg.tvs.flow.s_z = f.value("s_z", cfg.tvs.flow.s_z);
    cfg.tvs.flow.levels = f.value("levels", cfg.tvs.flow.levels);
    cfg.tvs.flow.temp_scale = f.value("temp_scale", cfg.tvs.flow.temp_scale);
    cfg.tvs.flow.smooth_iterations =
        f.value("smooth_iterations", cfg.tvs.flow.smooth_iterations);
    cfg.tvs.flow.smooth_a = f.value("smooth_a", cfg.tvs.flow.smooth_a);
    cfg.tvs.flow.two_d_only = f.value("two_d_only", cfg.tvs.flow.two_d_only);
  }
  cfg.tvs.infill_iterations = j.value("infill_iterations", cfg.tvs.infill_iterations);
  cfg.tvs.beta = j.value("beta", cfg.tvs.beta);
  cfg.tvs.smooth_lambda = j.value("smooth_lambda", cfg.tvs.smooth_lambda);
  cfg.frame_now = j.value("frame_now", cfg.frame_now);
  cfg.view = j.value("view", cfg.view);
  cfg.k = j.value("k", cfg.k);
  if (j.contains("bound")) {
    cfg.bound_modes = j.at("bound").get<std::vector<std::string>>();
    for (const auto& b : cfg.bound_modes) {
      if (b != "gt-flow" && b != "gt-infill") {
        throw ConfigError("bound mode must be gt-flow or gt-infill, got " + b);
      }
    }
  }
  return cfg;
}

}  // namespace sparseview
