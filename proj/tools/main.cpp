// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "sparseview/config.hpp"
#include "sparseview/dataset.hpp"
#include "sparseview/eval.hpp"
#include "sparseview/gradcheck.hpp"
#include "sparseview/image_io.hpp"
#include "sparseview/mpi.hpp"
#include "sparseview/priors.hpp"
#include "sparseview/trainer.hpp"

namespace fs = std::filesystem;
using namespace sparseview;

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << text;
}

scenes::SceneSpec preset_scene(const std::string& name, std::uint64_t seed,
                               int views, int frames) {
  if (name == "occluder") return scenes::make_occluder_scene(seed, views);
  if (name == "static-dolly") return scenes::make_static_dolly_scene(seed, frames);
  if (name == "moving-sprite")
    return scenes::make_moving_sprite_scene(seed, frames, true);
  if (name == "dynamic-multiview")
    return scenes::make_dynamic_multiview_scene(seed, views, frames, true);
  throw Error("unknown preset: " + name);
}

int cmd_gen_scene(const std::string& spec_path, const std::string& preset,
                  const std::string& out_dir, std::uint64_t seed, int views,
                  int frames, int sd_count, int sf_count) {
  scenes::SceneSpec spec;
  if (!spec_path.empty()) {
    spec = scene_spec_from_json(read_text(spec_path));
  } else if (!preset.empty()) {
    spec = preset_scene(preset, seed, views, frames);
  } else {
    throw Error("gen-scene needs --spec or --preset");
  }
  GenerateOptions opts;
  opts.seed = seed;
  opts.sparse_depth_count = sd_count;
  opts.sparse_flow_count = sf_count;
  generate_dataset(spec, out_dir, opts);
  load_dataset(out_dir);  // declared outputs must load back
  std::cout << "dataset written to " << out_dir << "\n";
  return 0;
}

int cmd_vis_prior(const std::string& data_dir, int primary, int secondary,
                  int planes, double gamma, const std::string& out_dir) {
  const Dataset data = load_dataset(data_dir);
  if (primary < 0 || primary >= data.num_views || secondary < 0 ||
      secondary >= data.num_views || primary == secondary) {
    throw Error("vis-prior: bad view indices");
  }
  const auto psv = priors::build_psv(data.rgb[primary][0], data.camera(primary, 0),
                                     data.rgb[secondary][0],
                                     data.camera(secondary, 0), planes, data.z_near,
                                     data.z_far);
  const auto prior = priors::visibility_prior(psv, gamma);

  fs::create_directories(out_dir);
  write_png_mask((fs::path(out_dir) / "vis_prior.png").string(), prior.visible);
  write_pfm((fs::path(out_dir) / "min_error.pfm").string(), prior.min_error);

  std::ostringstream report;
  if (data.has_spec) {
    const ImageU8 gt = scenes::gt_visibility(data.spec, primary, secondary, 0);
    const auto prf = eval::visibility_prf(prior.visible, gt);
    report.precision(6);
    report << "precision " << prf.precision << "\n";
    report << "recall " << prf.recall << "\n";
    report << "f1 " << prf.f1 << "\n";
  } else {
    report << "no scene spec in manifest; skipping PRF against ground truth\n";
  }
  write_text((fs::path(out_dir) / "report.txt").string(), report.str());
  std::cout << report.str();
  return 0;
}

int cmd_fit(const std::string& data_dir, const std::string& config_path,
            const std::string& out_dir, std::int64_t seed_override,
            int threads_override) {
  const Dataset data = load_dataset(data_dir);
  FitRunConfig cfg = parse_fit_config(read_text(config_path));
  fs::create_directories(out_dir);

  if (cfg.mode == "static") {
    auto& c = cfg.static_fit;
    if (seed_override >= 0) c.seed = static_cast<std::uint64_t>(seed_override);
    if (threads_override > 0) c.threads = threads_override;
    auto result = optim::fit_static(data, c);
    write_text((fs::path(out_dir) / "train_log.txt").string(),
               optim::format_log(result.log));
    const Checkpoint ckpt = optim::to_checkpoint(std::move(result), data, c);
    save_checkpoint((fs::path(out_dir) / "checkpoint.svck").string(), ckpt);
  } else {
    auto& c = cfg.dynamic_fit;
    if (seed_override >= 0) c.seed = static_cast<std::uint64_t>(seed_override);
    if (threads_override > 0) c.threads = threads_override;
    auto result = optim::fit_dynamic(data, c);
    write_text((fs::path(out_dir) / "train_log.txt").string(),
               optim::format_log(result.log));
    const Checkpoint ckpt = optim::to_checkpoint(std::move(result), data, c);
    save_checkpoint((fs::path(out_dir) / "checkpoint.svck").string(), ckpt);
  }
  load_checkpoint((fs::path(out_dir) / "checkpoint.svck").string());
  if (!fs::exists(fs::path(out_dir) / "train_log.txt")) {
    throw Error("fit: train_log.txt missing");
  }
  std::cout << "checkpoint written to " << out_dir << "\n";
  return 0;
}

int cmd_render(const std::string& ckpt_path, const std::string& poses_path,
               const std::string& out_dir, int threads) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const auto cameras = load_cameras_json(poses_path);
  fs::create_directories(out_dir);

  optim::SamplingConfig sampling;
  sampling.n_coarse = ckpt.n_coarse;
  sampling.n_fine = ckpt.n_fine;
  sampling.domain = ckpt.sampling_domain;
  sampling.s_near = ckpt.s_near;
  sampling.jitter = false;

  for (std::size_t v = 0; v < cameras.size(); ++v) {
    for (std::size_t t = 0; t < cameras[v].size(); ++t) {
      const Camera& cam = cameras[v][t];
      if (cam.width <= 0) continue;
      const double tn =
          ckpt.time_max > 0 ? static_cast<double>(t) / ckpt.time_max : 0.0;
      const auto img = optim::render_image(
          ckpt.main, ckpt.fine ? &*ckpt.fine : nullptr,
          ckpt.motion ? &*ckpt.motion : nullptr, tn, cam, sampling, ckpt.z_near,
          ckpt.z_far, threads);
      const std::string stem = "v" + std::to_string(v) + "_t" + std::to_string(t);
      write_png((fs::path(out_dir) / (stem + ".png")).string(), to_u8(img.rgb));
      write_pfm((fs::path(out_dir) / (stem + ".pfm")).string(), img.depth);
    }
  }
  std::cout << "renders written to " << out_dir << "\n";
  return 0;
}

int cmd_tvs(const std::string& data_dir, const std::string& config_path, int view,
            int k, int frame_now, const std::string& bound_csv,
            const std::string& out_dir, bool dump_mpi) {
  const Dataset data = load_dataset(data_dir);
  TvsRunConfig cfg;
  if (!config_path.empty()) cfg = parse_tvs_config(read_text(config_path));
  if (view >= 0) cfg.view = view;
  if (k > 0) cfg.k = k;
  if (frame_now >= 0) cfg.frame_now = frame_now;
  if (!bound_csv.empty()) {
    cfg.bound_modes.clear();
    std::stringstream ss(bound_csv);
    std::string item;
    while (std::getline(ss, item, ',')) cfg.bound_modes.push_back(item);
  }
  for (const auto& b : cfg.bound_modes) {
    if (b == "gt-flow") cfg.tvs.bound_gt_flow = true;
    else if (b == "gt-infill") cfg.tvs.bound_gt_infill = true;
    else throw Error("unknown bound mode " + b);
  }

  const int v = cfg.view;
  if (v < 0 || v >= data.num_views) throw Error("tvs: bad view");
  const int n = cfg.frame_now >= 0 ? cfg.frame_now : cfg.k;
  if (n - cfg.k < 0 || n + cfg.k - 1 >= data.num_frames) {
    throw Error("tvs: frame range [n-k, n+k-1] outside the dataset");
  }

  mpi::TvsInputs inputs;
  inputs.rgb_prev = data.rgb[v][n - cfg.k];
  inputs.depth_prev = data.depth[v][n - cfg.k];
  inputs.cam_prev = data.camera(v, n - cfg.k);
  inputs.rgb_now = data.rgb[v][n];
  inputs.depth_now = data.depth[v][n];
  inputs.cam_now = data.camera(v, n);
  inputs.z_min = data.z_near;
  inputs.z_max = data.z_far;
  inputs.k = cfg.k;
  for (int kp = 1; kp < cfg.k; ++kp) {
    inputs.future_cams.push_back(data.camera(v, n + kp));
    if (cfg.tvs.bound_gt_infill) inputs.gt_future.push_back(data.rgb[v][n + kp]);
    if (cfg.tvs.bound_gt_flow) {
      if (!data.has_spec) throw Error("tvs: gt-flow bound needs the scene spec");
      inputs.gt_local_flow.push_back(
          scenes::gt_object_flow(data.spec, v, n, n + kp).flow);
    }
  }

  const mpi::TvsResult result = mpi::predict_frames(inputs, cfg.tvs);

  fs::create_directories(out_dir);
  std::ostringstream report;
  report.precision(6);
  for (int kp = 1; kp < cfg.k; ++kp) {
    const std::string stem = "pred_t" + std::to_string(n + kp);
    write_png((fs::path(out_dir) / (stem + ".png")).string(),
              to_u8(result.frames[kp - 1]));
    write_pfm((fs::path(out_dir) / (stem + ".pfm")).string(), result.depths[kp - 1]);
    write_png_mask(
        (fs::path(out_dir) / ("disocc_t" + std::to_string(n + kp) + ".png")).string(),
        result.disocclusions[kp - 1]);
    const double frame_psnr = eval::psnr(result.frames[kp - 1], data.rgb[v][n + kp]);
    report << "psnr_t" << (n + kp) << " " << frame_psnr << "\n";
  }
  if (data.has_spec) {
    const scenes::GtFlow gt = scenes::gt_object_flow(data.spec, v, n, n - cfg.k);
    ImageU8 mask(result.flow_valid.width(), result.flow_valid.height(), 1, 0);
    for (int y = 0; y < mask.height(); ++y) {
      for (int x = 0; x < mask.width(); ++x) {
        mask.at(x, y) = result.flow_valid.at(x, y) && gt.valid.at(x, y);
      }
    }
    report << "aepe " << eval::aepe(result.flow_map, gt.flow, &mask) << "\n";
  }
  report << "flow_photometric " << result.flow_photometric << "\n";
  report << "flow_smoothness " << result.flow_smoothness << "\n";
  report << "unfilled " << result.unfilled_total << "\n";
  write_text((fs::path(out_dir) / "report.txt").string(), report.str());
  std::cout << report.str();

  if (dump_mpi) {
    const mpi::Mpi m = mpi::build_mpi(inputs.rgb_now, inputs.depth_now,
                                      cfg.tvs.planes, inputs.z_min, inputs.z_max);
    for (int z = 0; z < m.planes(); ++z) {
      const std::string stem = "mpi_plane" + std::to_string(z);
      write_png((fs::path(out_dir) / (stem + "_rgb.png")).string(), to_u8(m.rgb[z]));
      write_pfm((fs::path(out_dir) / (stem + "_depth.pfm")).string(), m.depth[z]);
      write_pfm((fs::path(out_dir) / (stem + "_alpha.pfm")).string(), m.alpha[z]);
    }
  }
  return 0;
}

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir,
             const std::string& mask_dir, const std::string& out_dir) {
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(pred_dir)) {
    if (entry.path().extension() == ".png") {
      names.push_back(entry.path().stem().string());
    }
  }
  std::sort(names.begin(), names.end());
  if (names.empty()) throw Error("eval: no .png files under " + pred_dir);

  double psnr_acc = 0, ssim_acc = 0, mae_acc = 0, rmse_acc = 0, srocc_acc = 0;
  int count = 0, depth_count = 0;
  for (const auto& name : names) {
    const fs::path gt_png = fs::path(gt_dir) / (name + ".png");
    if (!fs::exists(gt_png)) throw Error("eval: missing gt image " + gt_png.string());
    const ImageD pred =
        from_u8(read_png((fs::path(pred_dir) / (name + ".png")).string()));
    const ImageD gt = from_u8(read_png(gt_png.string()));
    ImageU8 mask;
    const ImageU8* mask_ptr = nullptr;
    if (!mask_dir.empty()) {
      const fs::path mp = fs::path(mask_dir) / (name + ".png");
      if (!fs::exists(mp)) throw Error("eval: missing mask " + mp.string());
      mask = read_png(mp.string());
      mask_ptr = &mask;
    }
    psnr_acc += eval::psnr(pred, gt, 1.0, mask_ptr);
    ssim_acc += eval::ssim(pred, gt);
    ++count;

    const fs::path pred_pfm = fs::path(pred_dir) / (name + ".pfm");
    const fs::path gt_pfm = fs::path(gt_dir) / (name + ".pfm");
    if (fs::exists(pred_pfm) && fs::exists(gt_pfm)) {
      const auto dm = eval::depth_metrics(read_pfm(pred_pfm.string()),
                                          read_pfm(gt_pfm.string()), mask_ptr);
      mae_acc += dm.mae;
      rmse_acc += dm.rmse;
      srocc_acc += dm.srocc;
      ++depth_count;
    }
  }

  eval::MetricReport report;
  report.psnr = psnr_acc / count;
  report.ssim = ssim_acc / count;
  if (depth_count > 0) {
    report.depth_mae = mae_acc / depth_count;
    report.depth_rmse = rmse_acc / depth_count;
    report.depth_srocc = srocc_acc / depth_count;
  }
  fs::create_directories(out_dir);
  write_text((fs::path(out_dir) / "report.txt").string(), report.table());
  write_text((fs::path(out_dir) / "metrics.txt").string(), report.key_values());
  std::cout << report.table();
  return 0;
}

int cmd_gradcheck(const std::string& out_dir, std::uint64_t seed) {
  gradcheck::CheckOptions opts;
  opts.seed = seed;
  const auto results = gradcheck::run_all(opts);
  const std::string table = gradcheck::format_table(results);
  std::cout << table;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text((fs::path(out_dir) / "gradcheck.txt").string(), table);
  }
  return gradcheck::all_pass(results) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sparse-input view synthesis toolkit"};
  app.require_subcommand(1);

  std::string spec_path, preset, out_dir, data_dir, config_path;
  std::string ckpt_path, poses_path, pred_dir, gt_dir, mask_dir, bound_csv;
  std::int64_t seed = -1;
  int threads = 0;
  int views = 2, frames = 1, primary = 0, secondary = 1;
  int planes = 64;
  double gamma = 10.0;
  int view = -1, k = 0, frame_now = -1;
  int sd_count = 256, sf_count = 128;
  bool dump_mpi = false;

  auto* gen = app.add_subcommand("gen-scene", "generate a synthetic dataset");
  gen->add_option("--spec", spec_path, "scene spec json");
  gen->add_option("--preset", preset,
                  "occluder | static-dolly | moving-sprite | dynamic-multiview");
  gen->add_option("--out", out_dir)->required();
  gen->add_option("--seed", seed);
  gen->add_option("--views", views);
  gen->add_option("--frames", frames);
  gen->add_option("--sparse-depth-count", sd_count);
  gen->add_option("--sparse-flow-count", sf_count);

  auto* vis = app.add_subcommand("vis-prior", "plane-sweep visibility prior");
  vis->add_option("--data", data_dir)->required();
  vis->add_option("--primary", primary)->required();
  vis->add_option("--secondary", secondary)->required();
  vis->add_option("--planes", planes);
  vis->add_option("--gamma", gamma);
  vis->add_option("--out", out_dir)->required();

  auto* fit = app.add_subcommand("fit", "train a field on a dataset");
  fit->add_option("--data", data_dir)->required();
  fit->add_option("--config", config_path)->required();
  fit->add_option("--out", out_dir)->required();
  fit->add_option("--seed", seed);
  fit->add_option("--threads", threads);

  auto* render = app.add_subcommand("render", "render a checkpoint at poses");
  render->add_option("--checkpoint", ckpt_path)->required();
  render->add_option("--poses", poses_path)->required();
  render->add_option("--out", out_dir)->required();
  render->add_option("--threads", threads);

  auto* tvs = app.add_subcommand("tvs", "temporal view synthesis");
  tvs->add_option("--data", data_dir)->required();
  tvs->add_option("--config", config_path);
  tvs->add_option("--view", view);
  tvs->add_option("--k", k);
  tvs->add_option("--frame", frame_now);
  tvs->add_option("--bound", bound_csv, "comma list: gt-flow,gt-infill");
  tvs->add_option("--out", out_dir)->required();
  tvs->add_flag("--dump-mpi", dump_mpi);

  auto* ev = app.add_subcommand("eval", "image/depth metrics between two dirs");
  ev->add_option("--pred", pred_dir)->required();
  ev->add_option("--gt", gt_dir)->required();
  ev->add_option("--mask", mask_dir);
  ev->add_option("--out", out_dir)->required();

  auto* gc = app.add_subcommand("gradcheck", "adjoint vs finite-difference table");
  gc->add_option("--out", out_dir);
  gc->add_option("--seed", seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      return cmd_gen_scene(spec_path, preset, out_dir,
                           seed < 0 ? 1 : static_cast<std::uint64_t>(seed), views,
                           frames, sd_count, sf_count);
    }
    if (vis->parsed()) {
      return cmd_vis_prior(data_dir, primary, secondary, planes, gamma, out_dir);
    }
    if (fit->parsed()) {
      return cmd_fit(data_dir, config_path, out_dir, seed, threads);
    }
    if (render->parsed()) {
      return cmd_render(ckpt_path, poses_path, out_dir, threads);
    }
    if (tvs->parsed()) {
      return cmd_tvs(data_dir, config_path, view, k, frame_now, bound_csv, out_dir,
                     dump_mpi);
    }
    if (ev->parsed()) {
      return cmd_eval(pred_dir, gt_dir, mask_dir, out_dir);
    }
    if (gc->parsed()) {
      return cmd_gradcheck(out_dir, seed < 0 ? 7 : static_cast<std::uint64_t>(seed));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
