// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#include "sparseview/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "sparseview/image_io.hpp"

namespace sparseview {

namespace {

constexpr char kMagic[4] = {'S', 'V', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}
void put_f64(std::ostream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), 8);
}
std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
double get_f64(std::istream& in) {
  double v = 0;
  in.read(reinterpret_cast<char*>(&v), 8);
  return v;
}

void put_blocks(std::ostream& out, const std::vector<ParamBlock*>& blocks) {
  put_u32(out, static_cast<std::uint32_t>(blocks.size()));
  for (const ParamBlock* b : blocks) {
    put_u32(out, static_cast<std::uint32_t>(b->name.size()));
    out.write(b->name.data(), static_cast<std::streamsize>(b->name.size()));
    const std::uint64_t n = b->value.size();
    out.write(reinterpret_cast<const char*>(&n), 8);
    out.write(reinterpret_cast<const char*>(b->value.data()),
              static_cast<std::streamsize>(n * sizeof(double)));
  }
}

void get_blocks(std::istream& in, const std::vector<ParamBlock*>& blocks) {
  const std::uint32_t count = get_u32(in);
  if (count != blocks.size()) throw IoError("checkpoint: block count mismatch");
  for (ParamBlock* b : blocks) {
    const std::uint32_t name_len = get_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    std::uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), 8);
    if (n != b->value.size()) {
      throw IoError("checkpoint: size mismatch for block " + name);
    }
    in.read(reinterpret_cast<char*>(b->value.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
  }
}

void put_box(std::ostream& out, const BoundingBox& box) {
  for (int i = 0; i < 3; ++i) put_f64(out, box.min[i]);
  for (int i = 0; i < 3; ++i) put_f64(out, box.max[i]);
}

BoundingBox get_box(std::istream& in) {
  BoundingBox box;
  for (int i = 0; i < 3; ++i) box.min[i] = get_f64(in);
  for (int i = 0; i < 3; ++i) box.max[i] = get_f64(in);
  return box;
}

void put_color_config(std::ostream& out, const ColorDecoder::Config& c) {
  put_u32(out, static_cast<std::uint32_t>(c.feature_dim));
  put_u32(out, c.view_dependent ? 1 : 0);
  put_u32(out, static_cast<std::uint32_t>(c.view_degrees));
  put_u32(out, static_cast<std::uint32_t>(c.residual_d1));
  put_u32(out, static_cast<std::uint32_t>(c.residual_d2));
  put_u32(out, c.time_conditioned ? 1 : 0);
  put_u32(out, static_cast<std::uint32_t>(c.time_degrees));
  put_u32(out, c.visibility_head ? 1 : 0);
  put_u32(out, static_cast<std::uint32_t>(c.hidden));
}

ColorDecoder::Config get_color_config(std::istream& in) {
  ColorDecoder::Config c;
  c.feature_dim = static_cast<int>(get_u32(in));
  c.view_dependent = get_u32(in) != 0;
  c.view_degrees = static_cast<int>(get_u32(in));
  c.residual_d1 = static_cast<int>(get_u32(in));
  c.residual_d2 = static_cast<int>(get_u32(in));
  c.time_conditioned = get_u32(in) != 0;
  c.time_degrees = static_cast<int>(get_u32(in));
  c.visibility_head = get_u32(in) != 0;
  c.hidden = static_cast<int>(get_u32(in));
  return c;
}

void put_model(std::ostream& out, const RadianceModel& model) {
  const RadianceModel& m = model;
  put_u32(out, static_cast<std::uint32_t>(m.field->family()));
  put_box(out, m.field->box());
  switch (m.field->family()) {
    case FieldFamily::Voxel: {
      const auto* f = static_cast<const VoxelField*>(m.field.get());
      put_u32(out, f->nx());
      put_u32(out, f->ny());
      put_u32(out, f->nz());
      put_u32(out, f->feature_dim());
      break;
    }
    case FieldFamily::FactorizedTensor: {
      const auto* f = static_cast<const FactorizedTensorField*>(m.field.get());
      put_u32(out, f->nx());
      put_u32(out, f->ny());
      put_u32(out, f->nz());
      put_u32(out, f->rank_sigma());
      put_u32(out, f->rank_color());
      put_u32(out, f->feature_dim());
      put_f64(out, f->sigma_max());
      break;
    }
    case FieldFamily::HashGrid: {
      const auto* f = static_cast<const HashGridField*>(m.field.get());
      const auto& c = f->config();
      put_u32(out, c.levels);
      put_u32(out, c.base_resolution);
      put_f64(out, c.growth);
      put_u32(out, c.table_size);
      put_u32(out, c.features_per_level);
      put_u32(out, c.feature_dim);
      put_u32(out, c.hidden);
      put_f64(out, c.s_near);
      break;
    }
    case FieldFamily::Encoded: {
      const auto* f = static_cast<const EncodedField*>(m.field.get());
      const auto& c = f->config();
      put_u32(out, c.position_degrees);
      put_u32(out, c.feature_dim);
      put_u32(out, c.hidden);
      break;
    }
  }
  put_color_config(out, m.color.config());
  RadianceModel& mut = const_cast<RadianceModel&>(model);
  put_blocks(out, mut.params());
}

RadianceModel get_model(std::istream& in) {
  const auto family = static_cast<FieldFamily>(get_u32(in));
  const BoundingBox box = get_box(in);
  RadianceModel model;
  switch (family) {
    case FieldFamily::Voxel: {
      const int nx = get_u32(in), ny = get_u32(in), nz = get_u32(in);
      const int fd = get_u32(in);
      model.field = std::make_unique<VoxelField>(box, nx, ny, nz, fd);
      break;
    }
    case FieldFamily::FactorizedTensor: {
      const int nx = get_u32(in), ny = get_u32(in), nz = get_u32(in);
      const int rs = get_u32(in), rc = get_u32(in), fd = get_u32(in);
      const double sigma_max = get_f64(in);
      model.field = std::make_unique<FactorizedTensorField>(box, nx, ny, nz, rs, rc,
                                                            fd, sigma_max);
      break;
    }
    case FieldFamily::HashGrid: {
      HashGridField::Config c;
      c.levels = get_u32(in);
      c.base_resolution = get_u32(in);
      c.growth = get_f64(in);
      c.table_size = get_u32(in);
      c.features_per_level = get_u32(in);
      c.feature_dim = get_u32(in);
      c.hidden = get_u32(in);
      c.s_near = get_f64(in);
      model.field = std::make_unique<HashGridField>(box, c);
      break;
    }
    case FieldFamily::Encoded: {
      EncodedField::Config c;
      c.position_degrees = get_u32(in);
      c.feature_dim = get_u32(in);
      c.hidden = get_u32(in);
      model.field = std::make_unique<EncodedField>(box, c);
      break;
    }
    default:
      throw IoError("checkpoint: unknown field family");
  }
  model.color = ColorDecoder(get_color_config(in));
  get_blocks(in, model.params());
  return model;
}

void put_motion(std::ostream& out, const HexPlaneMotionField& motion) {
  put_box(out, motion.box());
  const auto& c = motion.config();
  put_u32(out, static_cast<std::uint32_t>(c.spatial_resolutions.size()));
  for (const int r : c.spatial_resolutions) put_u32(out, r);
  for (const int r : c.time_resolutions) put_u32(out, r);
  put_u32(out, c.features);
  put_u32(out, c.hidden);
  HexPlaneMotionField& mut = const_cast<HexPlaneMotionField&>(motion);
  put_blocks(out, mut.params());
}

HexPlaneMotionField get_motion(std::istream& in, double t_min, double t_max) {
  const BoundingBox box = get_box(in);
  HexPlaneMotionField::Config c;
  const std::uint32_t levels = get_u32(in);
  c.spatial_resolutions.resize(levels);
  c.time_resolutions.resize(levels);
  for (auto& r : c.spatial_resolutions) r = get_u32(in);
  for (auto& r : c.time_resolutions) r = get_u32(in);
  c.features = get_u32(in);
  c.hidden = get_u32(in);
  HexPlaneMotionField motion(box, t_min, t_max, c);
  get_blocks(in, motion.params());
  return motion;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("checkpoint: cannot open for write: " + path);
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  std::uint32_t flags = 0;
  if (ckpt.fine) flags |= 1;
  if (ckpt.motion) flags |= 2;
  put_u32(out, flags);
  put_f64(out, ckpt.z_near);
  put_f64(out, ckpt.z_far);
  put_u32(out, static_cast<std::uint32_t>(ckpt.n_coarse));
  put_u32(out, static_cast<std::uint32_t>(ckpt.n_fine));
  put_u32(out, static_cast<std::uint32_t>(ckpt.sampling_domain));
  put_f64(out, ckpt.s_near);
  put_f64(out, ckpt.time_min);
  put_f64(out, ckpt.time_max);
  put_model(out, ckpt.main);
  if (ckpt.fine) put_model(out, *ckpt.fine);
  if (ckpt.motion) put_motion(out, *ckpt.motion);
  if (!out) throw IoError("checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open: " + path);
  char magic[4];
  in.read(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("checkpoint: bad magic in " + path);
  }
  if (get_u32(in) != kVersion) throw IoError("checkpoint: unsupported version");
  const std::uint32_t flags = get_u32(in);
  Checkpoint ckpt;
  ckpt.z_near = get_f64(in);
  ckpt.z_far = get_f64(in);
  ckpt.n_coarse = static_cast<int>(get_u32(in));
  ckpt.n_fine = static_cast<int>(get_u32(in));
  ckpt.sampling_domain = static_cast<int>(get_u32(in));
  ckpt.s_near = get_f64(in);
  ckpt.time_min = get_f64(in);
  ckpt.time_max = get_f64(in);
  ckpt.main = get_model(in);
  if (flags & 1) ckpt.fine = get_model(in);
  // the motion field always operates in normalized time
  if (flags & 2) ckpt.motion = get_motion(in, 0.0, 1.0);
  if (!in) throw IoError("checkpoint: truncated file: " + path);
  return ckpt;
}

}  // namespace sparseview
