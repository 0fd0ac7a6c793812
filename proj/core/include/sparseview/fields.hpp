// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <array>
#include <memory>
#include <optional>
#include <vector>

#include "sparseview/decoder.hpp"

namespace sparseview {

class IncompatibleKind : public Error {
 public:
  explicit IncompatibleKind(const std::string& msg) : Error(msg) {}
};

class OutOfBounds : public Error {
 public:
  explicit OutOfBounds(const std::string& msg) : Error(msg) {}
};

enum class FieldFamily : std::uint32_t {
  Voxel = 1,
  FactorizedTensor = 2,
  HashGrid = 3,
  Encoded = 4,
};

struct BoundingBox {
  Eigen::Vector3d min = Eigen::Vector3d(-1, -1, -1);
  Eigen::Vector3d max = Eigen::Vector3d(1, 1, 1);

  bool contains(const Eigen::Vector3d& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
};

/// Maps a point into [-1, 1]^3 box coordinates.
inline Eigen::Vector3d normalize_to_box(const Eigen::Vector3d& p,
                                        const BoundingBox& box) {
  return (2.0 * (p - box.min).array() / (box.max - box.min).array() - 1.0).matrix();
}

/// Per-sample scratch reused across queries; avoids reallocation in the
/// render inner loop and carries what backward needs.
struct FieldQueryCache {
  Eigen::Vector3d p = Eigen::Vector3d::Zero();
  bool inside = false;
  double raw_density = 0.0;  // pre-activation
  std::vector<double> scratch;
};

/// Density + latent-feature field with adjoint accumulation into its
/// parameter blocks and (optionally) into the query position.
class DensityField {
 public:
  virtual ~DensityField() = default;
  virtual FieldFamily family() const = 0;
  virtual int feature_dim() const = 0;
  virtual const BoundingBox& box() const = 0;

  /// sigma >= 0; features has feature_dim entries. Outside the bounding box
  /// density and features are zero (and backward is a no-op).
  virtual void query(const Eigen::Vector3d& p, double* sigma, double* features,
                     FieldQueryCache& cache) const = 0;
  /// Accumulates adjoints of the query into parameter grads; when d_p is
  /// non-null also accumulates the adjoint w.r.t. the query position.
  virtual void query_backward(const FieldQueryCache& cache, double d_sigma,
                              const double* d_features, Eigen::Vector3d* d_p) = 0;

  virtual std::vector<ParamBlock*> params() = 0;
  virtual std::unique_ptr<DensityField> clone() const = 0;
};

/// Dense trilinear grid: one density channel plus feature_dim feature
/// channels per vertex. Density through softplus.
class VoxelField : public DensityField {
 public:
  VoxelField() = default;
  VoxelField(const BoundingBox& box, int nx, int ny, int nz, int feature_dim);
  void init(Rng& rng, double scale = 1e-2);

  FieldFamily family() const override { return FieldFamily::Voxel; }
  int feature_dim() const override { return feature_dim_; }
  const BoundingBox& box() const override { return box_; }
  void query(const Eigen::Vector3d& p, double* sigma, double* features,
             FieldQueryCache& cache) const override;
  void query_backward(const FieldQueryCache& cache, double d_sigma,
                      const double* d_features, Eigen::Vector3d* d_p) override;
  std::vector<ParamBlock*> params() override { return {&density_, &features_}; }
  std::unique_ptr<DensityField> clone() const override {
    return std::make_unique<VoxelField>(*this);
  }

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int nz() const { return nz_; }
  ParamBlock& density() { return density_; }
  ParamBlock& features() { return features_; }

 private:
  BoundingBox box_;
  int nx_ = 0, ny_ = 0, nz_ = 0, feature_dim_ = 0;
  ParamBlock density_;   // nx*ny*nz
  ParamBlock features_;  // nx*ny*nz*feature_dim
};

/// Vector-matrix factorized field: density and color grids as sums of outer
/// products of 1D vectors and 2D matrices; appearance vectors mix color
/// components into a feature_dim latent. Density through a scaled sigmoid.
class FactorizedTensorField : public DensityField {
 public:
  FactorizedTensorField() = default;
  FactorizedTensorField(const BoundingBox& box, int nx, int ny, int nz,
                        int rank_sigma, int rank_color, int feature_dim,
                        double sigma_max = 200.0);
  void init(Rng& rng, double scale = 1e-2);

  FieldFamily family() const override { return FieldFamily::FactorizedTensor; }
  int feature_dim() const override { return feature_dim_; }
  const BoundingBox& box() const override { return box_; }
  void query(const Eigen::Vector3d& p, double* sigma, double* features,
             FieldQueryCache& cache) const override;
  void query_backward(const FieldQueryCache& cache, double d_sigma,
                      const double* d_features, Eigen::Vector3d* d_p) override;
  std::vector<ParamBlock*> params() override;
  std::unique_ptr<DensityField> clone() const override {
    return std::make_unique<FactorizedTensorField>(*this);
  }

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int nz() const { return nz_; }
  int rank_sigma() const { return rank_sigma_; }
  int rank_color() const { return rank_color_; }
  double sigma_max() const { return sigma_max_; }

  /// Pre-activation density grid value (the factorized sum) at p.
  double density_grid_value(const Eigen::Vector3d& p) const;
  /// Materializes the factorized density grid into a dense vertex array
  /// (nx*ny*nz), for oracle comparisons.
  std::vector<double> materialize_density_grid() const;

  // density components, one (vector, matrix) pair per axis
  ParamBlock sig_vx, sig_myz, sig_vy, sig_mxz, sig_vz, sig_mxy;
  // color components plus appearance rows a_{3r-2}, a_{3r-1}, a_{3r}
  ParamBlock col_vx, col_myz, col_vy, col_mxz, col_vz, col_mxy;
  ParamBlock appearance;  // (3*rank_color) x feature_dim, row-major

 private:
  BoundingBox box_;
  int nx_ = 0, ny_ = 0, nz_ = 0;
  int rank_sigma_ = 0, rank_color_ = 0, feature_dim_ = 0;
  double sigma_max_ = 200.0;
};

/// Multi-resolution hash grid with a density decoder over concatenated
/// per-level features. Levels whose vertex count fits the table use injective
/// linear indexing; larger levels hash with the conventional primes.
class HashGridField : public DensityField {
 public:
  struct Config {
    int levels = 4;
    int base_resolution = 4;  // vertices per axis at level 0
    double growth = 2.0;      // per-level resolution multiplier
    int table_size = 1 << 14; // T, power of two
    int features_per_level = 2;
    int feature_dim = 8;      // decoder latent size
    int hidden = 64;
    double s_near = 0.0;      // sampling-domain near bound, [0,1)
  };

  HashGridField() = default;
  explicit HashGridField(const BoundingBox& box, const Config& config);
  void init(Rng& rng, double scale = 1e-2);

  FieldFamily family() const override { return FieldFamily::HashGrid; }
  int feature_dim() const override { return config_.feature_dim; }
  const BoundingBox& box() const override { return box_; }
  void query(const Eigen::Vector3d& p, double* sigma, double* features,
             FieldQueryCache& cache) const override;
  void query_backward(const FieldQueryCache& cache, double d_sigma,
                      const double* d_features, Eigen::Vector3d* d_p) override;
  std::vector<ParamBlock*> params() override;
  std::unique_ptr<DensityField> clone() const override {
    return std::make_unique<HashGridField>(*this);
  }

  const Config& config() const { return config_; }
  int level_resolution(int level) const;
  /// Table slot of an integer vertex at a level.
  std::uint32_t vertex_slot(int level, int ix, int iy, int iz) const;

  std::vector<ParamBlock> tables;  // one T x F block per level
  Mlp density_decoder;             // L*F -> hidden -> 1 + feature_dim

 private:
  BoundingBox box_;
  Config config_;
};

/// Frequency-encoded field: gamma(p, 0, l_p) through a density decoder.
/// The tiny-MLP analog of an implicit field, with the same two-layer decoder
/// budget as the other families.
class EncodedField : public DensityField {
 public:
  struct Config {
    int position_degrees = 10;  // l_p
    int feature_dim = 8;
    int hidden = 64;
  };

  EncodedField() = default;
  explicit EncodedField(const BoundingBox& box, const Config& config);
  void init(Rng& rng);

  FieldFamily family() const override { return FieldFamily::Encoded; }
  int feature_dim() const override { return config_.feature_dim; }
  const BoundingBox& box() const override { return box_; }
  void query(const Eigen::Vector3d& p, double* sigma, double* features,
             FieldQueryCache& cache) const override;
  void query_backward(const FieldQueryCache& cache, double d_sigma,
                      const double* d_features, Eigen::Vector3d* d_p) override;
  std::vector<ParamBlock*> params() override { return density_decoder.params(); }
  std::unique_ptr<DensityField> clone() const override {
    return std::make_unique<EncodedField>(*this);
  }

  const Config& config() const { return config_; }

  Mlp density_decoder;  // gamma(p, 0, l_p) -> hidden -> 1 + feature_dim

 private:
  BoundingBox box_;
  Config config_;
};

/// Six-plane factorized motion field over (x, y, z, t): three spatial and
/// three spatio-temporal planes per level, combined by Hadamard product,
/// summed over levels and decoded to a displacement.
class HexPlaneMotionField {
 public:
  struct Config {
    std::vector<int> spatial_resolutions = {8, 16};
    std::vector<int> time_resolutions = {8, 16};  // per level, same count
    int features = 4;
    int hidden = 64;
  };

  HexPlaneMotionField() = default;
  HexPlaneMotionField(const BoundingBox& box, double t_min, double t_max,
                      const Config& config);
  void init(Rng& rng, double scale = 1e-2);

  struct QueryCache {
    Eigen::Vector3d p;
    double t = 0.0;
    bool inside = false;
    // per level: six interpolated F-vectors, then the level product
    std::vector<double> plane_values;
    std::vector<double> feature;  // summed over levels
    MotionDecoder::Workspace decoder_ws;
  };

  /// Scene-flow displacement from time t to the canonical time.
  Eigen::Vector3d query(const Eigen::Vector3d& p, double t, QueryCache& cache) const;
  void query_backward(const QueryCache& cache, const Eigen::Vector3d& d_delta);

  std::vector<ParamBlock*> params();
  const Config& config() const { return config_; }
  const BoundingBox& box() const { return box_; }
  int levels() const { return static_cast<int>(config_.spatial_resolutions.size()); }

  // per level: planes xy, yz, xz, xt, yt, zt
  std::vector<std::array<ParamBlock, 6>> planes;
  MotionDecoder decoder;

 private:
  BoundingBox box_;
  double t_min_ = 0.0, t_max_ = 1.0;
  Config config_;
};

/// A renderable radiance model: density field plus color decoder.
struct RadianceModel {
  std::unique_ptr<DensityField> field;
  ColorDecoder color;

  RadianceModel() = default;
  RadianceModel(std::unique_ptr<DensityField> f, ColorDecoder c)
      : field(std::move(f)), color(std::move(c)) {}
  RadianceModel(const RadianceModel& other)
      : field(other.field ? other.field->clone() : nullptr), color(other.color) {}
  RadianceModel& operator=(const RadianceModel& other) {
    if (this != &other) {
      field = other.field ? other.field->clone() : nullptr;
      color = other.color;
    }
    return *this;
  }
  RadianceModel(RadianceModel&&) = default;
  RadianceModel& operator=(RadianceModel&&) = default;

  std::vector<ParamBlock*> params();
  void zero_grad();
};

enum class AugmentationKind { Smoothing, Lambertian, TensorSimple, HashSimple };

AugmentationKind augmentation_kind_from_string(const std::string& s);
std::string to_string(AugmentationKind kind);

struct AugmentationOptions {
  int smoothing_split_degree = 3;   // l_p^s
  double tensor_rank_scale = 0.5;   // R_sigma^s / R_sigma
  int tensor_res_divisor = 4;       // per-axis resolution reduction
  double tensor_near_raise = 0.25;  // b_z1 raise as a fraction of z extent
  int hash_table_shift = 10;        // T^s = T >> shift
  double hash_s_near = 0.3;
  std::uint64_t seed = 1;
};

/// Fresh, independently initialized reduced-capacity copy of `main`.
/// Throws IncompatibleKind when the kind does not apply to the field family.
RadianceModel make_augmented(const RadianceModel& main, AugmentationKind kind,
                             const AugmentationOptions& options);

}  // namespace sparseview
