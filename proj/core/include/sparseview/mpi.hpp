// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <vector>

#include "sparseview/geometry.hpp"
#include "sparseview/image.hpp"

namespace sparseview::mpi {

class DepthOutOfRange : public Error {
 public:
  explicit DepthOutOfRange(const std::string& msg) : Error(msg) {}
};

/// Multi-plane image with plane depths uniform in inverse depth, front
/// (nearest) plane first, plus a true-depth channel per cell.
struct Mpi {
  int width = 0, height = 0;
  std::vector<double> plane_depths;  // Z entries
  std::vector<ImageD> rgb;           // per plane, 3 channels
  std::vector<ImageD> depth;         // per plane, 1 channel (true depth)
  std::vector<ImageD> alpha;         // per plane, 1 channel in [0,1]

  int planes() const { return static_cast<int>(plane_depths.size()); }
  double total_alpha() const;
};

std::vector<double> plane_depth_ladder(int planes, double z_min, double z_max);

/// Plane whose inverse depth is nearest to 1/depth.
int nearest_plane(const std::vector<double>& plane_depths, double depth);

/// One-hot MPI from an RGB-D image. Depths must lie in [z_min, z_max].
Mpi build_mpi(const ImageD& rgb, const ImageD& depth, int planes, double z_min,
              double z_max);

/// Back-to-front over-compositing; depth composited from plane depths with
/// the same weights. coverage = accumulated weight.
struct CompositeResult {
  ImageD rgb;
  ImageD depth;
  ImageD coverage;
};
CompositeResult composite(const Mpi& m,
                          const Eigen::Vector3d& background = Eigen::Vector3d::Zero(),
                          double background_depth = 0.0);

/// Discrete-depth 3D flow: x-y displacement a, plane-offset distribution b
/// over z' in [-s_z, s_z], and the realized flow u = (a, expected depth shift).
struct Flow3D {
  int width = 0, height = 0, s_z = 1;
  std::vector<ImageD> a;          // per plane, 2 channels (px)
  std::vector<ImageD> b;          // per plane, 2*s_z+1 channels, sums to 1
  std::vector<ImageD> u;          // per plane, 3 channels (px, px, m)
  std::vector<ImageU8> valid;     // matched occupied cells

  int planes() const { return static_cast<int>(a.size()); }
};

Flow3D zero_flow(int width, int height, int planes, int s_z);

/// Forward pose-warp of every occupied cell (Eq. form: back-project at the
/// flowed pixel and depth, rigid change, re-project), bilinear x-y splat,
/// nearest plane in depth. The disocclusion mask marks pixels left with zero
/// alpha across all planes.
struct WarpResult {
  Mpi mpi;
  ImageU8 disocclusion;
};
WarpResult warp_mpi(const Mpi& m, const Flow3D* flow, const Camera& src,
                    const Camera& dst);

/// Alpha-gated correlation of two feature vectors: cv = (h1 a1)^T (h2 a2),
/// alpha_cv = a1 a2.
double masked_correlation(std::span<const double> h1, double alpha1,
                          std::span<const double> h2, double alpha2,
                          double* alpha_cv);

/// Per-plane feature stack for flow search: 3x3 mean-subtracted rgb patches,
/// gated by occupancy.
struct FeatureStack {
  int width = 0, height = 0, channels = 0;
  std::vector<ImageD> features;  // per plane
  std::vector<ImageU8> alpha;
};
FeatureStack build_flow_features(const Mpi& m);

/// Cost slices for one query cell over the search window: per depth offset
/// z' (invalid offsets flagged), a (2r+1)^2 grid of cv values and validity.
struct CellCosts {
  int radius = 0, s_z = 0;
  std::vector<std::vector<double>> cv;       // [z' + s_z][(dy+r)*(2r+1)+(dx+r)]
  std::vector<std::vector<std::uint8_t>> ok; // alpha_cv > 0
};
CellCosts masked_correlation_window(const FeatureStack& h_now,
                                    const FeatureStack& h_prev, int x, int y,
                                    int z, int radius, int s_z, int init_dx = 0,
                                    int init_dy = 0);

struct FlowConfig {
  int radius_xy = 8;        // search radius per pyramid level
  int s_z = 1;              // depth-offset window half-size
  int levels = 2;           // pyramid levels (x-y factor 2; depth untouched)
  double temp_scale = 0.1;  // softmax temperature = temp_scale * feature dim
  int smooth_iterations = 20;
  double smooth_a = 10.0;   // edge-aware weight scale
  bool two_d_only = false;  // ablation: collapse to a single plane, s_z = 0
};

/// Deterministic coarse-to-fine cost-volume search for the 3D object flow
/// between two MPIs aligned to the same view. Untextured or unmatched cells
/// inherit flow from the smoothing passes.
Flow3D estimate_flow3d(const Mpi& now, const Mpi& prev_warped,
                       const FlowConfig& config);

/// Linear motion model: u_hat_{n->n+k'} = -(k'/k) u_{n->n-k}; the plane
/// distribution is re-derived as one-hot at the nearest offset of the scaled
/// depth shift.
Flow3D extrapolate_flow(const Flow3D& flow, const Mpi& m, int k, int k_prime);

/// v(x,z) = prod_{y<z} (1 - alpha(x,y)); front plane sees 1 everywhere.
std::vector<ImageD> visibility_mask(const Mpi& m);

/// Forward-warps m by u (same camera), computes the visibility of the result,
/// and backward-warps it; o = 1 where the cell stays visible.
std::vector<ImageU8> occlusion_mask(const Mpi& m, const Flow3D& flow,
                                    const Camera& camera);

/// Background-copy disocclusion infilling: each pass fills empty (x, y) from
/// the deepest valid 8-neighbor cell; repeated `iterations` times.
struct InfillResult {
  Mpi mpi;
  int unfilled = 0;  // disoccluded pixels no pass could reach
};
InfillResult infill(const Mpi& warped, const ImageU8& disocclusion,
                    int iterations);

/// Backward-warp of an MPI by a flow field (samples prev at x + a, nearest
/// plane of d + u_z); used for the photometric flow diagnostic.
Mpi backward_warp(const Mpi& prev, const Flow3D& flow, const Mpi& reference);

struct TvsConfig {
  int planes = 4;  // Z
  FlowConfig flow;
  int infill_iterations = 3;  // g
  double beta = 0.15;
  double smooth_lambda = 10.0;
  bool bound_gt_flow = false;
  bool bound_gt_infill = false;
};

struct TvsInputs {
  ImageD rgb_prev, depth_prev;
  Camera cam_prev;
  ImageD rgb_now, depth_now;
  Camera cam_now;
  std::vector<Camera> future_cams;  // k-1 entries for k' = 1..k-1
  double z_min = 1.0, z_max = 10.0;
  int k = 2;
  // bound-mode data, indexed by k'-1
  std::vector<ImageD> gt_local_flow;  // 3-channel maps in view n
  std::vector<ImageD> gt_future;      // future frames for gt infilling
};

struct TvsResult {
  std::vector<ImageD> frames;          // predicted rgb per k'
  std::vector<ImageD> depths;
  std::vector<ImageU8> disocclusions;  // pre-infill holes per k'
  Flow3D local_flow;                   // estimated u_{n->n-k}
  ImageD flow_map;                     // per-pixel realized flow of view n (3ch)
  ImageU8 flow_valid;
  double flow_photometric = 0.0;       // MAE+SSIM diagnostic
  double flow_smoothness = 0.0;
  int unfilled_total = 0;
};

/// Full temporal view synthesis pipeline: null global motion, estimate local
/// 3D flow, extrapolate linearly, pose-warp, infill, composite.
TvsResult predict_frames(const TvsInputs& inputs, const TvsConfig& config);

}  // namespace sparseview::mpi
