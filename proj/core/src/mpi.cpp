// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#include "sparseview/mpi.hpp"

#include <algorithm>
#include <cmath>

#include "sparseview/losses.hpp"

namespace sparseview::mpi {

double Mpi::total_alpha() const {
  double sum = 0.0;
  for (const auto& a : alpha) {
    for (const double v : a.data()) sum += v;
  }
  return sum;
}

std::vector<double> plane_depth_ladder(int planes, double z_min, double z_max) {
  std::vector<double> depths(planes);
  for (int z = 0; z < planes; ++z) {
    const double f = planes > 1 ? static_cast<double>(z) / (planes - 1) : 0.0;
    depths[z] = 1.0 / (1.0 / z_min + f * (1.0 / z_max - 1.0 / z_min));
  }
  return depths;
}

int nearest_plane(const std::vector<double>& plane_depths, double depth) {
  int best = 0;
  double best_err = std::numeric_limits<double>::infinity();
  const double inv = 1.0 / depth;
  for (int z = 0; z < static_cast<int>(plane_depths.size()); ++z) {
    const double err = std::abs(inv - 1.0 / plane_depths[z]);
    if (err < best_err) {
      best_err = err;
      best = z;
    }
  }
  return best;
}

Mpi build_mpi(const ImageD& rgb, const ImageD& depth, int planes, double z_min,
              double z_max) {
  Mpi m;
  m.width = rgb.width();
  m.height = rgb.height();
  m.plane_depths = plane_depth_ladder(planes, z_min, z_max);
  for (int z = 0; z < planes; ++z) {
    m.rgb.emplace_back(m.width, m.height, 3, 0.0);
    m.depth.emplace_back(m.width, m.height, 1, 0.0);
    m.alpha.emplace_back(m.width, m.height, 1, 0.0);
  }
  const double tol = 1e-9 * std::max(1.0, z_max);
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      const double d = depth.at(x, y);
      if (d < z_min - tol || d > z_max + tol) {
        throw DepthOutOfRange("depth " + std::to_string(d) + " outside [" +
                              std::to_string(z_min) + ", " + std::to_string(z_max) +
                              "]");
      }
      const int z = nearest_plane(m.plane_depths, d);
      for (int c = 0; c < 3; ++c) m.rgb[z].at(x, y, c) = rgb.at(x, y, c);
      m.depth[z].at(x, y) = d;
      m.alpha[z].at(x, y) = 1.0;
    }
  }
  return m;
}

CompositeResult composite(const Mpi& m, const Eigen::Vector3d& background,
                          double background_depth) {
  CompositeResult out;
  out.rgb = ImageD(m.width, m.height, 3, 0.0);
  out.depth = ImageD(m.width, m.height, 1, 0.0);
  out.coverage = ImageD(m.width, m.height, 1, 0.0);
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      double trans = 1.0;
      double acc[3] = {0, 0, 0};
      double acc_d = 0.0, acc_w = 0.0;
      for (int z = 0; z < m.planes(); ++z) {
        const double a = m.alpha[z].at(x, y);
        if (a <= 0.0) continue;
        const double w = trans * a;
        for (int c = 0; c < 3; ++c) acc[c] += w * m.rgb[z].at(x, y, c);
        acc_d += w * m.plane_depths[z];
        acc_w += w;
        trans *= 1.0 - a;
      }
      for (int c = 0; c < 3; ++c) {
        out.rgb.at(x, y, c) = acc[c] + (1.0 - acc_w) * background[c];
      }
      out.depth.at(x, y) = acc_d + (1.0 - acc_w) * background_depth;
      out.coverage.at(x, y) = acc_w;
    }
  }
  return out;
}

Flow3D zero_flow(int width, int height, int planes, int s_z) {
  Flow3D f;
  f.width = width;
  f.height = height;
  f.s_z = s_z;
  for (int z = 0; z < planes; ++z) {
    f.a.emplace_back(width, height, 2, 0.0);
    ImageD b(width, height, 2 * s_z + 1, 0.0);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) b.at(x, y, s_z) = 1.0;
    }
    f.b.push_back(std::move(b));
    f.u.emplace_back(width, height, 3, 0.0);
    f.valid.emplace_back(width, height, 1, 1);
  }
  return f;
}

WarpResult warp_mpi(const Mpi& m, const Flow3D* flow, const Camera& src,
                    const Camera& dst) {
  WarpResult out;
  out.mpi.width = m.width;
  out.mpi.height = m.height;
  out.mpi.plane_depths = m.plane_depths;
  std::vector<ImageD> value_acc;  // rgb (3) + depth (1), alpha-weighted
  std::vector<ImageD> alpha_acc;
  for (int z = 0; z < m.planes(); ++z) {
    value_acc.emplace_back(m.width, m.height, 4, 0.0);
    alpha_acc.emplace_back(m.width, m.height, 1, 0.0);
  }

  for (int z = 0; z < m.planes(); ++z) {
    for (int y = 0; y < m.height; ++y) {
      for (int x = 0; x < m.width; ++x) {
        const double a = m.alpha[z].at(x, y);
        if (a <= 0.0) continue;
        Eigen::Vector3d u = Eigen::Vector3d::Zero();
        if (flow) {
          u = Eigen::Vector3d(flow->u[z].at(x, y, 0), flow->u[z].at(x, y, 1),
                              flow->u[z].at(x, y, 2));
        }
        const double d = m.depth[z].at(x, y);
        PixelDepth target;
        try {
          target = pose_warp(Eigen::Vector2d(x, y), u, d, src, dst);
        } catch (const BehindCamera&) {
          continue;
        }
        const int tz = nearest_plane(m.plane_depths, target.depth);
        const int x0 = static_cast<int>(std::floor(target.pixel.x()));
        const int y0 = static_cast<int>(std::floor(target.pixel.y()));
        const double fx = target.pixel.x() - x0;
        const double fy = target.pixel.y() - y0;
        const double cw[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy,
                              fx * fy};
        const int cx[4] = {x0, x0 + 1, x0, x0 + 1};
        const int cy[4] = {y0, y0, y0 + 1, y0 + 1};
        for (int k = 0; k < 4; ++k) {
          if (cx[k] < 0 || cx[k] >= m.width || cy[k] < 0 || cy[k] >= m.height)
            continue;
          const double w = cw[k] * a;
          if (w <= 0.0) continue;
          alpha_acc[tz].at(cx[k], cy[k]) += w;
          for (int c = 0; c < 3; ++c) {
            value_acc[tz].at(cx[k], cy[k], c) += w * m.rgb[z].at(x, y, c);
          }
          value_acc[tz].at(cx[k], cy[k], 3) += w * target.depth;
        }
      }
    }
  }

  out.disocclusion = ImageU8(m.width, m.height, 1, 0);
  for (int z = 0; z < m.planes(); ++z) {
    out.mpi.rgb.emplace_back(m.width, m.height, 3, 0.0);
    out.mpi.depth.emplace_back(m.width, m.height, 1, 0.0);
    out.mpi.alpha.emplace_back(m.width, m.height, 1, 0.0);
  }
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      double any = 0.0;
      for (int z = 0; z < m.planes(); ++z) {
        const double mass = alpha_acc[z].at(x, y);
        if (mass > kEpsW) {
          for (int c = 0; c < 3; ++c) {
            out.mpi.rgb[z].at(x, y, c) = value_acc[z].at(x, y, c) / mass;
          }
          out.mpi.depth[z].at(x, y) = value_acc[z].at(x, y, 3) / mass;
          out.mpi.alpha[z].at(x, y) = std::min(1.0, mass);
        }
        any += mass;
      }
      if (any <= kEpsW) out.disocclusion.at(x, y) = 1;
    }
  }
  return out;
}

double masked_correlation(std::span<const double> h1, double alpha1,
                          std::span<const double> h2, double alpha2,
                          double* alpha_cv) {
  if (alpha_cv) *alpha_cv = alpha1 * alpha2;
  double acc = 0.0;
  for (std::size_t i = 0; i < h1.size(); ++i) {
    acc += (h1[i] * alpha1) * (h2[i] * alpha2);
  }
  return acc;
}

FeatureStack build_flow_features(const Mpi& m) {
  FeatureStack fs;
  fs.width = m.width;
  fs.height = m.height;
  fs.channels = 27;  // 3x3 patch, 3 channels
  for (int z = 0; z < m.planes(); ++z) {
    ImageD feat(m.width, m.height, fs.channels, 0.0);
    ImageU8 al(m.width, m.height, 1, 0);
    for (int y = 0; y < m.height; ++y) {
      for (int x = 0; x < m.width; ++x) {
        if (m.alpha[z].at(x, y) <= 0.5) continue;
        al.at(x, y) = 1;
        double mean[3] = {0, 0, 0};
        int count = 0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = x + dx, ny = y + dy;
            if (nx < 0 || nx >= m.width || ny < 0 || ny >= m.height) continue;
            if (m.alpha[z].at(nx, ny) <= 0.5) continue;
            for (int c = 0; c < 3; ++c) mean[c] += m.rgb[z].at(nx, ny, c);
            ++count;
          }
        }
        if (count == 0) continue;
        for (int c = 0; c < 3; ++c) mean[c] /= count;
        int slot = 0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx, ++slot) {
            const int nx = x + dx, ny = y + dy;
            if (nx < 0 || nx >= m.width || ny < 0 || ny >= m.height) continue;
            if (m.alpha[z].at(nx, ny) <= 0.5) continue;
            for (int c = 0; c < 3; ++c) {
              feat.at(x, y, slot * 3 + c) = m.rgb[z].at(nx, ny, c) - mean[c];
            }
          }
        }
      }
    }
    fs.features.push_back(std::move(feat));
    fs.alpha.push_back(std::move(al));
  }
  return fs;
}

CellCosts masked_correlation_window(const FeatureStack& h_now,
                                    const FeatureStack& h_prev, int x, int y,
                                    int z, int radius, int s_z, int init_dx,
                                    int init_dy) {
  CellCosts costs;
  costs.radius = radius;
  costs.s_z = s_z;
  const int side = 2 * radius + 1;
  const int planes = static_cast<int>(h_now.features.size());
  costs.cv.assign(2 * s_z + 1, std::vector<double>(side * side, 0.0));
  costs.ok.assign(2 * s_z + 1, std::vector<std::uint8_t>(side * side, 0));

  if (!h_now.alpha[z].at(x, y)) return costs;
  std::vector<double> h1(h_now.channels);
  for (int c = 0; c < h_now.channels; ++c) h1[c] = h_now.features[z].at(x, y, c);

  for (int dz = -s_z; dz <= s_z; ++dz) {
    const int tz = z + dz;
    if (tz < 0 || tz >= planes) continue;
    for (int dy = -radius; dy <= radius; ++dy) {
      for (int dx = -radius; dx <= radius; ++dx) {
        const int tx = x + init_dx + dx;
        const int ty = y + init_dy + dy;
        if (tx < 0 || tx >= h_prev.width || ty < 0 || ty >= h_prev.height) continue;
        if (!h_prev.alpha[tz].at(tx, ty)) continue;
        double cv = 0.0;
        for (int c = 0; c < h_now.channels; ++c) {
          cv += h1[c] * h_prev.features[tz].at(tx, ty, c);
        }
        const int slot = (dy + radius) * side + (dx + radius);
        costs.cv[dz + s_z][slot] = cv;
        costs.ok[dz + s_z][slot] = 1;
      }
    }
  }
  return costs;
}

namespace {

Mpi collapse_to_single_plane(const Mpi& m) {
  const CompositeResult comp = composite(m);
  Mpi flat;
  flat.width = m.width;
  flat.height = m.height;
  flat.plane_depths = {m.plane_depths[m.planes() / 2]};
  flat.rgb = {comp.rgb};
  ImageD depth(m.width, m.height, 1, 0.0);
  ImageD alpha(m.width, m.height, 1, 0.0);
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (comp.coverage.at(x, y) > 0.5) {
        alpha.at(x, y) = 1.0;
        for (int z = 0; z < m.planes(); ++z) {
          if (m.alpha[z].at(x, y) > 0.5) {
            depth.at(x, y) = m.depth[z].at(x, y);
            break;
          }
        }
      }
    }
  }
  flat.depth = {std::move(depth)};
  flat.alpha = {std::move(alpha)};
  return flat;
}

Mpi downsample_mpi(const Mpi& m) {
  Mpi out;
  out.width = (m.width + 1) / 2;
  out.height = (m.height + 1) / 2;
  out.plane_depths = m.plane_depths;
  for (int z = 0; z < m.planes(); ++z) {
    ImageD rgb(out.width, out.height, 3, 0.0);
    ImageD depth(out.width, out.height, 1, 0.0);
    ImageD alpha(out.width, out.height, 1, 0.0);
    for (int y = 0; y < out.height; ++y) {
      for (int x = 0; x < out.width; ++x) {
        double acc[3] = {0, 0, 0};
        double acc_d = 0.0, mass = 0.0;
        for (int sy = 2 * y; sy < std::min(2 * y + 2, m.height); ++sy) {
          for (int sx = 2 * x; sx < std::min(2 * x + 2, m.width); ++sx) {
            const double a = m.alpha[z].at(sx, sy);
            if (a <= 0.5) continue;
            for (int c = 0; c < 3; ++c) acc[c] += m.rgb[z].at(sx, sy, c);
            acc_d += m.depth[z].at(sx, sy);
            mass += 1.0;
          }
        }
        if (mass > 0.0) {
          for (int c = 0; c < 3; ++c) rgb.at(x, y, c) = acc[c] / mass;
          depth.at(x, y) = acc_d / mass;
          alpha.at(x, y) = 1.0;
        }
      }
    }
    out.rgb.push_back(std::move(rgb));
    out.depth.push_back(std::move(depth));
    out.alpha.push_back(std::move(alpha));
  }
  return out;
}

struct CellMatch {
  bool ok = false;
  double ax = 0.0, ay = 0.0;
  int best_dx = 0, best_dy = 0;
  std::vector<double> b;
};

CellMatch search_cell(const FeatureStack& h_now, const FeatureStack& h_prev, int x,
                      int y, int z, const FlowConfig& config, int s_z, int init_dx,
                      int init_dy) {
  CellMatch match;
  double norm = 0.0;
  for (int c = 0; c < h_now.channels; ++c) {
    const double v = h_now.features[z].at(x, y, c);
    norm += v * v;
  }
  if (norm < 1e-8) return match;  // untextured cell

  const CellCosts costs = masked_correlation_window(h_now, h_prev, x, y, z,
                                                    config.radius_xy, s_z, init_dx,
                                                    init_dy);
  const int side = 2 * config.radius_xy + 1;
  double best = -std::numeric_limits<double>::infinity();
  int best_slot = -1;
  for (int slot = 0; slot < side * side; ++slot) {
    double sum = 0.0;
    bool any = false;
    for (int dz = 0; dz < 2 * s_z + 1; ++dz) {
      if (costs.ok[dz][slot]) {
        sum += costs.cv[dz][slot];
        any = true;
      }
    }
    if (any && sum > best) {
      best = sum;
      best_slot = slot;
    }
  }
  if (best_slot < 0) return match;
  const int bdy = best_slot / side - config.radius_xy;
  const int bdx = best_slot % side - config.radius_xy;

  auto summed = [&](int dx, int dy) -> std::optional<double> {
    if (std::abs(dx) > config.radius_xy || std::abs(dy) > config.radius_xy)
      return std::nullopt;
    const int slot = (dy + config.radius_xy) * side + (dx + config.radius_xy);
    double sum = 0.0;
    bool any = false;
    for (int dz = 0; dz < 2 * s_z + 1; ++dz) {
      if (costs.ok[dz][slot]) {
        sum += costs.cv[dz][slot];
        any = true;
      }
    }
    if (!any) return std::nullopt;
    return sum;
  };

  auto refine = [&](int dx, int dy, bool horizontal) {
    const auto c0 = summed(dx, dy);
    const auto cm = summed(dx - (horizontal ? 1 : 0), dy - (horizontal ? 0 : 1));
    const auto cp = summed(dx + (horizontal ? 1 : 0), dy + (horizontal ? 0 : 1));
    if (!c0 || !cm || !cp) return 0.0;
    const double denom = *cm - 2.0 * *c0 + *cp;
    if (denom >= -1e-12) return 0.0;
    return std::clamp(0.5 * (*cm - *cp) / denom, -0.5, 0.5);
  };

  match.ok = true;
  match.best_dx = init_dx + bdx;
  match.best_dy = init_dy + bdy;
  match.ax = match.best_dx + refine(bdx, bdy, true);
  match.ay = match.best_dy + refine(bdx, bdy, false);

  const int slot = (bdy + config.radius_xy) * side + (bdx + config.radius_xy);
  const double temp = config.temp_scale * h_now.channels;
  match.b.assign(2 * s_z + 1, 0.0);
  double denom = 0.0;
  double max_cv = -std::numeric_limits<double>::infinity();
  for (int dz = 0; dz < 2 * s_z + 1; ++dz) {
    if (costs.ok[dz][slot]) max_cv = std::max(max_cv, costs.cv[dz][slot]);
  }
  for (int dz = 0; dz < 2 * s_z + 1; ++dz) {
    if (costs.ok[dz][slot]) {
      match.b[dz] = std::exp((costs.cv[dz][slot] - max_cv) / temp);
      denom += match.b[dz];
    }
  }
  if (denom <= 0.0) {
    match.b[s_z] = 1.0;
  } else {
    for (auto& v : match.b) v /= denom;
  }
  return match;
}

void realize_flow(Flow3D& flow, const Mpi& m, int z, int x, int y,
                  const std::vector<double>& b, double ax, double ay, int s_z) {
  flow.a[z].at(x, y, 0) = ax;
  flow.a[z].at(x, y, 1) = ay;
  for (int dz = 0; dz < 2 * s_z + 1; ++dz) flow.b[z].at(x, y, dz) = b[dz];
  double expected = 0.0;
  for (int dz = -s_z; dz <= s_z; ++dz) {
    const int tz = std::clamp(z + dz, 0, m.planes() - 1);
    expected += b[dz + s_z] * m.plane_depths[tz];
  }
  flow.u[z].at(x, y, 0) = ax;
  flow.u[z].at(x, y, 1) = ay;
  flow.u[z].at(x, y, 2) = expected - m.plane_depths[z];
}

void smooth_flow(Flow3D& flow, const Mpi& m, const FlowConfig& config) {
  const int planes = flow.planes();
  for (int it = 0; it < config.smooth_iterations; ++it) {
    Flow3D next = flow;
    for (int z = 0; z < planes; ++z) {
      for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
          if (m.alpha[z].at(x, y) <= 0.5) continue;
          double wsum = flow.valid[z].at(x, y) ? 1.0 : 0.0;
          double acc[3] = {wsum * flow.u[z].at(x, y, 0),
                           wsum * flow.u[z].at(x, y, 1),
                           wsum * flow.u[z].at(x, y, 2)};
          const int nx4[4] = {x - 1, x + 1, x, x};
          const int ny4[4] = {y, y, y - 1, y + 1};
          for (int k = 0; k < 4; ++k) {
            const int nx = nx4[k], ny = ny4[k];
            if (nx < 0 || nx >= m.width || ny < 0 || ny >= m.height) continue;
            if (m.alpha[z].at(nx, ny) <= 0.5 || !flow.valid[z].at(nx, ny)) continue;
            double dc = 0.0;
            for (int c = 0; c < 3; ++c) {
              dc += std::abs(m.rgb[z].at(nx, ny, c) - m.rgb[z].at(x, y, c));
            }
            dc /= 3.0;
            const double w = std::exp(-config.smooth_a * dc);
            wsum += w;
            for (int c = 0; c < 3; ++c) acc[c] += w * flow.u[z].at(nx, ny, c);
          }
          if (wsum <= 0.0) continue;
          for (int c = 0; c < 3; ++c) next.u[z].at(x, y, c) = acc[c] / wsum;
          next.a[z].at(x, y, 0) = next.u[z].at(x, y, 0);
          next.a[z].at(x, y, 1) = next.u[z].at(x, y, 1);
          next.valid[z].at(x, y) = 1;
        }
      }
    }
    flow = std::move(next);
  }
}

}  // namespace

Flow3D estimate_flow3d(const Mpi& now_in, const Mpi& prev_in,
                       const FlowConfig& config) {
  const Mpi* now = &now_in;
  const Mpi* prev = &prev_in;
  Mpi now_flat, prev_flat;
  int s_z = config.s_z;
  if (config.two_d_only) {
    now_flat = collapse_to_single_plane(now_in);
    prev_flat = collapse_to_single_plane(prev_in);
    now = &now_flat;
    prev = &prev_flat;
    s_z = 0;
  }

  std::vector<Mpi> now_pyr{*now}, prev_pyr{*prev};
  for (int l = 1; l < config.levels; ++l) {
    now_pyr.push_back(downsample_mpi(now_pyr.back()));
    prev_pyr.push_back(downsample_mpi(prev_pyr.back()));
  }

  Flow3D coarse;
  for (int l = config.levels - 1; l >= 0; --l) {
    const Mpi& n = now_pyr[l];
    const Mpi& p = prev_pyr[l];
    const FeatureStack h_now = build_flow_features(n);
    const FeatureStack h_prev = build_flow_features(p);
    Flow3D flow = zero_flow(n.width, n.height, n.planes(), s_z);
    for (auto& v : flow.valid) v = ImageU8(n.width, n.height, 1, 0);

    for (int z = 0; z < n.planes(); ++z) {
      for (int y = 0; y < n.height; ++y) {
        for (int x = 0; x < n.width; ++x) {
          if (n.alpha[z].at(x, y) <= 0.5) continue;
          int init_dx = 0, init_dy = 0;
          if (l < config.levels - 1 && coarse.width > 0) {
            const int cx = std::min(x / 2, coarse.width - 1);
            const int cy = std::min(y / 2, coarse.height - 1);
            const int cz = std::min(z, coarse.planes() - 1);
            if (coarse.valid[cz].at(cx, cy)) {
              init_dx = static_cast<int>(std::lround(2.0 * coarse.a[cz].at(cx, cy, 0)));
              init_dy = static_cast<int>(std::lround(2.0 * coarse.a[cz].at(cx, cy, 1)));
            }
          }
          const CellMatch match =
              search_cell(h_now, h_prev, x, y, z, config, s_z, init_dx, init_dy);
          if (!match.ok) continue;
          realize_flow(flow, n, z, x, y, match.b, match.ax, match.ay, s_z);
          flow.valid[z].at(x, y) = 1;
        }
      }
    }
    if (l == 0) {
      smooth_flow(flow, n, config);
      if (config.two_d_only) {
        Flow3D full = zero_flow(now_in.width, now_in.height, now_in.planes(),
                                config.s_z);
        for (int z = 0; z < now_in.planes(); ++z) {
          for (int y = 0; y < now_in.height; ++y) {
            for (int x = 0; x < now_in.width; ++x) {
              full.valid[z].at(x, y) = flow.valid[0].at(x, y);
              for (int c = 0; c < 2; ++c) {
                full.a[z].at(x, y, c) = flow.a[0].at(x, y, c);
                full.u[z].at(x, y, c) = flow.u[0].at(x, y, c);
              }
              full.u[z].at(x, y, 2) = 0.0;
            }
          }
        }
        return full;
      }
      return flow;
    }
    coarse = std::move(flow);
  }
  return zero_flow(now_in.width, now_in.height, now_in.planes(), config.s_z);
}

Flow3D extrapolate_flow(const Flow3D& flow, const Mpi& m, int k, int k_prime) {
  const double scale = -static_cast<double>(k_prime) / k;
  Flow3D out = flow;
  for (int z = 0; z < flow.planes(); ++z) {
    for (int y = 0; y < flow.height; ++y) {
      for (int x = 0; x < flow.width; ++x) {
        for (int c = 0; c < 2; ++c) {
          out.a[z].at(x, y, c) = scale * flow.a[z].at(x, y, c);
          out.u[z].at(x, y, c) = scale * flow.u[z].at(x, y, c);
        }
        const double uz = scale * flow.u[z].at(x, y, 2);
        out.u[z].at(x, y, 2) = uz;
        const int tz = nearest_plane(m.plane_depths, m.plane_depths[z] + uz);
        const int dz = std::clamp(tz - z, -flow.s_z, flow.s_z);
        for (int q = 0; q < 2 * flow.s_z + 1; ++q) out.b[z].at(x, y, q) = 0.0;
        out.b[z].at(x, y, dz + flow.s_z) = 1.0;
      }
    }
  }
  return out;
}

std::vector<ImageD> visibility_mask(const Mpi& m) {
  std::vector<ImageD> vis;
  ImageD trans(m.width, m.height, 1, 1.0);
  for (int z = 0; z < m.planes(); ++z) {
    vis.push_back(trans);
    for (int y = 0; y < m.height; ++y) {
      for (int x = 0; x < m.width; ++x) {
        trans.at(x, y) *= 1.0 - m.alpha[z].at(x, y);
      }
    }
  }
  return vis;
}

std::vector<ImageU8> occlusion_mask(const Mpi& m, const Flow3D& flow,
                                    const Camera& camera) {
  const WarpResult warped = warp_mpi(m, &flow, camera, camera);
  const std::vector<ImageD> vis = visibility_mask(warped.mpi);
  std::vector<ImageU8> out;
  for (int z = 0; z < m.planes(); ++z) {
    ImageU8 o(m.width, m.height, 1, 1);
    for (int y = 0; y < m.height; ++y) {
      for (int x = 0; x < m.width; ++x) {
        if (m.alpha[z].at(x, y) <= 0.5) continue;
        const double ax = flow.u[z].at(x, y, 0);
        const double ay = flow.u[z].at(x, y, 1);
        const double uz = flow.u[z].at(x, y, 2);
        const int tz = nearest_plane(m.plane_depths, m.plane_depths[z] + uz);
        const auto sample =
            sample_bilinear(vis[tz], Eigen::Vector2d(x + ax, y + ay));
        const double v = sample ? (*sample)[0] : 0.0;
        o.at(x, y) = v > 0.5 ? 1 : 0;
      }
    }
    out.push_back(std::move(o));
  }
  return out;
}

InfillResult infill(const Mpi& warped, const ImageU8& disocclusion,
                    int iterations) {
  InfillResult res;
  res.mpi = warped;
  ImageU8 empty = disocclusion;
  static const int dx8[8] = {-1, 0, 1, -1, 1, -1, 0, 1};
  static const int dy8[8] = {-1, -1, -1, 0, 0, 1, 1, 1};

  for (int it = 0; it < iterations; ++it) {
    struct Fill {
      int x, y, z, sx, sy;
    };
    std::vector<Fill> fills;
    for (int y = 0; y < res.mpi.height; ++y) {
      for (int x = 0; x < res.mpi.width; ++x) {
        if (!empty.at(x, y)) continue;
        // deepest valid neighbor wins: radiance copied from background planes
        int best_z = -1, best_sx = 0, best_sy = 0;
        for (int k = 0; k < 8; ++k) {
          const int nx = x + dx8[k], ny = y + dy8[k];
          if (nx < 0 || nx >= res.mpi.width || ny < 0 || ny >= res.mpi.height)
            continue;
          if (empty.at(nx, ny)) continue;
          for (int z = res.mpi.planes() - 1; z >= 0; --z) {
            if (res.mpi.alpha[z].at(nx, ny) > 0.5) {
              if (z > best_z) {
                best_z = z;
                best_sx = nx;
                best_sy = ny;
              }
              break;
            }
          }
        }
        if (best_z >= 0) fills.push_back({x, y, best_z, best_sx, best_sy});
      }
    }
    if (fills.empty()) break;
    for (const auto& f : fills) {
      for (int c = 0; c < 3; ++c) {
        res.mpi.rgb[f.z].at(f.x, f.y, c) = res.mpi.rgb[f.z].at(f.sx, f.sy, c);
      }
      res.mpi.depth[f.z].at(f.x, f.y) = res.mpi.depth[f.z].at(f.sx, f.sy);
      res.mpi.alpha[f.z].at(f.x, f.y) = res.mpi.alpha[f.z].at(f.sx, f.sy);
      empty.at(f.x, f.y) = 0;
    }
  }
  for (int y = 0; y < res.mpi.height; ++y) {
    for (int x = 0; x < res.mpi.width; ++x) {
      if (empty.at(x, y)) ++res.unfilled;
    }
  }
  return res;
}

Mpi backward_warp(const Mpi& prev, const Flow3D& flow, const Mpi& reference) {
  Mpi out = reference;
  for (int z = 0; z < out.planes(); ++z) {
    for (int y = 0; y < out.height; ++y) {
      for (int x = 0; x < out.width; ++x) {
        for (int c = 0; c < 3; ++c) out.rgb[z].at(x, y, c) = 0.0;
        out.depth[z].at(x, y) = 0.0;
        out.alpha[z].at(x, y) = 0.0;
        if (reference.alpha[z].at(x, y) <= 0.5) continue;
        const double ax = flow.u[z].at(x, y, 0);
        const double ay = flow.u[z].at(x, y, 1);
        const double uz = flow.u[z].at(x, y, 2);
        const int tz = nearest_plane(prev.plane_depths, out.plane_depths[z] + uz);
        const Eigen::Vector2d q(x + ax, y + ay);
        const auto a_s = sample_bilinear(prev.alpha[tz], q);
        if (!a_s || (*a_s)[0] <= kEpsW) continue;
        const auto rgb_s = sample_bilinear(prev.rgb[tz], q);
        const auto d_s = sample_bilinear(prev.depth[tz], q);
        for (int c = 0; c < 3; ++c) out.rgb[z].at(x, y, c) = (*rgb_s)[c];
        out.depth[z].at(x, y) = (*d_s)[0];
        out.alpha[z].at(x, y) = std::min(1.0, (*a_s)[0]);
      }
    }
  }
  return out;
}

TvsResult predict_frames(const TvsInputs& inputs, const TvsConfig& config) {
  TvsResult result;
  const Mpi m_now = build_mpi(inputs.rgb_now, inputs.depth_now, config.planes,
                              inputs.z_min, inputs.z_max);
  const Mpi m_prev = build_mpi(inputs.rgb_prev, inputs.depth_prev, config.planes,
                               inputs.z_min, inputs.z_max);

  // null the global motion: bring the past frame into the current view
  const WarpResult prev_w =
      warp_mpi(m_prev, nullptr, inputs.cam_prev, inputs.cam_now);

  result.local_flow = estimate_flow3d(m_now, prev_w.mpi, config.flow);

  result.flow_map = ImageD(m_now.width, m_now.height, 3, 0.0);
  result.flow_valid = ImageU8(m_now.width, m_now.height, 1, 0);
  for (int y = 0; y < m_now.height; ++y) {
    for (int x = 0; x < m_now.width; ++x) {
      for (int z = 0; z < m_now.planes(); ++z) {
        if (m_now.alpha[z].at(x, y) > 0.5) {
          if (result.local_flow.valid[z].at(x, y)) {
            for (int c = 0; c < 3; ++c) {
              result.flow_map.at(x, y, c) = result.local_flow.u[z].at(x, y, c);
            }
            result.flow_valid.at(x, y) = 1;
          }
          break;
        }
      }
    }
  }

  {
    const Mpi rec = backward_warp(prev_w.mpi, result.local_flow, m_now);
    const auto occ = occlusion_mask(m_now, result.local_flow, inputs.cam_now);
    std::vector<ImageD> occ_d;
    for (const auto& o : occ) {
      ImageD od(o.width(), o.height(), 1, 0.0);
      for (int y = 0; y < o.height(); ++y) {
        for (int x = 0; x < o.width(); ++x) od.at(x, y) = o.at(x, y);
      }
      occ_d.push_back(std::move(od));
    }
    result.flow_photometric =
        losses::l_mpi_photometric(m_now.rgb, rec.rgb, occ_d, config.beta, nullptr);
    result.flow_smoothness = losses::l_flow_smoothness(
        result.local_flow.u, m_now.rgb, m_now.alpha, config.flow.smooth_a, nullptr);
  }

  for (int kp = 1; kp < inputs.k; ++kp) {
    Flow3D future;
    if (config.bound_gt_flow) {
      const ImageD& gt = inputs.gt_local_flow[kp - 1];
      future =
          zero_flow(m_now.width, m_now.height, m_now.planes(), config.flow.s_z);
      for (int z = 0; z < m_now.planes(); ++z) {
        for (int y = 0; y < m_now.height; ++y) {
          for (int x = 0; x < m_now.width; ++x) {
            for (int c = 0; c < 2; ++c) {
              future.a[z].at(x, y, c) = gt.at(x, y, c);
              future.u[z].at(x, y, c) = gt.at(x, y, c);
            }
            future.u[z].at(x, y, 2) = gt.at(x, y, 2);
          }
        }
      }
    } else {
      future = extrapolate_flow(result.local_flow, m_now, inputs.k, kp);
    }

    const WarpResult warped =
        warp_mpi(m_now, &future, inputs.cam_now, inputs.future_cams[kp - 1]);
    result.disocclusions.push_back(warped.disocclusion);

    if (config.bound_gt_infill) {
      const CompositeResult comp = composite(warped.mpi);
      ImageD frame = comp.rgb;
      const ImageD& gt = inputs.gt_future[kp - 1];
      for (int y = 0; y < frame.height(); ++y) {
        for (int x = 0; x < frame.width(); ++x) {
          if (comp.coverage.at(x, y) <= kEpsW) {
            for (int c = 0; c < 3; ++c) frame.at(x, y, c) = gt.at(x, y, c);
          }
        }
      }
      result.frames.push_back(std::move(frame));
      result.depths.push_back(comp.depth);
    } else {
      const InfillResult filled =
          infill(warped.mpi, warped.disocclusion, config.infill_iterations);
      result.unfilled_total += filled.unfilled;
      const CompositeResult comp = composite(filled.mpi);
      result.frames.push_back(comp.rgb);
      result.depths.push_back(comp.depth);
    }
  }
  return result;
}

}  // namespace sparseview::mpi
