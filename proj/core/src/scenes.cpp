// Copyright Contributors to the SparseView Project
// SPDX-License-Identifier: Apache-2.0

#include "sparseview/scenes.hpp"

#include <algorithm>
#include <cmath>

namespace sparseview::scenes {

Eigen::Vector3d Texture::sample(const Eigen::Vector3d& p) const {
  switch (kind) {
    case Kind::Solid:
      return color_a;
    case Kind::Checker: {
      const long px = static_cast<long>(std::floor(p.x() / scale));
      const long py = static_cast<long>(std::floor(p.y() / scale));
      const long pz = static_cast<long>(std::floor(p.z() / scale));
      return ((px + py + pz) & 1) ? color_b : color_a;
    }
    case Kind::Gradient: {
      const double u = p.dot(direction) / scale;
      const double f = u - std::floor(u);
      return color_a + f * (color_b - color_a);
    }
  }
  return color_a;
}

namespace {

struct RawHit {
  double t = 0.0;
  Eigen::Vector3d normal = Eigen::Vector3d::Zero();
};

std::optional<RawHit> intersect_plane(const Primitive& prim, const Ray& ray,
                                      const Eigen::Vector3d& offset) {
  const double z = prim.plane_z + offset.z();
  const double dz = ray.dir.z();
  if (std::abs(dz) < 1e-12) return std::nullopt;
  const double t = (z - ray.origin.z()) / dz;
  if (t <= kEpsZ) return std::nullopt;
  return RawHit{t, Eigen::Vector3d(0, 0, dz > 0 ? -1.0 : 1.0)};
}

std::optional<RawHit> intersect_box(const Primitive& prim, const Ray& ray,
                                    const Eigen::Vector3d& offset) {
  const Eigen::Vector3d lo = prim.box_min + offset;
  const Eigen::Vector3d hi = prim.box_max + offset;
  double t0 = kEpsZ, t1 = std::numeric_limits<double>::infinity();
  int enter_axis = -1;
  double enter_sign = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double o = ray.origin[a], d = ray.dir[a];
    if (std::abs(d) < 1e-15) {
      if (o < lo[a] || o > hi[a]) return std::nullopt;
      continue;
    }
    double ta = (lo[a] - o) / d;
    double tb = (hi[a] - o) / d;
    double sign = -1.0;
    if (ta > tb) {
      std::swap(ta, tb);
      sign = 1.0;
    }
    if (ta > t0) {
      t0 = ta;
      enter_axis = a;
      enter_sign = sign;
    }
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::nullopt;
  }
  if (enter_axis < 0) return std::nullopt;  // origin inside the box
  Eigen::Vector3d normal = Eigen::Vector3d::Zero();
  normal[enter_axis] = enter_sign;
  return RawHit{t0, normal};
}

std::optional<RawHit> intersect_sphere(const Primitive& prim, const Ray& ray,
                                       const Eigen::Vector3d& offset) {
  const Eigen::Vector3d c = prim.center + offset;
  const Eigen::Vector3d oc = ray.origin - c;
  const double a = ray.dir.squaredNorm();
  const double b = 2.0 * oc.dot(ray.dir);
  const double cc = oc.squaredNorm() - prim.radius * prim.radius;
  const double disc = b * b - 4 * a * cc;
  if (disc < 0) return std::nullopt;
  const double sq = std::sqrt(disc);
  double t = (-b - sq) / (2 * a);
  if (t <= kEpsZ) t = (-b + sq) / (2 * a);
  if (t <= kEpsZ) return std::nullopt;
  const Eigen::Vector3d p = ray.origin + t * ray.dir;
  return RawHit{t, (p - c).normalized()};
}

}  // namespace

std::optional<Hit> trace(const SceneSpec& spec, const Ray& ray, double t) {
  std::optional<Hit> best;
  for (std::size_t i = 0; i < spec.primitives.size(); ++i) {
    const Primitive& prim = spec.primitives[i];
    const Eigen::Vector3d offset = prim.offset_at(t);
    std::optional<RawHit> raw;
    switch (prim.kind) {
      case Primitive::Kind::Plane: raw = intersect_plane(prim, ray, offset); break;
      case Primitive::Kind::Box: raw = intersect_box(prim, ray, offset); break;
      case Primitive::Kind::Sphere: raw = intersect_sphere(prim, ray, offset); break;
    }
    if (!raw) continue;
    if (!best || raw->t < best->depth) {
      Hit hit;
      hit.depth = raw->t;
      hit.primitive = static_cast<int>(i);
      hit.point = ray.origin + raw->t * ray.dir;
      hit.normal = raw->normal;
      best = hit;
    }
  }
  return best;
}

namespace {

Eigen::Vector3d shade(const SceneSpec& spec, const Hit& hit, const Ray& ray,
                      double t) {
  const Primitive& prim = spec.primitives[hit.primitive];
  const Eigen::Vector3d object_point = hit.point - prim.offset_at(t);
  Eigen::Vector3d color = prim.texture.sample(object_point);
  if (prim.tint != 0.0) {
    const double vn = ray.unit_dir.dot(hit.normal);
    color += Eigen::Vector3d::Constant(prim.tint * vn);
  }
  return color.cwiseMax(0.0).cwiseMin(1.0);
}

}  // namespace

GtRender render_gt(const SceneSpec& spec, int view, int time) {
  const Camera& cam = spec.camera(view, time);
  GtRender out;
  out.rgb = ImageD(cam.width, cam.height, 3);
  out.depth = ImageD(cam.width, cam.height, 1, spec.z_far);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const Ray ray = make_ray(cam, Eigen::Vector2d(x, y));
      const auto hit = trace(spec, ray, time);
      Eigen::Vector3d color = spec.background_color;
      if (hit) {
        color = shade(spec, *hit, ray, time);
        out.depth.at(x, y) = hit->depth;
      }
      for (int c = 0; c < 3; ++c) out.rgb.at(x, y, c) = color[c];
    }
  }
  return out;
}

ImageU8 gt_visibility(const SceneSpec& spec, int primary_view, int secondary_view,
                      int time, double rel_eps) {
  const Camera& primary = spec.camera(primary_view, time);
  const Camera& secondary = spec.camera(secondary_view, time);
  ImageU8 out(primary.width, primary.height, 1, 0);
  for (int y = 0; y < primary.height; ++y) {
    for (int x = 0; x < primary.width; ++x) {
      const Ray ray = make_ray(primary, Eigen::Vector2d(x, y));
      const auto hit = trace(spec, ray, time);
      const double depth = hit ? hit->depth : spec.z_far;
      const Eigen::Vector3d point = ray.origin + depth * ray.dir;
      PixelDepth reproj;
      try {
        reproj = project(secondary, point);
      } catch (const BehindCamera&) {
        continue;
      }
      if (reproj.pixel.x() < 0 || reproj.pixel.x() > secondary.width - 1 ||
          reproj.pixel.y() < 0 || reproj.pixel.y() > secondary.height - 1) {
        continue;
      }
      const Ray sec_ray = make_ray(secondary, reproj.pixel);
      const auto sec_hit = trace(spec, sec_ray, time);
      const double sec_depth = sec_hit ? sec_hit->depth : spec.z_far;
      if (std::abs(sec_depth - reproj.depth) <= rel_eps * reproj.depth) {
        out.at(x, y) = 1;
      }
    }
  }
  return out;
}

GtFlow gt_object_flow(const SceneSpec& spec, int view, int t, int s) {
  const Camera& cam = spec.camera(view, t);
  GtFlow out;
  out.flow = ImageD(cam.width, cam.height, 3, 0.0);
  out.valid = ImageU8(cam.width, cam.height, 1, 0);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const Ray ray = make_ray(cam, Eigen::Vector2d(x, y));
      const auto hit = trace(spec, ray, t);
      if (!hit) continue;
      const Primitive& prim = spec.primitives[hit->primitive];
      const Eigen::Vector3d moved = hit->point + prim.velocity * (s - t);
      PixelDepth now, later;
      try {
        now = project(cam, hit->point);
        later = project(cam, moved);
      } catch (const BehindCamera&) {
        continue;
      }
      out.flow.at(x, y, 0) = later.pixel.x() - now.pixel.x();
      out.flow.at(x, y, 1) = later.pixel.y() - now.pixel.y();
      out.flow.at(x, y, 2) = later.depth - now.depth;
      out.valid.at(x, y) = 1;
    }
  }
  return out;
}

std::vector<SparseDepthPoint> oracle_sparse_depth(const SceneSpec& spec, int view,
                                                  int time, int count, double noise,
                                                  std::uint64_t seed) {
  std::vector<SparseDepthPoint> points;
  if (count <= 0) return points;
  const GtRender gt = render_gt(spec, view, time);
  const ImageD lum = luma(gt.rgb);
  const int W = lum.width(), H = lum.height();

  // gradient magnitude ranking picks textured locations
  std::vector<std::pair<double, int>> scored;
  scored.reserve(static_cast<std::size_t>(W - 2) * (H - 2));
  for (int y = 1; y < H - 1; ++y) {
    for (int x = 1; x < W - 1; ++x) {
      const double gx = lum.at(x + 1, y) - lum.at(x - 1, y);
      const double gy = lum.at(x, y + 1) - lum.at(x, y - 1);
      scored.push_back({std::abs(gx) + std::abs(gy), y * W + x});
    }
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  });
  const std::size_t pool =
      std::max<std::size_t>(count, std::min(scored.size(), scored.size() * 3 / 10));

  Rng rng = Rng::keyed(seed, 0x7364u, view, time);
  std::vector<std::size_t> index(pool);
  for (std::size_t i = 0; i < pool; ++i) index[i] = i;
  for (std::size_t i = 0; i < std::min<std::size_t>(count, pool); ++i) {
    const std::size_t j = i + rng.uniform_int(static_cast<int>(pool - i));
    std::swap(index[i], index[j]);
    const int px = scored[index[i]].second % W;
    const int py = scored[index[i]].second / W;
    SparseDepthPoint p;
    p.view = view;
    p.time = time;
    p.x = px;
    p.y = py;
    p.z = gt.depth.at(px, py);
    if (noise > 0.0) p.z *= 1.0 + noise * rng.normal();
    points.push_back(p);
  }
  return points;
}

std::vector<SparseFlowMatch> oracle_sparse_flow(const SceneSpec& spec, int v, int t,
                                                int u, int s, int count,
                                                double perturb, std::uint64_t seed) {
  std::vector<SparseFlowMatch> matches;
  if (count <= 0) return matches;
  const Camera& cam_v = spec.camera(v, t);
  const Camera& cam_u = spec.camera(u, s);
  const GtRender gt = render_gt(spec, v, t);
  const ImageD lum = luma(gt.rgb);
  const int W = lum.width(), H = lum.height();

  std::vector<std::pair<double, int>> scored;
  for (int y = 1; y < H - 1; ++y) {
    for (int x = 1; x < W - 1; ++x) {
      const double gx = lum.at(x + 1, y) - lum.at(x - 1, y);
      const double gy = lum.at(x, y + 1) - lum.at(x, y - 1);
      scored.push_back({std::abs(gx) + std::abs(gy), y * W + x});
    }
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  });
  const std::size_t pool =
      std::max<std::size_t>(count * 2, std::min(scored.size(), scored.size() * 3 / 10));

  Rng rng = Rng::keyed(seed, 0x73666cu, (static_cast<std::uint64_t>(v) << 16) | u,
                       (static_cast<std::uint64_t>(t) << 16) | s);
  std::vector<std::size_t> index(pool);
  for (std::size_t i = 0; i < pool; ++i) index[i] = i;
  std::size_t cursor = 0;
  while (matches.size() < static_cast<std::size_t>(count) && cursor < pool) {
    const std::size_t j = cursor + rng.uniform_int(static_cast<int>(pool - cursor));
    std::swap(index[cursor], index[j]);
    const int px = scored[index[cursor]].second % W;
    const int py = scored[index[cursor]].second / W;
    ++cursor;

    const Ray ray = make_ray(cam_v, Eigen::Vector2d(px, py));
    const auto hit = trace(spec, ray, t);
    if (!hit) continue;
    const Primitive& prim = spec.primitives[hit->primitive];
    const Eigen::Vector3d moved = hit->point + prim.velocity * (s - t);
    PixelDepth reproj;
    try {
      reproj = project(cam_u, moved);
    } catch (const BehindCamera&) {
      continue;
    }
    if (reproj.pixel.x() < 0 || reproj.pixel.x() > cam_u.width - 1 ||
        reproj.pixel.y() < 0 || reproj.pixel.y() > cam_u.height - 1) {
      continue;
    }
    // reliable matches only: the moved point must be unoccluded in (u, s)
    const Ray sec_ray = make_ray(cam_u, reproj.pixel);
    const auto sec_hit = trace(spec, sec_ray, s);
    const double sec_depth = sec_hit ? sec_hit->depth : spec.z_far;
    if (std::abs(sec_depth - reproj.depth) > 5e-3 * reproj.depth) continue;

    SparseFlowMatch m;
    m.v = v;
    m.t = t;
    m.x = px;
    m.y = py;
    m.u = u;
    m.s = s;
    m.x2 = reproj.pixel.x() + (perturb > 0 ? perturb * rng.normal() : 0.0);
    m.y2 = reproj.pixel.y() + (perturb > 0 ? perturb * rng.normal() : 0.0);
    matches.push_back(m);
  }
  return matches;
}

// ---------------------------------------------------------------------------
// prefab scenes

namespace {

Camera line_camera(double x_offset, const Eigen::Vector3d& target, double focal,
                   int width, int height) {
  Camera cam = Camera::pinhole(focal, focal, (width - 1) / 2.0, (height - 1) / 2.0,
                               width, height);
  cam.T = Camera::look_at(Eigen::Vector3d(x_offset, 0.0, 0.0), target);
  return cam;
}

Texture make_texture(Rng& rng, bool fine) {
  Texture tex;
  const double pick = rng.uniform();
  tex.kind = pick < 0.5 ? Texture::Kind::Checker : Texture::Kind::Gradient;
  tex.color_a = Eigen::Vector3d(0.15 + 0.3 * rng.uniform(), 0.2 + 0.3 * rng.uniform(),
                                0.5 + 0.4 * rng.uniform());
  tex.color_b = Eigen::Vector3d(0.7 + 0.3 * rng.uniform(), 0.4 + 0.3 * rng.uniform(),
                                0.1 + 0.2 * rng.uniform());
  tex.scale = fine ? 0.12 + 0.1 * rng.uniform() : 0.3 + 0.3 * rng.uniform();
  tex.direction = Eigen::Vector3d(1.0, 0.4 + 0.4 * rng.uniform(), 0.2).normalized();
  return tex;
}

}  // namespace

SceneSpec make_occluder_scene(std::uint64_t seed, int views, int width, int height) {
  Rng rng = Rng::keyed(seed, 0x6f636373u);
  SceneSpec spec;
  spec.name = "occluder";
  spec.width = width;
  spec.height = height;
  spec.z_near = 1.0;
  spec.z_far = 10.0;
  spec.num_frames = 1;

  Primitive bg;
  bg.kind = Primitive::Kind::Plane;
  bg.plane_z = 6.0 + 2.0 * rng.uniform();
  bg.texture = make_texture(rng, true);
  spec.primitives.push_back(bg);

  Primitive box;
  box.kind = Primitive::Kind::Box;
  const double bw = 0.5 + 0.4 * rng.uniform();
  const double bh = 0.4 + 0.4 * rng.uniform();
  const double bz = 2.2 + 1.2 * rng.uniform();
  const double bx = -0.4 + 0.8 * rng.uniform();
  const double by = -0.3 + 0.6 * rng.uniform();
  box.box_min = Eigen::Vector3d(bx - bw / 2, by - bh / 2, bz);
  box.box_max = Eigen::Vector3d(bx + bw / 2, by + bh / 2, bz + 0.6);
  box.texture = make_texture(rng, true);
  spec.primitives.push_back(box);

  Primitive ball;
  ball.kind = Primitive::Kind::Sphere;
  ball.center = Eigen::Vector3d(bx + (rng.uniform() < 0.5 ? -1.0 : 1.0) * (0.7 + 0.4 * rng.uniform()),
                                by + 0.5 - rng.uniform(), bz + 1.2);
  ball.radius = 0.35 + 0.2 * rng.uniform();
  ball.texture = make_texture(rng, true);
  spec.primitives.push_back(ball);

  const double focal = 0.85 * width;
  const Eigen::Vector3d target(0, 0, 4.5);
  const double baseline = 0.45;
  spec.cameras.resize(views);
  for (int v = 0; v < views; ++v) {
    const double x = (v - (views - 1) / 2.0) * baseline;
    spec.cameras[v] = {line_camera(x, target, focal, width, height)};
  }
  return spec;
}

SceneSpec make_static_dolly_scene(std::uint64_t seed, int frames, int width,
                                  int height) {
  Rng rng = Rng::keyed(seed, 0x646f6cu);
  SceneSpec spec = make_occluder_scene(seed, 1, width, height);
  spec.name = "static_dolly";
  spec.num_frames = frames;
  const double focal = 0.85 * width;
  const Eigen::Vector3d target(0, 0, 4.5);
  const double step = 0.035 + 0.02 * rng.uniform();
  spec.cameras.assign(1, {});
  for (int t = 0; t < frames; ++t) {
    spec.cameras[0].push_back(line_camera(-step * (frames - 1) / 2.0 + step * t,
                                          target, focal, width, height));
  }
  return spec;
}

SceneSpec make_moving_sprite_scene(std::uint64_t seed, int frames,
                                   bool with_camera_motion, int width, int height) {
  Rng rng = Rng::keyed(seed, 0x737072u);
  SceneSpec spec;
  spec.name = "moving_sprite";
  spec.width = width;
  spec.height = height;
  spec.z_near = 1.0;
  spec.z_far = 10.0;
  spec.num_frames = frames;

  Primitive bg;
  bg.kind = Primitive::Kind::Plane;
  bg.plane_z = 7.0;
  bg.texture = make_texture(rng, true);
  spec.primitives.push_back(bg);

  Primitive sprite;
  sprite.kind = Primitive::Kind::Box;
  sprite.box_min = Eigen::Vector3d(-0.45, -0.35, 3.0);
  sprite.box_max = Eigen::Vector3d(0.45, 0.35, 3.5);
  sprite.texture = make_texture(rng, true);
  // constant pixel-scale motion with a small depth component
  sprite.velocity = Eigen::Vector3d(0.018 + 0.012 * rng.uniform(),
                                    -0.012 - 0.008 * rng.uniform(),
                                    -0.01 * rng.uniform());
  spec.primitives.push_back(sprite);

  const double focal = 0.85 * width;
  const Eigen::Vector3d target(0, 0, 4.0);
  spec.cameras.assign(1, {});
  const double step = with_camera_motion ? 0.03 : 0.0;
  for (int t = 0; t < frames; ++t) {
    spec.cameras[0].push_back(
        line_camera(-step * (frames - 1) / 2.0 + step * t, target, focal, width,
                    height));
  }
  return spec;
}

SceneSpec make_dynamic_multiview_scene(std::uint64_t seed, int views, int frames,
                                       bool moving, int width, int height) {
  Rng rng = Rng::keyed(seed, 0x64796eu);
  SceneSpec spec;
  spec.name = "dynamic_multiview";
  spec.width = width;
  spec.height = height;
  spec.z_near = 1.0;
  spec.z_far = 10.0;
  spec.num_frames = frames;

  Primitive bg;
  bg.kind = Primitive::Kind::Plane;
  bg.plane_z = 6.5;
  bg.texture = make_texture(rng, false);
  spec.primitives.push_back(bg);

  Primitive mover;
  mover.kind = Primitive::Kind::Box;
  mover.box_min = Eigen::Vector3d(-0.9, -0.35, 3.2);
  mover.box_max = Eigen::Vector3d(-0.1, 0.35, 3.8);
  mover.texture = make_texture(rng, false);
  if (moving) {
    mover.velocity = Eigen::Vector3d(0.035 + 0.01 * rng.uniform(), 0.012, 0.0);
  }
  spec.primitives.push_back(mover);

  Primitive pillar;
  pillar.kind = Primitive::Kind::Box;
  pillar.box_min = Eigen::Vector3d(0.6, -1.2, 4.6);
  pillar.box_max = Eigen::Vector3d(1.1, 1.2, 5.2);
  pillar.texture = make_texture(rng, false);
  spec.primitives.push_back(pillar);

  const double focal = 0.85 * width;
  const Eigen::Vector3d target(0, 0, 4.5);
  const double baseline = 0.5;
  spec.cameras.resize(views);
  for (int v = 0; v < views; ++v) {
    const double x = (v - (views - 1) / 2.0) * baseline;
    const Camera cam = line_camera(x, target, focal, width, height);
    spec.cameras[v].assign(frames, cam);  // static rig
  }
  return spec;
}

}  // namespace sparseview::scenes
