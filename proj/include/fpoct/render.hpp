#pragma once

#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "fpoct/camera.hpp"
#include "fpoct/image.hpp"
#include "fpoct/octree.hpp"

namespace fpoct {

/// One leaf crossed by a ray: [t_entry, t_entry + delta).
struct RaySegment {
  uint32_t leaf = 0;
  double t_entry = 0.0;
  double delta = 0.0;
};

namespace detail {

struct RayFrame {
  Vec3 origin;
  Vec3 dir;
  Vec3 inv;
};

template <class Visitor>
bool visit_node(const Topology& topo, const RayFrame& ray, uint32_t node, const Vec3& lo, double size, double t0,
                double t1, Visitor& visit) {
  const double half = 0.5 * size;
  const Vec3 mid = lo + Vec3::Constant(half);
  double tm[3];
  int oct = 0;
  for (int a = 0; a < 3; ++a) {
    if (ray.dir[a] == 0.0) {
      tm[a] = std::numeric_limits<double>::infinity();
      if (ray.origin[a] >= mid[a]) oct |= 1 << a;
      continue;
    }
    tm[a] = (mid[a] - ray.origin[a]) * ray.inv[a];
    const bool crossed = tm[a] <= t0;
    if ((ray.dir[a] > 0.0) == crossed) oct |= 1 << a;
  }
  double t = t0;
  while (true) {
    double tn = t1;
    for (double m : tm)
      if (m > t && m < tn) tn = m;
    const uint32_t slot = topo.nodes[node][oct];
    if (slot != kEmptySlot && tn > t) {
      if (slot_is_leaf(slot)) {
        if (!visit(RaySegment{slot_index(slot), t, tn - t})) return false;
      } else {
        const Vec3 child_lo(lo.x() + ((oct & 1) ? half : 0.0), lo.y() + ((oct & 2) ? half : 0.0),
                            lo.z() + ((oct & 4) ? half : 0.0));
        if (!visit_node(topo, ray, slot, child_lo, half, t, tn, visit)) return false;
      }
    }
    if (tn >= t1) break;
    for (int a = 0; a < 3; ++a)
      if (tm[a] == tn) oct ^= 1 << a;
    t = tn;
  }
  return true;
}

}  // namespace detail

/// Front-to-back walk over the leaves a ray crosses with exact entry/exit parameters.
/// visit(const RaySegment&) returns false to stop early.
template <class Visitor>
void traverse(const Topology& topo, const Ray& ray, Visitor&& visit) {
  double t0, t1;
  if (!intersect_box(ray, topo.bbox.min, topo.bbox.max, t0, t1) || !(t1 > t0)) return;
  detail::RayFrame frame{ray.origin, ray.dir, ray.dir.cwiseInverse()};
  detail::visit_node(topo, frame, 0, topo.bbox.min, topo.bbox.side(), t0, t1, visit);
}

std::vector<RaySegment> traverse(const Topology& topo, const Ray& ray);

/// Emission-absorption accumulator.
class Compositor {
 public:
  explicit Compositor(double early_stop_T = 1e-4) : early_stop_(early_stop_T) {}

  /// Adds a constant-density segment. Negative sigma counts as zero.
  /// Returns false once transmittance drops below the early-stop threshold.
  bool add(double sigma, double delta, const Vec3& rgb) {
    const double s = sigma > 0.0 ? sigma : 0.0;
    const double alpha = 1.0 - std::exp(-s * delta);
    color_ += (transmittance_ * alpha) * rgb;
    transmittance_ *= 1.0 - alpha;
    return !(transmittance_ < early_stop_);
  }
  double transmittance() const { return transmittance_; }
  Vec3 finish(const Vec3& background) const { return color_ + transmittance_ * background; }

 private:
  double early_stop_;
  double transmittance_ = 1.0;
  Vec3 color_ = Vec3::Zero();
};

struct LeafSample {
  double sigma = 0.0;
  Vec3 rgb = Vec3::Zero();
};

struct CompositeResult {
  Vec3 rgb = Vec3::Zero();
  /// Transmittance in front of each processed segment.
  std::vector<double> transmittance;
};

CompositeResult composite(std::span<const RaySegment> segments, const std::function<LeafSample(uint32_t)>& leaf_eval,
                          const Vec3& background, double early_stop_T = 1e-4);

struct RenderOptions {
  Vec3 background = Vec3::Zero();
  double early_stop_T = 1e-4;
};

/// Color of one ray through a static tree; SH decoded along the ray direction.
Vec3 render_ray(const Octree& tree, const Ray& ray, const RenderOptions& opts = {});

Image render(const Octree& tree, const Camera& cam, const RenderOptions& opts = {});

/// Baseline without empty-space skipping: fixed steps through the box, one point lookup
/// at each step midpoint.
Vec3 render_ray_dense(const Octree& tree, const Ray& ray, double step, const RenderOptions& opts = {});
Image render_dense(const Octree& tree, const Camera& cam, double step, const RenderOptions& opts = {});

}  // namespace fpoct
