#include "fpoct/render.hpp"

#include <algorithm>

#include "fpoct/error.hpp"

namespace fpoct {

std::vector<RaySegment> traverse(const Topology& topo, const Ray& ray) {
  std::vector<RaySegment> out;
  traverse(topo, ray, [&](const RaySegment& s) {
    out.push_back(s);
    return true;
  });
  return out;
}

CompositeResult composite(std::span<const RaySegment> segments, const std::function<LeafSample(uint32_t)>& leaf_eval,
                          const Vec3& background, double early_stop_T) {
  CompositeResult r;
  Compositor acc(early_stop_T);
  for (const RaySegment& s : segments) {
    r.transmittance.push_back(acc.transmittance());
    const LeafSample ls = leaf_eval(s.leaf);
    if (!acc.add(ls.sigma, s.delta, ls.rgb)) break;
  }
  r.rgb = acc.finish(background);
  return r;
}

Vec3 render_ray(const Octree& tree, const Ray& ray, const RenderOptions& opts) {
  Compositor acc(opts.early_stop_T);
  traverse(tree.topo, ray, [&](const RaySegment& s) {
    const double sigma = tree.sigma(s.leaf);
    if (!(sigma > 0.0)) return true;
    return acc.add(sigma, s.delta, decode_color(tree.lmax, tree.sh(s.leaf), ray.dir));
  });
  return acc.finish(opts.background);
}

Image render(const Octree& tree, const Camera& cam, const RenderOptions& opts) {
  cam.validate();
  Image img(cam.width, cam.height);
#pragma omp parallel for schedule(dynamic, 4)
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) img.set(x, y, render_ray(tree, generate_ray(cam, x, y), opts));
  return img;
}

Vec3 render_ray_dense(const Octree& tree, const Ray& ray, double step, const RenderOptions& opts) {
  if (!(step > 0.0)) throw config_error("march step must be positive");
  Compositor acc(opts.early_stop_T);
  double t0, t1;
  if (intersect_box(ray, tree.topo.bbox.min, tree.topo.bbox.max, t0, t1)) {
    for (double t = t0; t < t1; t += step) {
      const double delta = std::min(step, t1 - t);
      const auto leaf = lookup(tree.topo, ray.at(t + 0.5 * delta));
      if (!leaf) continue;
      const double sigma = tree.sigma(*leaf);
      if (!(sigma > 0.0)) continue;
      if (!acc.add(sigma, delta, decode_color(tree.lmax, tree.sh(*leaf), ray.dir))) break;
    }
  }
  return acc.finish(opts.background);
}

Image render_dense(const Octree& tree, const Camera& cam, double step, const RenderOptions& opts) {
  cam.validate();
  if (!(step > 0.0)) throw config_error("march step must be positive");
  Image img(cam.width, cam.height);
#pragma omp parallel for schedule(dynamic, 4)
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) img.set(x, y, render_ray_dense(tree, generate_ray(cam, x, y), step, opts));
  return img;
}

}  // namespace fpoct
