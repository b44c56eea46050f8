#include "fpoct/geometry.hpp"

#include <algorithm>

namespace fpoct {

bool intersect_box(const Ray& ray, const Vec3& lo, const Vec3& hi, double& t0, double& t1) {
  t0 = ray.t_near;
  t1 = ray.t_far;
  for (int a = 0; a < 3; ++a) {
    const double o = ray.origin[a];
    const double d = ray.dir[a];
    if (d == 0.0) {
      if (o < lo[a] || o > hi[a]) return false;
      continue;
    }
    const double inv = 1.0 / d;
    double ta = (lo[a] - o) * inv;
    double tb = (hi[a] - o) * inv;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  return true;
}

}  // namespace fpoct
