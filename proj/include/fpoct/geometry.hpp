#pragma once

#include <cmath>
#include <limits>

#include <Eigen/Core>

namespace fpoct {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Axis-aligned box. Octrees require a cube.
struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Ones();

  Vec3 extent() const { return max - min; }
  Vec3 center() const { return 0.5 * (min + max); }
  double side() const { return max.x() - min.x(); }
  double diagonal() const { return extent().norm(); }
  bool valid() const { return (max.array() > min.array()).all() && min.allFinite() && max.allFinite(); }
  bool is_cube(double tol = 1e-9) const {
    const Vec3 e = extent();
    return std::abs(e.x() - e.y()) <= tol && std::abs(e.x() - e.z()) <= tol;
  }
  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 dir = Vec3::UnitZ();
  double t_near = 0.0;
  double t_far = std::numeric_limits<double>::infinity();

  Vec3 at(double t) const { return origin + t * dir; }
};

/// Slab test. Returns false when the ray misses; [t0, t1] is clipped to [t_near, t_far].
bool intersect_box(const Ray& ray, const Vec3& lo, const Vec3& hi, double& t0, double& t1);

}  // namespace fpoct
