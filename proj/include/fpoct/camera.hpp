#pragma once

#include <optional>

#include <Eigen/Core>

#include "fpoct/geometry.hpp"

namespace fpoct {

/// Pinhole camera, OpenCV axes (x right, y down, z forward).
/// rotation maps camera axes to world axes; position is the camera center in world.
struct Camera {
  int width = 0;
  int height = 0;
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 position = Vec3::Zero();

  /// Throws a config Error on non-positive sizes/focals or a non-orthonormal rotation.
  void validate() const;

  Vec3 optical_axis() const { return rotation.col(2); }

  /// Continuous pixel coordinates (pixel (i, j) spans [i, i+1) x [j, j+1)); nullopt behind the camera.
  std::optional<Eigen::Vector2d> project(const Vec3& world) const;

  /// Camera at eye aimed at target; up disambiguates roll and may be anything not parallel to the view axis.
  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width, int height, double focal);
};

/// Ray through the center of pixel (px, py), unit direction. Throws on out-of-bounds pixels.
Ray generate_ray(const Camera& cam, int px, int py);

}  // namespace fpoct
