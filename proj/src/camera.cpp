#include "fpoct/camera.hpp"

#include <string>

#include <Eigen/Geometry>

#include "fpoct/error.hpp"

namespace fpoct {

void Camera::validate() const {
  if (width <= 0 || height <= 0) throw config_error("camera image size must be positive");
  if (!(fx > 0.0) || !(fy > 0.0)) throw config_error("camera focal lengths must be positive");
  if (!rotation.allFinite() || !position.allFinite()) throw config_error("camera pose must be finite");
  if ((rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6)
    throw config_error("camera rotation is not orthonormal");
}

std::optional<Eigen::Vector2d> Camera::project(const Vec3& world) const {
  const Vec3 p = rotation.transpose() * (world - position);
  if (!(p.z() > 0.0)) return std::nullopt;
  return Eigen::Vector2d(fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy);
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width, int height, double focal) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 down = -up.normalized();
  if (forward.cross(down).norm() < 1e-9) down = (std::abs(forward.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY());
  const Vec3 right = down.cross(forward).normalized();
  const Vec3 cam_down = forward.cross(right);
  Camera cam;
  cam.width = width;
  cam.height = height;
  cam.fx = cam.fy = focal;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  cam.rotation.col(0) = right;
  cam.rotation.col(1) = cam_down;
  cam.rotation.col(2) = forward;
  cam.position = eye;
  return cam;
}

Ray generate_ray(const Camera& cam, int px, int py) {
  if (px < 0 || py < 0 || px >= cam.width || py >= cam.height)
    throw config_error("pixel (" + std::to_string(px) + ", " + std::to_string(py) + ") outside image");
  const Vec3 local((px + 0.5 - cam.cx) / cam.fx, (py + 0.5 - cam.cy) / cam.fy, 1.0);
  Ray r;
  r.origin = cam.position;
  r.dir = (cam.rotation * local).normalized();
  return r;
}

}  // namespace fpoct
