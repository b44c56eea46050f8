#pragma once

#include <memory>
#include <vector>

#include "fpoct/camera.hpp"
#include "fpoct/image.hpp"
#include "fpoct/octree.hpp"

namespace fpoct {

/// What a radiance query returns: density and color seen along a direction.
struct Sample {
  double sigma = 0.0;
  Vec3 rgb = Vec3::Zero();
};

/// Anything that answers view-dependent density/color queries at a frame.
class RadianceSource {
 public:
  virtual ~RadianceSource() = default;
  /// dir is the unit ray direction, t the 1-based frame index.
  virtual Sample query(const Vec3& p, const Vec3& dir, int t) const = 0;
};

struct Interval {
  double t0 = 0.0;
  double t1 = 0.0;
};

/// Analytic stand-in for the generalizable radiance network: deterministic queries, exact
/// silhouettes and ground-truth images for every frame.
class DynamicOracle : public RadianceSource {
 public:
  virtual Aabb bbox() const = 0;
  virtual int frames() const = 0;

  /// Sorted, disjoint ray-parameter intervals outside of which sigma is zero at frame t.
  /// The union is exact: sigma > 0 somewhere inside each interval.
  virtual std::vector<Interval> support(const Ray& ray, int t) const = 0;

  /// Pixels whose center ray meets the density support.
  Mask silhouette(const Camera& cam, int t) const;

  /// Fixed-step (at most 1e-3 of the box side) emission-absorption integral through the
  /// analytic field, early stop at transmittance 1e-4.
  Image ground_truth(const Camera& cam, int t, const Vec3& background = Vec3::Zero()) const;
  Vec3 ground_truth_ray(const Ray& ray, int t, const Vec3& background = Vec3::Zero()) const;

  double ground_truth_step() const { return 1e-3 * bbox().side(); }
};

struct PulsatingSphereParams {
  Vec3 center = Vec3::Zero();
  double r0 = 0.45;
  double amplitude = 0.12;
  double period = 20.0;  ///< frames per pulsation cycle
  double sigma_max = 20.0;
  /// base color = color_offset + color_scale * radial unit vector
  double color_offset = 0.5;
  double color_scale = 0.35;
  /// highlight lobe_weight * max(0, -d·n)^lobe_exponent, strongest where the surface faces the viewer
  double lobe_weight = 0.25;
  double lobe_exponent = 4.0;
  int frames = 20;
  Aabb bbox{Vec3::Constant(-1.0), Vec3::Constant(1.0)};
};

struct Blob {
  double orbit_radius = 0.6;
  double phase = 0.0;   ///< radians
  double height = 0.0;  ///< offset along +z from the orbit center
  double cycles = 1.0;  ///< revolutions over the whole sequence
  double scale = 0.08;  ///< Gaussian standard deviation, support cut at 3x
  double peak_sigma = 30.0;
  Vec3 color{0.8, 0.3, 0.2};
};

struct OrbitingBlobsParams {
  Vec3 orbit_center = Vec3::Zero();
  std::vector<Blob> blobs;
  int frames = 20;
  Aabb bbox{Vec3::Constant(-1.0), Vec3::Constant(1.0)};
};

class PulsatingSphere final : public DynamicOracle {
 public:
  /// Throws a config Error unless r0 > amplitude >= 0 and the sphere stays inside the box.
  explicit PulsatingSphere(PulsatingSphereParams params);

  Sample query(const Vec3& p, const Vec3& dir, int t) const override;
  Aabb bbox() const override { return params_.bbox; }
  int frames() const override { return params_.frames; }
  std::vector<Interval> support(const Ray& ray, int t) const override;

  double radius(int t) const;
  const PulsatingSphereParams& params() const { return params_; }

 private:
  PulsatingSphereParams params_;
};

class OrbitingBlobs final : public DynamicOracle {
 public:
  static constexpr double kCutoff = 3.0;

  /// Needs at least two blobs with distinct orbits, all inside the box.
  explicit OrbitingBlobs(OrbitingBlobsParams params);

  Sample query(const Vec3& p, const Vec3& dir, int t) const override;
  Aabb bbox() const override { return params_.bbox; }
  int frames() const override { return params_.frames; }
  std::vector<Interval> support(const Ray& ray, int t) const override;

  Vec3 blob_center(size_t blob, int t) const;
  double density(const Vec3& p, int t) const;
  const OrbitingBlobsParams& params() const { return params_; }

 private:
  OrbitingBlobsParams params_;
};

/// Sum of densities; color is the density-weighted mean (first part's color where all are empty).
class CompositeScene final : public DynamicOracle {
 public:
  explicit CompositeScene(std::vector<std::shared_ptr<const DynamicOracle>> parts);

  Sample query(const Vec3& p, const Vec3& dir, int t) const override;
  Aabb bbox() const override { return parts_.front()->bbox(); }
  int frames() const override { return parts_.front()->frames(); }
  std::vector<Interval> support(const Ray& ray, int t) const override;

 private:
  std::vector<std::shared_ptr<const DynamicOracle>> parts_;
};

/// Pulsating sphere plus two antipodal orbiting blobs in [-1,1]^3.
std::shared_ptr<const DynamicOracle> make_desk_scene(int frames);
PulsatingSphereParams default_sphere_params(int frames);
OrbitingBlobsParams default_blobs_params(int frames);

enum class RigPattern { UniformSphere, Ring };

struct RigSpec {
  int count = 6;
  double radius = 3.5;
  Vec3 center = Vec3::Zero();
  RigPattern pattern = RigPattern::UniformSphere;
  double elevation_deg = 0.0;  ///< ring only
  int width = 128;
  int height = 128;
  double fov_deg = 40.0;  ///< horizontal field of view
};

struct CameraRig {
  RigSpec spec;
  std::vector<Camera> cameras;
};

/// Cameras on a Fibonacci sphere or an equatorial ring (first camera on +x), all aimed at center, +z up.
CameraRig make_rig(const RigSpec& spec);

/// Reference per-frame tree: every voxel whose center has nonzero direction-averaged density
/// becomes a leaf filled from the oracle at its center.
Octree bake_frame_tree(const DynamicOracle& oracle, int t, int grid_n, int lmax, int directions_per_leaf = 64);

}  // namespace fpoct
