#include "fpoct/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "fpoct/error.hpp"
#include "fpoct/fusion.hpp"
#include "fpoct/render.hpp"

namespace fpoct {

namespace {

constexpr double kPi = std::numbers::pi;

/// Open-ball chord; nullopt for misses and tangents.
std::optional<Interval> ball_chord(const Ray& ray, const Vec3& center, double radius) {
  const Vec3 oc = ray.origin - center;
  const double b = ray.dir.dot(oc);
  const double c = oc.squaredNorm() - radius * radius;
  const double disc = b * b - c;
  if (!(disc > 0.0)) return std::nullopt;
  const double s = std::sqrt(disc);
  Interval iv{std::max(-b - s, ray.t_near), std::min(-b + s, ray.t_far)};
  if (!(iv.t1 > iv.t0)) return std::nullopt;
  return iv;
}

std::vector<Interval> merge_intervals(std::vector<Interval> ivs) {
  std::sort(ivs.begin(), ivs.end(), [](const Interval& a, const Interval& b) { return a.t0 < b.t0; });
  std::vector<Interval> out;
  for (const Interval& iv : ivs) {
    if (!out.empty() && iv.t0 <= out.back().t1)
      out.back().t1 = std::max(out.back().t1, iv.t1);
    else
      out.push_back(iv);
  }
  return out;
}

bool ball_inside_box(const Aabb& box, const Vec3& c, double r) {
  return (c.array() - r >= box.min.array()).all() && (c.array() + r <= box.max.array()).all();
}

}  // namespace

Mask DynamicOracle::silhouette(const Camera& cam, int t) const {
  cam.validate();
  Mask m(cam.width, cam.height);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) m.set(x, y, !support(generate_ray(cam, x, y), t).empty());
  return m;
}

Vec3 DynamicOracle::ground_truth_ray(const Ray& ray, int t, const Vec3& background) const {
  const Aabb box = bbox();
  double b0, b1;
  Compositor acc(1e-4);
  if (!intersect_box(ray, box.min, box.max, b0, b1)) return background;
  const double h = ground_truth_step();
  for (const Interval& iv : support(ray, t)) {
    const double t0 = std::max(iv.t0, b0), t1 = std::min(iv.t1, b1);
    if (!(t1 > t0)) continue;
    const int n = std::max(1, static_cast<int>(std::ceil((t1 - t0) / h)));
    const double step = (t1 - t0) / n;
    for (int k = 0; k < n; ++k) {
      const Sample s = query(ray.at(t0 + (k + 0.5) * step), ray.dir, t);
      if (!(s.sigma > 0.0)) continue;
      if (!acc.add(s.sigma, step, s.rgb)) return acc.finish(background);
    }
  }
  return acc.finish(background);
}

Image DynamicOracle::ground_truth(const Camera& cam, int t, const Vec3& background) const {
  cam.validate();
  Image img(cam.width, cam.height);
#pragma omp parallel for schedule(dynamic, 4)
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) img.set(x, y, ground_truth_ray(generate_ray(cam, x, y), t, background));
  return img;
}

PulsatingSphere::PulsatingSphere(PulsatingSphereParams params) : params_(std::move(params)) {
  const auto& p = params_;
  if (!(p.r0 > p.amplitude) || !(p.amplitude >= 0.0)) throw config_error("pulsating sphere needs r0 > amplitude >= 0");
  if (p.frames < 1 || !(p.period > 0.0) || !(p.sigma_max >= 0.0)) throw config_error("invalid pulsating sphere timing");
  if (!ball_inside_box(p.bbox, p.center, p.r0 + p.amplitude)) throw config_error("pulsating sphere leaves its box");
}

double PulsatingSphere::radius(int t) const {
  return params_.r0 + params_.amplitude * std::sin(2.0 * kPi * t / params_.period);
}

Sample PulsatingSphere::query(const Vec3& p, const Vec3& dir, int t) const {
  const auto& pr = params_;
  const Vec3 rel = p - pr.center;
  const double dist = rel.norm();
  const Vec3 n = dist > 1e-12 ? Vec3(rel / dist) : Vec3::UnitZ();
  const double facing = std::max(0.0, -dir.dot(n));
  const double lobe = pr.lobe_weight * std::pow(facing, pr.lobe_exponent);
  Sample s;
  s.rgb = (Vec3::Constant(pr.color_offset + lobe) + pr.color_scale * n).cwiseMax(0.0).cwiseMin(1.0);
  s.sigma = (dist < radius(t) && pr.bbox.contains(p)) ? pr.sigma_max : 0.0;
  return s;
}

std::vector<Interval> PulsatingSphere::support(const Ray& ray, int t) const {
  if (!(params_.sigma_max > 0.0)) return {};
  const auto iv = ball_chord(ray, params_.center, radius(t));
  if (!iv) return {};
  return {*iv};
}

OrbitingBlobs::OrbitingBlobs(OrbitingBlobsParams params) : params_(std::move(params)) {
  const auto& bl = params_.blobs;
  if (bl.size() < 2) throw config_error("orbiting blobs needs at least two blobs");
  if (params_.frames < 1) throw config_error("orbiting blobs needs frames >= 1");
  for (size_t i = 0; i < bl.size(); ++i) {
    if (!(bl[i].scale > 0.0) || !(bl[i].peak_sigma >= 0.0)) throw config_error("blob scale and density must be positive");
    for (size_t j = 0; j < i; ++j) {
      if (bl[i].orbit_radius == bl[j].orbit_radius && bl[i].phase == bl[j].phase && bl[i].height == bl[j].height &&
          bl[i].cycles == bl[j].cycles)
        throw config_error("blobs " + std::to_string(j) + " and " + std::to_string(i) + " share an orbit");
    }
    const double reach = bl[i].orbit_radius + kCutoff * bl[i].scale;
    const Vec3 c = params_.orbit_center + Vec3(0, 0, bl[i].height);
    const Vec3 ext(reach, reach, kCutoff * bl[i].scale);
    if (((c - ext).array() < params_.bbox.min.array()).any() || ((c + ext).array() > params_.bbox.max.array()).any())
      throw config_error("blob orbit leaves the box");
  }
}

Vec3 OrbitingBlobs::blob_center(size_t blob, int t) const {
  const Blob& b = params_.blobs[blob];
  const double ang = 2.0 * kPi * b.cycles * t / params_.frames + b.phase;
  return params_.orbit_center + Vec3(b.orbit_radius * std::cos(ang), b.orbit_radius * std::sin(ang), b.height);
}

double OrbitingBlobs::density(const Vec3& p, int t) const {
  if (!params_.bbox.contains(p)) return 0.0;
  double acc = 0.0;
  for (size_t i = 0; i < params_.blobs.size(); ++i) {
    const Blob& b = params_.blobs[i];
    const double r2 = (p - blob_center(i, t)).squaredNorm();
    const double cut = kCutoff * b.scale;
    if (r2 < cut * cut) acc += b.peak_sigma * std::exp(-r2 / (2.0 * b.scale * b.scale));
  }
  return acc;
}

Sample OrbitingBlobs::query(const Vec3& p, const Vec3&, int t) const {
  Sample s;
  Vec3 weighted = Vec3::Zero();
  double total = 0.0;
  double nearest = std::numeric_limits<double>::infinity();
  Vec3 nearest_color = params_.blobs.front().color;
  const bool inside = params_.bbox.contains(p);
  for (size_t i = 0; i < params_.blobs.size(); ++i) {
    const Blob& b = params_.blobs[i];
    const double r2 = (p - blob_center(i, t)).squaredNorm();
    if (r2 < nearest) {
      nearest = r2;
      nearest_color = b.color;
    }
    const double cut = kCutoff * b.scale;
    if (inside && r2 < cut * cut) {
      const double d = b.peak_sigma * std::exp(-r2 / (2.0 * b.scale * b.scale));
      total += d;
      weighted += d * b.color;
    }
  }
  s.sigma = total;
  s.rgb = total > 0.0 ? Vec3(weighted / total) : nearest_color;
  return s;
}

std::vector<Interval> OrbitingBlobs::support(const Ray& ray, int t) const {
  std::vector<Interval> ivs;
  for (size_t i = 0; i < params_.blobs.size(); ++i) {
    if (!(params_.blobs[i].peak_sigma > 0.0)) continue;
    if (auto iv = ball_chord(ray, blob_center(i, t), kCutoff * params_.blobs[i].scale)) ivs.push_back(*iv);
  }
  return merge_intervals(std::move(ivs));
}

CompositeScene::CompositeScene(std::vector<std::shared_ptr<const DynamicOracle>> parts) : parts_(std::move(parts)) {
  if (parts_.empty()) throw config_error("composite scene needs at least one part");
  for (const auto& p : parts_) {
    if (p->frames() != parts_.front()->frames()) throw config_error("composite parts disagree on frame count");
    const Aabb a = p->bbox(), b = parts_.front()->bbox();
    if (a.min != b.min || a.max != b.max) throw config_error("composite parts disagree on bounding box");
  }
}

Sample CompositeScene::query(const Vec3& p, const Vec3& dir, int t) const {
  Sample out;
  Vec3 weighted = Vec3::Zero();
  Vec3 fallback = Vec3::Zero();
  for (size_t i = 0; i < parts_.size(); ++i) {
    const Sample s = parts_[i]->query(p, dir, t);
    if (i == 0) fallback = s.rgb;
    out.sigma += s.sigma;
    weighted += s.sigma * s.rgb;
  }
  out.rgb = out.sigma > 0.0 ? Vec3(weighted / out.sigma) : fallback;
  return out;
}

std::vector<Interval> CompositeScene::support(const Ray& ray, int t) const {
  std::vector<Interval> all;
  for (const auto& p : parts_) {
    auto s = p->support(ray, t);
    all.insert(all.end(), s.begin(), s.end());
  }
  return merge_intervals(std::move(all));
}

PulsatingSphereParams default_sphere_params(int frames) {
  PulsatingSphereParams p;
  p.r0 = 0.35;
  p.amplitude = 0.1;
  p.period = frames;
  p.frames = frames;
  return p;
}

OrbitingBlobsParams default_blobs_params(int frames) {
  OrbitingBlobsParams p;
  p.frames = frames;
  Blob a;
  a.orbit_radius = 0.68;
  a.scale = 0.07;
  a.color = Vec3(0.85, 0.35, 0.2);
  Blob b = a;
  b.phase = kPi;
  b.color = Vec3(0.2, 0.45, 0.85);
  p.blobs = {a, b};
  return p;
}

std::shared_ptr<const DynamicOracle> make_desk_scene(int frames) {
  return std::make_shared<CompositeScene>(std::vector<std::shared_ptr<const DynamicOracle>>{
      std::make_shared<PulsatingSphere>(default_sphere_params(frames)),
      std::make_shared<OrbitingBlobs>(default_blobs_params(frames))});
}

CameraRig make_rig(const RigSpec& spec) {
  if (spec.count < 1 || !(spec.radius > 0.0)) throw config_error("rig needs count >= 1 and radius > 0");
  if (!(spec.fov_deg > 0.0 && spec.fov_deg < 180.0)) throw config_error("rig field of view must be in (0, 180)");
  CameraRig rig;
  rig.spec = spec;
  std::vector<Vec3> dirs;
  if (spec.pattern == RigPattern::UniformSphere) {
    dirs = fibonacci_sphere(spec.count);
  } else {
    const double el = spec.elevation_deg * kPi / 180.0;
    for (int i = 0; i < spec.count; ++i) {
      const double az = 2.0 * kPi * i / spec.count;
      dirs.emplace_back(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
    }
  }
  const double focal = 0.5 * spec.width / std::tan(0.5 * spec.fov_deg * kPi / 180.0);
  for (const Vec3& d : dirs) {
    rig.cameras.push_back(
        Camera::look_at(spec.center + spec.radius * d, spec.center, Vec3::UnitZ(), spec.width, spec.height, focal));
  }
  return rig;
}

Octree bake_frame_tree(const DynamicOracle& oracle, int t, int grid_n, int lmax, int directions_per_leaf) {
  if (!is_power_of_two(grid_n)) throw config_error("grid_n must be a power of two");
  const Aabb box = oracle.bbox();
  const auto dirs = fibonacci_sphere(directions_per_leaf);
  const double side = box.side() / grid_n;
  OccupancyGrid occ(grid_n);
#pragma omp parallel for schedule(dynamic, 1)
  for (int z = 0; z < grid_n; ++z)
    for (int y = 0; y < grid_n; ++y)
      for (int x = 0; x < grid_n; ++x) {
        const Vec3 c = box.min + side * Vec3(x + 0.5, y + 0.5, z + 0.5);
        double acc = 0.0;
        for (const Vec3& d : dirs) acc += oracle.query(c, d, t).sigma;
        if (acc > 0.0) occ.set(x, y, z, true);
      }
  Octree tree = from_occupancy(box, grid_n, occ, lmax);
  return coarse_fill(tree, oracle, t, directions_per_leaf);
}

}  // namespace fpoct
