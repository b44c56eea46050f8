#include "fpoct/fusion.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "fpoct/error.hpp"
#include "fpoct/render.hpp"

namespace fpoct {

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

OccupancyGrid carve(const DynamicOracle& oracle, const CameraRig& rig, int t, int grid_n, int dilation_px) {
  if (rig.cameras.empty()) throw config_error("carving needs at least one view");
  if (!is_power_of_two(grid_n)) throw config_error("grid_n must be a power of two");
  std::vector<Mask> masks;
  size_t foreground = 0;
  for (const Camera& cam : rig.cameras) {
    masks.push_back(oracle.silhouette(cam, t).dilated(dilation_px));
    foreground += masks.back().count();
  }
  if (foreground == 0) throw data_error("all silhouettes are empty at frame " + std::to_string(t));

  const Aabb box = oracle.bbox();
  const double side = box.side() / grid_n;
  OccupancyGrid occ(grid_n);
#pragma omp parallel for schedule(static)
  for (int z = 0; z < grid_n; ++z)
    for (int y = 0; y < grid_n; ++y)
      for (int x = 0; x < grid_n; ++x) {
        const Vec3 c = box.min + side * Vec3(x + 0.5, y + 0.5, z + 0.5);
        bool inside = true;
        for (size_t v = 0; v < rig.cameras.size() && inside; ++v) {
          const auto uv = rig.cameras[v].project(c);
          if (!uv) {
            inside = false;
            break;
          }
          const double px = std::floor(uv->x()), py = std::floor(uv->y());
          if (px < 0 || py < 0 || px >= masks[v].width || py >= masks[v].height) {
            inside = false;
            break;
          }
          inside = masks[v].at(static_cast<int>(px), static_cast<int>(py));
        }
        if (inside) occ.set(x, y, z, true);
      }
  return occ;
}

Octree coarse_fill(const Octree& tree, const RadianceSource& source, int t, int dirs_per_leaf) {
  const auto dirs = fibonacci_sphere(dirs_per_leaf);
  const ShFitter fitter(dirs, tree.lmax);
  Octree out = tree;
  const auto n = static_cast<long>(tree.leaf_count());
#pragma omp parallel
  {
    std::vector<double> logits(dirs.size() * 3);
#pragma omp for schedule(dynamic, 64)
    for (long leaf = 0; leaf < n; ++leaf) {
      const Vec3 p = tree.topo.cell_center(tree.topo.leaf_cells[static_cast<size_t>(leaf)]);
      double sigma = 0.0;
      for (size_t k = 0; k < dirs.size(); ++k) {
        const Sample s = source.query(p, dirs[k], t);
        sigma += s.sigma;
        for (int c = 0; c < 3; ++c) logits[3 * k + static_cast<size_t>(c)] = clamped_logit(s.rgb[c]);
      }
      out.sigma(static_cast<size_t>(leaf)) = sigma / static_cast<double>(dirs.size());
      fitter.fit(logits, out.sh(static_cast<size_t>(leaf)));
    }
  }
  return out;
}

void observation_sh(int lmax, std::span<const double> current, const Vec3& dir, const Vec3& rgb,
                    std::span<double> out) {
  double basis[sh_count(kMaxShBand)];
  const int nb = sh_count(lmax);
  eval_sh_basis(lmax, dir, std::span<double>(basis, static_cast<size_t>(nb)));
  double norm2 = 0.0;
  for (int k = 0; k < nb; ++k) norm2 += basis[k] * basis[k];
  for (int c = 0; c < 3; ++c) {
    double pred = 0.0;
    for (int k = 0; k < nb; ++k) pred += basis[k] * current[static_cast<size_t>(3 * k + c)];
    const double gain = (clamped_logit(rgb[c]) - pred) / norm2;
    for (int k = 0; k < nb; ++k) {
      const auto i = static_cast<size_t>(3 * k + c);
      out[i] = current[i] + gain * basis[k];
    }
  }
}

void apply_update(FusionState& state, double& sigma, std::span<double> sh, double transmittance, double sigma_obs,
                  std::span<const double> sh_obs) {
  const double w = state.weight;
  const double denom = w + transmittance;
  if (!(denom > 0.0) || !std::isfinite(denom)) throw numeric_error("fusion update with zero total weight");
  if (w == 0.0) {
    sigma = sigma_obs;
    std::copy(sh_obs.begin(), sh_obs.end(), sh.begin());
  } else {
    const double f = transmittance / denom;
    sigma += f * (sigma_obs - sigma);
    for (size_t i = 0; i < sh.size(); ++i) sh[i] += f * (sh_obs[i] - sh[i]);
  }
  state.count += 1;
  const double c = state.count;
  state.weight = (c - 1.0) / c * w + transmittance / c;
}

std::pair<FusionState, StaticLeaf> update_leaf(const FusionState& state, const StaticLeaf& leaf,
                                               const FusionObservation& obs) {
  if (!(obs.transmittance > 0.0)) throw numeric_error("fusion observation needs positive transmittance");
  std::vector<double> target(leaf.sh.values.size());
  observation_sh(leaf.sh.lmax, leaf.sh.values, obs.view_dir.unit(), obs.rgb, target);
  FusionState s = state;
  StaticLeaf out = leaf;
  apply_update(s, out.sigma, out.sh.values, obs.transmittance, obs.sigma, target);
  return {s, out};
}

FinePassResult fine_pass(const Octree& tree, const RadianceSource& source, const CameraRig& dense_rig, int t,
                         const FinePassOptions& opts) {
  FinePassResult res;
  res.tree = tree;
  res.state.assign(tree.leaf_count(), FusionState{});
  Octree& cur = res.tree;
  const size_t nsh = cur.stride() - 1;

  struct Hit {
    uint32_t leaf;
    double transmittance;
    Vec3 dir;
  };
  struct Accum {
    double transmittance = 0.0;
    double sigma = 0.0;
    std::vector<double> sh;
    int hits = 0;
  };
  std::vector<int> slot_of_leaf(cur.leaf_count(), -1);

  for (const Camera& cam : dense_rig.cameras) {
    cam.validate();
    std::vector<std::vector<Hit>> rows(static_cast<size_t>(cam.height));
#pragma omp parallel for schedule(dynamic, 4)
    for (int y = 0; y < cam.height; ++y) {
      auto& row = rows[static_cast<size_t>(y)];
      for (int x = 0; x < cam.width; ++x) {
        const Ray ray = generate_ray(cam, x, y);
        Compositor acc(opts.early_stop_T);
        traverse(cur.topo, ray, [&](const RaySegment& s) {
          if (acc.transmittance() > opts.query_threshold) row.push_back({s.leaf, acc.transmittance(), ray.dir});
          return acc.add(cur.sigma(s.leaf), s.delta, Vec3::Zero());
        });
      }
    }

    std::vector<uint32_t> touched;
    std::vector<Accum> sums;
    std::vector<double> target(nsh);
    for (const auto& row : rows) {
      for (const Hit& h : row) {
        int& slot = slot_of_leaf[h.leaf];
        if (slot < 0) {
          slot = static_cast<int>(sums.size());
          sums.push_back(Accum{0.0, 0.0, std::vector<double>(nsh, 0.0), 0});
          touched.push_back(h.leaf);
        }
        Accum& a = sums[static_cast<size_t>(slot)];
        const Vec3 center = cur.topo.cell_center(cur.topo.leaf_cells[h.leaf]);
        const Sample s = source.query(center, h.dir, t);
        observation_sh(cur.lmax, cur.sh(h.leaf), h.dir, s.rgb, target);
        a.transmittance += h.transmittance;
        a.sigma += s.sigma;
        for (size_t i = 0; i < nsh; ++i) a.sh[i] += target[i];
        a.hits += 1;
        res.queries += 1;
      }
    }
    for (size_t i = 0; i < touched.size(); ++i) {
      Accum& a = sums[i];
      const double inv = 1.0 / a.hits;
      for (double& v : a.sh) v *= inv;
      const uint32_t leaf = touched[i];
      apply_update(res.state[leaf], cur.sigma(leaf), cur.sh(leaf), a.transmittance * inv, a.sigma * inv, a.sh);
      slot_of_leaf[leaf] = -1;
    }
    res.leaves_updated_per_view.push_back(touched.size());
  }
  return res;
}

FrameBuildResult build_frame_tree(const DynamicOracle& oracle, int t, const FusionConfig& cfg) {
  FrameBuildResult out;
  auto start = std::chrono::steady_clock::now();
  const CameraRig coarse_rig = make_rig(cfg.coarse_rig);
  const OccupancyGrid hull = carve(oracle, coarse_rig, t, cfg.grid_n, cfg.dilation_px);
  out.report.hull_voxels = hull.count();
  Octree tree = from_occupancy(oracle.bbox(), cfg.grid_n, hull, cfg.lmax);
  out.report.carve_seconds = seconds_since(start);

  start = std::chrono::steady_clock::now();
  tree = coarse_fill(tree, oracle, t, cfg.dirs_per_leaf);
  out.report.coarse_seconds = seconds_since(start);
  out.coarse = tree;

  if (cfg.run_fine_pass) {
    start = std::chrono::steady_clock::now();
    FinePassResult fine = fine_pass(tree, oracle, make_rig(cfg.fine_rig), t, {cfg.query_threshold, 1e-4});
    tree = std::move(fine.tree);
    out.report.queries = fine.queries;
    out.report.leaves_updated_per_view = std::move(fine.leaves_updated_per_view);
    out.report.fine_seconds = seconds_since(start);
  }

  PruneResult pruned = prune(tree, cfg.prune_threshold);
  out.report.pruned = pruned.removed;
  out.report.leaves = pruned.tree.leaf_count();
  out.tree = std::move(pruned.tree);
  return out;
}

}  // namespace fpoct
