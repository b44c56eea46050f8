#pragma once

#include <span>
#include <vector>

#include "fpoct/oracle.hpp"

namespace fpoct {

/// Running fusion weight W and update count C of one leaf.
struct FusionState {
  double weight = 0.0;
  uint32_t count = 0;
};

struct FusionObservation {
  uint32_t leaf = 0;
  double transmittance = 0.0;
  double sigma = 0.0;
  Vec3 rgb = Vec3::Zero();
  Direction view_dir;
};

/// Shape-from-silhouette: a voxel is kept iff its center projects into the dilated silhouette of
/// every view. Voxels projecting outside an image or behind a camera are carved.
/// Throws a data Error when every silhouette is empty.
OccupancyGrid carve(const DynamicOracle& oracle, const CameraRig& rig, int t, int grid_n, int dilation_px = 1);

/// Fills each leaf from the source at its center: sigma is the mean over quasi-uniform
/// directions, SH is the least-squares fit of the clamped logit colors.
Octree coarse_fill(const Octree& tree, const RadianceSource& source, int t, int dirs_per_leaf = 64);

/// SH coefficients of one observation: the coefficients closest to `current` (per channel,
/// Euclidean) that decode to the observed color along dir. A no-op when they already do.
void observation_sh(int lmax, std::span<const double> current, const Vec3& dir, const Vec3& rgb,
                    std::span<double> out);

/// Transmittance-weighted running mean:
///   sigma <- (W sigma + T sigma_obs)/(W + T),  z <- (W z + T z_obs)/(W + T),
///   C <- C + 1,  W <- (C-1)/C W + T/C.
/// Throws a numeric Error when W + T is not positive.
void apply_update(FusionState& state, double& sigma, std::span<double> sh, double transmittance, double sigma_obs,
                  std::span<const double> sh_obs);

std::pair<FusionState, StaticLeaf> update_leaf(const FusionState& state, const StaticLeaf& leaf,
                                               const FusionObservation& obs);

struct FinePassOptions {
  double query_threshold = 1e-3;
  double early_stop_T = 1e-4;
};

struct FinePassResult {
  Octree tree;
  std::vector<FusionState> state;
  std::vector<size_t> leaves_updated_per_view;
  size_t queries = 0;
};

/// Dense-view refinement. Views run in rig order; within a view every segment whose
/// transmittance exceeds the threshold queries the source at the leaf center along the ray,
/// hits on one leaf are averaged, and each touched leaf gets one update.
FinePassResult fine_pass(const Octree& tree, const RadianceSource& source, const CameraRig& dense_rig, int t,
                         const FinePassOptions& opts = {});

struct FusionConfig {
  int grid_n = 64;
  int lmax = 2;
  RigSpec coarse_rig{6, 3.5, Vec3::Zero(), RigPattern::UniformSphere, 0.0, 128, 128, 40.0};
  RigSpec fine_rig{100, 3.5, Vec3::Zero(), RigPattern::UniformSphere, 0.0, 64, 64, 40.0};
  int dirs_per_leaf = 64;
  int dilation_px = 1;
  double query_threshold = 1e-3;
  double prune_threshold = 1e-3;
  bool run_fine_pass = true;
};

struct FrameBuildReport {
  double carve_seconds = 0.0;
  double coarse_seconds = 0.0;
  double fine_seconds = 0.0;
  size_t hull_voxels = 0;
  size_t pruned = 0;
  size_t leaves = 0;
  size_t queries = 0;
  std::vector<size_t> leaves_updated_per_view;
};

struct FrameBuildResult {
  Octree coarse;  ///< before the fine pass and pruning
  Octree tree;
  FrameBuildReport report;
};

/// carve -> coarse fill -> fine pass -> prune for one frame.
FrameBuildResult build_frame_tree(const DynamicOracle& oracle, int t, const FusionConfig& cfg);

}  // namespace fpoct
