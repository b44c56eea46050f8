#pragma once

#include <span>
#include <vector>

#include "fpoct/camera.hpp"
#include "fpoct/image.hpp"
#include "fpoct/octree.hpp"
#include "fpoct/render.hpp"

namespace fpoct {

struct FpoConfig {
  int n1 = 31;
  int n2 = 5;
  int lmax = 2;
  int frames = 1;
  bool paper_dft = false;  ///< literal 1/T transform instead of least squares

  void validate() const;
};

/// Fourier PlenOctree. Per leaf: [k_sigma (n1), k_z[i][lm][channel] (n2 x nsh x 3)].
struct FourierOctree {
  Topology topo;
  FpoConfig config;
  std::vector<double> coeffs;

  size_t sh_size() const { return 3 * static_cast<size_t>(sh_count(config.lmax)); }
  size_t stride() const { return static_cast<size_t>(config.n1) + static_cast<size_t>(config.n2) * sh_size(); }
  size_t leaf_count() const { return topo.leaf_count(); }

  std::span<double> leaf(size_t i) { return {coeffs.data() + i * stride(), stride()}; }
  std::span<const double> leaf(size_t i) const { return {coeffs.data() + i * stride(), stride()}; }
};

/// IDFT weights of one frame for both coefficient blocks.
struct FrameWeights {
  int frame = 1;
  std::vector<double> sigma;
  std::vector<double> sh;
};

FrameWeights frame_weights(const FpoConfig& cfg, int t);

/// sigma before the clamp at zero, and the SH coefficients, of one leaf at a frame.
double eval_sigma_raw(const FourierOctree& fpo, size_t leaf, const FrameWeights& w);
void eval_sh(const FourierOctree& fpo, size_t leaf, const FrameWeights& w, std::span<double> out);

/// union -> broadcast -> per-leaf series -> transform.
FourierOctree build_fpo(std::span<const Octree> frame_trees, const FpoConfig& cfg);

/// Per-frame payloads of the same union topology, frame t at index t-1.
std::vector<Octree> broadcast_frames(std::span<const Octree> frame_trees);

/// Transform step alone; every input must already share one topology.
FourierOctree build_fpo_broadcast(std::span<const Octree> frames, const FpoConfig& cfg);

/// Per leaf, mean over frames of (sigma_t - reconstructed sigma_t)^2, before the clamp.
std::vector<double> sigma_series_mse(const FourierOctree& fpo, std::span<const Octree> frames);

/// Static tree at frame t with sigma clamped at zero. Throws a config Error when t is outside 1..T.
Octree eval_at_frame(const FourierOctree& fpo, int t);

/// Drops leaves whose sigma stays below threshold at every frame.
FourierOctree prune_fpo(const FourierOctree& fpo, double threshold = 1e-3);

Image render(const FourierOctree& fpo, int t, const Camera& cam, const RenderOptions& opts = {});

/// One ground-truth image of the training or evaluation set.
struct TrainingView {
  Camera cam;
  int frame = 1;
  Image image;
};

/// Sum over views of squared RGB error of renders from eval_at_frame.
double loss(const FourierOctree& fpo, std::span<const TrainingView> views, const Vec3& background = Vec3::Zero());

}  // namespace fpoct
