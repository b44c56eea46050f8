#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "fpoct/fpo.hpp"

namespace fpoct {

/// One training pixel: view index into the dataset and pixel coordinates.
struct RayRef {
  uint32_t view = 0;
  int px = 0;
  int py = 0;
};

/// Gradient restricted to the leaves the batch touched, in first-touch order.
struct SparseGradient {
  size_t stride = 0;
  std::vector<uint32_t> leaves;
  std::vector<double> values;  ///< leaves.size() x stride, same layout as FourierOctree::leaf
  double loss = 0.0;           ///< sum of squared RGB error over the batch
  size_t rays = 0;

  std::span<const double> block(size_t k) const { return {values.data() + k * stride, stride}; }
  /// Dense lookup, zero for untouched leaves.
  double at(uint32_t leaf, size_t coeff) const;
};

/// d/dk of sum over batch rays of |C - I|^2, analytic through compositing, sigmoid, SH and IDFT.
/// Per-ray contributions are reduced in batch order.
SparseGradient grad(const FourierOctree& fpo, std::span<const TrainingView> views, std::span<const RayRef> batch,
                    const Vec3& background = Vec3::Zero(), double early_stop_T = 1e-4);

/// Sum of squared RGB error over the rays, forward only.
double batch_loss(const FourierOctree& fpo, std::span<const TrainingView> views, std::span<const RayRef> rays,
                  const Vec3& background = Vec3::Zero(), double early_stop_T = 1e-4);

/// Color of one ray at frame t computed straight from the coefficients.
Vec3 render_ray(const FourierOctree& fpo, const FrameWeights& w, const Ray& ray, const Vec3& background = Vec3::Zero(),
                double early_stop_T = 1e-4);

enum class OptimizerKind { Sgd, Adam };

struct FinetuneConfig {
  double step_size = 1e-2;
  int steps = 0;
  int rays_per_batch = 512;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  uint64_t seed = 0;
  /// Size of a fixed ray sample scored before every step for the loss curve; 0 scores the training batch.
  int monitor_rays = 4096;
  Vec3 background = Vec3::Zero();

  void validate() const;
};

struct LossPoint {
  int step = 0;
  double loss = 0.0;           ///< mean squared error per channel over the monitor sample
  double psnr_estimate = 0.0;  ///< from that MSE
  double batch_loss = 0.0;     ///< same measure over the step's training batch
};

struct FinetuneResult {
  FourierOctree fpo;
  std::vector<LossPoint> curve;
};

/// Batches of rays drawn uniformly over (view, pixel); fully determined by the seed.
class RaySampler {
 public:
  RaySampler(std::span<const TrainingView> views, uint64_t seed);
  std::vector<RayRef> next(int count);

 private:
  std::vector<uint64_t> offsets_;
  std::vector<int> widths_;
  uint64_t total_ = 0;
  std::mt19937_64 rng_;
};

/// Lazy optimizer: only coefficients of leaves touched by the current batch are stepped.
FinetuneResult finetune(const FourierOctree& fpo, std::span<const TrainingView> views, const FinetuneConfig& cfg,
                        const std::function<void(const LossPoint&)>& progress = {});

}  // namespace fpoct
