#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "fpoct/app/config.hpp"

namespace fpoct::app {

/// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitOther = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

struct FrameTrees {
  std::vector<Octree> trees;
  std::vector<FrameBuildReport> reports;
};

/// Per-frame fusion for every frame of the oracle. Logs one line per frame when log is set.
FrameTrees build_frame_trees(const DynamicOracle& oracle, const FusionConfig& cfg, std::ostream* log);

struct ImageMetrics {
  size_t images = 0;
  double psnr = 0.0;  ///< mean over images
  double ssim = 0.0;
  double mae = 0.0;
};

ImageMetrics evaluate(const FourierOctree& fpo, std::span<const TrainingView> views);
/// Same, rendering frame t from trees[t-1].
ImageMetrics evaluate(std::span<const Octree> trees, std::span<const TrainingView> views);

/// Held-out views of the configured dataset rig, rendered from the oracle.
std::vector<TrainingView> oracle_views(const DynamicOracle& oracle, const RunConfig& cfg, bool heldout);

}  // namespace fpoct::app
