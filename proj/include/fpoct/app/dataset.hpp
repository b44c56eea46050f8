#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "fpoct/app/config.hpp"

namespace fpoct::app {

/// cameras.txt: one line per camera, "width height fx fy cx cy" then the 3x4 world-from-camera
/// pose [R | position] row-major.
void write_cameras(const std::filesystem::path& path, const std::vector<Camera>& cams);
std::vector<Camera> read_cameras(const std::filesystem::path& path);

bool is_heldout(int view, int holdout_every);

std::filesystem::path frame_image_path(const std::filesystem::path& root, int t, int view, const char* ext);
std::filesystem::path silhouette_path(const std::filesystem::path& root, int t, int view);

struct DatasetSummary {
  size_t images = 0;
  size_t silhouettes = 0;
  size_t inconsistent_pixels = 0;  ///< opaque pixels outside the dilated silhouette
};

/// Ground-truth images (PNG + raw), silhouettes, cameras.txt and the effective config.ini.
DatasetSummary write_dataset(const RunConfig& cfg, const std::filesystem::path& root, std::ostream& log);

struct Dataset {
  std::filesystem::path root;
  RunConfig config;
  std::vector<Camera> cameras;

  /// Loads config.ini and cameras.txt; throws a data Error when either is missing.
  static Dataset open(const std::filesystem::path& root);

  int frames() const { return config.scene.frames; }
  /// Raw ground truth for every frame of the selected views.
  std::vector<TrainingView> views(bool heldout) const;
  std::vector<TrainingView> all_views() const;
};

}  // namespace fpoct::app
