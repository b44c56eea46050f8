#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "fpoct/finetune.hpp"
#include "fpoct/fpo.hpp"
#include "fpoct/fusion.hpp"
#include "fpoct/oracle.hpp"

namespace fpoct::app {

struct SceneConfig {
  std::string kind = "desk";  ///< desk | sphere | blobs | static
  int frames = 20;
  double r0 = 0.35;
  double amplitude = 0.1;
  double sigma_max = 20.0;
  double lobe_weight = 0.25;
};

struct DatasetConfig {
  RigSpec rig{16, 3.5, Vec3::Zero(), RigPattern::UniformSphere, 0.0, 128, 128, 40.0};
  int holdout_every = 4;  ///< views k with k % holdout_every == holdout_every - 1 are held out; 0 disables
};

struct RunConfig {
  SceneConfig scene;
  DatasetConfig dataset;
  FusionConfig fusion;
  FpoConfig fpo;
  FinetuneConfig finetune;
  int threads = 0;
  bool deterministic = false;
};

/// Reads the INI file over the defaults. Unknown sections or keys are config errors.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(const std::string& text);
std::string to_ini(const RunConfig& cfg);

/// Keeps derived fields (frame counts, band limits) consistent and range-checks everything.
void finalize(RunConfig& cfg);

std::shared_ptr<const DynamicOracle> make_scene(const SceneConfig& scene);

std::string rig_pattern_name(RigPattern p);

}  // namespace fpoct::app
