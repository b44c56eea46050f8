#include "fpoct/app/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "fpoct/error.hpp"

namespace fpoct::app {

namespace fs = std::filesystem;

void write_cameras(const fs::path& path, const std::vector<Camera>& cams) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write " + path.string());
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const Camera& c : cams) {
    out << c.width << ' ' << c.height << ' ' << num(c.fx) << ' ' << num(c.fy) << ' ' << num(c.cx) << ' ' << num(c.cy);
    for (int r = 0; r < 3; ++r) {
      for (int k = 0; k < 3; ++k) out << ' ' << num(c.rotation(r, k));
      out << ' ' << num(c.position[r]);
    }
    out << '\n';
  }
  if (!out) throw data_error("failed writing " + path.string());
}

std::vector<Camera> read_cameras(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot read " + path.string());
  std::vector<Camera> cams;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    Camera c;
    ls >> c.width >> c.height >> c.fx >> c.fy >> c.cx >> c.cy;
    for (int r = 0; r < 3; ++r) {
      for (int k = 0; k < 3; ++k) ls >> c.rotation(r, k);
      ls >> c.position[r];
    }
    if (!ls || !(ls >> std::ws).eof())
      throw data_error(path.string() + ":" + std::to_string(lineno) + ": expected 18 numbers");
    try {
      c.validate();
    } catch (const Error& e) {
      throw data_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    cams.push_back(c);
  }
  if (cams.empty()) throw data_error(path.string() + " has no cameras");
  return cams;
}

bool is_heldout(int view, int holdout_every) { return holdout_every > 0 && view % holdout_every == holdout_every - 1; }

fs::path frame_image_path(const fs::path& root, int t, int view, const char* ext) {
  return root / "frames" / std::to_string(t) / (std::to_string(view) + ext);
}

fs::path silhouette_path(const fs::path& root, int t, int view) {
  return root / "silhouettes" / std::to_string(t) / (std::to_string(view) + ".png");
}

DatasetSummary write_dataset(const RunConfig& cfg, const fs::path& root, std::ostream& log) {
  const auto scene = make_scene(cfg.scene);
  const CameraRig rig = make_rig(cfg.dataset.rig);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw data_error("cannot create " + root.string() + ": " + ec.message());
  {
    std::ofstream ini(root / "config.ini");
    ini << to_ini(cfg);
    if (!ini) throw data_error("cannot write " + (root / "config.ini").string());
  }
  write_cameras(root / "cameras.txt", rig.cameras);

  DatasetSummary sum;
  const Vec3 white = Vec3::Ones();
  for (int t = 1; t <= scene->frames(); ++t) {
    fs::create_directories(root / "frames" / std::to_string(t));
    fs::create_directories(root / "silhouettes" / std::to_string(t));
    size_t foreground = 0, bad = 0;
    for (size_t v = 0; v < rig.cameras.size(); ++v) {
      const Camera& cam = rig.cameras[v];
      const int vi = static_cast<int>(v);
      const Image img = scene->ground_truth(cam, t);
      const Mask sil = scene->silhouette(cam, t);
      write_png(frame_image_path(root, t, vi, ".png"), img);
      write_raw(frame_image_path(root, t, vi, ".raw"), img);
      write_png(silhouette_path(root, t, vi), sil);
      ++sum.images;
      ++sum.silhouettes;
      foreground += sil.count();
      // opacity from the black/white background pair
      const Image on_white = scene->ground_truth(cam, t, white);
      const Mask dil = sil.dilated(1);
      for (int y = 0; y < cam.height; ++y)
        for (int x = 0; x < cam.width; ++x) {
          const double alpha = 1.0 - (on_white.get(x, y) - img.get(x, y)).mean();
          if (alpha > 0.5 && !dil.at(x, y)) ++bad;
        }
    }
    sum.inconsistent_pixels += bad;
    log << "frame " << t << ": " << rig.cameras.size() << " images, " << foreground << " silhouette pixels\n";
  }
  log << "silhouette consistency: " << (sum.inconsistent_pixels == 0 ? "OK" : "FAILED") << " ("
      << sum.inconsistent_pixels << " opaque pixels outside silhouettes)\n";
  return sum;
}

Dataset Dataset::open(const fs::path& root) {
  if (!fs::exists(root / "config.ini")) throw data_error("no dataset at " + root.string() + " (config.ini missing)");
  Dataset d;
  d.root = root;
  d.config = load_config(root / "config.ini");
  d.cameras = read_cameras(root / "cameras.txt");
  return d;
}

std::vector<TrainingView> Dataset::views(bool heldout) const {
  std::vector<TrainingView> out;
  for (int t = 1; t <= frames(); ++t)
    for (size_t v = 0; v < cameras.size(); ++v) {
      if (is_heldout(static_cast<int>(v), config.dataset.holdout_every) != heldout) continue;
      TrainingView tv{cameras[v], t, read_raw(frame_image_path(root, t, static_cast<int>(v), ".raw"))};
      if (tv.image.width != tv.cam.width || tv.image.height != tv.cam.height)
        throw data_error("image size mismatch for frame " + std::to_string(t) + " view " + std::to_string(v));
      out.push_back(std::move(tv));
    }
  return out;
}

std::vector<TrainingView> Dataset::all_views() const {
  std::vector<TrainingView> out;
  for (int t = 1; t <= frames(); ++t)
    for (size_t v = 0; v < cameras.size(); ++v)
      out.push_back({cameras[v], t, read_raw(frame_image_path(root, t, static_cast<int>(v), ".raw"))});
  return out;
}

}  // namespace fpoct::app
