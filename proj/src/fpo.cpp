#include "fpoct/fpo.hpp"

#include <algorithm>
#include <map>

#include "fpoct/error.hpp"

namespace fpoct {

void FpoConfig::validate() const {
  if (n1 < 1 || n2 < 1) throw config_error("n1 and n2 must be at least 1");
  if (frames < 1) throw config_error("frame count must be at least 1");
  if (lmax < 0 || lmax > kMaxShBand) throw config_error("lmax must be in 0.." + std::to_string(kMaxShBand));
}

FrameWeights frame_weights(const FpoConfig& cfg, int t) {
  if (t < 1 || t > cfg.frames)
    throw config_error("frame " + std::to_string(t) + " outside 1.." + std::to_string(cfg.frames));
  return {t, idft_weights(cfg.n1, t, cfg.frames), idft_weights(cfg.n2, t, cfg.frames)};
}

double eval_sigma_raw(const FourierOctree& fpo, size_t leaf, const FrameWeights& w) {
  const double* k = fpo.coeffs.data() + leaf * fpo.stride();
  double s = 0.0;
  for (size_t i = 0; i < w.sigma.size(); ++i) s += w.sigma[i] * k[i];
  return s;
}

void eval_sh(const FourierOctree& fpo, size_t leaf, const FrameWeights& w, std::span<double> out) {
  const size_t m = fpo.sh_size();
  const double* k = fpo.coeffs.data() + leaf * fpo.stride() + fpo.config.n1;
  std::fill(out.begin(), out.end(), 0.0);
  for (size_t i = 0; i < w.sh.size(); ++i) {
    const double wi = w.sh[i];
    const double* ki = k + i * m;
    for (size_t c = 0; c < m; ++c) out[c] += wi * ki[c];
  }
}

std::vector<Octree> broadcast_frames(std::span<const Octree> frame_trees) {
  if (frame_trees.empty()) throw config_error("no frame trees");
  const Topology topo = union_topology(frame_trees);
  std::vector<Octree> out;
  out.reserve(frame_trees.size());
  for (const Octree& tree : frame_trees) out.push_back(broadcast(tree, topo));
  return out;
}

FourierOctree build_fpo(std::span<const Octree> frame_trees, const FpoConfig& cfg) {
  cfg.validate();
  if (static_cast<int>(frame_trees.size()) != cfg.frames)
    throw config_error("expected " + std::to_string(cfg.frames) + " frame trees, got " +
                       std::to_string(frame_trees.size()));
  for (const Octree& tree : frame_trees)
    if (tree.lmax != cfg.lmax) throw data_error("frame tree band limit differs from the configuration");
  const std::vector<Octree> frames = broadcast_frames(frame_trees);
  return build_fpo_broadcast(frames, cfg);
}

FourierOctree build_fpo_broadcast(std::span<const Octree> frames, const FpoConfig& cfg) {
  cfg.validate();
  if (static_cast<int>(frames.size()) != cfg.frames)
    throw config_error("expected " + std::to_string(cfg.frames) + " frame trees, got " + std::to_string(frames.size()));
  for (const Octree& f : frames) {
    if (f.lmax != cfg.lmax) throw data_error("frame tree band limit differs from the configuration");
    if (!(f.topo == frames.front().topo)) throw data_error("frames do not share one topology");
  }

  FourierOctree fpo;
  fpo.topo = frames.front().topo;
  fpo.config = cfg;
  const size_t nleaf = fpo.leaf_count();
  const size_t stride = fpo.stride();
  const size_t pstride = frames.front().stride();
  const size_t m = fpo.sh_size();
  const auto T = static_cast<size_t>(cfg.frames);
  fpo.coeffs.assign(nleaf * stride, 0.0);

  const auto mode = cfg.paper_dft ? FourierFitter::Mode::PaperDft : FourierFitter::Mode::LeastSquares;
  const FourierFitter fit_sigma({cfg.n1, cfg.frames}, mode);
  const FourierFitter fit_sh_coeff({cfg.n2, cfg.frames}, mode);

#pragma omp parallel
  {
    std::vector<double> series(T * pstride);
#pragma omp for schedule(static)
    for (long leaf = 0; leaf < static_cast<long>(nleaf); ++leaf) {
      const auto l = static_cast<size_t>(leaf);
      for (size_t t = 0; t < T; ++t)
        std::copy_n(frames[t].payload.data() + l * pstride, pstride, series.data() + t * pstride);
      double* out = fpo.coeffs.data() + l * stride;
      fit_sigma.fit_strided(series.data(), pstride, out, 1);
      for (size_t c = 0; c < m; ++c)
        fit_sh_coeff.fit_strided(series.data() + 1 + c, pstride, out + cfg.n1 + c, m);
    }
  }
  return fpo;
}

std::vector<double> sigma_series_mse(const FourierOctree& fpo, std::span<const Octree> frames) {
  if (static_cast<int>(frames.size()) != fpo.config.frames) throw config_error("frame count mismatch");
  std::vector<FrameWeights> weights;
  for (int t = 1; t <= fpo.config.frames; ++t) {
    if (!(frames[static_cast<size_t>(t - 1)].topo == fpo.topo)) throw data_error("frame topology differs from the FPO");
    weights.push_back(frame_weights(fpo.config, t));
  }
  std::vector<double> out(fpo.leaf_count(), 0.0);
  for (size_t l = 0; l < out.size(); ++l) {
    double acc = 0.0;
    for (size_t t = 0; t < frames.size(); ++t) {
      const double d = frames[t].sigma(l) - eval_sigma_raw(fpo, l, weights[t]);
      acc += d * d;
    }
    out[l] = acc / static_cast<double>(frames.size());
  }
  return out;
}

Octree eval_at_frame(const FourierOctree& fpo, int t) {
  const FrameWeights w = frame_weights(fpo.config, t);
  Octree tree;
  tree.topo = fpo.topo;
  tree.lmax = fpo.config.lmax;
  const size_t n = fpo.leaf_count();
  tree.payload.assign(n * tree.stride(), 0.0);
#pragma omp parallel for schedule(static)
  for (long leaf = 0; leaf < static_cast<long>(n); ++leaf) {
    const auto l = static_cast<size_t>(leaf);
    tree.sigma(l) = std::max(0.0, eval_sigma_raw(fpo, l, w));
    eval_sh(fpo, l, w, tree.sh(l));
  }
  return tree;
}

FourierOctree prune_fpo(const FourierOctree& fpo, double threshold) {
  if (!(threshold >= 0.0)) throw config_error("prune threshold must be non-negative");
  std::vector<FrameWeights> weights;
  for (int t = 1; t <= fpo.config.frames; ++t) weights.push_back(frame_weights(fpo.config, t));
  const size_t n = fpo.leaf_count();
  std::vector<uint8_t> keep(n, 0);
  for (size_t l = 0; l < n; ++l)
    for (const FrameWeights& w : weights)
      if (std::max(0.0, eval_sigma_raw(fpo, l, w)) >= threshold) {
        keep[l] = 1;
        break;
      }
  auto [topo, old_of_new] = subset_topology(fpo.topo, keep);
  FourierOctree out;
  out.topo = std::move(topo);
  out.config = fpo.config;
  const size_t stride = fpo.stride();
  out.coeffs.resize(old_of_new.size() * stride);
  for (size_t i = 0; i < old_of_new.size(); ++i)
    std::copy_n(fpo.coeffs.data() + old_of_new[i] * stride, stride, out.coeffs.data() + i * stride);
  return out;
}

Image render(const FourierOctree& fpo, int t, const Camera& cam, const RenderOptions& opts) {
  return render(eval_at_frame(fpo, t), cam, opts);
}

double loss(const FourierOctree& fpo, std::span<const TrainingView> views, const Vec3& background) {
  if (views.empty()) throw config_error("empty dataset");
  std::map<int, Octree> cache;
  RenderOptions opts;
  opts.background = background;
  double total = 0.0;
  for (const TrainingView& v : views) {
    if (v.image.width != v.cam.width || v.image.height != v.cam.height)
      throw data_error("image size does not match its camera");
    auto it = cache.find(v.frame);
    if (it == cache.end()) it = cache.emplace(v.frame, eval_at_frame(fpo, v.frame)).first;
    const Image img = render(it->second, v.cam, opts);
    for (size_t i = 0; i < img.rgb.size(); ++i) {
      const double d = static_cast<double>(img.rgb[i]) - static_cast<double>(v.image.rgb[i]);
      total += d * d;
    }
  }
  return total;
}

}  // namespace fpoct
