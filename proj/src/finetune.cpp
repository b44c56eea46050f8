#include "fpoct/finetune.hpp"

#include <algorithm>
#include <cmath>

#include "fpoct/error.hpp"

namespace fpoct {

namespace {

struct SegmentState {
  uint32_t leaf;
  double delta;
  double transmittance;
  double alpha;
  Vec3 rgb;
};

struct RayGrad {
  std::vector<uint32_t> leaves;
  std::vector<double> values;
  double loss = 0.0;
};

// Forward pass over the ray; returns the composited color and fills the processed segments.
Vec3 forward(const FourierOctree& fpo, const FrameWeights& w, const Ray& ray, const Vec3& background,
             double early_stop_T, std::vector<SegmentState>* segs, std::vector<double>* sh_store,
             double* end_transmittance) {
  const int lmax = fpo.config.lmax;
  const size_t m = fpo.sh_size();
  std::vector<double> sh(m);
  Compositor acc(early_stop_T);
  traverse(fpo.topo, ray, [&](const RaySegment& s) {
    const double sigma = eval_sigma_raw(fpo, s.leaf, w);
    if (sigma <= 0.0) return true;
    eval_sh(fpo, s.leaf, w, sh);
    const Vec3 rgb = decode_color(lmax, sh, ray.dir);
    const double t_before = acc.transmittance();
    const bool go = acc.add(sigma, s.delta, rgb);
    if (segs) {
      segs->push_back({s.leaf, s.delta, t_before, 1.0 - std::exp(-sigma * s.delta), rgb});
      if (sh_store) sh_store->insert(sh_store->end(), sh.begin(), sh.end());
    }
    return go;
  });
  if (end_transmittance) *end_transmittance = acc.transmittance();
  return acc.finish(background);
}

}  // namespace

double SparseGradient::at(uint32_t leaf, size_t coeff) const {
  for (size_t k = 0; k < leaves.size(); ++k)
    if (leaves[k] == leaf) return values[k * stride + coeff];
  return 0.0;
}

Vec3 render_ray(const FourierOctree& fpo, const FrameWeights& w, const Ray& ray, const Vec3& background,
                double early_stop_T) {
  return forward(fpo, w, ray, background, early_stop_T, nullptr, nullptr, nullptr);
}

static void check_ray(std::span<const TrainingView> views, const RayRef& r) {
  if (r.view >= views.size()) throw config_error("ray refers to a missing view");
  const TrainingView& v = views[r.view];
  if (v.image.width != v.cam.width || v.image.height != v.cam.height) throw data_error("view image does not match its camera");
  if (r.px < 0 || r.py < 0 || r.px >= v.cam.width || r.py >= v.cam.height) throw config_error("ray pixel outside the view");
}

SparseGradient grad(const FourierOctree& fpo, std::span<const TrainingView> views, std::span<const RayRef> batch,
                    const Vec3& background, double early_stop_T) {
  if (batch.empty()) throw config_error("empty ray batch");
  const FpoConfig& cfg = fpo.config;
  const size_t stride = fpo.stride();
  const size_t m = fpo.sh_size();
  const size_t nsh = m / 3;
  const auto n1 = static_cast<size_t>(cfg.n1);

  std::vector<FrameWeights> weights(static_cast<size_t>(cfg.frames) + 1);
  for (const RayRef& r : batch) {
    check_ray(views, r);
    const int t = views[r.view].frame;
    if (t < 1 || t > cfg.frames) throw config_error("view frame outside the FPO frame range");
    if (weights[static_cast<size_t>(t)].sigma.empty()) weights[static_cast<size_t>(t)] = frame_weights(cfg, t);
  }

  std::vector<RayGrad> per_ray(batch.size());
#pragma omp parallel
  {
    std::vector<SegmentState> segs;
    std::vector<double> sh_store;
    std::vector<double> basis(nsh);
#pragma omp for schedule(dynamic, 8)
    for (long ri = 0; ri < static_cast<long>(batch.size()); ++ri) {
      const RayRef& r = batch[static_cast<size_t>(ri)];
      const TrainingView& v = views[r.view];
      const FrameWeights& w = weights[static_cast<size_t>(v.frame)];
      const Ray ray = generate_ray(v.cam, r.px, r.py);
      segs.clear();
      sh_store.clear();
      double t_end = 1.0;
      const Vec3 c = forward(fpo, w, ray, background, early_stop_T, &segs, &sh_store, &t_end);
      const Vec3 target = v.image.get(r.px, r.py);
      const Vec3 e = c - target;
      RayGrad& out = per_ray[static_cast<size_t>(ri)];
      out.loss = e.squaredNorm();
      const Vec3 dl_dc = 2.0 * e;
      eval_sh_basis(cfg.lmax, ray.dir, basis);

      out.leaves.resize(segs.size());
      out.values.assign(segs.size() * stride, 0.0);
      Vec3 rest = t_end * background;
      for (size_t j = segs.size(); j-- > 0;) {
        const SegmentState& s = segs[j];
        const double t_next = s.transmittance * (1.0 - s.alpha);
        const Vec3 dc_dsigma = s.delta * (t_next * s.rgb - rest);
        rest += s.transmittance * s.alpha * s.rgb;
        const double g_sigma = dl_dc.dot(dc_dsigma);
        double* g = out.values.data() + j * stride;
        out.leaves[j] = s.leaf;
        for (size_t i = 0; i < n1; ++i) g[i] = g_sigma * w.sigma[i];
        double g_u[3];
        for (int ch = 0; ch < 3; ++ch)
          g_u[ch] = dl_dc[ch] * s.transmittance * s.alpha * s.rgb[ch] * (1.0 - s.rgb[ch]);
        double* gz = g + n1;
        for (size_t i = 0; i < w.sh.size(); ++i) {
          const double wi = w.sh[i];
          double* gi = gz + i * m;
          for (size_t lm = 0; lm < nsh; ++lm)
            for (int ch = 0; ch < 3; ++ch) gi[lm * 3 + static_cast<size_t>(ch)] = wi * basis[lm] * g_u[ch];
        }
      }
    }
  }

  SparseGradient res;
  res.stride = stride;
  res.rays = batch.size();
  std::vector<int32_t> slot(fpo.leaf_count(), -1);
  for (const RayGrad& rg : per_ray) {
    res.loss += rg.loss;
    for (size_t j = 0; j < rg.leaves.size(); ++j) {
      int32_t& k = slot[rg.leaves[j]];
      if (k < 0) {
        k = static_cast<int32_t>(res.leaves.size());
        res.leaves.push_back(rg.leaves[j]);
        res.values.resize(res.values.size() + stride, 0.0);
      }
      double* dst = res.values.data() + static_cast<size_t>(k) * stride;
      const double* src = rg.values.data() + j * stride;
      for (size_t i = 0; i < stride; ++i) dst[i] += src[i];
    }
  }
  return res;
}

double batch_loss(const FourierOctree& fpo, std::span<const TrainingView> views, std::span<const RayRef> rays,
                  const Vec3& background, double early_stop_T) {
  std::vector<FrameWeights> weights(static_cast<size_t>(fpo.config.frames) + 1);
  for (const RayRef& r : rays) {
    check_ray(views, r);
    const auto t = static_cast<size_t>(views[r.view].frame);
    if (t < 1 || t >= weights.size()) throw config_error("view frame outside the FPO frame range");
    if (weights[t].sigma.empty()) weights[t] = frame_weights(fpo.config, static_cast<int>(t));
  }
  std::vector<double> per_ray(rays.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (long i = 0; i < static_cast<long>(rays.size()); ++i) {
    const RayRef& r = rays[static_cast<size_t>(i)];
    const TrainingView& v = views[r.view];
    const Vec3 c = render_ray(fpo, weights[static_cast<size_t>(v.frame)], generate_ray(v.cam, r.px, r.py), background,
                              early_stop_T);
    per_ray[static_cast<size_t>(i)] = (c - v.image.get(r.px, r.py)).squaredNorm();
  }
  double total = 0.0;
  for (double v : per_ray) total += v;
  return total;
}

void FinetuneConfig::validate() const {
  if (!(step_size > 0.0)) throw config_error("step size must be positive");
  if (steps < 0) throw config_error("steps must be non-negative");
  if (rays_per_batch < 1) throw config_error("rays per batch must be positive");
  if (monitor_rays < 0) throw config_error("monitor ray count must be non-negative");
}

RaySampler::RaySampler(std::span<const TrainingView> views, uint64_t seed) : rng_(seed) {
  if (views.empty()) throw config_error("empty dataset");
  for (const TrainingView& v : views) {
    if (v.image.width != v.cam.width || v.image.height != v.cam.height)
      throw data_error("image size does not match its camera");
    offsets_.push_back(total_);
    widths_.push_back(v.image.width);
    total_ += static_cast<uint64_t>(v.image.width) * static_cast<uint64_t>(v.image.height);
  }
}

std::vector<RayRef> RaySampler::next(int count) {
  std::uniform_int_distribution<uint64_t> pick(0, total_ - 1);
  std::vector<RayRef> out(static_cast<size_t>(count));
  for (RayRef& r : out) {
    const uint64_t k = pick(rng_);
    const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), k) - 1;
    const auto view = static_cast<size_t>(it - offsets_.begin());
    const uint64_t local = k - *it;
    r.view = static_cast<uint32_t>(view);
    r.px = static_cast<int>(local % static_cast<uint64_t>(widths_[view]));
    r.py = static_cast<int>(local / static_cast<uint64_t>(widths_[view]));
  }
  return out;
}

FinetuneResult finetune(const FourierOctree& fpo, std::span<const TrainingView> views, const FinetuneConfig& cfg,
                        const std::function<void(const LossPoint&)>& progress) {
  cfg.validate();
  FinetuneResult res{fpo, {}};
  if (cfg.steps == 0) return res;
  RaySampler sampler(views, cfg.seed);
  std::vector<RayRef> monitor;
  if (cfg.monitor_rays > 0) monitor = RaySampler(views, ~cfg.seed).next(cfg.monitor_rays);
  FourierOctree& cur = res.fpo;
  const bool adam = cfg.optimizer == OptimizerKind::Adam;
  std::vector<double> m1, m2;
  if (adam) {
    m1.assign(cur.coeffs.size(), 0.0);
    m2.assign(cur.coeffs.size(), 0.0);
  }
  double b1_pow = 1.0, b2_pow = 1.0;
  for (int step = 1; step <= cfg.steps; ++step) {
    const std::vector<RayRef> batch = sampler.next(cfg.rays_per_batch);
    const SparseGradient g = grad(cur, views, batch, cfg.background);
    if (!std::isfinite(g.loss)) throw numeric_error("non-finite loss at fine-tuning step " + std::to_string(step));
    LossPoint p;
    p.step = step;
    p.batch_loss = g.loss / (3.0 * static_cast<double>(g.rays));
    p.loss = monitor.empty() ? p.batch_loss
                             : batch_loss(cur, views, monitor, cfg.background) / (3.0 * static_cast<double>(monitor.size()));
    if (!std::isfinite(p.loss)) throw numeric_error("non-finite loss at fine-tuning step " + std::to_string(step));
    p.psnr_estimate = p.loss > 0.0 ? -10.0 * std::log10(p.loss) : 99.0;
    res.curve.push_back(p);
    if (progress) progress(p);

    b1_pow *= cfg.beta1;
    b2_pow *= cfg.beta2;
    const size_t stride = g.stride;
    for (size_t k = 0; k < g.leaves.size(); ++k) {
      const size_t base = static_cast<size_t>(g.leaves[k]) * stride;
      const double* gk = g.values.data() + k * stride;
      for (size_t i = 0; i < stride; ++i) {
        const double gi = gk[i];
        if (!std::isfinite(gi)) throw numeric_error("non-finite gradient at fine-tuning step " + std::to_string(step));
        double& x = cur.coeffs[base + i];
        if (adam) {
          double& a = m1[base + i];
          double& b = m2[base + i];
          a = cfg.beta1 * a + (1.0 - cfg.beta1) * gi;
          b = cfg.beta2 * b + (1.0 - cfg.beta2) * gi * gi;
          const double mhat = a / (1.0 - b1_pow);
          const double vhat = b / (1.0 - b2_pow);
          x -= cfg.step_size * mhat / (std::sqrt(vhat) + cfg.epsilon);
        } else {
          x -= cfg.step_size * gi;
        }
      }
    }
  }
  return res;
}

}  // namespace fpoct
