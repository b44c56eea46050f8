#include "fpoct/app/commands.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>

#include "fpoct/app/dataset.hpp"
#include "fpoct/error.hpp"
#include "fpoct/fpo_io.hpp"
#include "fpoct/metrics.hpp"
#include "fpoct/parallel.hpp"

namespace fpoct::app {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds(Clock::time_point a, Clock::time_point b) { return std::chrono::duration<double>(b - a).count(); }

struct Common {
  std::string config;
  std::string out;
  std::string dataset;
  std::optional<int> frames, n1, n2, lmax, grid, threads;
  std::optional<uint64_t> seed;
  bool paper_dft = false;
  bool deterministic = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "INI configuration file");
  cmd->add_option("--out", c.out, "output path");
  cmd->add_option("--frames", c.frames, "frame count T");
  cmd->add_option("--n1", c.n1, "density Fourier coefficients");
  cmd->add_option("--n2", c.n2, "Fourier coefficients per SH coefficient");
  cmd->add_option("--lmax", c.lmax, "SH band limit");
  cmd->add_option("--grid", c.grid, "leaf grid resolution (power of two)");
  cmd->add_flag("--paper-dft", c.paper_dft, "use the literal 1/T forward transform");
  cmd->add_flag("--deterministic", c.deterministic, "fixed reduction order (always on)");
  cmd->add_option("--seed", c.seed, "random seed");
  cmd->add_option("--threads", c.threads, "worker threads (default: FPOCT_THREADS or all)");
}

RunConfig resolve(const Common& c) {
  RunConfig cfg;
  if (!c.config.empty()) cfg = load_config(c.config);
  else if (!c.dataset.empty()) cfg = Dataset::open(c.dataset).config;
  if (c.frames) cfg.scene.frames = *c.frames;
  if (c.n1) cfg.fpo.n1 = *c.n1;
  if (c.n2) cfg.fpo.n2 = *c.n2;
  if (c.lmax) cfg.fusion.lmax = *c.lmax;
  if (c.grid) cfg.fusion.grid_n = *c.grid;
  if (c.paper_dft) cfg.fpo.paper_dft = true;
  if (c.deterministic) cfg.deterministic = true;
  if (c.seed) cfg.finetune.seed = *c.seed;
  if (c.threads) {
    cfg.threads = *c.threads;
  } else if (const char* env = std::getenv("FPOCT_THREADS"); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 0) throw config_error(std::string("bad FPOCT_THREADS value '") + env + "'");
    cfg.threads = static_cast<int>(v);
  }
  finalize(cfg);
  set_thread_count(cfg.threads);
  return cfg;
}

fs::path require_out(const Common& c, const char* what) {
  if (c.out.empty()) throw config_error(std::string("--out is required (") + what + ")");
  return c.out;
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
    if (ec) throw data_error("cannot create " + p.parent_path().string() + ": " + ec.message());
  }
}

FourierOctree load_fpo(const std::string& path) {
  if (path.empty()) throw config_error("--fpo is required");
  FpoModel m = load(path);
  if (auto* f = std::get_if<FourierOctree>(&m)) return std::move(*f);
  // a static tree plays the role of a one-frame FPO
  Octree& tree = std::get<Octree>(m);
  FpoConfig cfg;
  cfg.n1 = cfg.n2 = cfg.frames = 1;
  cfg.lmax = tree.lmax;
  return build_fpo_broadcast(std::span<const Octree>(&tree, 1), cfg);
}

Image read_image(const fs::path& p) { return p.extension() == ".raw" ? read_raw(p) : read_png(p); }

void write_metrics_csv(std::ostream& o, const std::string& label, const ImageMetrics& m) {
  o << label << ',' << m.images << ',' << m.psnr << ',' << m.ssim << ',' << m.mae << '\n';
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      size_t pos = 0;
      const int v = std::stoi(item, &pos);
      if (pos != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw config_error("bad integer list '" + s + "'");
    }
  }
  if (out.empty()) throw config_error("empty integer list");
  return out;
}

// ---- commands

int cmd_gen_dataset(const Common& c, std::ostream& out) {
  const RunConfig cfg = resolve(c);
  const fs::path root = require_out(c, "dataset directory");
  const DatasetSummary s = write_dataset(cfg, root, out);
  out << "wrote " << s.images << " images and " << s.silhouettes << " silhouettes to " << root.string() << '\n';
  return s.inconsistent_pixels == 0 ? kExitOk : kExitData;
}

int cmd_build(const Common& c, bool no_report, std::ostream& out) {
  const RunConfig cfg = resolve(c);
  const fs::path path = require_out(c, ".fpo file");
  ensure_parent(path);
  const auto scene = make_scene(cfg.scene);

  FrameTrees ft = build_frame_trees(*scene, cfg.fusion, &out);
  double carve = 0, coarse = 0, fine = 0;
  for (const auto& r : ft.reports) {
    carve += r.carve_seconds;
    coarse += r.coarse_seconds;
    fine += r.fine_seconds;
  }
  auto t0 = Clock::now();
  const std::vector<Octree> frames = broadcast_frames(ft.trees);
  auto t1 = Clock::now();
  const FourierOctree fpo = build_fpo_broadcast(frames, cfg.fpo);
  auto t2 = Clock::now();
  const size_t bytes = save(fpo, path);
  out << "timing carve=" << carve << "s coarse=" << coarse << "s fine=" << fine << "s union=" << seconds(t0, t1)
      << "s transform=" << seconds(t1, t2) << "s\n";
  out << "fpo leaves=" << fpo.leaf_count() << " n1=" << fpo.config.n1 << " n2=" << fpo.config.n2
      << " bytes=" << bytes << " bytes_per_leaf=" << 4 * fpo.stride() << '\n';

  if (no_report) return kExitOk;
  const std::vector<TrainingView> views =
      c.dataset.empty() ? oracle_views(*scene, cfg, true) : Dataset::open(c.dataset).views(true);
  if (views.empty()) return kExitOk;
  const fs::path report = path.parent_path() / "report.csv";
  std::ofstream rep(report);
  if (!rep) throw data_error("cannot write " + report.string());
  rep.precision(10);
  rep << "frame,images,psnr,ssim,mae\n";
  const FourierOctree stored = std::get<FourierOctree>(load(path));
  for (int t = 1; t <= cfg.scene.frames; ++t) {
    std::vector<TrainingView> vt;
    for (const auto& v : views)
      if (v.frame == t) vt.push_back(v);
    if (!vt.empty()) write_metrics_csv(rep, std::to_string(t), evaluate(stored, vt));
  }
  const ImageMetrics all = evaluate(stored, views);
  write_metrics_csv(rep, "all", all);
  out << "eval psnr=" << all.psnr << " ssim=" << all.ssim << " mae=" << all.mae << " (" << all.images
      << " held-out images) -> " << report.string() << '\n';

  if (cfg.fpo.paper_dft) {
    FpoConfig ls = cfg.fpo;
    ls.paper_dft = false;
    const FourierOctree ref = build_fpo_broadcast(frames, ls);
    double diff = 0.0;
    for (const auto& v : views) {
      const Image a = render(stored, v.frame, v.cam);
      const Image b = render(ref, v.frame, v.cam);
      for (size_t i = 0; i < a.rgb.size(); ++i) diff = std::max(diff, static_cast<double>(std::abs(a.rgb[i] - b.rgb[i])));
    }
    out << "paper-dft vs least-squares: max per-pixel difference " << diff << '\n';
    rep << "# paper_dft_max_pixel_diff," << diff << '\n';
  }
  return kExitOk;
}

int cmd_finetune(const Common& c, const std::string& fpo_path, std::optional<int> steps,
                 std::optional<double> step_size, std::ostream& out) {
  if (c.dataset.empty()) throw config_error("--dataset is required");
  RunConfig cfg = resolve(c);
  if (steps) cfg.finetune.steps = *steps;
  if (step_size) cfg.finetune.step_size = *step_size;
  cfg.finetune.validate();
  const fs::path path = require_out(c, ".fpo file");
  ensure_parent(path);
  const Dataset ds = Dataset::open(c.dataset);
  const FourierOctree fpo = load_fpo(fpo_path);
  if (fpo.config.frames != ds.frames()) throw data_error("FPO and dataset frame counts differ");
  const std::vector<TrainingView> train = ds.views(false);
  const std::vector<TrainingView> held = ds.views(true);
  if (train.empty()) throw data_error("dataset has no training views");

  fs::path loss_path = path;
  loss_path.replace_extension(".loss.csv");
  std::ofstream loss(loss_path);
  if (!loss) throw data_error("cannot write " + loss_path.string());
  loss.precision(10);
  loss << "step,loss,psnr_estimate\n";
  const FinetuneResult res = finetune(fpo, train, cfg.finetune, [&](const LossPoint& p) {
    loss << p.step << ',' << p.loss << ',' << p.psnr_estimate << '\n';
    if (p.step % 100 == 0) out << "step " << p.step << " loss " << p.loss << '\n';
  });
  save(res.fpo, path);

  fs::path metrics_path = path;
  metrics_path.replace_extension(".metrics.csv");
  std::ofstream met(metrics_path);
  met.precision(10);
  met << "stage,images,psnr,ssim,mae\n";
  const std::vector<TrainingView>& eval = held.empty() ? train : held;
  const FourierOctree after = std::get<FourierOctree>(load(path));
  const ImageMetrics before_m = evaluate(fpo, eval), after_m = evaluate(after, eval);
  write_metrics_csv(met, "before", before_m);
  write_metrics_csv(met, "after", after_m);
  out << "stage,images,psnr,ssim,mae\n";
  write_metrics_csv(out, "before", before_m);
  write_metrics_csv(out, "after", after_m);
  return kExitOk;
}

std::vector<Camera> render_cameras(const Common& c, const RunConfig& cfg, std::optional<int> orbit,
                                   std::optional<int> view, std::optional<int> width) {
  if (view) {
    if (c.dataset.empty()) throw config_error("--view needs --dataset");
    const std::vector<Camera> cams = read_cameras(fs::path(c.dataset) / "cameras.txt");
    if (*view < 0 || *view >= static_cast<int>(cams.size())) throw config_error("--view out of range");
    return {cams[static_cast<size_t>(*view)]};
  }
  RigSpec spec = cfg.dataset.rig;
  spec.pattern = RigPattern::Ring;
  spec.count = orbit.value_or(1);
  if (width) spec.width = spec.height = *width;
  return make_rig(spec).cameras;
}

std::vector<int> frame_selection(const std::string& sel, int frames) {
  std::vector<int> out;
  if (sel == "all") {
    for (int t = 1; t <= frames; ++t) out.push_back(t);
    return out;
  }
  for (int t : parse_int_list(sel)) {
    if (t < 1 || t > frames)
      throw config_error("frame " + std::to_string(t) + " outside 1.." + std::to_string(frames));
    out.push_back(t);
  }
  return out;
}

int cmd_render(const Common& c, const std::string& fpo_path, const std::string& frame_sel, std::optional<int> orbit,
               std::optional<int> view, std::optional<int> width, std::ostream& out) {
  const RunConfig cfg = resolve(c);
  const fs::path dir = require_out(c, "image directory");
  const FourierOctree fpo = load_fpo(fpo_path);
  const std::vector<int> frames = frame_selection(frame_sel, fpo.config.frames);
  const std::vector<Camera> cams = render_cameras(c, cfg, orbit, view, width);
  fs::create_directories(dir);
  size_t n = 0;
  for (int t : frames) {
    const Octree tree = eval_at_frame(fpo, t);
    for (size_t k = 0; k < cams.size(); ++k) {
      const Image img = render(tree, cams[k]);
      const std::string stem = "f" + std::to_string(t) + "_c" + std::to_string(k);
      write_png(dir / (stem + ".png"), img);
      write_raw(dir / (stem + ".raw"), img);
      ++n;
    }
  }
  out << "rendered " << n << " images to " << dir.string() << '\n';
  return kExitOk;
}

struct Timing {
  double median = 0, min = 0, max = 0, mad = 0;
};

Timing summarize(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  Timing t;
  t.min = v.front();
  t.max = v.back();
  t.median = v[v.size() / 2];
  if (v.size() % 2 == 0) t.median = 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
  std::vector<double> dev;
  for (double x : v) dev.push_back(std::abs(x - t.median));
  std::sort(dev.begin(), dev.end());
  t.mad = dev[dev.size() / 2];
  return t;
}

int cmd_bench(const Common& c, const std::string& fpo_path, int frame, int width, int trials, double step_scale,
              std::ostream& out) {
  const RunConfig cfg = resolve(c);
  if (trials < 1) throw config_error("--trials must be positive");
  if (!(step_scale > 0.0)) throw config_error("--step must be positive");
  const FourierOctree fpo = load_fpo(fpo_path);
  const Octree tree = eval_at_frame(fpo, frame);
  RigSpec spec = cfg.dataset.rig;
  spec.pattern = RigPattern::Ring;
  spec.count = 1;
  spec.width = spec.height = width;
  const Camera cam = make_rig(spec).cameras.front();
  const double step = step_scale * tree.topo.cell_side(tree.topo.max_depth() > 0 ? tree.topo.max_depth() : 0);

  std::optional<Image> gt;
  if (!c.dataset.empty() || !c.config.empty()) gt = make_scene(cfg.scene)->ground_truth(cam, frame);

  std::ofstream file;
  if (!c.out.empty()) {
    ensure_parent(c.out);
    file.open(c.out, std::ios::app);
    if (!file) throw data_error("cannot write " + c.out);
  }
  auto emit = [&](const nlohmann::json& j) {
    out << j.dump() << '\n';
    if (file.is_open()) file << j.dump() << '\n';
  };

  std::map<std::string, Timing> timing;
  std::map<std::string, Image> images;
  for (const std::string mode : {"octree", "dense-march"}) {
    std::vector<double> times;
    Image img;
    for (int k = 0; k < trials; ++k) {
      const auto a = Clock::now();
      img = mode == "octree" ? render(tree, cam) : render_dense(tree, cam, step);
      times.push_back(seconds(a, Clock::now()));
    }
    const Timing tm = summarize(times);
    timing[mode] = tm;
    nlohmann::json j{{"mode", mode},          {"width", width},          {"height", width},
                     {"frame", frame},        {"trials", trials},        {"leaves", tree.leaf_count()},
                     {"median_s", tm.median}, {"min_s", tm.min},         {"max_s", tm.max},
                     {"mad_s", tm.mad},       {"fps", 1.0 / tm.median},  {"threads", thread_count()},
                     {"rays_per_s", static_cast<double>(width) * width / tm.median}};
    if (mode == "dense-march") j["step"] = step;
    if (gt) j["psnr"] = psnr(img, *gt);
    emit(j);
    images[mode] = std::move(img);
  }
  nlohmann::json s{{"mode", "summary"},
                   {"speedup", timing["dense-march"].median / timing["octree"].median},
                   {"agreement_psnr", psnr(images["octree"], images["dense-march"])}};
  if (gt) s["psnr_difference"] = std::abs(psnr(images["octree"], *gt) - psnr(images["dense-march"], *gt));
  emit(s);
  return kExitOk;
}

int cmd_ablate(const Common& c, const std::string& sweep, std::ostream& out) {
  const RunConfig cfg = resolve(c);
  const fs::path path = c.out.empty() ? fs::path("ablate.csv") : fs::path(c.out);
  ensure_parent(path);
  std::vector<int> n1s = parse_int_list(sweep);
  const int full = cfg.scene.frames + 1;
  if (std::find(n1s.begin(), n1s.end(), full) == n1s.end()) n1s.push_back(full);
  std::sort(n1s.begin(), n1s.end());

  const auto scene = make_scene(cfg.scene);
  const FrameTrees ft = build_frame_trees(*scene, cfg.fusion, &out);
  const std::vector<Octree> frames = broadcast_frames(ft.trees);
  const std::vector<TrainingView> views =
      c.dataset.empty() ? oracle_views(*scene, cfg, true) : Dataset::open(c.dataset).views(true);
  if (views.empty()) throw config_error("no held-out views to evaluate (holdout_every = 0?)");
  const ImageMetrics per_frame = evaluate(frames, views);

  std::ofstream csv(path);
  if (!csv) throw data_error("cannot write " + path.string());
  csv.precision(10);
  csv << "n1,n2,sigma_series_mse,psnr,ssim,mae,bytes,bytes_per_leaf\n";
  std::vector<double> prev;
  size_t violations = 0;
  // rounding allowance: a few ulps of each leaf's largest density
  const double eps = std::numeric_limits<double>::epsilon();
  std::vector<double> scale(frames.front().leaf_count(), 0.0);
  for (const Octree& f : frames)
    for (size_t l = 0; l < scale.size(); ++l) scale[l] = std::max(scale[l], std::abs(f.sigma(l)));
  for (int n1 : n1s) {
    FpoConfig fc = cfg.fpo;
    fc.n1 = n1;
    // the full row is full in both series
    if (n1 == full) fc.n2 = full;
    const FourierOctree fpo = build_fpo_broadcast(frames, fc);
    const std::vector<double> mse_leaf = sigma_series_mse(fpo, frames);
    if (!prev.empty())
      for (size_t l = 0; l < mse_leaf.size(); ++l)
        if (std::sqrt(mse_leaf[l]) > std::sqrt(prev[l]) + 4 * eps * scale[l]) ++violations;
    prev = mse_leaf;
    const double mean_mse = std::accumulate(mse_leaf.begin(), mse_leaf.end(), 0.0) / static_cast<double>(mse_leaf.size());
    const size_t bytes = serialize(fpo).size();
    const ImageMetrics m = evaluate(std::get<FourierOctree>(deserialize(serialize(fpo))), views);
    csv << n1 << ',' << fc.n2 << ',' << mean_mse << ',' << m.psnr << ',' << m.ssim << ',' << m.mae << ',' << bytes
        << ',' << 4 * fpo.stride() << '\n';
    out << "n1=" << n1 << " sigma_series_mse=" << mean_mse << " psnr=" << m.psnr << " bytes=" << bytes << '\n';
  }
  csv << "per-frame,," << 0 << ',' << per_frame.psnr << ',' << per_frame.ssim << ',' << per_frame.mae << ",,\n";
  out << "per-frame trees psnr=" << per_frame.psnr << '\n';
  out << "nested truncation: " << (violations == 0 ? "OK" : "VIOLATED") << " (" << violations << " leaf increases)\n";
  return violations == 0 ? kExitOk : kExitNumeric;
}

int cmd_metrics(const Common& c, const std::string& fpo_path, const std::string& image, const std::string& reference,
                const std::string& split, std::ostream& out) {
  out.precision(10);
  if (!image.empty() || !reference.empty()) {
    if (image.empty() || reference.empty()) throw config_error("--image and --reference go together");
    const Image a = read_image(image), b = read_image(reference);
    if (a.width != b.width || a.height != b.height) throw data_error("image sizes differ");
    out << "psnr,ssim,mae\n" << psnr(a, b) << ',' << ssim(a, b) << ',' << mae(a, b) << '\n';
    return kExitOk;
  }
  if (c.dataset.empty()) throw config_error("--dataset is required with --fpo");
  resolve(c);
  const Dataset ds = Dataset::open(c.dataset);
  const FourierOctree fpo = load_fpo(fpo_path);
  std::vector<TrainingView> views;
  if (split == "heldout") views = ds.views(true);
  else if (split == "train") views = ds.views(false);
  else if (split == "all") views = ds.all_views();
  else throw config_error("--split must be heldout, train or all");
  if (views.empty()) throw data_error("no views in split " + split);
  out << "split,images,psnr,ssim,mae\n";
  write_metrics_csv(out, split, evaluate(fpo, views));
  return kExitOk;
}

void write_f32(const fs::path& p, const std::vector<float>& v) {
  std::ofstream o(p, std::ios::binary);
  for (float f : v) {
    const auto u = std::bit_cast<uint32_t>(f);
    const char b[4] = {static_cast<char>(u & 0xFF), static_cast<char>((u >> 8) & 0xFF),
                       static_cast<char>((u >> 16) & 0xFF), static_cast<char>((u >> 24) & 0xFF)};
    o.write(b, 4);
  }
  if (!o) throw data_error("cannot write " + p.string());
}

int cmd_export(const Common& c, const std::string& fpo_path, int frame, std::optional<int> view,
               std::optional<int> width, int sample_leaves, std::ostream& out) {
  const RunConfig cfg = resolve(c);
  const fs::path dir = require_out(c, "fixture directory");
  fs::create_directories(dir);
  const std::vector<uint8_t> bytes = read_file(fpo_path);
  const FourierOctree fpo = load_fpo(fpo_path);
  if (frame < 1 || frame > fpo.config.frames)
    throw config_error("frame " + std::to_string(frame) + " outside 1.." + std::to_string(fpo.config.frames));
  std::optional<int> w = width;
  if (!w && !view) w = 128;
  const Camera cam = render_cameras(c, cfg, 1, view, w).front();
  const Octree tree = eval_at_frame(fpo, frame);
  const Image img = render(tree, cam);

  {
    std::ofstream o(dir / "model.fpo", std::ios::binary);
    o.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  write_cameras(dir / "camera.txt", {cam});
  write_png(dir / "reference.png", img);
  write_raw(dir / "reference.raw", img);
  const size_t n = std::min<size_t>(static_cast<size_t>(std::max(sample_leaves, 0)), tree.leaf_count());
  std::vector<float> payload, coeffs;
  for (size_t l = 0; l < n; ++l) {
    for (size_t i = 0; i < tree.stride(); ++i) payload.push_back(static_cast<float>(tree.payload[l * tree.stride() + i]));
    for (double k : fpo.leaf(l)) coeffs.push_back(static_cast<float>(k));
  }
  write_f32(dir / "payloads.f32", payload);
  write_f32(dir / "coeffs.f32", coeffs);
  nlohmann::json j{{"model", "model.fpo"},
                   {"camera", "camera.txt"},
                   {"frame", frame},
                   {"width", cam.width},
                   {"height", cam.height},
                   {"background", {0, 0, 0}},
                   {"reference_png", "reference.png"},
                   {"reference_raw", "reference.raw"},
                   {"sample_leaves", n},
                   {"payloads", "payloads.f32"},
                   {"payload_floats_per_leaf", tree.stride()},
                   {"coeffs", "coeffs.f32"},
                   {"coeff_floats_per_leaf", fpo.stride()},
                   {"tolerance_payload", 1e-4},
                   {"tolerance_mean_abs", 2.0 / 255.0}};
  std::ofstream(dir / "fixture.json") << j.dump(2) << '\n';
  out << "fixture written to " << dir.string() << " (" << n << " sampled leaves)\n";
  return kExitOk;
}

int cmd_info(const std::string& fpo_path, std::ostream& out) {
  if (fpo_path.empty()) throw config_error("--fpo is required");
  const std::vector<uint8_t> bytes = read_file(fpo_path);
  const FpoHeader h = parse_header(bytes);
  deserialize(bytes);
  out << "kind=" << (h.kind == FpoKind::Static ? "static" : "fourier") << '\n'
      << "version=" << kFpoVersion << '\n'
      << "bbox=" << h.bbox[0] << ',' << h.bbox[1] << ',' << h.bbox[2] << ',' << h.bbox[3] << ',' << h.bbox[4] << ','
      << h.bbox[5] << '\n'
      << "lmax=" << h.lmax << "\ngrid_n=" << h.grid_n << "\nframes=" << h.frames << "\nn1=" << h.n1
      << "\nn2=" << h.n2 << "\nnode_count=" << h.node_count << "\nleaf_count=" << h.leaf_count
      << "\nfloats_per_leaf=" << h.payload_len() << "\nbytes_per_leaf=" << 4 * h.payload_len()
      << "\nfile_bytes=" << bytes.size() << "\nexpected_bytes=" << h.file_size() << '\n';
  return kExitOk;
}

}  // namespace

FrameTrees build_frame_trees(const DynamicOracle& oracle, const FusionConfig& cfg, std::ostream* log) {
  FrameTrees out;
  for (int t = 1; t <= oracle.frames(); ++t) {
    FrameBuildResult r = build_frame_tree(oracle, t, cfg);
    if (log) {
      const auto& u = r.report.leaves_updated_per_view;
      size_t lo = 0, hi = 0;
      double mean = 0.0;
      if (!u.empty()) {
        lo = *std::min_element(u.begin(), u.end());
        hi = *std::max_element(u.begin(), u.end());
        mean = static_cast<double>(std::accumulate(u.begin(), u.end(), size_t{0})) / static_cast<double>(u.size());
      }
      *log << "frame " << t << ": hull=" << r.report.hull_voxels << " leaves=" << r.report.leaves
           << " pruned=" << r.report.pruned << " queries=" << r.report.queries << " updated_per_view(min/mean/max)="
           << lo << '/' << mean << '/' << hi << " carve=" << r.report.carve_seconds
           << "s coarse=" << r.report.coarse_seconds << "s fine=" << r.report.fine_seconds << "s\n";
    }
    out.trees.push_back(std::move(r.tree));
    out.reports.push_back(std::move(r.report));
  }
  return out;
}

ImageMetrics evaluate(std::span<const Octree> trees, std::span<const TrainingView> views) {
  ImageMetrics m;
  for (const TrainingView& v : views) {
    if (v.frame < 1 || v.frame > static_cast<int>(trees.size())) throw config_error("view frame out of range");
    const Image img = render(trees[static_cast<size_t>(v.frame - 1)], v.cam);
    m.psnr += psnr(img, v.image);
    m.ssim += ssim(img, v.image);
    m.mae += mae(img, v.image);
    ++m.images;
  }
  if (m.images > 0) {
    m.psnr /= static_cast<double>(m.images);
    m.ssim /= static_cast<double>(m.images);
    m.mae /= static_cast<double>(m.images);
  }
  return m;
}

ImageMetrics evaluate(const FourierOctree& fpo, std::span<const TrainingView> views) {
  std::vector<Octree> trees;
  for (int t = 1; t <= fpo.config.frames; ++t) {
    bool used = false;
    for (const auto& v : views) used = used || v.frame == t;
    trees.push_back(used ? eval_at_frame(fpo, t) : Octree{});
  }
  return evaluate(trees, views);
}

std::vector<TrainingView> oracle_views(const DynamicOracle& oracle, const RunConfig& cfg, bool heldout) {
  const CameraRig rig = make_rig(cfg.dataset.rig);
  std::vector<TrainingView> out;
  for (int t = 1; t <= oracle.frames(); ++t)
    for (size_t v = 0; v < rig.cameras.size(); ++v)
      if (is_heldout(static_cast<int>(v), cfg.dataset.holdout_every) == heldout)
        out.push_back({rig.cameras[v], t, oracle.ground_truth(rig.cameras[v], t)});
  return out;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fourier PlenOctree pipeline: dataset generation, fusion, transform, fine-tuning, rendering"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  Common common;
  std::string fpo_path, frame_sel = "1", sweep = "5,11,21,31", image, reference, split = "heldout";
  std::optional<int> steps, orbit, view, width;
  std::optional<double> step_size;
  bool no_report = false;
  int frame = 1, bench_width = 256, trials = 5, sample_leaves = 1000;
  double step_scale = 0.25;

  auto* gen = app.add_subcommand("gen-dataset", "write ground-truth images, silhouettes and cameras");
  add_common(gen, common);

  auto* build = app.add_subcommand("build", "fuse per-frame PlenOctrees and transform them into an .fpo");
  add_common(build, common);
  build->add_option("--dataset", common.dataset, "dataset directory for evaluation");
  build->add_flag("--no-report", no_report, "skip the evaluation report");

  auto* ft = app.add_subcommand("finetune", "optimize Fourier coefficients against the dataset");
  add_common(ft, common);
  ft->add_option("--fpo", fpo_path, "input .fpo")->required();
  ft->add_option("--dataset", common.dataset, "dataset directory")->required();
  ft->add_option("--steps", steps, "optimizer steps");
  ft->add_option("--step-size", step_size, "learning rate");

  auto* rend = app.add_subcommand("render", "render frames of an .fpo");
  add_common(rend, common);
  rend->add_option("--fpo", fpo_path, "input .fpo")->required();
  rend->add_option("--frame", frame_sel, "frame index, comma list or 'all'");
  rend->add_option("--orbit", orbit, "number of ring cameras");
  rend->add_option("--dataset", common.dataset, "dataset directory (camera source for --view)");
  rend->add_option("--view", view, "dataset camera index");
  rend->add_option("--width", width, "image size for orbit cameras");

  auto* bench = app.add_subcommand("bench", "octree traversal vs fixed-step dense marching");
  add_common(bench, common);
  bench->add_option("--fpo", fpo_path, "input .fpo")->required();
  bench->add_option("--dataset", common.dataset, "dataset directory (enables ground-truth PSNR)");
  bench->add_option("--frame", frame, "frame index");
  bench->add_option("--width", bench_width, "image size");
  bench->add_option("--trials", trials, "timed runs per mode");
  bench->add_option("--step", step_scale, "dense step as a fraction of the finest cell side");

  auto* ablate = app.add_subcommand("ablate", "sweep n1 and report series error, PSNR and size");
  add_common(ablate, common);
  ablate->add_option("--dataset", common.dataset, "dataset directory for evaluation");
  ablate->add_option("--sweep", sweep, "comma-separated n1 values (T+1 is always added)");

  auto* metrics = app.add_subcommand("metrics", "PSNR/SSIM/MAE of an .fpo on a dataset, or of two images");
  add_common(metrics, common);
  metrics->add_option("--fpo", fpo_path, "input .fpo");
  metrics->add_option("--dataset", common.dataset, "dataset directory");
  metrics->add_option("--split", split, "heldout, train or all");
  metrics->add_option("--image", image, "image (.png or .raw)");
  metrics->add_option("--reference", reference, "reference image (.png or .raw)");

  auto* exp = app.add_subcommand("export", "write a viewer parity fixture");
  add_common(exp, common);
  exp->add_option("--fpo", fpo_path, "input .fpo")->required();
  exp->add_option("--dataset", common.dataset, "dataset directory (camera source for --view)");
  exp->add_option("--frame", frame, "frame index");
  exp->add_option("--view", view, "dataset camera index");
  exp->add_option("--width", width, "image size for the default camera");
  exp->add_option("--sample-leaves", sample_leaves, "leaves in the payload dumps");

  auto* info = app.add_subcommand("info", "print header fields and storage accounting");
  info->add_option("--fpo", fpo_path, "input .fpo")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (gen->parsed()) return cmd_gen_dataset(common, out);
    if (build->parsed()) return cmd_build(common, no_report, out);
    if (ft->parsed()) return cmd_finetune(common, fpo_path, steps, step_size, out);
    if (rend->parsed()) return cmd_render(common, fpo_path, frame_sel, orbit, view, width, out);
    if (bench->parsed()) return cmd_bench(common, fpo_path, frame, bench_width, trials, step_scale, out);
    if (ablate->parsed()) return cmd_ablate(common, sweep, out);
    if (metrics->parsed()) return cmd_metrics(common, fpo_path, image, reference, split, out);
    if (exp->parsed()) return cmd_export(common, fpo_path, frame, view, width, sample_leaves, out);
    if (info->parsed()) return cmd_info(fpo_path, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    switch (e.kind()) {
      case ErrorKind::Config: return kExitConfig;
      case ErrorKind::Data: return kExitData;
      case ErrorKind::Numeric: return kExitNumeric;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitOther;
  }
  return kExitOther;
}

}  // namespace fpoct::app
