#include "fpoct/app/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "fpoct/error.hpp"

namespace fpoct::app {

namespace pt = boost::property_tree;

namespace {

const std::map<std::string, std::set<std::string>> kKeys = {
    {"scene", {"kind", "frames", "r0", "amplitude", "sigma_max", "lobe_weight"}},
    {"dataset", {"views", "radius", "pattern", "elevation", "width", "height", "fov", "holdout_every"}},
    {"fusion",
     {"grid", "lmax", "coarse_views", "coarse_width", "fine_views", "fine_width", "dirs_per_leaf", "dilation",
      "query_threshold", "prune_threshold", "fine_pass"}},
    {"fpo", {"n1", "n2", "paper_dft"}},
    {"finetune", {"steps", "step_size", "rays_per_batch", "optimizer", "seed", "monitor_rays"}},
    {"run", {"threads", "deterministic"}},
};

RigPattern parse_pattern(const std::string& s) {
  if (s == "sphere" || s == "uniform-sphere") return RigPattern::UniformSphere;
  if (s == "ring") return RigPattern::Ring;
  throw config_error("unknown rig pattern '" + s + "'");
}

template <class T>
void get(const pt::ptree& tree, const std::string& key, T& value) {
  const auto v = tree.get_optional<std::string>(key);
  if (!v) return;
  std::istringstream in(*v);
  T parsed{};
  in >> parsed;
  if (!in || !(in >> std::ws).eof()) throw config_error("bad value for " + key + ": '" + *v + "'");
  value = parsed;
}

void get_bool(const pt::ptree& tree, const std::string& key, bool& value) {
  const auto v = tree.get_optional<std::string>(key);
  if (!v) return;
  if (*v == "true" || *v == "1" || *v == "yes") value = true;
  else if (*v == "false" || *v == "0" || *v == "no") value = false;
  else throw config_error("bad boolean for " + key + ": '" + *v + "'");
}

RunConfig from_tree(const pt::ptree& tree) {
  for (const auto& [section, body] : tree) {
    const auto it = kKeys.find(section);
    if (it == kKeys.end()) throw config_error("unknown config section [" + section + "]");
    for (const auto& [key, unused] : body)
      if (!it->second.count(key)) throw config_error("unknown config key " + section + "." + key);
  }
  RunConfig c;
  get(tree, "scene.kind", c.scene.kind);
  get(tree, "scene.frames", c.scene.frames);
  get(tree, "scene.r0", c.scene.r0);
  get(tree, "scene.amplitude", c.scene.amplitude);
  get(tree, "scene.sigma_max", c.scene.sigma_max);
  get(tree, "scene.lobe_weight", c.scene.lobe_weight);

  RigSpec& r = c.dataset.rig;
  get(tree, "dataset.views", r.count);
  get(tree, "dataset.radius", r.radius);
  std::string pattern = rig_pattern_name(r.pattern);
  get(tree, "dataset.pattern", pattern);
  r.pattern = parse_pattern(pattern);
  get(tree, "dataset.elevation", r.elevation_deg);
  get(tree, "dataset.width", r.width);
  r.height = r.width;
  get(tree, "dataset.height", r.height);
  get(tree, "dataset.fov", r.fov_deg);
  get(tree, "dataset.holdout_every", c.dataset.holdout_every);

  FusionConfig& f = c.fusion;
  get(tree, "fusion.grid", f.grid_n);
  get(tree, "fusion.lmax", f.lmax);
  get(tree, "fusion.coarse_views", f.coarse_rig.count);
  get(tree, "fusion.coarse_width", f.coarse_rig.width);
  f.coarse_rig.height = f.coarse_rig.width;
  get(tree, "fusion.fine_views", f.fine_rig.count);
  get(tree, "fusion.fine_width", f.fine_rig.width);
  f.fine_rig.height = f.fine_rig.width;
  get(tree, "fusion.dirs_per_leaf", f.dirs_per_leaf);
  get(tree, "fusion.dilation", f.dilation_px);
  get(tree, "fusion.query_threshold", f.query_threshold);
  get(tree, "fusion.prune_threshold", f.prune_threshold);
  get_bool(tree, "fusion.fine_pass", f.run_fine_pass);

  get(tree, "fpo.n1", c.fpo.n1);
  get(tree, "fpo.n2", c.fpo.n2);
  get_bool(tree, "fpo.paper_dft", c.fpo.paper_dft);

  FinetuneConfig& ft = c.finetune;
  ft.steps = 2000;
  get(tree, "finetune.steps", ft.steps);
  get(tree, "finetune.step_size", ft.step_size);
  get(tree, "finetune.rays_per_batch", ft.rays_per_batch);
  std::string opt = "adam";
  get(tree, "finetune.optimizer", opt);
  if (opt == "adam") ft.optimizer = OptimizerKind::Adam;
  else if (opt == "sgd") ft.optimizer = OptimizerKind::Sgd;
  else throw config_error("unknown optimizer '" + opt + "'");
  get(tree, "finetune.seed", ft.seed);
  get(tree, "finetune.monitor_rays", ft.monitor_rays);

  get(tree, "run.threads", c.threads);
  get_bool(tree, "run.deterministic", c.deterministic);
  finalize(c);
  return c;
}

}  // namespace

std::string rig_pattern_name(RigPattern p) { return p == RigPattern::Ring ? "ring" : "sphere"; }

void finalize(RunConfig& c) {
  if (c.scene.frames < 1) throw config_error("scene.frames must be at least 1");
  c.fpo.frames = c.scene.frames;
  c.fpo.lmax = c.fusion.lmax;
  c.fpo.validate();
  c.finetune.validate();
  if (!is_power_of_two(c.fusion.grid_n) || c.fusion.grid_n < 2 || c.fusion.grid_n > 1024)
    throw config_error("fusion.grid must be a power of two in 2..1024");
  for (const RigSpec* r : {&c.dataset.rig, &c.fusion.coarse_rig, &c.fusion.fine_rig}) {
    if (r->count < 1) throw config_error("rig view count must be at least 1");
    if (r->width < 1 || r->height < 1) throw config_error("image size must be positive");
    if (!(r->radius > 0.0)) throw config_error("rig radius must be positive");
    if (!(r->fov_deg > 0.0 && r->fov_deg < 180.0)) throw config_error("fov must be in (0, 180)");
  }
  if (c.dataset.holdout_every < 0) throw config_error("holdout_every must be non-negative");
  if (c.fusion.dirs_per_leaf < 1) throw config_error("dirs_per_leaf must be positive");
  if (c.fusion.dilation_px < 0) throw config_error("dilation must be non-negative");
  if (!(c.fusion.query_threshold >= 0.0) || !(c.fusion.prune_threshold >= 0.0))
    throw config_error("thresholds must be non-negative");
  if (c.threads < 0) throw config_error("threads must be non-negative");
}

RunConfig parse_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw config_error(std::string("config parse error: ") + e.what());
  }
  return from_tree(tree);
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

namespace {

// shortest text that reads back to the same double
std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

std::string to_ini(const RunConfig& c) {
  std::ostringstream o;
  o << "[scene]\nkind = " << c.scene.kind << "\nframes = " << c.scene.frames << "\nr0 = " << num(c.scene.r0)
    << "\namplitude = " << num(c.scene.amplitude) << "\nsigma_max = " << num(c.scene.sigma_max)
    << "\nlobe_weight = " << num(c.scene.lobe_weight) << "\n\n";
  const RigSpec& r = c.dataset.rig;
  o << "[dataset]\nviews = " << r.count << "\nradius = " << num(r.radius) << "\npattern = " << rig_pattern_name(r.pattern)
    << "\nelevation = " << num(r.elevation_deg) << "\nwidth = " << r.width << "\nheight = " << r.height
    << "\nfov = " << num(r.fov_deg) << "\nholdout_every = " << c.dataset.holdout_every << "\n\n";
  const FusionConfig& f = c.fusion;
  o << "[fusion]\ngrid = " << f.grid_n << "\nlmax = " << f.lmax << "\ncoarse_views = " << f.coarse_rig.count
    << "\ncoarse_width = " << f.coarse_rig.width << "\nfine_views = " << f.fine_rig.count
    << "\nfine_width = " << f.fine_rig.width << "\ndirs_per_leaf = " << f.dirs_per_leaf
    << "\ndilation = " << f.dilation_px << "\nquery_threshold = " << num(f.query_threshold)
    << "\nprune_threshold = " << num(f.prune_threshold) << "\nfine_pass = " << (f.run_fine_pass ? "true" : "false")
    << "\n\n";
  o << "[fpo]\nn1 = " << c.fpo.n1 << "\nn2 = " << c.fpo.n2 << "\npaper_dft = " << (c.fpo.paper_dft ? "true" : "false")
    << "\n\n";
  const FinetuneConfig& ft = c.finetune;
  o << "[finetune]\nsteps = " << ft.steps << "\nstep_size = " << num(ft.step_size)
    << "\nrays_per_batch = " << ft.rays_per_batch
    << "\noptimizer = " << (ft.optimizer == OptimizerKind::Adam ? "adam" : "sgd") << "\nseed = " << ft.seed
    << "\nmonitor_rays = " << ft.monitor_rays << "\n\n";
  o << "[run]\nthreads = " << c.threads << "\ndeterministic = " << (c.deterministic ? "true" : "false") << "\n";
  return o.str();
}

std::shared_ptr<const DynamicOracle> make_scene(const SceneConfig& s) {
  const int T = s.frames;
  auto sphere = [&](double amplitude) {
    PulsatingSphereParams p = default_sphere_params(T);
    p.r0 = s.r0;
    p.amplitude = amplitude;
    p.sigma_max = s.sigma_max;
    p.lobe_weight = s.lobe_weight;
    return std::make_shared<const PulsatingSphere>(p);
  };
  if (s.kind == "desk")
    return std::make_shared<const CompositeScene>(std::vector<std::shared_ptr<const DynamicOracle>>{
        sphere(s.amplitude), std::make_shared<const OrbitingBlobs>(default_blobs_params(T))});
  if (s.kind == "sphere") return sphere(s.amplitude);
  if (s.kind == "static") return sphere(0.0);
  if (s.kind == "blobs") return std::make_shared<const OrbitingBlobs>(default_blobs_params(T));
  throw config_error("unknown scene kind '" + s.kind + "'");
}

}  // namespace fpoct::app
