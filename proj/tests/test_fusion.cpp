#include <doctest.h>

#include <cmath>
#include <random>

#include "fpoct/error.hpp"
#include "fpoct/fusion.hpp"
#include "fpoct/metrics.hpp"
#include "fpoct/render.hpp"
#include "support/oracles.hpp"

using namespace fpoct;

namespace {

struct ConstantSource final : RadianceSource {
  double sigma;
  Vec3 rgb;
  Sample query(const Vec3&, const Vec3&, int) const override { return {sigma, rgb}; }
};

// Color sigmoid(Y(d)^T z(p)) with z a smooth function of position.
struct BandLimitedSource final : RadianceSource {
  std::vector<double> base, slope;
  Sample query(const Vec3& p, const Vec3& d, int) const override {
    const auto y = oracle::sh_reference_all(2, d);
    Sample s{1.5 + p.x(), Vec3::Zero()};
    for (int c = 0; c < 3; ++c) {
      double u = 0.0;
      for (size_t k = 0; k < 9; ++k) u += (base[3 * k + c] + slope[3 * k + c] * p.y()) * y[k];
      s.rgb[c] = 1.0 / (1.0 + std::exp(-u));
    }
    return s;
  }
  double z(size_t k, int c, const Vec3& p) const { return base[3 * k + c] + slope[3 * k + c] * p.y(); }
};

// Returns exactly what the tree stores.
struct TreeSource final : RadianceSource {
  const Octree* tree;
  Sample query(const Vec3& p, const Vec3& d, int) const override {
    const auto l = lookup(tree->topo, p);
    if (!l) return {};
    return {tree->sigma(*l), decode_color(tree->lmax, tree->sh(*l), d)};
  }
};

class EmptyScene final : public DynamicOracle {
 public:
  Sample query(const Vec3&, const Vec3&, int) const override { return {}; }
  Aabb bbox() const override { return fixtures::unit_box(); }
  int frames() const override { return 1; }
  std::vector<Interval> support(const Ray&, int) const override { return {}; }
};

bool interior(const DynamicOracle& o, const Vec3& p, int t) {
  return o.query(p, Vec3::UnitZ(), t).sigma > 0.0;
}

}  // namespace

TEST_CASE("carving keeps every interior voxel") {
  const std::vector<std::shared_ptr<const DynamicOracle>> scenes{
      std::make_shared<PulsatingSphere>(default_sphere_params(20)),
      std::make_shared<OrbitingBlobs>(default_blobs_params(20)), make_desk_scene(20)};
  RigSpec spec;
  spec.count = 6;
  const CameraRig rig = make_rig(spec);
  const int n = 64;
  for (const auto& scene : scenes)
    for (int t : {1, 5, 12}) {
      const OccupancyGrid hull = carve(*scene, rig, t, n, 1);
      const Aabb box = scene->bbox();
      const double side = box.side() / n;
      size_t inside = 0, missed = 0;
      for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
          for (int x = 0; x < n; ++x) {
            if (!interior(*scene, box.min + side * Vec3(x + 0.5, y + 0.5, z + 0.5), t)) continue;
            ++inside;
            if (!hull.at(x, y, z)) ++missed;
          }
      CHECK(inside > 0);
      CHECK(missed == 0);
      CHECK(hull.count() >= inside);
      CHECK(hull.count() < static_cast<size_t>(n) * n * n / 4);
    }
}

TEST_CASE("single-view carving is a column") {
  const PulsatingSphere s(default_sphere_params(20));
  RigSpec spec;
  spec.count = 1;
  spec.pattern = RigPattern::Ring;
  spec.radius = 1e6;
  spec.width = spec.height = 64;
  spec.fov_deg = 2.0 * std::atan(1e-6) * 180.0 / M_PI;
  const CameraRig rig = make_rig(spec);
  const OccupancyGrid hull = carve(s, rig, 3, 64, 0);
  size_t columns = 0;
  for (int z = 0; z < 64; ++z)
    for (int y = 0; y < 64; ++y) {
      const bool first = hull.at(0, y, z);
      for (int x = 1; x < 64; ++x) CHECK(hull.at(x, y, z) == first);
      columns += first;
    }
  // columns are the silhouette pixels
  CHECK(columns == s.silhouette(rig.cameras[0], 3).count());
}

TEST_CASE("carving preconditions") {
  RigSpec spec;
  spec.count = 3;
  spec.width = spec.height = 32;
  const CameraRig rig = make_rig(spec);
  try {
    carve(EmptyScene(), rig, 1, 16);
    FAIL("empty scene carved");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Data);
  }
  const PulsatingSphere s(default_sphere_params(20));
  CHECK_THROWS_AS(carve(s, rig, 1, 24), Error);
  CHECK_THROWS_AS(carve(s, CameraRig{}, 1, 16), Error);
  // dilation grows the hull
  CHECK(carve(s, rig, 1, 32, 2).count() >= carve(s, rig, 1, 32, 0).count());
}

TEST_CASE("coarse fill of a constant field") {
  OccupancyGrid g(8);
  for (int i = 0; i < 8; ++i) g.set(i, (i * 3) % 8, (i * 5) % 8, true);
  const Octree empty = from_occupancy(fixtures::unit_box(), 8, g, 2);
  ConstantSource src;
  src.sigma = 2.5;
  src.rgb = Vec3(0.1, 0.6, 0.85);
  const Octree t = coarse_fill(empty, src, 1);
  std::mt19937_64 rng(61);
  std::normal_distribution<double> n;
  for (size_t l = 0; l < t.leaf_count(); ++l) {
    CHECK(t.sigma(l) == doctest::Approx(2.5).epsilon(1e-12));
    for (size_t k = 3; k < t.stride() - 1; ++k) CHECK(std::abs(t.sh(l)[k]) <= 1e-6);
    for (int r = 0; r < 10; ++r) {
      const Vec3 d = Vec3(n(rng), n(rng), n(rng)).normalized();
      CHECK((decode_color(t.lmax, t.sh(l), d) - src.rgb).cwiseAbs().maxCoeff() <= 1e-4);
    }
  }
}

TEST_CASE("coarse fill recovers band-limited colors") {
  std::mt19937_64 rng(62);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  BandLimitedSource src;
  for (int i = 0; i < 27; ++i) {
    src.base.push_back(u(rng));
    src.slope.push_back(u(rng));
  }
  OccupancyGrid g(16);
  for (int i = 0; i < 200; ++i) g.set(static_cast<int>(rng() % 16), static_cast<int>(rng() % 16), static_cast<int>(rng() % 16), true);
  const Octree empty = from_occupancy(fixtures::unit_box(), 16, g, 2);
  const Octree t = coarse_fill(empty, src, 1, 256);
  double worst = 0.0;
  for (size_t l = 0; l < t.leaf_count(); ++l) {
    const Vec3 p = t.topo.cell_center(t.topo.leaf_cells[l]);
    CHECK(t.sigma(l) == doctest::Approx(1.5 + p.x()).epsilon(1e-12));
    for (size_t k = 0; k < 9; ++k)
      for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(t.sh(l)[3 * k + c] - src.z(k, c, p)));
  }
  MESSAGE("worst coefficient error ", worst);
  CHECK(worst <= 1e-3);
  CHECK_THROWS_AS(coarse_fill(empty, src, 1, 8), Error);
}

TEST_CASE("update_leaf examples") {
  StaticLeaf leaf{2.0, SHCoeffs(1)};
  FusionObservation obs;
  obs.transmittance = 0.7;
  obs.sigma = 4.0;
  obs.rgb = Vec3(0.2, 0.4, 0.9);
  obs.view_dir = Direction::from_vector(Vec3(1, -2, 0.5));
  {
    const auto [s, l] = update_leaf(FusionState{}, leaf, obs);
    CHECK(l.sigma == 4.0);
    CHECK(s.weight == 0.7);
    CHECK(s.count == 1);
    CHECK((decode_color(l.sh, obs.view_dir) - obs.rgb).cwiseAbs().maxCoeff() <= 1e-12);
  }
  {
    obs.transmittance = 1.0;
    const auto [s, l] = update_leaf(FusionState{1.0, 1}, leaf, obs);
    CHECK(l.sigma == 3.0);
    CHECK(s.count == 2);
    CHECK(s.weight == 1.0);
  }
  obs.transmittance = 0.0;
  CHECK_THROWS_AS(update_leaf(FusionState{}, leaf, obs), Error);
  double sigma = 1.0;
  std::vector<double> sh(3, 0.0), target(3, 0.0);
  FusionState zero;
  try {
    apply_update(zero, sigma, sh, 0.0, 1.0, target);
    FAIL("zero weight accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Numeric);
  }
}

TEST_CASE("observation SH") {
  std::mt19937_64 rng(63);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (int lmax = 0; lmax <= 4; ++lmax)
    for (int i = 0; i < 200; ++i) {
      const size_t m = 3 * static_cast<size_t>(sh_count(lmax));
      std::vector<double> cur(m), out(m), again(m);
      for (double& v : cur) v = 0.5 * n(rng);
      const Vec3 d = Vec3(n(rng), n(rng), n(rng)).normalized(), rgb(u(rng), u(rng), u(rng));
      observation_sh(lmax, cur, d, rgb, out);
      CHECK((decode_color(lmax, out, d) - rgb).cwiseAbs().maxCoeff() <= 1e-9);
      // the change is along Y(d) per channel
      const auto y = oracle::sh_reference_all(lmax, d);
      for (int c = 0; c < 3; ++c) {
        const double g0 = (out[static_cast<size_t>(c)] - cur[static_cast<size_t>(c)]) / y[0];
        for (size_t k = 0; k < y.size(); ++k) CHECK(std::abs(out[3 * k + c] - cur[3 * k + c] - g0 * y[k]) <= 1e-9);
      }
      // idempotent
      observation_sh(lmax, out, d, decode_color(lmax, out, d), again);
      for (size_t k = 0; k < m; ++k) CHECK(std::abs(again[k] - out[k]) <= 1e-9);
    }
}

TEST_CASE("running update equals the replay fold") {
  std::mt19937_64 rng(64);
  std::uniform_real_distribution<double> ut(1e-3, 1.0), uv(-5.0, 5.0);
  for (int seq = 0; seq < 10000; ++seq) {
    const int k = 1 + static_cast<int>(rng() % 30);
    std::vector<std::pair<double, double>> obs;
    for (int i = 0; i < k; ++i) obs.emplace_back(ut(rng), uv(rng));
    const double initial = uv(rng);
    FusionState st;
    double sigma = initial;
    std::vector<double> sh{initial}, target(1);
    double lo = initial, hi = initial, tmax = 0.0;
    for (const auto& [t, v] : obs) {
      const double prev = sigma;
      target[0] = v;
      apply_update(st, sigma, sh, t, v, target);
      CHECK(sigma >= std::min(prev, v));
      CHECK(sigma <= std::max(prev, v));
      CHECK(sh[0] == sigma);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      tmax = std::max(tmax, t);
      CHECK(st.weight > 0.0);
      CHECK(st.weight <= 1.0);
      CHECK(st.weight <= tmax);
    }
    const auto ref = oracle::replay(initial, obs);
    CHECK(std::abs(sigma - static_cast<double>(ref.value)) <= 1e-12 * std::max(1.0, std::abs(static_cast<double>(ref.value))));
    CHECK(std::abs(st.weight - static_cast<double>(ref.weight)) <= 1e-12);
    CHECK(st.count == static_cast<uint32_t>(k));
  }
}

TEST_CASE("repeating the stored value is a fixed point") {
  std::mt19937_64 rng(65);
  std::uniform_real_distribution<double> ut(1e-3, 1.0), uv(-5.0, 5.0);
  for (int seq = 0; seq < 1000; ++seq) {
    double sigma = uv(rng);
    const double keep = sigma;
    std::vector<double> sh(27);
    for (double& v : sh) v = uv(rng);
    const std::vector<double> target(sh.begin(), sh.end()), sh0(sh.begin(), sh.end());
    FusionState st{ut(rng), 3};
    for (int i = 0; i < 20; ++i) apply_update(st, sigma, sh, ut(rng), keep, target);
    CHECK(sigma == keep);
    CHECK(sh == sh0);
  }
}

TEST_CASE("fine pass on a self-consistent source leaves the tree unchanged") {
  std::mt19937_64 rng(66);
  Octree t = fixtures::random_tree(rng, 16, 2, 3.0, 0.5);
  TreeSource src;
  src.tree = &t;
  RigSpec spec;
  spec.count = 20;
  spec.width = spec.height = 32;
  spec.center = t.topo.bbox.center();
  const FinePassResult r = fine_pass(t, src, make_rig(spec), 1);
  double worst = 0.0;
  size_t touched = 0;
  for (size_t i = 0; i < t.payload.size(); ++i) worst = std::max(worst, std::abs(r.tree.payload[i] - t.payload[i]));
  for (const FusionState& s : r.state) touched += s.count > 0;
  CHECK(worst <= 1e-6);
  CHECK(touched > 0);
  CHECK(r.leaves_updated_per_view.size() == 20);
  CHECK(r.queries > 0);
}

TEST_CASE("fine pass never touches fully occluded leaves") {
  // 5^3 opaque block; the center voxel is shielded by two layers in every direction
  OccupancyGrid g(8);
  for (int z = 1; z < 6; ++z)
    for (int y = 1; y < 6; ++y)
      for (int x = 1; x < 6; ++x) g.set(x, y, z, true);
  Octree t = from_occupancy(fixtures::unit_box(), 8, g, 1);
  for (size_t l = 0; l < t.leaf_count(); ++l) t.sigma(l) = 100.0;
  ConstantSource src;
  src.sigma = 100.0;
  src.rgb = Vec3(0.3, 0.3, 0.3);
  RigSpec spec;
  spec.count = 60;
  spec.width = spec.height = 48;
  const FinePassResult r = fine_pass(t, src, make_rig(spec), 1);
  const auto center = lookup(t.topo, t.topo.cell_center(Cell{3, 3, 3, 3}));
  REQUIRE(center);
  CHECK(r.state[*center].count == 0);
  CHECK(r.state[*center].weight == 0.0);
  for (size_t k = 0; k < t.sh(*center).size(); ++k) CHECK(r.tree.sh(*center)[k] == 0.0);
  size_t outer = 0;
  for (size_t l = 0; l < t.leaf_count(); ++l) {
    const Cell& c = t.topo.leaf_cells[l];
    const bool shell = c.x == 1 || c.x == 5 || c.y == 1 || c.y == 5 || c.z == 1 || c.z == 5;
    if (shell && r.state[l].count > 0) ++outer;
    if (r.state[l].count == 0) {
      for (size_t k = 0; k < t.sh(l).size(); ++k) CHECK(r.tree.sh(l)[k] == t.sh(l)[k]);
    }
  }
  CHECK(outer > 0);
}

TEST_CASE("fine pass improves the sphere over the coarse stage") {
  const PulsatingSphere s(default_sphere_params(20));
  FusionConfig cfg;
  cfg.grid_n = 32;
  cfg.fine_rig.count = 40;
  cfg.fine_rig.width = cfg.fine_rig.height = 48;
  const FrameBuildResult r = build_frame_tree(s, 4, cfg);
  const CameraRig dense = make_rig(cfg.fine_rig);
  double coarse = 0.0, fine = 0.0;
  for (const Camera& cam : dense.cameras) {
    const Image gt = s.ground_truth(cam, 4);
    coarse += psnr(render(r.coarse, cam), gt);
    fine += psnr(render(r.tree, cam), gt);
  }
  coarse /= static_cast<double>(dense.cameras.size());
  fine /= static_cast<double>(dense.cameras.size());
  MESSAGE("coarse ", coarse, " dB, fine ", fine, " dB");
  CHECK(fine > coarse);
  CHECK(r.report.leaves_updated_per_view.size() == 40);
  CHECK(r.report.leaves == r.tree.leaf_count());
  CHECK(r.report.hull_voxels == r.coarse.leaf_count());
  CHECK(r.report.pruned + r.tree.leaf_count() == r.coarse.leaf_count());
}

TEST_CASE("fine pass is deterministic") {
  const PulsatingSphere s(default_sphere_params(20));
  FusionConfig cfg;
  cfg.grid_n = 16;
  cfg.fine_rig.count = 10;
  cfg.fine_rig.width = cfg.fine_rig.height = 32;
  const FrameBuildResult a = build_frame_tree(s, 2, cfg), b = build_frame_tree(s, 2, cfg);
  CHECK(a.tree.payload == b.tree.payload);
  CHECK(a.tree.topo == b.tree.topo);
}
