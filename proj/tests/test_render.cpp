#include <doctest.h>

#include <cmath>
#include <random>

#include "fpoct/error.hpp"
#include "fpoct/parallel.hpp"
#include "fpoct/render.hpp"
#include "support/oracles.hpp"

using namespace fpoct;

namespace {

Camera simple_camera(int w = 64, int h = 48) {
  Camera c;
  c.width = w;
  c.height = h;
  c.fx = 50.0;
  c.fy = 55.0;
  c.cx = 31.0;
  c.cy = 25.5;
  return c;
}

Ray random_ray(std::mt19937_64& rng, const Aabb& box) {
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Ray r;
  r.origin = box.center() + Vec3(n(rng), n(rng), n(rng)).normalized() * box.side() * 1.5;
  const Vec3 target = box.min + Vec3(u(rng), u(rng), u(rng)).cwiseProduct(box.extent());
  r.dir = (target - r.origin).normalized();
  return r;
}

double linf(const Image& a, const Image& b) {
  double w = 0.0;
  for (size_t i = 0; i < a.rgb.size(); ++i) w = std::max(w, std::abs(double(a.rgb[i]) - double(b.rgb[i])));
  return w;
}

}  // namespace

TEST_CASE("generate_ray examples") {
  Camera c = simple_camera();
  c.cx = 31.5;
  c.cy = 23.5;
  const Ray r = generate_ray(c, 31, 23);
  CHECK((r.dir - Vec3::UnitZ()).norm() < 1e-12);
  CHECK(r.origin.norm() == 0.0);
  c.cx = 10.5;
  c.fx = 20.0;
  const Ray s = generate_ray(c, 30, 23);
  CHECK((s.dir - Vec3(1, 0, 1).normalized()).norm() < 1e-12);
  CHECK_THROWS_AS(generate_ray(c, 64, 0), Error);
  CHECK_THROWS_AS(generate_ray(c, 0, -1), Error);
}

TEST_CASE("projection round trip") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.5, 9.0);
  const Camera cam = Camera::look_at(Vec3(3, -2, 1), Vec3(0.1, 0.2, -0.3), Vec3::UnitZ(), 80, 60, 70.0);
  for (int py = 0; py < cam.height; py += 3)
    for (int px = 0; px < cam.width; px += 3) {
      const Ray r = generate_ray(cam, px, py);
      CHECK(r.dir.norm() == doctest::Approx(1.0).epsilon(1e-12));
      const auto q = cam.project(r.at(u(rng)));
      REQUIRE(q);
      CHECK(std::abs(q->x() - (px + 0.5)) <= 1e-4);
      CHECK(std::abs(q->y() - (py + 0.5)) <= 1e-4);
    }
  CHECK(!cam.project(cam.position - cam.optical_axis()));
}

TEST_CASE("camera validation and look_at") {
  Camera c = simple_camera();
  c.validate();
  c.fx = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = simple_camera();
  c.rotation(0, 0) = 1.01;
  CHECK_THROWS_AS(c.validate(), Error);
  const Camera l = Camera::look_at(Vec3(0, 0, 5), Vec3::Zero(), Vec3::UnitZ(), 32, 32, 30.0);
  l.validate();
  CHECK((l.optical_axis() + Vec3::UnitZ()).norm() < 1e-12);
}

TEST_CASE("traverse examples") {
  OccupancyGrid g(2);
  std::fill(g.cells.begin(), g.cells.end(), 1);
  const Octree t = from_occupancy(fixtures::unit_box(), 2, g, 0);
  Ray miss;
  miss.origin = Vec3(5, 5, 5);
  miss.dir = Vec3(1, 0, 0);
  CHECK(traverse(t.topo, miss).empty());
  Ray r;
  r.origin = Vec3(-3, 0.5, -0.5);
  r.dir = Vec3(1, 0, 0);
  const auto segs = traverse(t.topo, r);
  REQUIRE(segs.size() == 2);
  CHECK(segs[0].delta == doctest::Approx(1.0));
  CHECK(segs[1].delta == doctest::Approx(1.0));
  CHECK(segs[0].t_entry == doctest::Approx(2.0));
  CHECK(segs[1].t_entry == doctest::Approx(3.0));
  CHECK(t.topo.leaf_cells[segs[0].leaf] == Cell{1, 0, 1, 0});
  CHECK(t.topo.leaf_cells[segs[1].leaf] == Cell{1, 1, 1, 0});
  // origin inside the box
  r.origin = Vec3(0.25, 0.5, -0.5);
  const auto inside = traverse(t.topo, r);
  REQUIRE(inside.size() == 1);
  CHECK(inside[0].delta == doctest::Approx(0.75));
}

TEST_CASE("traverse matches the slab oracle on random rays") {
  std::mt19937_64 rng(32);
  const Aabb box{Vec3(-1.5, 0.0, 2.0), Vec3(0.5, 2.0, 4.0)};
  int rays = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const Topology topo = fixtures::random_topology(rng, 64, box);
    for (int i = 0; i < 100; ++i, ++rays) {
      const Ray r = random_ray(rng, box);
      const auto got = traverse(topo, r);
      const auto want = oracle::slab_segments(topo, r.origin, r.dir);
      std::vector<oracle::Segment> w;
      for (const auto& s : want)
        if (s.t1 - s.t0 > 1e-12) w.push_back(s);
      REQUIRE(got.size() == w.size());
      double total = 0.0, want_total = 0.0;
      for (size_t k = 0; k < got.size(); ++k) {
        CHECK(got[k].leaf == w[k].leaf);
        CHECK(std::abs(got[k].t_entry - w[k].t0) <= 1e-9);
        CHECK(std::abs(got[k].t_entry + got[k].delta - w[k].t1) <= 1e-9);
        CHECK(got[k].delta > 0.0);
        if (k > 0) CHECK(got[k].t_entry >= got[k - 1].t_entry + got[k - 1].delta - 1e-9);
        total += got[k].delta;
        want_total += w[k].t1 - w[k].t0;
      }
      CHECK(std::abs(total - want_total) <= 1e-9);
    }
  }
  CHECK(rays == 1000);
}

TEST_CASE("traverse matches a dense marcher") {
  std::mt19937_64 rng(33);
  const Aabb box = fixtures::unit_box();
  const double step = 1e-4 * box.side();
  for (int trial = 0; trial < 100; ++trial) {
    const Topology topo = fixtures::random_topology(rng, 8, box);
    for (int i = 0; i < 10; ++i) {
      const Ray r = random_ray(rng, box);
      const auto got = traverse(topo, r);
      const auto marched = oracle::marched_segments(topo, r.origin, r.dir, step);
      // every marched run lies inside a traversal segment of the same leaf
      size_t k = 0;
      for (const auto& m : marched) {
        while (k < got.size() && got[k].t_entry + got[k].delta < m.t0 - 1e-12) ++k;
        REQUIRE(k < got.size());
        CHECK(got[k].leaf == m.leaf);
        CHECK(m.t0 >= got[k].t_entry - 1e-12);
        CHECK(m.t1 <= got[k].t_entry + got[k].delta + 1e-12);
      }
      // every traversal segment longer than two steps is found by the marcher with matching ends
      for (const auto& s : got) {
        if (s.delta <= 2 * step) continue;
        const auto it = std::find_if(marched.begin(), marched.end(), [&](const oracle::Segment& m) {
          return m.leaf == s.leaf && m.t0 >= s.t_entry - 1e-12 && m.t1 <= s.t_entry + s.delta + 1e-12;
        });
        REQUIRE(it != marched.end());
        CHECK(it->t0 - s.t_entry <= step);
        CHECK(s.t_entry + s.delta - it->t1 <= step);
      }
    }
  }
}

TEST_CASE("traverse visitor can stop early") {
  std::mt19937_64 rng(34);
  const Topology topo = fixtures::random_topology(rng, 16);
  for (int i = 0; i < 50; ++i) {
    const Ray r = random_ray(rng, topo.bbox);
    const auto all = traverse(topo, r);
    size_t seen = 0;
    traverse(topo, r, [&](const RaySegment&) { return ++seen < 2; });
    CHECK(seen == std::min<size_t>(2, all.size()));
  }
}

TEST_CASE("composite examples") {
  const Vec3 bg(0.2, 0.4, 0.6);
  auto eval = [](uint32_t) { return LeafSample{}; };
  CHECK(composite({}, eval, bg).rgb == bg);
  {
    const std::vector<RaySegment> s{{0, 0.0, std::log(2.0)}};
    const auto r = composite(s, [](uint32_t) { return LeafSample{1.0, Vec3::Ones()}; }, Vec3::Zero());
    CHECK((r.rgb - Vec3::Constant(0.5)).norm() < 1e-15);
    REQUIRE(r.transmittance.size() == 1);
    CHECK(r.transmittance[0] == 1.0);
  }
  {
    const std::vector<RaySegment> s{{0, 0.0, std::log(2.0)}, {1, std::log(2.0), std::log(2.0)}};
    const auto r = composite(s, [](uint32_t l) { return LeafSample{1.0, l == 0 ? Vec3(1, 0, 0) : Vec3(0, 1, 0)}; },
                             Vec3::Zero());
    CHECK((r.rgb - Vec3(0.5, 0.25, 0.0)).norm() < 1e-15);
    REQUIRE(r.transmittance.size() == 2);
    CHECK(r.transmittance[1] == doctest::Approx(0.5));
  }
}

TEST_CASE("composite properties") {
  std::mt19937_64 rng(35);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 2000; ++trial) {
    const int n = 1 + static_cast<int>(u(rng) * 12);
    std::vector<RaySegment> segs;
    std::vector<LeafSample> vals;
    double t = 0.0;
    for (int i = 0; i < n; ++i) {
      const double d = 0.01 + u(rng);
      segs.push_back({static_cast<uint32_t>(i), t, d});
      t += d;
      vals.push_back({u(rng) < 0.1 ? -1.0 : u(rng) * 5.0, Vec3(u(rng), u(rng), u(rng))});
    }
    const Vec3 bg(u(rng), u(rng), u(rng));
    auto eval = [&](uint32_t l) { return vals[l]; };
    const auto r = composite(segs, eval, bg, 0.0);
    for (int c = 0; c < 3; ++c) {
      CHECK(r.rgb[c] >= 0.0);
      CHECK(r.rgb[c] <= 1.0 + 1e-12);
    }
    for (size_t i = 0; i < r.transmittance.size(); ++i) {
      CHECK(r.transmittance[i] > 0.0);
      CHECK(r.transmittance[i] <= 1.0);
      if (i) CHECK(r.transmittance[i] <= r.transmittance[i - 1]);
    }
    // split a random segment in two
    const size_t k = static_cast<size_t>(u(rng) * n);
    std::vector<RaySegment> split;
    for (size_t i = 0; i < segs.size(); ++i) {
      if (i != k) {
        split.push_back(segs[i]);
        continue;
      }
      const double f = u(rng);
      split.push_back({segs[i].leaf, segs[i].t_entry, f * segs[i].delta});
      split.push_back({segs[i].leaf, segs[i].t_entry + f * segs[i].delta, (1 - f) * segs[i].delta});
    }
    CHECK((composite(split, eval, bg, 0.0).rgb - r.rgb).cwiseAbs().maxCoeff() <= 1e-9);
    // early stop
    for (double tau : {1e-4, 1e-2, 0.3}) {
      const auto e = composite(segs, eval, bg, tau);
      CHECK((e.rgb - r.rgb).cwiseAbs().maxCoeff() <= tau);
    }
  }
}

TEST_CASE("render agrees with the brute-force reference renderer") {
  std::mt19937_64 rng(36);
  for (int lmax : {0, 2, 4}) {
    const Octree t = fixtures::random_tree(rng, 16, lmax, 6.0, 2.0);
    const Camera cam = Camera::look_at(Vec3(1.8, -2.3, 1.1), t.topo.bbox.center(), Vec3::UnitZ(), 32, 32, 35.0);
    const Vec3 bg(0.1, 0.9, 0.3);
    const Image got = render(t, cam, {bg, 1e-4});
    const Image want = oracle::render(t, cam, bg);
    CHECK(linf(got, want) <= 1e-6);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) CHECK((render_ray(t, generate_ray(cam, x, y), {bg, 1e-4}) - got.get(x, y)).norm() < 1e-6);
  }
}

TEST_CASE("render of an empty tree is the background") {
  std::mt19937_64 rng(37);
  Octree t = fixtures::random_tree(rng, 8, 1);
  for (size_t l = 0; l < t.leaf_count(); ++l) t.sigma(l) = 0.0;
  const Octree empty = prune(t).tree;
  REQUIRE(empty.leaf_count() == 0);
  const Camera cam = Camera::look_at(Vec3(3, 0, 0), Vec3::Zero(), Vec3::UnitZ(), 16, 16, 20.0);
  const Image img = render(empty, cam, {Vec3(0.25, 0.5, 0.75), 1e-4});
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) CHECK(img.get(x, y) == Vec3(0.25f, 0.5f, 0.75f).cast<double>());
}

TEST_CASE("single opaque voxel silhouette") {
  // 64^3 grid in [-1,1]^3; one voxel at the center, camera on the +x axis
  const int n = 64;
  OccupancyGrid g(n);
  g.set(n / 2, n / 2, n / 2, true);
  Octree t = from_occupancy(fixtures::unit_box(), n, g, 0);
  t.sigma(0) = 1e6;
  t.sh(0)[0] = 20.0;
  const double side = 2.0 / n;
  const Vec3 center = t.topo.cell_center(t.topo.leaf_cells[0]);
  const double dist = 1.5, focal = 400.0;
  Camera cam = Camera::look_at(center + Vec3(dist, 0, 0), center, Vec3::UnitZ(), 64, 64, focal);
  cam.cx = 32.0;
  cam.cy = 32.0;
  const Image img = render(t, cam);
  int x0 = 64, x1 = -1, y0 = 64, y1 = -1, count = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      if (img.at(x, y, 0) > 0.5f) {
        ++count;
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
      }
  const double projected = focal * side / (dist - 0.5 * side);
  REQUIRE(count > 0);
  CHECK(std::abs((x1 - x0 + 1) - projected) <= 1.0);
  CHECK(std::abs((y1 - y0 + 1) - projected) <= 1.0);
  CHECK(count == (x1 - x0 + 1) * (y1 - y0 + 1));
}

TEST_CASE("render is deterministic across thread counts") {
  std::mt19937_64 rng(38);
  const Octree t = fixtures::random_tree(rng, 32, 2);
  const Camera cam = Camera::look_at(Vec3(2, 2, 2), t.topo.bbox.center(), Vec3::UnitZ(), 40, 40, 40.0);
  const int before = thread_count();
  const Image a = render(t, cam);
  set_thread_count(1);
  const Image b = render(t, cam);
  set_thread_count(3);
  const Image c = render(t, cam);
  set_thread_count(before);
  CHECK(a.rgb == b.rgb);
  CHECK(a.rgb == c.rgb);
  CHECK(render(t, cam).rgb == a.rgb);
  CHECK_THROWS_AS(set_thread_count(-1), Error);
}

TEST_CASE("dense marcher converges to the exact render") {
  std::mt19937_64 rng(39);
  const Octree t = fixtures::random_tree(rng, 16, 1, 3.0);
  const Camera cam = Camera::look_at(Vec3(2, -1.5, 1), t.topo.bbox.center(), Vec3::UnitZ(), 24, 24, 30.0);
  const Image exact = render(t, cam, {Vec3::Zero(), 0.0});
  const double fine = oracle::psnr(render_dense(t, cam, 1e-3 * t.topo.bbox.side(), {Vec3::Zero(), 0.0}), exact);
  const double coarse = oracle::psnr(render_dense(t, cam, 0.2 * t.topo.bbox.side(), {Vec3::Zero(), 0.0}), exact);
  CHECK(fine > 40.0);
  CHECK(fine > coarse);
  CHECK_THROWS_AS(render_dense(t, cam, 0.0), Error);
}
