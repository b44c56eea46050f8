#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "fpoct/fpo_io.hpp"
#include "support/oracles.hpp"

using namespace fpoct;

namespace {

uint32_t u32_at(const std::vector<uint8_t>& b, size_t off) {
  return static_cast<uint32_t>(b[off]) | static_cast<uint32_t>(b[off + 1]) << 8 | static_cast<uint32_t>(b[off + 2]) << 16 |
         static_cast<uint32_t>(b[off + 3]) << 24;
}

float f32_at(const std::vector<uint8_t>& b, size_t off) {
  const uint32_t u = u32_at(b, off);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

void put_u32(std::vector<uint8_t>& b, size_t off, uint32_t v) {
  for (int i = 0; i < 4; ++i) b[off + static_cast<size_t>(i)] = static_cast<uint8_t>(v >> (8 * i));
}

void put_f32(std::vector<uint8_t>& b, size_t off, float f) {
  uint32_t u;
  std::memcpy(&u, &f, 4);
  put_u32(b, off, u);
}

FpoFormatErrorKind error_of(const std::vector<uint8_t>& bytes) {
  try {
    deserialize(bytes);
  } catch (const FpoFormatError& e) {
    return e.format_kind();
  }
  FAIL("accepted");
  return FpoFormatErrorKind::BadMagic;
}

FourierOctree small_fpo(std::mt19937_64& rng, int n1, int n2, int lmax, int T) {
  FourierOctree f;
  f.topo = fixtures::random_topology(rng, 16, Aabb{Vec3(-1.25, 0.5, 2.0), Vec3(0.75, 2.5, 4.0)});
  f.config.n1 = n1;
  f.config.n2 = n2;
  f.config.lmax = lmax;
  f.config.frames = T;
  std::normal_distribution<double> n;
  f.coeffs.resize(f.leaf_count() * f.stride());
  for (double& v : f.coeffs) v = n(rng);
  return f;
}

}  // namespace

TEST_CASE("single-leaf static file layout") {
  OccupancyGrid g(2);
  g.set(1, 0, 1, true);
  const Octree t = from_occupancy(fixtures::unit_box(), 2, g, 2);
  const auto bytes = serialize(t);
  REQUIRE(bytes.size() == 64 + 32 + 28 * 4);
  CHECK(std::memcmp(bytes.data(), "FPOC", 4) == 0);
  CHECK(u32_at(bytes, 4) == 1);
  CHECK(u32_at(bytes, 8) == 0);
  const float box[6] = {-1, -1, -1, 1, 1, 1};
  for (int i = 0; i < 6; ++i) CHECK(f32_at(bytes, 12 + 4 * static_cast<size_t>(i)) == box[i]);
  CHECK(u32_at(bytes, 36) == 2);  // lmax
  CHECK(u32_at(bytes, 40) == 2);  // grid
  CHECK(u32_at(bytes, 44) == 1);  // T
  CHECK(u32_at(bytes, 48) == 1);  // n1
  CHECK(u32_at(bytes, 52) == 1);  // n2
  CHECK(u32_at(bytes, 56) == 1);  // nodes
  CHECK(u32_at(bytes, 60) == 1);  // leaves
  for (int s = 0; s < 8; ++s) CHECK(u32_at(bytes, 64 + 4 * static_cast<size_t>(s)) == (s == 5 ? 0x80000000u : 0xFFFFFFFFu));
  for (size_t i = 96; i < bytes.size(); ++i) CHECK(bytes[i] == 0);
  const FpoHeader h = parse_header(bytes);
  CHECK(h.payload_len() == 28);
  CHECK(h.file_size() == bytes.size());
}

TEST_CASE("fourier payload length") {
  std::mt19937_64 rng(101);
  const FourierOctree f = small_fpo(rng, 31, 5, 2, 20);
  const auto bytes = serialize(f);
  const FpoHeader h = parse_header(bytes);
  CHECK(h.payload_len() == 166);
  CHECK(h.kind == FpoKind::Fourier);
  CHECK(bytes.size() == 64 + 32 * f.topo.nodes.size() + 4 * 166 * f.leaf_count());
  CHECK(u32_at(bytes, 44) == 20);
  CHECK(u32_at(bytes, 48) == 31);
  CHECK(u32_at(bytes, 52) == 5);
  // first leaf's first coefficients follow the node table
  const size_t payload = 64 + 32 * f.topo.nodes.size();
  for (size_t k = 0; k < 166; ++k) CHECK(f32_at(bytes, payload + 4 * k) == static_cast<float>(f.coeffs[k]));
  for (int lmax = 0; lmax <= 4; ++lmax)
    for (int n1 : {1, 7})
      for (int n2 : {1, 3}) {
        const FourierOctree g = small_fpo(rng, n1, n2, lmax, 8);
        CHECK(parse_header(serialize(g)).payload_len() == static_cast<uint64_t>(n1 + n2 * (lmax + 1) * (lmax + 1) * 3));
      }
}

TEST_CASE("round trips") {
  std::mt19937_64 rng(102);
  const auto dir = fixtures::temp_dir("fpo_io");
  for (int i = 0; i < 10; ++i) {
    const Octree t = fixtures::random_tree(rng, 32, i % 5);
    const size_t written = save(t, dir + "/t.fpo");
    CHECK(written == std::filesystem::file_size(dir + "/t.fpo"));
    const auto loaded = std::get<Octree>(load(dir + "/t.fpo"));
    CHECK(loaded.topo.nodes == t.topo.nodes);
    CHECK(loaded.topo.leaf_cells == t.topo.leaf_cells);
    CHECK(loaded.topo.grid_n == t.topo.grid_n);
    CHECK(loaded.lmax == t.lmax);
    for (size_t k = 0; k < t.payload.size(); ++k) CHECK(loaded.payload[k] == static_cast<double>(static_cast<float>(t.payload[k])));
    CHECK(serialize(loaded) == read_file(dir + "/t.fpo"));

    const FourierOctree f = small_fpo(rng, 1 + i, 1 + i % 3, i % 3, 12);
    save(f, dir + "/f.fpo");
    const auto lf = std::get<FourierOctree>(load(dir + "/f.fpo"));
    CHECK(lf.topo == FourierOctree(lf).topo);
    CHECK(lf.topo.nodes == f.topo.nodes);
    CHECK(lf.config.n1 == f.config.n1);
    CHECK(lf.config.n2 == f.config.n2);
    CHECK(lf.config.lmax == f.config.lmax);
    CHECK(lf.config.frames == 12);
    for (size_t k = 0; k < f.coeffs.size(); ++k) CHECK(lf.coeffs[k] == static_cast<double>(static_cast<float>(f.coeffs[k])));
    const auto once = serialize(f), twice = serialize(std::get<FourierOctree>(deserialize(once)));
    CHECK(once == twice);
  }
}

TEST_CASE("distinct error kinds") {
  std::mt19937_64 rng(103);
  const auto good = serialize(small_fpo(rng, 3, 2, 1, 4));
  auto b = good;
  b[0] = 'X';
  CHECK(error_of(b) == FpoFormatErrorKind::BadMagic);
  CHECK(error_of({'P', 'N', 'G'}) == FpoFormatErrorKind::BadMagic);
  CHECK(error_of({}) == FpoFormatErrorKind::CorruptHeader);
  CHECK(error_of({'F', 'P'}) == FpoFormatErrorKind::CorruptHeader);
  CHECK(error_of(std::vector<uint8_t>(good.begin(), good.begin() + 40)) == FpoFormatErrorKind::CorruptHeader);
  b = good;
  put_u32(b, 4, 2);
  CHECK(error_of(b) == FpoFormatErrorKind::UnsupportedVersion);
  b = good;
  put_u32(b, 8, 7);
  CHECK(error_of(b) == FpoFormatErrorKind::CorruptHeader);
  b = good;
  put_f32(b, 12, NAN);
  CHECK(error_of(b) == FpoFormatErrorKind::CorruptHeader);
  b = good;
  put_u32(b, 36, 9);
  CHECK(error_of(b) == FpoFormatErrorKind::CorruptHeader);
  b = good;
  put_u32(b, 40, 12);
  CHECK(error_of(b) == FpoFormatErrorKind::CorruptHeader);
  b = good;
  put_u32(b, 60, 0x80000000u);
  CHECK(error_of(b) == FpoFormatErrorKind::CorruptHeader);
  CHECK(error_of(std::vector<uint8_t>(good.begin(), good.end() - 1)) == FpoFormatErrorKind::TruncatedPayload);
  b = good;
  b.push_back(0);
  CHECK(error_of(b) == FpoFormatErrorKind::CorruptHeader);
  b = good;
  put_u32(b, 64, 0);  // root points to itself
  CHECK(error_of(b) == FpoFormatErrorKind::IntegrityFailure);
  b = good;
  put_f32(b, b.size() - 4, INFINITY);
  CHECK(error_of(b) == FpoFormatErrorKind::IntegrityFailure);
  // a static file must have T = n1 = n2 = 1
  OccupancyGrid g(2);
  g.set(0, 0, 0, true);
  b = serialize(from_occupancy(fixtures::unit_box(), 2, g, 0));
  put_u32(b, 44, 3);
  CHECK(error_of(b) == FpoFormatErrorKind::CorruptHeader);

  const auto dir = fixtures::temp_dir("fpo_io_err");
  try {
    load(dir + "/missing.fpo");
    FAIL("missing file loaded");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Data);
  }
  CHECK_THROWS_AS(save(fixtures::random_tree(rng, 4, 0), dir + "/no/such/dir/x.fpo"), Error);
  for (auto k : {FpoFormatErrorKind::BadMagic, FpoFormatErrorKind::UnsupportedVersion, FpoFormatErrorKind::CorruptHeader,
                 FpoFormatErrorKind::TruncatedPayload, FpoFormatErrorKind::IntegrityFailure})
    CHECK(std::strlen(to_string(k)) > 0);
}

TEST_CASE("fuzzed files never crash the loader") {
  std::mt19937_64 rng(104);
  const std::vector<std::vector<uint8_t>> seeds{serialize(small_fpo(rng, 3, 2, 1, 4)),
                                                serialize(fixtures::random_tree(rng, 8, 1))};
  int structured = 0, valid = 0;
  for (int i = 0; i < 10000; ++i) {
    auto b = seeds[static_cast<size_t>(i) % 2];
    const int edits = 1 + static_cast<int>(rng() % 4);
    for (int e = 0; e < edits; ++e) {
      switch (rng() % 6) {
        case 0:
          b[rng() % b.size()] ^= static_cast<uint8_t>(1u << (rng() % 8));
          break;
        case 1:
          b[rng() % b.size()] = static_cast<uint8_t>(rng());
          break;
        case 2:
          b.resize(rng() % (b.size() + 1));
          break;
        case 3:
          b.insert(b.begin() + static_cast<long>(rng() % (b.size() + 1)), static_cast<uint8_t>(rng()));
          break;
        case 4: {
          // header field rewrite
          const size_t off = 4 * (rng() % 16);
          if (b.size() >= off + 4) put_u32(b, off, static_cast<uint32_t>(rng() % 3 == 0 ? rng() : rng() % 64));
          break;
        }
        default:
          // node slot rewrite
          if (b.size() > 96) put_u32(b, 64 + 4 * (rng() % ((b.size() - 64) / 4)), static_cast<uint32_t>(rng() % 2 ? rng() % 64 : rng()));
      }
      if (b.empty()) break;
    }
    try {
      const FpoModel m = deserialize(b);
      ++valid;
      const auto again = std::visit([](const auto& x) { return serialize(x); }, m);
      CHECK(deserialize(again).index() == m.index());
    } catch (const FpoFormatError&) {
      ++structured;
    }
  }
  MESSAGE(structured, " structured errors, ", valid, " valid trees");
  CHECK(structured + valid == 10000);
}
