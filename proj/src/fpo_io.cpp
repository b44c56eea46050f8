#include "fpoct/fpo_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace fpoct {

namespace {

constexpr char kMagic[4] = {'F', 'P', 'O', 'C'};
constexpr uint32_t kMaxCoefficients = 1u << 16;
constexpr uint32_t kMaxGrid = 1u << 20;

class Writer {
 public:
  explicit Writer(size_t reserve) { buf_.reserve(reserve); }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<uint32_t>(v)); }
  void bytes(const char* p, size_t n) { buf_.insert(buf_.end(), p, p + n); }
  std::vector<uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<uint8_t> buf_;
};

uint32_t get_u32(std::span<const uint8_t> b, size_t off) {
  return static_cast<uint32_t>(b[off]) | static_cast<uint32_t>(b[off + 1]) << 8 |
         static_cast<uint32_t>(b[off + 2]) << 16 | static_cast<uint32_t>(b[off + 3]) << 24;
}

float get_f32(std::span<const uint8_t> b, size_t off) { return std::bit_cast<float>(get_u32(b, off)); }

[[noreturn]] void fail(FpoFormatErrorKind kind, const std::string& detail) { throw FpoFormatError(kind, detail); }

void write_header(Writer& w, const FpoHeader& h) {
  w.bytes(kMagic, 4);
  w.u32(kFpoVersion);
  w.u32(static_cast<uint32_t>(h.kind));
  for (float v : h.bbox) w.f32(v);
  w.u32(h.lmax);
  w.u32(h.grid_n);
  w.u32(h.frames);
  w.u32(h.n1);
  w.u32(h.n2);
  w.u32(h.node_count);
  w.u32(h.leaf_count);
}

FpoHeader header_for(const Topology& topo, int lmax) {
  if (topo.leaf_count() >= (size_t{1} << 31)) throw config_error("too many leaves for the .fpo format");
  FpoHeader h;
  for (int a = 0; a < 3; ++a) {
    h.bbox[a] = static_cast<float>(topo.bbox.min[a]);
    h.bbox[3 + a] = static_cast<float>(topo.bbox.max[a]);
  }
  h.lmax = static_cast<uint32_t>(lmax);
  h.grid_n = static_cast<uint32_t>(topo.grid_n);
  h.node_count = static_cast<uint32_t>(topo.nodes.size());
  h.leaf_count = static_cast<uint32_t>(topo.leaf_count());
  return h;
}

std::vector<uint8_t> serialize_impl(const FpoHeader& h, const Topology& topo, std::span<const double> payload) {
  if (topo.nodes.empty()) throw config_error("cannot serialize a tree without a root node");
  if (payload.size() != topo.leaf_count() * h.payload_len()) throw config_error("payload size does not match the leaf count");
  Writer w(static_cast<size_t>(h.file_size()));
  write_header(w, h);
  for (const OctreeNode& node : topo.nodes)
    for (uint32_t slot : node) w.u32(slot);
  for (double v : payload) w.f32(static_cast<float>(v));
  return w.take();
}

size_t write_file(const std::vector<uint8_t>& bytes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw data_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw data_error("failed writing " + path.string());
  return bytes.size();
}

}  // namespace

const char* to_string(FpoFormatErrorKind kind) {
  switch (kind) {
    case FpoFormatErrorKind::BadMagic: return "bad magic";
    case FpoFormatErrorKind::UnsupportedVersion: return "unsupported version";
    case FpoFormatErrorKind::CorruptHeader: return "corrupt header";
    case FpoFormatErrorKind::TruncatedPayload: return "truncated payload";
    case FpoFormatErrorKind::IntegrityFailure: return "integrity failure";
  }
  return "unknown";
}

uint64_t FpoHeader::payload_len() const {
  const uint64_t nsh3 = 3ull * (lmax + 1ull) * (lmax + 1ull);
  if (kind == FpoKind::Static) return 1 + nsh3;
  return n1 + static_cast<uint64_t>(n2) * nsh3;
}

uint64_t FpoHeader::file_size() const {
  return kFpoHeaderBytes + 32ull * node_count + 4ull * leaf_count * payload_len();
}

std::vector<uint8_t> serialize(const Octree& tree) {
  FpoHeader h = header_for(tree.topo, tree.lmax);
  h.kind = FpoKind::Static;
  return serialize_impl(h, tree.topo, tree.payload);
}

std::vector<uint8_t> serialize(const FourierOctree& fpo) {
  FpoHeader h = header_for(fpo.topo, fpo.config.lmax);
  h.kind = FpoKind::Fourier;
  h.frames = static_cast<uint32_t>(fpo.config.frames);
  h.n1 = static_cast<uint32_t>(fpo.config.n1);
  h.n2 = static_cast<uint32_t>(fpo.config.n2);
  return serialize_impl(h, fpo.topo, fpo.coeffs);
}

FpoHeader parse_header(std::span<const uint8_t> b) {
  const size_t m = std::min<size_t>(b.size(), 4);
  if (m > 0 && std::memcmp(b.data(), kMagic, m) != 0) fail(FpoFormatErrorKind::BadMagic, "not an .fpo file");
  if (b.size() < kFpoHeaderBytes) fail(FpoFormatErrorKind::CorruptHeader, "file shorter than the header");
  const uint32_t version = get_u32(b, 4);
  if (version != kFpoVersion) fail(FpoFormatErrorKind::UnsupportedVersion, "version " + std::to_string(version));
  const uint32_t kind = get_u32(b, 8);
  if (kind > 1) fail(FpoFormatErrorKind::CorruptHeader, "unknown kind " + std::to_string(kind));
  FpoHeader h;
  h.kind = static_cast<FpoKind>(kind);
  for (int i = 0; i < 6; ++i) h.bbox[i] = get_f32(b, 12 + 4 * static_cast<size_t>(i));
  h.lmax = get_u32(b, 36);
  h.grid_n = get_u32(b, 40);
  h.frames = get_u32(b, 44);
  h.n1 = get_u32(b, 48);
  h.n2 = get_u32(b, 52);
  h.node_count = get_u32(b, 56);
  h.leaf_count = get_u32(b, 60);

  for (float v : h.bbox)
    if (!std::isfinite(v)) fail(FpoFormatErrorKind::CorruptHeader, "non-finite bounding box");
  Aabb box{Vec3(h.bbox[0], h.bbox[1], h.bbox[2]), Vec3(h.bbox[3], h.bbox[4], h.bbox[5])};
  if (!box.valid() || !box.is_cube(1e-5)) fail(FpoFormatErrorKind::CorruptHeader, "bounding box is not a cube");
  if (h.lmax > static_cast<uint32_t>(kMaxShBand)) fail(FpoFormatErrorKind::CorruptHeader, "unsupported lmax");
  if (h.grid_n < 2 || h.grid_n > kMaxGrid || (h.grid_n & (h.grid_n - 1)) != 0)
    fail(FpoFormatErrorKind::CorruptHeader, "grid_n must be a power of two");
  if (h.kind == FpoKind::Static && (h.frames != 1 || h.n1 != 1 || h.n2 != 1))
    fail(FpoFormatErrorKind::CorruptHeader, "static tree must have T = n1 = n2 = 1");
  if (h.frames < 1 || h.n1 < 1 || h.n2 < 1 || h.frames > kMaxCoefficients || h.n1 > kMaxCoefficients ||
      h.n2 > kMaxCoefficients)
    fail(FpoFormatErrorKind::CorruptHeader, "frame or coefficient count out of range");
  if (h.node_count < 1) fail(FpoFormatErrorKind::CorruptHeader, "no root node");
  if (h.leaf_count >= (1u << 31)) fail(FpoFormatErrorKind::CorruptHeader, "leaf count out of range");
  return h;
}

FpoModel deserialize(std::span<const uint8_t> b) {
  const FpoHeader h = parse_header(b);
  const uint64_t expected = h.file_size();
  if (b.size() < expected)
    fail(FpoFormatErrorKind::TruncatedPayload,
         "expected " + std::to_string(expected) + " bytes, found " + std::to_string(b.size()));
  if (b.size() > expected)
    fail(FpoFormatErrorKind::CorruptHeader, "counts do not match file size (" + std::to_string(b.size() - expected) +
                                                " trailing bytes)");

  std::vector<OctreeNode> nodes(h.node_count);
  size_t off = kFpoHeaderBytes;
  for (OctreeNode& node : nodes)
    for (uint32_t& slot : node) {
      slot = get_u32(b, off);
      off += 4;
    }
  const Aabb box{Vec3(h.bbox[0], h.bbox[1], h.bbox[2]), Vec3(h.bbox[3], h.bbox[4], h.bbox[5])};
  Topology topo;
  try {
    topo = Topology::from_nodes(box, static_cast<int>(h.grid_n), std::move(nodes), h.leaf_count);
  } catch (const Error& e) {
    fail(FpoFormatErrorKind::IntegrityFailure, e.what());
  }

  const uint64_t count = static_cast<uint64_t>(h.leaf_count) * h.payload_len();
  std::vector<double> payload(static_cast<size_t>(count));
  for (double& v : payload) {
    const float f = get_f32(b, off);
    off += 4;
    if (!std::isfinite(f)) fail(FpoFormatErrorKind::IntegrityFailure, "non-finite payload value");
    v = f;
  }

  if (h.kind == FpoKind::Static) {
    Octree tree;
    tree.topo = std::move(topo);
    tree.lmax = static_cast<int>(h.lmax);
    tree.payload = std::move(payload);
    return tree;
  }
  FourierOctree fpo;
  fpo.topo = std::move(topo);
  fpo.config.n1 = static_cast<int>(h.n1);
  fpo.config.n2 = static_cast<int>(h.n2);
  fpo.config.lmax = static_cast<int>(h.lmax);
  fpo.config.frames = static_cast<int>(h.frames);
  fpo.coeffs = std::move(payload);
  return fpo;
}

size_t save(const Octree& tree, const std::filesystem::path& path) { return write_file(serialize(tree), path); }

size_t save(const FourierOctree& fpo, const std::filesystem::path& path) { return write_file(serialize(fpo), path); }

std::vector<uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open " + path.string());
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

FpoModel load(const std::filesystem::path& path) { return deserialize(read_file(path)); }

}  // namespace fpoct
