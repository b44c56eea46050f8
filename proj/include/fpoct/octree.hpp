#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fpoct/bases.hpp"
#include "fpoct/geometry.hpp"

namespace fpoct {

/// Child slot encoding, shared with the .fpo node table.
inline constexpr uint32_t kEmptySlot = 0xFFFFFFFFu;
inline constexpr uint32_t kLeafBit = 0x80000000u;

inline bool slot_is_leaf(uint32_t s) { return s != kEmptySlot && (s & kLeafBit) != 0; }
inline bool slot_is_node(uint32_t s) { return (s & kLeafBit) == 0; }
inline uint32_t slot_index(uint32_t s) { return s & ~kLeafBit; }

/// Children are numbered x | y<<1 | z<<2.
using OctreeNode = std::array<uint32_t, 8>;

/// A cube at some depth, addressed by integer coordinates in [0, 2^depth).
struct Cell {
  int depth = 0;
  uint32_t x = 0, y = 0, z = 0;

  Cell child(int octant) const {
    return {depth + 1, 2 * x + (octant & 1), 2 * y + ((octant >> 1) & 1), 2 * z + ((octant >> 2) & 1)};
  }
  /// Octant of the ancestor-to-descendant step taken at depth `level` (0-based) on the way to this cell.
  int octant_at(int level) const {
    const int shift = depth - 1 - level;
    return static_cast<int>(((x >> shift) & 1u) | (((y >> shift) & 1u) << 1) | (((z >> shift) & 1u) << 2));
  }
  bool operator==(const Cell&) const = default;
};

/// Tree structure over a cube domain. Node 0 is the root and always exists.
/// Leaves are at depth 1..log2(grid_n).
struct Topology {
  Aabb bbox;
  int grid_n = 2;
  std::vector<OctreeNode> nodes;
  std::vector<Cell> leaf_cells;  ///< indexed by leaf id

  int max_depth() const;
  size_t leaf_count() const { return leaf_cells.size(); }
  double cell_side(int depth) const { return bbox.side() / static_cast<double>(1u << depth); }
  Vec3 cell_min(const Cell& c) const;
  Vec3 cell_center(const Cell& c) const;

  bool operator==(const Topology& o) const {
    return grid_n == o.grid_n && bbox.min == o.bbox.min && bbox.max == o.bbox.max && nodes == o.nodes &&
           leaf_cells == o.leaf_cells;
  }

  /// Builds the canonical (depth-first, octant-ordered) tree holding exactly `cells` as leaves.
  /// `order`, when given, receives the new leaf id of each input cell.
  /// Throws when cells overlap or are out of range.
  static Topology from_cells(const Aabb& bbox, int grid_n, std::span<const Cell> cells,
                             std::vector<uint32_t>* order = nullptr);

  /// Validates an explicit node table and derives leaf cells. Throws a data Error naming the
  /// violated property (out-of-range reference, shared child, cycle, unreachable entry, depth).
  static Topology from_nodes(const Aabb& bbox, int grid_n, std::vector<OctreeNode> nodes, size_t leaf_count);
};

/// Density plus SH color for one frame.
struct StaticLeaf {
  double sigma = 0.0;
  SHCoeffs sh;
};

/// Static PlenOctree. Payload per leaf is [sigma, sh[basis][channel]...], stored contiguously.
struct Octree {
  Topology topo;
  int lmax = 2;
  std::vector<double> payload;

  size_t stride() const { return 1 + 3 * static_cast<size_t>(sh_count(lmax)); }
  size_t leaf_count() const { return topo.leaf_count(); }

  double& sigma(size_t leaf) { return payload[leaf * stride()]; }
  double sigma(size_t leaf) const { return payload[leaf * stride()]; }
  std::span<double> sh(size_t leaf) { return {payload.data() + leaf * stride() + 1, stride() - 1}; }
  std::span<const double> sh(size_t leaf) const { return {payload.data() + leaf * stride() + 1, stride() - 1}; }

  StaticLeaf leaf(size_t i) const;
  void set_leaf(size_t i, const StaticLeaf& value);
};

/// Dense boolean voxel grid, x fastest.
struct OccupancyGrid {
  int n = 0;
  std::vector<uint8_t> cells;

  explicit OccupancyGrid(int size = 0)
      : n(size), cells(static_cast<size_t>(size) * static_cast<size_t>(size) * static_cast<size_t>(size), 0) {}
  size_t index(int x, int y, int z) const {
    return static_cast<size_t>(x) + static_cast<size_t>(n) * (static_cast<size_t>(y) + static_cast<size_t>(n) * z);
  }
  bool at(int x, int y, int z) const { return cells[index(x, y, z)] != 0; }
  void set(int x, int y, int z, bool v) { cells[index(x, y, z)] = v ? 1 : 0; }
  size_t count() const;
};

bool is_power_of_two(int n);

/// Leaves are exactly the occupied voxels at depth log2(grid_n), payloads zero.
Octree from_occupancy(const Aabb& bbox, int grid_n, const OccupancyGrid& occupied, int lmax);

/// Leaf containing p, half-open per axis with the global max face closed.
std::optional<uint32_t> lookup(const Topology& topo, const Vec3& p);

/// Coarsest topology refining every input.
Topology union_topology(std::span<const Topology* const> topos);
Topology union_topology(std::span<const Octree> trees);

/// Re-expresses tree on a refining topology. Split leaves copy their payload into every
/// descendant; cells the source does not cover are zero-filled. Throws when topology is
/// coarser than the source anywhere.
Octree broadcast(const Octree& tree, const Topology& topology);

struct PruneResult {
  Octree tree;
  size_t removed = 0;
};

/// Drops leaves with sigma < threshold and collapses empty internal nodes.
PruneResult prune(const Octree& tree, double sigma_threshold = 1e-3);

/// Keeps the leaves flagged in keep. Returns the new topology and the old leaf id of each new leaf.
std::pair<Topology, std::vector<uint32_t>> subset_topology(const Topology& topo, std::span<const uint8_t> keep);

}  // namespace fpoct
