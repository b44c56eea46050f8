#include "fpoct/octree.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <string>

#include "fpoct/error.hpp"

namespace fpoct {

namespace {

OctreeNode empty_node() {
  OctreeNode n;
  n.fill(kEmptySlot);
  return n;
}

void check_domain(const Aabb& bbox, int grid_n) {
  if (!bbox.valid() || !bbox.is_cube(1e-9 * std::max(1.0, bbox.side())))
    throw config_error("octree bounding box must be a non-degenerate cube");
  if (!is_power_of_two(grid_n) || grid_n < 2 || grid_n > (1 << 20))
    throw config_error("grid resolution must be a power of two in [2, 2^20], got " + std::to_string(grid_n));
}

bool same_domain(const Topology& a, const Topology& b) {
  const double tol = 1e-9 * std::max(1.0, a.bbox.side());
  return a.grid_n == b.grid_n && (a.bbox.min - b.bbox.min).cwiseAbs().maxCoeff() <= tol &&
         (a.bbox.max - b.bbox.max).cwiseAbs().maxCoeff() <= tol;
}

}  // namespace

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

int Topology::max_depth() const { return std::countr_zero(static_cast<unsigned>(grid_n)); }

Vec3 Topology::cell_min(const Cell& c) const {
  const double s = cell_side(c.depth);
  return bbox.min + s * Vec3(c.x, c.y, c.z);
}

Vec3 Topology::cell_center(const Cell& c) const {
  const double s = cell_side(c.depth);
  return bbox.min + s * Vec3(c.x + 0.5, c.y + 0.5, c.z + 0.5);
}

Topology Topology::from_cells(const Aabb& bbox, int grid_n, std::span<const Cell> cells,
                              std::vector<uint32_t>* order) {
  check_domain(bbox, grid_n);
  const int max_d = std::countr_zero(static_cast<unsigned>(grid_n));
  if (cells.size() >= kLeafBit) throw config_error("too many leaves for 31-bit leaf ids");

  std::vector<OctreeNode> tmp(1, empty_node());
  for (size_t i = 0; i < cells.size(); ++i) {
    const Cell& c = cells[i];
    const uint32_t lim = 1u << c.depth;
    if (c.depth < 1 || c.depth > max_d || c.x >= lim || c.y >= lim || c.z >= lim)
      throw config_error("leaf cell out of range for grid " + std::to_string(grid_n));
    uint32_t node = 0;
    for (int level = 0; level + 1 < c.depth; ++level) {
      const int oct = c.octant_at(level);
      const uint32_t s = tmp[node][oct];
      if (s == kEmptySlot) {
        const auto fresh = static_cast<uint32_t>(tmp.size());
        tmp.push_back(empty_node());
        tmp[node][oct] = fresh;
        node = fresh;
      } else if (slot_is_leaf(s)) {
        throw config_error("overlapping leaf cells");
      } else {
        node = s;
      }
    }
    const int oct = c.octant_at(c.depth - 1);
    if (tmp[node][oct] != kEmptySlot) throw config_error("overlapping leaf cells");
    tmp[node][oct] = kLeafBit | static_cast<uint32_t>(i);
  }

  Topology out;
  out.bbox = bbox;
  out.grid_n = grid_n;
  out.nodes.push_back(empty_node());
  out.leaf_cells.reserve(cells.size());
  std::vector<uint32_t> new_id(cells.size(), 0);

  std::function<void(uint32_t, uint32_t, const Cell&)> renumber = [&](uint32_t src, uint32_t dst, const Cell& cell) {
    for (int oct = 0; oct < 8; ++oct) {
      const uint32_t s = tmp[src][oct];
      if (s == kEmptySlot) continue;
      const Cell child = cell.child(oct);
      if (slot_is_leaf(s)) {
        const auto id = static_cast<uint32_t>(out.leaf_cells.size());
        out.leaf_cells.push_back(child);
        new_id[slot_index(s)] = id;
        out.nodes[dst][oct] = kLeafBit | id;
      } else {
        const auto fresh = static_cast<uint32_t>(out.nodes.size());
        out.nodes.push_back(empty_node());
        out.nodes[dst][oct] = fresh;
        renumber(s, fresh, child);
      }
    }
  };
  renumber(0, 0, Cell{});
  if (order) *order = std::move(new_id);
  return out;
}

Topology Topology::from_nodes(const Aabb& bbox, int grid_n, std::vector<OctreeNode> nodes, size_t leaf_count) {
  check_domain(bbox, grid_n);
  if (nodes.empty()) throw data_error("node table is empty");
  if (leaf_count >= kLeafBit) throw data_error("leaf count exceeds 31-bit ids");
  const int max_d = std::countr_zero(static_cast<unsigned>(grid_n));

  std::vector<uint8_t> node_seen(nodes.size(), 0);
  std::vector<uint8_t> leaf_seen(leaf_count, 0);
  std::vector<Cell> cells(leaf_count);
  std::vector<std::pair<uint32_t, Cell>> stack{{0u, Cell{}}};
  node_seen[0] = 1;
  while (!stack.empty()) {
    const auto [node, cell] = stack.back();
    stack.pop_back();
    for (int oct = 0; oct < 8; ++oct) {
      const uint32_t s = nodes[node][oct];
      if (s == kEmptySlot) continue;
      const Cell child = cell.child(oct);
      if (slot_is_leaf(s)) {
        const uint32_t id = slot_index(s);
        if (id >= leaf_count) throw data_error("leaf reference out of range");
        if (leaf_seen[id]) throw data_error("leaf referenced more than once");
        if (child.depth > max_d) throw data_error("leaf deeper than grid resolution");
        leaf_seen[id] = 1;
        cells[id] = child;
      } else {
        if (s >= nodes.size()) throw data_error("node reference out of range");
        if (s == 0 || node_seen[s]) throw data_error("node referenced more than once (cycle or shared child)");
        if (child.depth >= max_d) throw data_error("internal node at leaf depth");
        node_seen[s] = 1;
        stack.push_back({s, child});
      }
    }
  }
  if (std::find(node_seen.begin(), node_seen.end(), 0) != node_seen.end())
    throw data_error("unreachable node");
  if (std::find(leaf_seen.begin(), leaf_seen.end(), 0) != leaf_seen.end())
    throw data_error("unreferenced leaf");

  Topology out;
  out.bbox = bbox;
  out.grid_n = grid_n;
  out.nodes = std::move(nodes);
  out.leaf_cells = std::move(cells);
  return out;
}

StaticLeaf Octree::leaf(size_t i) const {
  StaticLeaf l;
  l.sigma = sigma(i);
  l.sh = SHCoeffs(lmax);
  const auto src = sh(i);
  std::copy(src.begin(), src.end(), l.sh.values.begin());
  return l;
}

void Octree::set_leaf(size_t i, const StaticLeaf& value) {
  if (value.sh.lmax != lmax) throw config_error("leaf band limit does not match tree");
  sigma(i) = value.sigma;
  std::copy(value.sh.values.begin(), value.sh.values.end(), sh(i).begin());
}

size_t OccupancyGrid::count() const {
  return static_cast<size_t>(std::count_if(cells.begin(), cells.end(), [](uint8_t v) { return v != 0; }));
}

Octree from_occupancy(const Aabb& bbox, int grid_n, const OccupancyGrid& occupied, int lmax) {
  if (occupied.n != grid_n) throw config_error("occupancy grid size does not match grid_n");
  if (lmax < 0 || lmax > kMaxShBand) throw config_error("SH band limit outside 0..4");
  const int depth = std::countr_zero(static_cast<unsigned>(grid_n));
  std::vector<Cell> cells;
  for (int z = 0; z < grid_n; ++z)
    for (int y = 0; y < grid_n; ++y)
      for (int x = 0; x < grid_n; ++x)
        if (occupied.at(x, y, z))
          cells.push_back({depth, static_cast<uint32_t>(x), static_cast<uint32_t>(y), static_cast<uint32_t>(z)});
  if (cells.empty()) throw data_error("occupancy grid is empty: nothing to model");
  Octree tree;
  tree.topo = Topology::from_cells(bbox, grid_n, cells);
  tree.lmax = lmax;
  tree.payload.assign(tree.leaf_count() * tree.stride(), 0.0);
  return tree;
}

std::optional<uint32_t> lookup(const Topology& topo, const Vec3& p) {
  if (!topo.bbox.contains(p)) return std::nullopt;
  const int depth = topo.max_depth();
  const auto res = static_cast<uint32_t>(topo.grid_n);
  uint32_t ix[3];
  for (int a = 0; a < 3; ++a) {
    const double u = (p[a] - topo.bbox.min[a]) / topo.bbox.side() * res;
    ix[a] = std::min(static_cast<uint32_t>(std::max(0.0, std::floor(u))), res - 1);
  }
  uint32_t node = 0;
  for (int level = 0; level < depth; ++level) {
    const int shift = depth - 1 - level;
    const int oct = static_cast<int>(((ix[0] >> shift) & 1u) | (((ix[1] >> shift) & 1u) << 1) |
                                     (((ix[2] >> shift) & 1u) << 2));
    const uint32_t s = topo.nodes[node][oct];
    if (s == kEmptySlot) return std::nullopt;
    if (slot_is_leaf(s)) return slot_index(s);
    node = s;
  }
  return std::nullopt;
}

Topology union_topology(std::span<const Topology* const> topos) {
  if (topos.empty()) throw config_error("union of zero trees");
  for (const Topology* t : topos)
    if (!same_domain(*topos[0], *t)) throw config_error("union inputs have mismatched bounding boxes or grids");

  enum class Kind : uint8_t { Empty, Leaf, Node, Covered };
  struct State {
    Kind kind;
    uint32_t node;
  };
  std::vector<Cell> cells;
  std::function<void(const std::vector<State>&, const Cell&)> merge = [&](const std::vector<State>& states,
                                                                          const Cell& cell) {
    bool any_node = false, any_cover = false;
    for (const State& s : states) {
      any_node |= s.kind == Kind::Node;
      any_cover |= s.kind == Kind::Leaf || s.kind == Kind::Covered;
    }
    if (!any_node) {
      if (any_cover) cells.push_back(cell);
      return;
    }
    std::vector<State> child(states.size());
    for (int oct = 0; oct < 8; ++oct) {
      for (size_t i = 0; i < states.size(); ++i) {
        const State& s = states[i];
        if (s.kind == Kind::Node) {
          const uint32_t slot = topos[i]->nodes[s.node][oct];
          if (slot == kEmptySlot)
            child[i] = {Kind::Empty, 0};
          else if (slot_is_leaf(slot))
            child[i] = {Kind::Leaf, 0};
          else
            child[i] = {Kind::Node, slot};
        } else if (s.kind == Kind::Empty) {
          child[i] = {Kind::Empty, 0};
        } else {
          child[i] = {Kind::Covered, 0};
        }
      }
      merge(child, cell.child(oct));
    }
  };
  merge(std::vector<State>(topos.size(), State{Kind::Node, 0}), Cell{});
  return Topology::from_cells(topos[0]->bbox, topos[0]->grid_n, cells);
}

Topology union_topology(std::span<const Octree> trees) {
  if (trees.empty()) throw config_error("union of zero trees");
  std::vector<const Topology*> topos;
  for (const Octree& t : trees) {
    if (t.lmax != trees[0].lmax) throw config_error("union inputs have mismatched SH band limits");
    topos.push_back(&t.topo);
  }
  return union_topology(topos);
}

Octree broadcast(const Octree& tree, const Topology& topology) {
  if (!same_domain(tree.topo, topology)) throw config_error("broadcast target has a different domain");
  Octree out;
  out.topo = topology;
  out.lmax = tree.lmax;
  const size_t stride = tree.stride();
  out.payload.assign(topology.leaf_count() * stride, 0.0);
  for (size_t leaf = 0; leaf < topology.leaf_count(); ++leaf) {
    const Cell& cell = topology.leaf_cells[leaf];
    uint32_t node = 0;
    std::optional<uint32_t> source;
    bool reached = false;
    for (int level = 0; level < cell.depth; ++level) {
      const uint32_t s = tree.topo.nodes[node][cell.octant_at(level)];
      if (s == kEmptySlot) {
        reached = true;
        break;
      }
      if (slot_is_leaf(s)) {
        source = slot_index(s);
        reached = true;
        break;
      }
      node = s;
    }
    if (!reached) throw config_error("broadcast target is coarser than the source tree");
    if (source) {
      std::copy_n(tree.payload.begin() + static_cast<std::ptrdiff_t>(*source * stride), stride,
                  out.payload.begin() + static_cast<std::ptrdiff_t>(leaf * stride));
    }
  }
  return out;
}

std::pair<Topology, std::vector<uint32_t>> subset_topology(const Topology& topo, std::span<const uint8_t> keep) {
  std::vector<Cell> cells;
  std::vector<uint32_t> kept_ids;
  for (size_t i = 0; i < topo.leaf_count(); ++i) {
    if (keep[i]) {
      cells.push_back(topo.leaf_cells[i]);
      kept_ids.push_back(static_cast<uint32_t>(i));
    }
  }
  std::vector<uint32_t> order;
  Topology out = Topology::from_cells(topo.bbox, topo.grid_n, cells, &order);
  std::vector<uint32_t> old_of_new(kept_ids.size());
  for (size_t i = 0; i < kept_ids.size(); ++i) old_of_new[order[i]] = kept_ids[i];
  return {std::move(out), std::move(old_of_new)};
}

PruneResult prune(const Octree& tree, double sigma_threshold) {
  if (!(sigma_threshold >= 0.0)) throw config_error("prune threshold must be >= 0");
  std::vector<uint8_t> keep(tree.leaf_count());
  for (size_t i = 0; i < tree.leaf_count(); ++i) keep[i] = tree.sigma(i) >= sigma_threshold ? 1 : 0;
  auto [topo, old_of_new] = subset_topology(tree.topo, keep);
  PruneResult r;
  r.removed = tree.leaf_count() - old_of_new.size();
  r.tree.topo = std::move(topo);
  r.tree.lmax = tree.lmax;
  const size_t stride = tree.stride();
  r.tree.payload.resize(old_of_new.size() * stride);
  for (size_t i = 0; i < old_of_new.size(); ++i) {
    std::copy_n(tree.payload.begin() + static_cast<std::ptrdiff_t>(old_of_new[i] * stride), stride,
                r.tree.payload.begin() + static_cast<std::ptrdiff_t>(i * stride));
  }
  return r;
}

}  // namespace fpoct
