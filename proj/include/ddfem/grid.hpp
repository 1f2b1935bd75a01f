#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ddfem/common.hpp"

namespace ddfem {

// ---------------------------------------------------------------------------
// Reference element: the unit square with a uniform (n_cells+1)^2 nodal
// grid, row-major with y as the slow index. All element types share this
// discretization; only the trained bases differ.
// ---------------------------------------------------------------------------

struct ElementGrid {
  int n_cells = 0;
  double h = 0.0;
  std::vector<std::pair<double, double>> node_coords;  // (x, y), row-major

  int n_nodes() const { return (n_cells + 1) * (n_cells + 1); }
  int nodes_per_edge() const { return n_cells + 1; }
  int local_index(int i, int j) const { return i * (n_cells + 1) + j; }
};

inline ElementGrid build_element_grid(int n_cells) {
  if (n_cells < 2)
    throw Error(ErrorKind::InvalidResolution,
                "element grid needs n_cells >= 2, got " + std::to_string(n_cells));
  ElementGrid g;
  g.n_cells = n_cells;
  g.h = 1.0 / n_cells;
  g.node_coords.reserve(static_cast<std::size_t>(g.n_nodes()));
  for (int i = 0; i <= n_cells; ++i)
    for (int j = 0; j <= n_cells; ++j)
      g.node_coords.emplace_back(j * g.h, i * g.h);
  return g;
}

// Local index sets of the reference element, independent of where the
// element lands in a layout. Edge-interior sets exclude the four corner
// nodes; corners are listed separately because a corner is shared by up
// to four elements in an assembled layout and needs its own coupling slot.
enum class EdgeSide { Left, Right, Bottom, Top };

struct ElementIndexSets {
  std::vector<int> interior;                  // (n_cells-1)^2 nodes
  std::array<std::vector<int>, 4> edge_interior;  // by EdgeSide, n_cells-1 each
  std::array<int, 4> corners{};               // bl, br, tl, tr
  std::vector<int> ring;                      // all non-interior nodes

  const std::vector<int>& edge(EdgeSide s) const {
    return edge_interior[static_cast<int>(s)];
  }
};

inline ElementIndexSets element_index_sets(const ElementGrid& grid) {
  const int n = grid.n_cells;
  ElementIndexSets s;
  for (int i = 1; i < n; ++i)
    for (int j = 1; j < n; ++j) s.interior.push_back(grid.local_index(i, j));
  for (int i = 1; i < n; ++i) {
    s.edge_interior[static_cast<int>(EdgeSide::Left)].push_back(grid.local_index(i, 0));
    s.edge_interior[static_cast<int>(EdgeSide::Right)].push_back(grid.local_index(i, n));
  }
  for (int j = 1; j < n; ++j) {
    s.edge_interior[static_cast<int>(EdgeSide::Bottom)].push_back(grid.local_index(0, j));
    s.edge_interior[static_cast<int>(EdgeSide::Top)].push_back(grid.local_index(n, j));
  }
  s.corners = {grid.local_index(0, 0), grid.local_index(0, n),
               grid.local_index(n, 0), grid.local_index(n, n)};
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j)
      if (i == 0 || i == n || j == 0 || j == n) s.ring.push_back(grid.local_index(i, j));
  return s;
}

// Full ordered trace of one element edge, endpoints included, running in
// the direction of increasing coordinate along the edge.
inline std::vector<int> full_edge_trace(const ElementGrid& grid, EdgeSide side) {
  const int n = grid.n_cells;
  std::vector<int> t;
  t.reserve(static_cast<std::size_t>(n + 1));
  switch (side) {
    case EdgeSide::Left:
      for (int i = 0; i <= n; ++i) t.push_back(grid.local_index(i, 0));
      break;
    case EdgeSide::Right:
      for (int i = 0; i <= n; ++i) t.push_back(grid.local_index(i, n));
      break;
    case EdgeSide::Bottom:
      for (int j = 0; j <= n; ++j) t.push_back(grid.local_index(0, j));
      break;
    case EdgeSide::Top:
      for (int j = 0; j <= n; ++j) t.push_back(grid.local_index(n, j));
      break;
  }
  return t;
}

// ---------------------------------------------------------------------------
// Global layout: an M x N tiling of unit-square elements over
// [0, N] x [0, M], with either a zero-Dirichlet outer boundary or fully
// periodic wrap-around coupling.
// ---------------------------------------------------------------------------

enum class BcKind { DirichletZero, Periodic };

struct GlobalLayout {
  int rows = 0;  // M
  int cols = 0;  // N
  BcKind bc_kind = BcKind::DirichletZero;
  bool allow_self_wrap = false;  // permits periodic wrap onto the same element
  std::vector<std::string> element_type;  // per cell, row-major (r * cols + c)

  int n_elements() const { return rows * cols; }
  int cell_index(int r, int c) const { return r * cols + c; }
  const std::string& type_of(int r, int c) const {
    return element_type[static_cast<std::size_t>(cell_index(r, c))];
  }
};

inline void validate_layout(const GlobalLayout& layout) {
  if (layout.rows < 1 || layout.cols < 1)
    throw Error(ErrorKind::LayoutIncomplete, "layout needs rows, cols >= 1");
  if (layout.element_type.size() != static_cast<std::size_t>(layout.n_elements()))
    throw Error(ErrorKind::LayoutIncomplete,
                "layout type map covers " + std::to_string(layout.element_type.size()) +
                    " of " + std::to_string(layout.n_elements()) + " cells");
  for (const auto& t : layout.element_type)
    if (t.empty())
      throw Error(ErrorKind::LayoutIncomplete, "layout has a cell without an element type");
  if (layout.bc_kind == BcKind::Periodic &&
      (layout.rows < 2 || layout.cols < 2) && !layout.allow_self_wrap)
    throw Error(ErrorKind::LayoutIncomplete,
                "periodic wrap with rows or cols == 1 pairs an element edge with "
                "itself; set allow_self_wrap to opt in");
}

inline GlobalLayout build_layout(int rows, int cols, const std::string& uniform_type,
                                 BcKind bc, bool allow_self_wrap = false) {
  GlobalLayout layout;
  layout.rows = rows;
  layout.cols = cols;
  layout.bc_kind = bc;
  layout.allow_self_wrap = allow_self_wrap;
  layout.element_type.assign(static_cast<std::size_t>(rows) * cols, uniform_type);
  validate_layout(layout);
  return layout;
}

// Variant with an explicit per-cell type map; every cell must be covered.
inline GlobalLayout build_layout(int rows, int cols,
                                 const std::map<std::pair<int, int>, std::string>& type_map,
                                 BcKind bc, bool allow_self_wrap = false) {
  GlobalLayout layout;
  layout.rows = rows;
  layout.cols = cols;
  layout.bc_kind = bc;
  layout.allow_self_wrap = allow_self_wrap;
  layout.element_type.assign(static_cast<std::size_t>(rows) * cols, std::string());
  for (const auto& [cell, type] : type_map) {
    auto [r, c] = cell;
    if (r < 0 || r >= rows || c < 0 || c >= cols)
      throw Error(ErrorKind::LayoutIncomplete,
                  "type map cell (" + std::to_string(r) + "," + std::to_string(c) +
                      ") outside layout");
    layout.element_type[static_cast<std::size_t>(layout.cell_index(r, c))] = type;
  }
  validate_layout(layout);
  return layout;
}

// ---------------------------------------------------------------------------
// Interface edges. Vertical edges (x = const, shared left/right) come
// first in row-major order of the left cell, then horizontal edges, then
// periodic wrap edges in the same sub-order. Side A is always the
// lower-index cell of the non-wrapped pair (the right/top edge of A meets
// the left/bottom edge of B).
// ---------------------------------------------------------------------------

enum class EdgeClass { Vertical, Horizontal };

struct InterfaceEdge {
  int id = 0;
  EdgeClass edge_class = EdgeClass::Vertical;
  int cell_a = 0;  // element index, side A
  int cell_b = 0;  // element index, side B
  EdgeSide side_a = EdgeSide::Right;  // edge of A on this interface
  EdgeSide side_b = EdgeSide::Left;
  bool wrap = false;  // periodic wrap-around edge
};

inline std::vector<InterfaceEdge> enumerate_interface_edges(const GlobalLayout& layout) {
  std::vector<InterfaceEdge> edges;
  int id = 0;
  auto add = [&](EdgeClass cls, int a, int b, EdgeSide sa, EdgeSide sb, bool wrap) {
    edges.push_back({id++, cls, a, b, sa, sb, wrap});
  };
  for (int r = 0; r < layout.rows; ++r)
    for (int c = 0; c + 1 < layout.cols; ++c)
      add(EdgeClass::Vertical, layout.cell_index(r, c), layout.cell_index(r, c + 1),
          EdgeSide::Right, EdgeSide::Left, false);
  for (int r = 0; r + 1 < layout.rows; ++r)
    for (int c = 0; c < layout.cols; ++c)
      add(EdgeClass::Horizontal, layout.cell_index(r, c), layout.cell_index(r + 1, c),
          EdgeSide::Top, EdgeSide::Bottom, false);
  if (layout.bc_kind == BcKind::Periodic) {
    for (int r = 0; r < layout.rows; ++r)
      add(EdgeClass::Vertical, layout.cell_index(r, layout.cols - 1), layout.cell_index(r, 0),
          EdgeSide::Right, EdgeSide::Left, true);
    for (int c = 0; c < layout.cols; ++c)
      add(EdgeClass::Horizontal, layout.cell_index(layout.rows - 1, c), layout.cell_index(0, c),
          EdgeSide::Top, EdgeSide::Bottom, true);
  }
  return edges;
}

// ---------------------------------------------------------------------------
// DofMap: conforming global numbering plus the interior / interface /
// outer-boundary split of every element's local nodes.
// ---------------------------------------------------------------------------

struct DofMap {
  int rows = 0, cols = 0, n_cells = 0;
  BcKind bc_kind = BcKind::DirichletZero;

  int n_global = 0;                       // conforming global node count
  int nx = 0, ny = 0;                     // global grid extents (nodes per axis)
  std::vector<std::vector<int>> local_to_global;  // per element
  std::vector<InterfaceEdge> edges;
  // Full ordered traces per edge: local node indices on each side,
  // length n_cells+1, geometrically coincident pairwise (mod the domain
  // period for wrap edges).
  std::vector<std::vector<int>> edge_trace_a;
  std::vector<std::vector<int>> edge_trace_b;
  std::vector<std::vector<int>> interior_sets;   // per element, local indices
  std::vector<std::vector<int>> interface_sets;  // per element, local indices (union over edges)
  std::vector<std::vector<int>> boundary_sets;   // per element, outer Dirichlet local indices
  std::vector<bool> global_constrained;          // Dirichlet tag per global node

  int n_free = 0;
  std::vector<int> global_to_free;  // -1 for constrained nodes
  std::vector<int> free_to_global;

  int element_of(int r, int c) const { return r * cols + c; }
  int global_node(int element, int local) const {
    return local_to_global[static_cast<std::size_t>(element)][static_cast<std::size_t>(local)];
  }
};

inline DofMap build_dof_map(const GlobalLayout& layout, const ElementGrid& grid) {
  validate_layout(layout);
  const int n = grid.n_cells;
  DofMap dm;
  dm.rows = layout.rows;
  dm.cols = layout.cols;
  dm.n_cells = n;
  dm.bc_kind = layout.bc_kind;

  const bool periodic = layout.bc_kind == BcKind::Periodic;
  dm.nx = periodic ? layout.cols * n : layout.cols * n + 1;
  dm.ny = periodic ? layout.rows * n : layout.rows * n + 1;
  dm.n_global = dm.nx * dm.ny;

  auto global_at = [&](int gy, int gx) {
    if (periodic) {
      gy = ((gy % dm.ny) + dm.ny) % dm.ny;
      gx = ((gx % dm.nx) + dm.nx) % dm.nx;
    }
    return gy * dm.nx + gx;
  };

  dm.local_to_global.resize(static_cast<std::size_t>(layout.n_elements()));
  for (int r = 0; r < layout.rows; ++r)
    for (int c = 0; c < layout.cols; ++c) {
      auto& l2g = dm.local_to_global[static_cast<std::size_t>(dm.element_of(r, c))];
      l2g.resize(static_cast<std::size_t>(grid.n_nodes()));
      for (int i = 0; i <= n; ++i)
        for (int j = 0; j <= n; ++j)
          l2g[static_cast<std::size_t>(grid.local_index(i, j))] = global_at(r * n + i, c * n + j);
    }

  dm.edges = enumerate_interface_edges(layout);
  dm.edge_trace_a.reserve(dm.edges.size());
  dm.edge_trace_b.reserve(dm.edges.size());
  for (const auto& e : dm.edges) {
    dm.edge_trace_a.push_back(full_edge_trace(grid, e.side_a));
    dm.edge_trace_b.push_back(full_edge_trace(grid, e.side_b));
  }

  // Dirichlet tagging: outer rim of the global grid.
  dm.global_constrained.assign(static_cast<std::size_t>(dm.n_global), false);
  if (!periodic) {
    for (int gy = 0; gy < dm.ny; ++gy)
      for (int gx = 0; gx < dm.nx; ++gx)
        if (gy == 0 || gy == dm.ny - 1 || gx == 0 || gx == dm.nx - 1)
          dm.global_constrained[static_cast<std::size_t>(gy * dm.nx + gx)] = true;
  }
  dm.global_to_free.assign(static_cast<std::size_t>(dm.n_global), -1);
  for (int g = 0; g < dm.n_global; ++g)
    if (!dm.global_constrained[static_cast<std::size_t>(g)]) {
      dm.global_to_free[static_cast<std::size_t>(g)] = dm.n_free++;
      dm.free_to_global.push_back(g);
    }

  // Per-element interior / interface / outer-boundary partition.
  const int n_loc = grid.n_nodes();
  dm.interior_sets.resize(static_cast<std::size_t>(layout.n_elements()));
  dm.interface_sets.resize(static_cast<std::size_t>(layout.n_elements()));
  dm.boundary_sets.resize(static_cast<std::size_t>(layout.n_elements()));
  std::vector<char> on_interface(static_cast<std::size_t>(n_loc));
  for (int e = 0; e < layout.n_elements(); ++e) {
    std::fill(on_interface.begin(), on_interface.end(), 0);
    for (std::size_t k = 0; k < dm.edges.size(); ++k) {
      if (dm.edges[k].cell_a == e)
        for (int loc : dm.edge_trace_a[k]) on_interface[static_cast<std::size_t>(loc)] = 1;
      if (dm.edges[k].cell_b == e)
        for (int loc : dm.edge_trace_b[k]) on_interface[static_cast<std::size_t>(loc)] = 1;
    }
    for (int loc = 0; loc < n_loc; ++loc) {
      const int g = dm.global_node(e, loc);
      if (on_interface[static_cast<std::size_t>(loc)] &&
          !dm.global_constrained[static_cast<std::size_t>(g)])
        dm.interface_sets[static_cast<std::size_t>(e)].push_back(loc);
      else if (dm.global_constrained[static_cast<std::size_t>(g)])
        dm.boundary_sets[static_cast<std::size_t>(e)].push_back(loc);
      else
        dm.interior_sets[static_cast<std::size_t>(e)].push_back(loc);
    }
  }
  return dm;
}

// Ordered (side A local, side B local) node pairs for one interface edge.
inline std::vector<std::pair<int, int>> interface_trace_indices(const DofMap& dm, int edge_id) {
  if (edge_id < 0 || edge_id >= static_cast<int>(dm.edges.size()))
    throw Error(ErrorKind::UnknownEdge, "no interface edge with id " + std::to_string(edge_id));
  std::vector<std::pair<int, int>> pairs;
  const auto& ta = dm.edge_trace_a[static_cast<std::size_t>(edge_id)];
  const auto& tb = dm.edge_trace_b[static_cast<std::size_t>(edge_id)];
  pairs.reserve(ta.size());
  for (std::size_t i = 0; i < ta.size(); ++i) pairs.emplace_back(ta[i], tb[i]);
  return pairs;
}

// Position of an element-local node in global coordinates (element (r, c)
// occupies [c, c+1] x [r, r+1]).
inline std::pair<double, double> global_coords(const ElementGrid& grid, int r, int c, int local) {
  const int stride = grid.n_cells + 1;
  const int i = local / stride;
  const int j = local % stride;
  return {c + j * grid.h, r + i * grid.h};
}

}  // namespace ddfem
