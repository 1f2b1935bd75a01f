#pragma once

#include <Eigen/Cholesky>
#include <map>
#include <string>
#include <vector>

#include "ddfem/basis.hpp"
#include "ddfem/fom.hpp"

namespace ddfem {

enum class Formulation { StrongCondensation, DgPenalty, ConstrainedResidual };

inline std::string formulation_name(Formulation f) {
  switch (f) {
    case Formulation::StrongCondensation: return "strong_condensation";
    case Formulation::DgPenalty: return "dg_penalty";
    case Formulation::ConstrainedResidual: return "constrained_residual";
  }
  return "?";
}

struct CouplingConfig {
  Formulation formulation = Formulation::DgPenalty;
  double eta = 10.0;             // dimensionless; face terms scale it by 1/h
  double constraint_tol = 1e-10;  // relative singular-value cutoff for C
};

// ---------------------------------------------------------------------------
// Pretrained element library: one ComponentBasis per element type, all on
// the same reference grid.
// ---------------------------------------------------------------------------

struct ComponentLibrary {
  std::map<std::string, ComponentBasis> entries;
  int n_cells = 0;
  int n_components = 1;

  void add(ComponentBasis cb) {
    if (entries.empty()) {
      n_cells = cb.n_cells;
      n_components = cb.n_components;
    } else if (cb.n_cells != n_cells || cb.n_components != n_components) {
      throw Error(ErrorKind::Compatibility,
                  "library entries must share n_cells and component count");
    }
    entries[cb.element_type] = std::move(cb);
  }

  const ComponentBasis& at(const std::string& type) const {
    auto it = entries.find(type);
    if (it == entries.end())
      throw Error(ErrorKind::Compatibility, "no trained basis for element type '" + type + "'");
    return it->second;
  }
};

// ---------------------------------------------------------------------------
// Q1 face operators: nodal traces and outward normal-derivative traces
// are continuous piecewise-linear along a face, so face integrals are
// exact under the 1-D P1 mass matrix.
// ---------------------------------------------------------------------------

namespace detail {

inline Eigen::MatrixXd face_mass_1d(const ElementGrid& grid) {
  const int n = grid.n_cells;
  const double h = grid.h;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n + 1, n + 1);
  for (int s = 0; s < n; ++s) {
    m(s, s) += h / 3.0;
    m(s + 1, s + 1) += h / 3.0;
    m(s, s + 1) += h / 6.0;
    m(s + 1, s) += h / 6.0;
  }
  return m;
}

inline Eigen::MatrixXd trace_matrix(const ElementGrid& grid, EdgeSide side) {
  const auto trace = full_edge_trace(grid, side);
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(trace.size()), grid.n_nodes());
  for (std::size_t k = 0; k < trace.size(); ++k) t(static_cast<Eigen::Index>(k), trace[k]) = 1.0;
  return t;
}

// Outward normal derivative along a face, evaluated at face nodes.
inline Eigen::MatrixXd normal_derivative_matrix(const ElementGrid& grid, EdgeSide side) {
  const int n = grid.n_cells;
  const double invh = 1.0 / grid.h;
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n + 1, grid.n_nodes());
  for (int k = 0; k <= n; ++k) {
    switch (side) {
      case EdgeSide::Right:
        d(k, grid.local_index(k, n)) = invh;
        d(k, grid.local_index(k, n - 1)) = -invh;
        break;
      case EdgeSide::Left:
        d(k, grid.local_index(k, 0)) = invh;
        d(k, grid.local_index(k, 1)) = -invh;
        break;
      case EdgeSide::Top:
        d(k, grid.local_index(n, k)) = invh;
        d(k, grid.local_index(n - 1, k)) = -invh;
        break;
      case EdgeSide::Bottom:
        d(k, grid.local_index(0, k)) = invh;
        d(k, grid.local_index(1, k)) = -invh;
        break;
    }
  }
  return d;
}

// Symmetric interior-penalty contribution of one face, in local nodal
// space: -(G' M J + J' M G) + (eta/h) J' M J.
inline Eigen::MatrixXd sipg_face_matrix(const Eigen::MatrixXd& g, const Eigen::MatrixXd& j,
                                        const Eigen::MatrixXd& m1d, double eta_over_h) {
  Eigen::MatrixXd gm_j = g.transpose() * m1d * j;
  return -(gm_j + gm_j.transpose()) + eta_over_h * (j.transpose() * m1d * j);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// ReducedSystem: the assembled global reduced problem under one coupling
// formulation, immutable once built.
// ---------------------------------------------------------------------------

struct ReducedSystem {
  Formulation formulation = Formulation::DgPenalty;
  GlobalLayout layout;
  ElementGrid grid;
  DofMap dm;
  ComponentLibrary library;
  CouplingConfig coupling;
  int n_components = 1;
  int n_red = 0;

  // Monolithic formulations (dg_penalty, constrained_residual).
  std::vector<int> elem_offset;  // coordinate offset per element
  std::vector<int> elem_r;
  Eigen::SparseMatrix<double> reduced_operator;  // dg: coupled; constrained: block diagonal
  Eigen::MatrixXd constraints;                   // C (constrained only)
  Eigen::MatrixXd nullspace;                     // Z, orthonormal columns spanning null(C)

  // Strong condensation.
  struct PortInfo {
    bool corner = false;
    EdgeClass cls = EdgeClass::Vertical;
    int edge_id = -1;  // edge ports
    int vx = 0, vy = 0;  // corner ports: lattice vertex
    int offset = 0;
    int dim = 0;
  };
  struct StrongElement {
    Eigen::MatrixXd t_map;  // local nodal dofs x (r_int + attached port dims)
    int r_int = 0;
    std::vector<int> attached_ports;
    std::vector<int> attached_offset;  // column offset of each attached port within the tail
    Eigen::MatrixXd k_qq_chol;         // lower Cholesky factor
    Eigen::MatrixXd k_qp;
    Eigen::MatrixXd k_pp;
    Eigen::VectorXd f_q;
    Eigen::VectorXd f_p;
  };
  std::vector<PortInfo> ports;
  std::vector<StrongElement> strong_elems;
  Eigen::MatrixXd schur;

  Eigen::VectorXd load;  // dg/constrained: stacked reduced load; strong: condensed port rhs

  const PodBasis& element_basis(int element) const {
    const auto& type = layout.element_type[static_cast<std::size_t>(element)];
    return library.at(type).monolithic;
  }
};

// ---------------------------------------------------------------------------
// Reduced load. Per element the local consistent load is projected onto
// that element's trial map; the constrained formulation zeroes outer
// Dirichlet rows first (its element operators eliminate those nodes), the
// strong map has no support there, and the DG boundary terms vanish for a
// zero Dirichlet value.
// ---------------------------------------------------------------------------

inline Eigen::VectorXd reduced_load(const ReducedSystem& system, const SourceFn& source) {
  if (system.formulation == Formulation::StrongCondensation)
    throw Error(ErrorKind::InvalidConfig,
                "reduced_load: strong condensation builds its load during assembly");
  Eigen::VectorXd f = Eigen::VectorXd::Zero(system.n_red);
  for (int r = 0; r < system.layout.rows; ++r)
    for (int c = 0; c < system.layout.cols; ++c) {
      const int e = system.dm.element_of(r, c);
      Eigen::VectorXd b = element_load_vector(system.grid, r, c, source);
      if (system.formulation == Formulation::ConstrainedResidual)
        for (int loc : system.dm.boundary_sets[static_cast<std::size_t>(e)]) b[loc] = 0.0;
      const PodBasis& phi = system.element_basis(e);
      f.segment(system.elem_offset[static_cast<std::size_t>(e)],
                system.elem_r[static_cast<std::size_t>(e)]) = phi.modes.transpose() * b;
    }
  return f;
}

// ---------------------------------------------------------------------------
// DG (symmetric interior penalty) assembly. Internal faces couple
// neighboring elements; outer Dirichlet faces are folded into the
// per-element operator as Nitsche terms, which is what enforces the
// boundary condition on bases that do not vanish there.
// ---------------------------------------------------------------------------

inline ReducedSystem assemble_dg(const GlobalLayout& layout, const ElementGrid& grid,
                                 const ComponentLibrary& library, double eta,
                                 const SourceFn& source) {
  if (eta <= 0.0) throw Error(ErrorKind::InvalidConfig, "dg_penalty needs eta > 0");
  if (layout.bc_kind != BcKind::DirichletZero)
    throw Error(ErrorKind::InvalidConfig, "dg_penalty assembly expects a dirichlet_zero layout");
  if (library.n_components != 1)
    throw Error(ErrorKind::Compatibility, "dg_penalty assembly handles the scalar Poisson problem");
  if (library.n_cells != grid.n_cells)
    throw Error(ErrorKind::Compatibility, "basis archive grid does not match requested grid");

  ReducedSystem sys;
  sys.formulation = Formulation::DgPenalty;
  sys.layout = layout;
  sys.grid = grid;
  sys.dm = build_dof_map(layout, grid);
  sys.library = library;
  sys.coupling.formulation = Formulation::DgPenalty;
  sys.coupling.eta = eta;
  sys.n_components = 1;

  const int n_elems = layout.n_elements();
  sys.elem_offset.resize(static_cast<std::size_t>(n_elems));
  sys.elem_r.resize(static_cast<std::size_t>(n_elems));
  for (int e = 0; e < n_elems; ++e) {
    const auto& cb = library.at(layout.element_type[static_cast<std::size_t>(e)]);
    if (cb.kind != ComponentBasis::Kind::Monolithic)
      throw Error(ErrorKind::Compatibility, "dg_penalty needs monolithic element bases");
    sys.elem_offset[static_cast<std::size_t>(e)] = sys.n_red;
    sys.elem_r[static_cast<std::size_t>(e)] = cb.monolithic.r;
    sys.n_red += cb.monolithic.r;
  }

  const Eigen::SparseMatrix<double> a_vol = element_stiffness(grid);
  const Eigen::MatrixXd m1d = detail::face_mass_1d(grid);
  const double eta_over_h = eta / grid.h;

  std::array<Eigen::MatrixXd, 4> trace, deriv, nitsche;
  for (int s = 0; s < 4; ++s) {
    trace[static_cast<std::size_t>(s)] = detail::trace_matrix(grid, static_cast<EdgeSide>(s));
    deriv[static_cast<std::size_t>(s)] =
        detail::normal_derivative_matrix(grid, static_cast<EdgeSide>(s));
    nitsche[static_cast<std::size_t>(s)] = detail::sipg_face_matrix(
        deriv[static_cast<std::size_t>(s)], trace[static_cast<std::size_t>(s)], m1d, eta_over_h);
  }

  std::vector<Eigen::Triplet<double>> trips;
  auto add_block = [&](int row0, int col0, const Eigen::MatrixXd& block) {
    for (Eigen::Index i = 0; i < block.rows(); ++i)
      for (Eigen::Index j = 0; j < block.cols(); ++j)
        if (block(i, j) != 0.0) trips.emplace_back(row0 + static_cast<int>(i), col0 + static_cast<int>(j), block(i, j));
  };

  // Per-element operator: projected volume stiffness plus Nitsche terms on
  // the element's outer-boundary faces; cached per (type, boundary mask).
  std::map<std::pair<std::string, int>, Eigen::MatrixXd> elem_cache;
  for (int r = 0; r < layout.rows; ++r)
    for (int c = 0; c < layout.cols; ++c) {
      const int e = sys.dm.element_of(r, c);
      const std::string& type = layout.element_type[static_cast<std::size_t>(e)];
      int mask = 0;
      if (c == 0) mask |= 1 << static_cast<int>(EdgeSide::Left);
      if (c == layout.cols - 1) mask |= 1 << static_cast<int>(EdgeSide::Right);
      if (r == 0) mask |= 1 << static_cast<int>(EdgeSide::Bottom);
      if (r == layout.rows - 1) mask |= 1 << static_cast<int>(EdgeSide::Top);
      auto key = std::make_pair(type, mask);
      auto it = elem_cache.find(key);
      if (it == elem_cache.end()) {
        const PodBasis& phi = library.at(type).monolithic;
        Eigen::MatrixXd a_local(a_vol);
        for (int s = 0; s < 4; ++s)
          if (mask & (1 << s)) a_local += nitsche[static_cast<std::size_t>(s)];
        Eigen::MatrixXd projected = phi.modes.transpose() * a_local * phi.modes;
        projected = 0.5 * (projected + projected.transpose());
        it = elem_cache.emplace(key, std::move(projected)).first;
      }
      add_block(sys.elem_offset[static_cast<std::size_t>(e)], sys.elem_offset[static_cast<std::size_t>(e)],
                it->second);
    }

  // Internal face coupling.
  for (const auto& edge : sys.dm.edges) {
    const PodBasis& phi_a = sys.element_basis(edge.cell_a);
    const PodBasis& phi_b = sys.element_basis(edge.cell_b);
    const auto sa = static_cast<std::size_t>(edge.side_a);
    const auto sb = static_cast<std::size_t>(edge.side_b);
    const Eigen::MatrixXd& ja = trace[sa];
    const Eigen::MatrixXd jb = -trace[sb];
    const Eigen::MatrixXd ga = 0.5 * deriv[sa];
    const Eigen::MatrixXd gb = -0.5 * deriv[sb];

    auto face_block = [&](const Eigen::MatrixXd& gx, const Eigen::MatrixXd& jx,
                          const Eigen::MatrixXd& gy, const Eigen::MatrixXd& jy) {
      return (-(gx.transpose() * m1d * jy) - (jx.transpose() * m1d * gy) +
              eta_over_h * (jx.transpose() * m1d * jy))
          .eval();
    };
    Eigen::MatrixXd aa = phi_a.modes.transpose() * face_block(ga, ja, ga, ja) * phi_a.modes;
    Eigen::MatrixXd bb = phi_b.modes.transpose() * face_block(gb, jb, gb, jb) * phi_b.modes;
    Eigen::MatrixXd ab = phi_a.modes.transpose() * face_block(ga, ja, gb, jb) * phi_b.modes;
    aa = 0.5 * (aa + aa.transpose());
    bb = 0.5 * (bb + bb.transpose());
    const int oa = sys.elem_offset[static_cast<std::size_t>(edge.cell_a)];
    const int ob = sys.elem_offset[static_cast<std::size_t>(edge.cell_b)];
    add_block(oa, oa, aa);
    add_block(ob, ob, bb);
    add_block(oa, ob, ab);
    add_block(ob, oa, ab.transpose());
  }

  sys.reduced_operator.resize(sys.n_red, sys.n_red);
  sys.reduced_operator.setFromTriplets(trips.begin(), trips.end());
  if (source) sys.load = reduced_load(sys, source);
  return sys;
}

// ---------------------------------------------------------------------------
// Continuity constraints for the full-space formulation: one row per
// paired interface node per component over the full edge traces. Corner
// nodes shared by several edges produce linearly dependent rows; those are
// absorbed by the singular-value cutoff when the null space is extracted.
// ---------------------------------------------------------------------------

struct ConstraintSet {
  Eigen::MatrixXd c;
  Eigen::MatrixXd z;  // orthonormal null-space basis
  int rank = 0;
};

inline ConstraintSet build_continuity_constraints(const DofMap& dm, const GlobalLayout& layout,
                                                  const ComponentLibrary& library,
                                                  const std::vector<int>& elem_offset,
                                                  const std::vector<int>& elem_r, int n_red,
                                                  double constraint_tol) {
  const int n_nodes = (dm.n_cells + 1) * (dm.n_cells + 1);
  const int n_comp = library.n_components;
  const Eigen::Index n_rows =
      static_cast<Eigen::Index>(dm.edges.size()) * (dm.n_cells + 1) * n_comp;
  ConstraintSet cs;
  cs.c.setZero(n_rows, n_red);
  Eigen::Index row = 0;
  for (std::size_t k = 0; k < dm.edges.size(); ++k) {
    const auto& edge = dm.edges[k];
    const PodBasis& phi_a =
        library.at(layout.element_type[static_cast<std::size_t>(edge.cell_a)]).monolithic;
    const PodBasis& phi_b =
        library.at(layout.element_type[static_cast<std::size_t>(edge.cell_b)]).monolithic;
    const auto& ta = dm.edge_trace_a[k];
    const auto& tb = dm.edge_trace_b[k];
    for (std::size_t p = 0; p < ta.size(); ++p)
      for (int comp = 0; comp < n_comp; ++comp) {
        cs.c.block(row, elem_offset[static_cast<std::size_t>(edge.cell_a)], 1,
                   elem_r[static_cast<std::size_t>(edge.cell_a)]) +=
            phi_a.modes.row(static_cast<Eigen::Index>(comp) * n_nodes + ta[p]);
        cs.c.block(row, elem_offset[static_cast<std::size_t>(edge.cell_b)], 1,
                   elem_r[static_cast<std::size_t>(edge.cell_b)]) -=
            phi_b.modes.row(static_cast<Eigen::Index>(comp) * n_nodes + tb[p]);
        ++row;
      }
  }

  if (cs.c.rows() == 0) {
    cs.z = Eigen::MatrixXd::Identity(n_red, n_red);
    cs.rank = 0;
    return cs;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(cs.c, Eigen::ComputeFullV);
  const auto& sig = svd.singularValues();
  const double cutoff = sig.size() > 0 ? constraint_tol * sig[0] : 0.0;
  int rank = 0;
  for (Eigen::Index i = 0; i < sig.size(); ++i)
    if (sig[i] > cutoff) ++rank;
  cs.rank = rank;
  if (rank >= n_red)
    throw Error(ErrorKind::InfeasibleCoupling,
                "continuity constraints leave no degrees of freedom; increase the basis size "
                "or loosen constraint_tol");
  cs.z = svd.matrixV().rightCols(n_red - rank);
  return cs;
}

// ---------------------------------------------------------------------------
// Constrained-residual assembly. Element operators are block diagonal;
// outer Dirichlet nodes are eliminated symmetrically (unit diagonal), so
// the constrained minimization reproduces the conforming solution without
// boundary rows in C. Burgers systems carry only the constraint data.
// ---------------------------------------------------------------------------

inline ReducedSystem assemble_constrained(const GlobalLayout& layout, const ElementGrid& grid,
                                          const ComponentLibrary& library, double constraint_tol,
                                          const SourceFn& source = nullptr) {
  if (library.n_cells != grid.n_cells)
    throw Error(ErrorKind::Compatibility, "basis archive grid does not match requested grid");
  ReducedSystem sys;
  sys.formulation = Formulation::ConstrainedResidual;
  sys.layout = layout;
  sys.grid = grid;
  sys.dm = build_dof_map(layout, grid);
  sys.library = library;
  sys.coupling.formulation = Formulation::ConstrainedResidual;
  sys.coupling.constraint_tol = constraint_tol;
  sys.n_components = library.n_components;

  const int n_elems = layout.n_elements();
  sys.elem_offset.resize(static_cast<std::size_t>(n_elems));
  sys.elem_r.resize(static_cast<std::size_t>(n_elems));
  for (int e = 0; e < n_elems; ++e) {
    const auto& cb = library.at(layout.element_type[static_cast<std::size_t>(e)]);
    if (cb.kind != ComponentBasis::Kind::Monolithic)
      throw Error(ErrorKind::Compatibility, "constrained_residual needs monolithic element bases");
    sys.elem_offset[static_cast<std::size_t>(e)] = sys.n_red;
    sys.elem_r[static_cast<std::size_t>(e)] = cb.monolithic.r;
    sys.n_red += cb.monolithic.r;
  }

  ConstraintSet cs = build_continuity_constraints(sys.dm, layout, library, sys.elem_offset,
                                                  sys.elem_r, sys.n_red, constraint_tol);
  sys.constraints = std::move(cs.c);
  sys.nullspace = std::move(cs.z);

  if (library.n_components == 1 && layout.bc_kind == BcKind::DirichletZero) {
    // Poisson path: projected stiffness blocks with symmetric Dirichlet
    // elimination at outer-boundary nodes.
    const Eigen::SparseMatrix<double> a_vol = element_stiffness(grid);
    std::vector<Eigen::Triplet<double>> trips;
    for (int e = 0; e < n_elems; ++e) {
      const PodBasis& phi = sys.element_basis(e);
      Eigen::MatrixXd a_tilde(a_vol);
      for (int loc : sys.dm.boundary_sets[static_cast<std::size_t>(e)]) {
        a_tilde.row(loc).setZero();
        a_tilde.col(loc).setZero();
        a_tilde(loc, loc) = 1.0;
      }
      Eigen::MatrixXd block = phi.modes.transpose() * a_tilde * phi.modes;
      block = 0.5 * (block + block.transpose());
      const int off = sys.elem_offset[static_cast<std::size_t>(e)];
      for (Eigen::Index i = 0; i < block.rows(); ++i)
        for (Eigen::Index j = 0; j < block.cols(); ++j)
          trips.emplace_back(off + static_cast<int>(i), off + static_cast<int>(j), block(i, j));
    }
    sys.reduced_operator.resize(sys.n_red, sys.n_red);
    sys.reduced_operator.setFromTriplets(trips.begin(), trips.end());
    if (source) sys.load = reduced_load(sys, source);
  }
  return sys;
}

// ---------------------------------------------------------------------------
// Strong condensation. Interface unknowns are shared port coordinates:
// one block per geometric internal edge (pooled edge-class modes on the
// edge-interior trace) plus one nodal slot per free lattice vertex, which
// is how a value at a vertex shared by four elements stays single-valued.
// Interior coordinates are condensed out per element.
// ---------------------------------------------------------------------------

inline ReducedSystem assemble_strong(const GlobalLayout& layout, const ElementGrid& grid,
                                     const ComponentLibrary& library, const SourceFn& source) {
  if (layout.bc_kind != BcKind::DirichletZero)
    throw Error(ErrorKind::InvalidConfig, "strong condensation expects a dirichlet_zero layout");
  if (library.n_components != 1)
    throw Error(ErrorKind::Compatibility, "strong condensation handles the scalar Poisson problem");
  if (library.n_cells != grid.n_cells)
    throw Error(ErrorKind::Compatibility, "basis archive grid does not match requested grid");

  ReducedSystem sys;
  sys.formulation = Formulation::StrongCondensation;
  sys.layout = layout;
  sys.grid = grid;
  sys.dm = build_dof_map(layout, grid);
  sys.library = library;
  sys.coupling.formulation = Formulation::StrongCondensation;
  sys.n_components = 1;

  const ElementIndexSets sets = element_index_sets(grid);
  const int n_elems = layout.n_elements();

  // Port enumeration: edge ports in edge-id order, then free lattice
  // vertices row-major.
  for (const auto& edge : sys.dm.edges) {
    const auto& type_a = layout.element_type[static_cast<std::size_t>(edge.cell_a)];
    const auto& type_b = layout.element_type[static_cast<std::size_t>(edge.cell_b)];
    const auto& cb = library.at(type_a);
    if (cb.kind != ComponentBasis::Kind::Split)
      throw Error(ErrorKind::Compatibility, "strong condensation needs interior+port bases");
    if (type_a != type_b && library.at(type_b).split.port(edge.edge_class).r !=
                                cb.split.port(edge.edge_class).r)
      throw Error(ErrorKind::Compatibility,
                  "strong condensation across differing element types needs matching port bases");
    ReducedSystem::PortInfo p;
    p.corner = false;
    p.cls = edge.edge_class;
    p.edge_id = edge.id;
    p.offset = sys.n_red;
    p.dim = cb.split.port(edge.edge_class).r;
    sys.ports.push_back(p);
    sys.n_red += p.dim;
  }
  std::map<std::pair<int, int>, int> vertex_port;  // (vx, vy) -> port index
  for (int vy = 1; vy < layout.rows; ++vy)
    for (int vx = 1; vx < layout.cols; ++vx) {
      ReducedSystem::PortInfo p;
      p.corner = true;
      p.vx = vx;
      p.vy = vy;
      p.offset = sys.n_red;
      p.dim = 1;
      vertex_port[{vx, vy}] = static_cast<int>(sys.ports.size());
      sys.ports.push_back(p);
      sys.n_red += p.dim;
    }

  // Map each element to its attached ports.
  std::vector<std::vector<std::pair<int, EdgeSide>>> elem_edge_ports(
      static_cast<std::size_t>(n_elems));
  for (std::size_t k = 0; k < sys.dm.edges.size(); ++k) {
    const auto& edge = sys.dm.edges[k];
    elem_edge_ports[static_cast<std::size_t>(edge.cell_a)].emplace_back(static_cast<int>(k),
                                                                        edge.side_a);
    elem_edge_ports[static_cast<std::size_t>(edge.cell_b)].emplace_back(static_cast<int>(k),
                                                                        edge.side_b);
  }

  const Eigen::SparseMatrix<double> a_vol = element_stiffness(grid);
  sys.strong_elems.resize(static_cast<std::size_t>(n_elems));
  sys.schur = Eigen::MatrixXd::Zero(sys.n_red, sys.n_red);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(sys.n_red);

  for (int rr = 0; rr < layout.rows; ++rr)
    for (int cc = 0; cc < layout.cols; ++cc) {
      const int e = sys.dm.element_of(rr, cc);
      const auto& cb = library.at(layout.element_type[static_cast<std::size_t>(e)]);
      const PodBasis& interior = cb.split.interior;

      auto& se = sys.strong_elems[static_cast<std::size_t>(e)];
      se.r_int = interior.r;

      // Attached ports: edges first (in edge-id order), then free corners.
      std::vector<std::pair<int, EdgeSide>> edge_ports = elem_edge_ports[static_cast<std::size_t>(e)];
      std::sort(edge_ports.begin(), edge_ports.end());
      std::vector<std::pair<int, int>> corner_ports;  // (port index, local node)
      const std::array<std::pair<int, int>, 4> vertices = {
          std::make_pair(cc, rr), std::make_pair(cc + 1, rr), std::make_pair(cc, rr + 1),
          std::make_pair(cc + 1, rr + 1)};
      for (int k = 0; k < 4; ++k) {
        auto it = vertex_port.find(vertices[static_cast<std::size_t>(k)]);
        if (it != vertex_port.end())
          corner_ports.emplace_back(it->second, sets.corners[static_cast<std::size_t>(k)]);
      }

      int tail_dim = 0;
      for (const auto& [edge_id, side] : edge_ports)
        tail_dim += sys.ports[static_cast<std::size_t>(edge_id)].dim;
      tail_dim += static_cast<int>(corner_ports.size());

      se.t_map = Eigen::MatrixXd::Zero(grid.n_nodes(), se.r_int + tail_dim);
      for (std::size_t i = 0; i < sets.interior.size(); ++i)
        se.t_map.row(sets.interior[i]).head(se.r_int) = interior.modes.row(static_cast<Eigen::Index>(i));

      int col = se.r_int;
      for (const auto& [edge_id, side] : edge_ports) {
        const auto& port = sys.ports[static_cast<std::size_t>(edge_id)];
        const PodBasis& psi = cb.split.port(port.cls);
        const auto& locals = sets.edge(side);
        for (std::size_t i = 0; i < locals.size(); ++i)
          se.t_map.row(locals[i]).segment(col, port.dim) = psi.modes.row(static_cast<Eigen::Index>(i));
        se.attached_ports.push_back(edge_id);
        se.attached_offset.push_back(col - se.r_int);
        col += port.dim;
      }
      for (const auto& [port_idx, local_node] : corner_ports) {
        se.t_map(local_node, col) = 1.0;
        se.attached_ports.push_back(port_idx);
        se.attached_offset.push_back(col - se.r_int);
        col += 1;
      }

      Eigen::MatrixXd k_full = se.t_map.transpose() * (a_vol * se.t_map);
      k_full = 0.5 * (k_full + k_full.transpose());
      Eigen::MatrixXd k_qq = k_full.topLeftCorner(se.r_int, se.r_int);
      se.k_qp = k_full.topRightCorner(se.r_int, tail_dim);
      se.k_pp = k_full.bottomRightCorner(tail_dim, tail_dim);

      Eigen::LLT<Eigen::MatrixXd> llt(k_qq);
      if (llt.info() != Eigen::Success)
        throw Error(ErrorKind::CondensationFailure,
                    "interior block is singular for element " + std::to_string(e));
      se.k_qq_chol = llt.matrixL();

      Eigen::VectorXd b = element_load_vector(grid, rr, cc, source ? source : SourceFn([](double, double) { return 0.0; }));
      Eigen::VectorXd f_full = se.t_map.transpose() * b;
      se.f_q = f_full.head(se.r_int);
      se.f_p = f_full.tail(tail_dim);

      // Schur contribution: K_pp - K_qp' K_qq^-1 K_qp, scattered by port.
      Eigen::MatrixXd k_qq_inv_k_qp = llt.solve(se.k_qp);
      Eigen::MatrixXd schur_local = se.k_pp - se.k_qp.transpose() * k_qq_inv_k_qp;
      Eigen::VectorXd rhs_local = se.f_p - se.k_qp.transpose() * llt.solve(se.f_q);

      for (std::size_t pi = 0; pi < se.attached_ports.size(); ++pi) {
        const auto& port_i = sys.ports[static_cast<std::size_t>(se.attached_ports[pi])];
        rhs.segment(port_i.offset, port_i.dim) +=
            rhs_local.segment(se.attached_offset[pi], port_i.dim);
        for (std::size_t pj = 0; pj < se.attached_ports.size(); ++pj) {
          const auto& port_j = sys.ports[static_cast<std::size_t>(se.attached_ports[pj])];
          sys.schur.block(port_i.offset, port_j.offset, port_i.dim, port_j.dim) +=
              schur_local.block(se.attached_offset[pi], se.attached_offset[pj], port_i.dim,
                                port_j.dim);
        }
      }
    }
  sys.load = rhs;
  return sys;
}

// Spec'd port-coordinate accounting for the strong formulation: edge port
// dimensions plus one nodal slot per free lattice vertex.
inline int strong_port_dim(const ReducedSystem& sys) {
  int total = 0;
  for (const auto& p : sys.ports) total += p.dim;
  return total;
}

}  // namespace ddfem
