#pragma once

#include <Eigen/Cholesky>
#include <vector>

#include "ddfem/assembly.hpp"

namespace ddfem {

struct ReducedState {
  Eigen::VectorXd coords;    // dg/constrained: stacked element coordinates;
                             // strong: port coordinates
  Eigen::VectorXd interior;  // strong only, stacked per element after recovery
  double time = 0.0;
};

struct ReducedSolveOptions {
  double cg_tol = 1e-12;
  double residual_contract = 1e-10;
  int dense_max_dof = 4000;
};

namespace detail {

// Dense Cholesky for small systems, CG above the threshold; both paths
// honor the residual contract.
inline Eigen::VectorXd spd_solve_reduced(const Eigen::SparseMatrix<double>& k,
                                         const Eigen::VectorXd& b,
                                         const ReducedSolveOptions& opts) {
  const double bnorm = b.norm();
  if (bnorm == 0.0) return Eigen::VectorXd::Zero(b.size());
  Eigen::VectorXd x;
  if (b.size() <= opts.dense_max_dof) {
    Eigen::MatrixXd dense(k);
    Eigen::LLT<Eigen::MatrixXd> llt(dense);
    if (llt.info() != Eigen::Success)
      throw Error(ErrorKind::SolverFailure, "reduced operator is not positive definite");
    x = llt.solve(b);
  } else {
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
    cg.setTolerance(opts.cg_tol);
    cg.compute(k);
    x = cg.solve(b);
    if (cg.info() == Eigen::NumericalIssue)
      throw Error(ErrorKind::SolverFailure, "CG breakdown on reduced operator");
  }
  const double rel = (k * x - b).norm() / bnorm;
  if (rel > opts.residual_contract)
    throw Error(ErrorKind::SolverFailure,
                "reduced solve residual " + std::to_string(rel) + " exceeds contract");
  return x;
}

}  // namespace detail

// Recover condensed interior coordinates from solved port values by
// back-substitution through the per-element interior factorizations.
inline void recover_interior(const ReducedSystem& sys, ReducedState& state) {
  if (sys.formulation != Formulation::StrongCondensation)
    throw Error(ErrorKind::InvalidConfig, "recover_interior applies to strong condensation");
  int total = 0;
  for (const auto& se : sys.strong_elems) total += se.r_int;
  state.interior.resize(total);
  int off = 0;
  for (const auto& se : sys.strong_elems) {
    Eigen::VectorXd rhs = se.f_q;
    if (state.coords.size() > 0) {
      Eigen::VectorXd p_local(se.k_qp.cols());
      for (std::size_t pi = 0; pi < se.attached_ports.size(); ++pi) {
        const auto& port = sys.ports[static_cast<std::size_t>(se.attached_ports[pi])];
        p_local.segment(se.attached_offset[pi], port.dim) =
            state.coords.segment(port.offset, port.dim);
      }
      rhs -= se.k_qp * p_local;
    }
    // two triangular solves against the stored Cholesky factor
    Eigen::VectorXd y = se.k_qq_chol.triangularView<Eigen::Lower>().solve(rhs);
    state.interior.segment(off, se.r_int) =
        se.k_qq_chol.transpose().triangularView<Eigen::Upper>().solve(y);
    off += se.r_int;
  }
}

// Solve the assembled linear (Poisson-type) reduced system for the given
// reduced right-hand side.
inline ReducedState solve_linear_reduced(const ReducedSystem& sys, const Eigen::VectorXd& rhs,
                                         const ReducedSolveOptions& opts = {}) {
  ReducedState state;
  switch (sys.formulation) {
    case Formulation::DgPenalty:
      state.coords = detail::spd_solve_reduced(sys.reduced_operator, rhs, opts);
      break;
    case Formulation::ConstrainedResidual: {
      const Eigen::MatrixXd& z = sys.nullspace;
      Eigen::MatrixXd kz = sys.reduced_operator * z;
      Eigen::MatrixXd zkz = z.transpose() * kz;
      zkz = 0.5 * (zkz + zkz.transpose());
      Eigen::VectorXd zb = z.transpose() * rhs;
      if (zb.norm() == 0.0) {
        state.coords = Eigen::VectorXd::Zero(sys.n_red);
        break;
      }
      Eigen::LLT<Eigen::MatrixXd> llt(zkz);
      if (llt.info() != Eigen::Success)
        throw Error(ErrorKind::SolverFailure,
                    "constrained reduced operator is not positive definite on the feasible space");
      Eigen::VectorXd y = llt.solve(zb);
      const double rel = (zkz * y - zb).norm() / zb.norm();
      if (rel > opts.residual_contract)
        throw Error(ErrorKind::SolverFailure,
                    "constrained reduced solve residual " + std::to_string(rel) + " exceeds contract");
      state.coords = z * y;
      break;
    }
    case Formulation::StrongCondensation: {
      if (sys.n_red == 0) {
        state.coords.resize(0);
      } else {
        Eigen::LLT<Eigen::MatrixXd> llt(sys.schur);
        if (llt.info() != Eigen::Success)
          throw Error(ErrorKind::SolverFailure, "port Schur complement is not positive definite");
        state.coords = llt.solve(rhs);
        const double bnorm = rhs.norm();
        if (bnorm > 0.0) {
          const double rel = (sys.schur * state.coords - rhs).norm() / bnorm;
          if (rel > opts.residual_contract)
            throw Error(ErrorKind::SolverFailure,
                        "Schur solve residual " + std::to_string(rel) + " exceeds contract");
        }
      }
      recover_interior(sys, state);
      break;
    }
  }
  return state;
}

inline ReducedState solve_poisson_reduced(const ReducedSystem& sys,
                                          const ReducedSolveOptions& opts = {}) {
  if (sys.load.size() == 0 && sys.n_red > 0)
    throw Error(ErrorKind::InvalidConfig, "system was assembled without a source term");
  return solve_linear_reduced(sys, sys.load, opts);
}

// ---------------------------------------------------------------------------
// Reconstruction back to the conforming global grid. Conforming
// formulations produce single-valued interface nodes by construction; the
// DG reconstruction averages the two sides and the jump is reported
// separately.
// ---------------------------------------------------------------------------

inline StateField reconstruct_global(const ReducedSystem& sys, const ReducedState& state) {
  StateField out = make_state(sys.dm, sys.n_components);
  const int n_nodes = sys.grid.n_nodes();
  if (sys.formulation == Formulation::StrongCondensation) {
    int off = 0;
    for (int e = 0; e < sys.layout.n_elements(); ++e) {
      const auto& se = sys.strong_elems[static_cast<std::size_t>(e)];
      Eigen::VectorXd coeff(se.t_map.cols());
      coeff.head(se.r_int) = state.interior.segment(off, se.r_int);
      off += se.r_int;
      for (std::size_t pi = 0; pi < se.attached_ports.size(); ++pi) {
        const auto& port = sys.ports[static_cast<std::size_t>(se.attached_ports[pi])];
        coeff.segment(se.r_int + se.attached_offset[pi], port.dim) =
            state.coords.segment(port.offset, port.dim);
      }
      const Eigen::VectorXd local = se.t_map * coeff;
      for (int loc = 0; loc < n_nodes; ++loc) out.values[sys.dm.global_node(e, loc)] = local[loc];
    }
    return out;
  }

  Eigen::VectorXd weight = Eigen::VectorXd::Zero(out.values.size());
  for (int e = 0; e < sys.layout.n_elements(); ++e) {
    const PodBasis& phi = sys.element_basis(e);
    const Eigen::VectorXd local =
        phi.modes * state.coords.segment(sys.elem_offset[static_cast<std::size_t>(e)],
                                         sys.elem_r[static_cast<std::size_t>(e)]);
    for (int comp = 0; comp < sys.n_components; ++comp)
      for (int loc = 0; loc < n_nodes; ++loc) {
        const Eigen::Index g =
            static_cast<Eigen::Index>(comp) * sys.dm.n_global + sys.dm.global_node(e, loc);
        out.values[g] += local[static_cast<Eigen::Index>(comp) * n_nodes + loc];
        weight[g] += 1.0;
      }
  }
  for (Eigen::Index i = 0; i < out.values.size(); ++i)
    if (weight[i] > 0.0) out.values[i] /= weight[i];
  return out;
}

// Largest absolute two-sided mismatch over all interface node pairs.
inline double max_interface_jump(const ReducedSystem& sys, const ReducedState& state) {
  if (sys.formulation == Formulation::StrongCondensation) return 0.0;
  const int n_nodes = sys.grid.n_nodes();
  double jump = 0.0;
  for (std::size_t k = 0; k < sys.dm.edges.size(); ++k) {
    const auto& edge = sys.dm.edges[k];
    const PodBasis& phi_a = sys.element_basis(edge.cell_a);
    const PodBasis& phi_b = sys.element_basis(edge.cell_b);
    const Eigen::VectorXd ca = state.coords.segment(
        sys.elem_offset[static_cast<std::size_t>(edge.cell_a)],
        sys.elem_r[static_cast<std::size_t>(edge.cell_a)]);
    const Eigen::VectorXd cb = state.coords.segment(
        sys.elem_offset[static_cast<std::size_t>(edge.cell_b)],
        sys.elem_r[static_cast<std::size_t>(edge.cell_b)]);
    for (std::size_t p = 0; p < sys.dm.edge_trace_a[k].size(); ++p)
      for (int comp = 0; comp < sys.n_components; ++comp) {
        const double va =
            phi_a.modes.row(static_cast<Eigen::Index>(comp) * n_nodes + sys.dm.edge_trace_a[k][p])
                .dot(ca);
        const double vb =
            phi_b.modes.row(static_cast<Eigen::Index>(comp) * n_nodes + sys.dm.edge_trace_b[k][p])
                .dot(cb);
        jump = std::max(jump, std::abs(va - vb));
      }
  }
  return jump;
}

// Relative constraint violation ||C c|| / ||c||.
inline double constraint_residual(const ReducedSystem& sys, const ReducedState& state) {
  if (sys.constraints.rows() == 0) return 0.0;
  const double cn = state.coords.norm();
  return (sys.constraints * state.coords).norm() / (cn > 0.0 ? cn : 1.0);
}

// ---------------------------------------------------------------------------
// Constrained Burgers time stepping: the same explicit midpoint scheme as
// the full-order solver, with per-element projection of the reconstructed
// RHS and a null-space projection of each coordinate increment so the
// state never leaves the continuity manifold.
// ---------------------------------------------------------------------------

inline ReducedState project_initial_state(const ReducedSystem& sys, const StateField& field) {
  ReducedState state;
  state.coords.resize(sys.n_red);
  const int n_nodes = sys.grid.n_nodes();
  for (int e = 0; e < sys.layout.n_elements(); ++e) {
    const PodBasis& phi = sys.element_basis(e);
    Eigen::VectorXd local(static_cast<Eigen::Index>(sys.n_components) * n_nodes);
    for (int comp = 0; comp < sys.n_components; ++comp)
      for (int loc = 0; loc < n_nodes; ++loc)
        local[static_cast<Eigen::Index>(comp) * n_nodes + loc] =
            field.at(comp, sys.dm.global_node(e, loc));
    state.coords.segment(sys.elem_offset[static_cast<std::size_t>(e)],
                         sys.elem_r[static_cast<std::size_t>(e)]) = phi.modes.transpose() * local;
  }
  if (sys.constraints.rows() > 0)
    state.coords = sys.nullspace * (sys.nullspace.transpose() * state.coords);
  return state;
}

namespace detail {

inline Eigen::VectorXd reduced_burgers_increment(const ReducedSystem& sys,
                                                 const Eigen::VectorXd& coords, double nu) {
  ReducedState tmp;
  tmp.coords = coords;
  const StateField field = reconstruct_global(sys, tmp);
  const StateField rhs = burgers_rhs(field, sys.dm, sys.grid, nu);
  Eigen::VectorXd delta(sys.n_red);
  const int n_nodes = sys.grid.n_nodes();
  for (int e = 0; e < sys.layout.n_elements(); ++e) {
    const PodBasis& phi = sys.element_basis(e);
    Eigen::VectorXd local(static_cast<Eigen::Index>(sys.n_components) * n_nodes);
    for (int comp = 0; comp < sys.n_components; ++comp)
      for (int loc = 0; loc < n_nodes; ++loc)
        local[static_cast<Eigen::Index>(comp) * n_nodes + loc] =
            rhs.at(comp, sys.dm.global_node(e, loc));
    delta.segment(sys.elem_offset[static_cast<std::size_t>(e)],
                  sys.elem_r[static_cast<std::size_t>(e)]) = phi.modes.transpose() * local;
  }
  return delta;
}

}  // namespace detail

inline ReducedState step_burgers_reduced(const ReducedSystem& sys, const ReducedState& state,
                                         double dt, double nu, int step_index = 0) {
  if (sys.formulation != Formulation::ConstrainedResidual)
    throw Error(ErrorKind::InvalidConfig, "reduced Burgers stepping needs a constrained system");
  if (sys.n_components != 2)
    throw Error(ErrorKind::InvalidConfig, "reduced Burgers stepping needs two velocity components");

  auto projected = [&](const Eigen::VectorXd& v) {
    if (sys.constraints.rows() == 0) return v;
    return (sys.nullspace * (sys.nullspace.transpose() * v)).eval();
  };

  ReducedState cur = state;
  const StateField field0 = reconstruct_global(sys, cur);
  check_burgers_stability(dt, sys.grid.h, nu, max_abs_velocity(field0), step_index);

  const Eigen::VectorXd k1 = projected(detail::reduced_burgers_increment(sys, cur.coords, nu));
  ReducedState mid;
  mid.coords = cur.coords + (dt / 2.0) * k1;
  const Eigen::VectorXd k2 = projected(detail::reduced_burgers_increment(sys, mid.coords, nu));

  ReducedState next;
  next.coords = cur.coords + dt * k2;
  next.time = cur.time + dt;
  if (!next.coords.allFinite())
    throw Error(ErrorKind::Divergence,
                "reduced Burgers state diverged at step " + std::to_string(step_index));
  return next;
}

struct ReducedTrajectory {
  std::vector<double> times;
  std::vector<ReducedState> states;
  double max_constraint_residual = 0.0;
};

inline ReducedTrajectory solve_burgers_reduced(const ReducedSystem& sys, const StateField& ic,
                                               double dt, double t_final, int save_every,
                                               double nu) {
  ReducedTrajectory traj;
  ReducedState state = project_initial_state(sys, ic);
  const int n_steps = static_cast<int>(std::llround(t_final / dt));
  traj.max_constraint_residual = constraint_residual(sys, state);
  traj.times.push_back(0.0);
  traj.states.push_back(state);
  for (int step = 0; step < n_steps; ++step) {
    state = step_burgers_reduced(sys, state, dt, nu, step);
    traj.max_constraint_residual =
        std::max(traj.max_constraint_residual, constraint_residual(sys, state));
    const bool at_save = save_every > 0 && (step + 1) % save_every == 0;
    if (at_save || step + 1 == n_steps) {
      traj.times.push_back(state.time);
      traj.states.push_back(state);
    }
  }
  return traj;
}

}  // namespace ddfem
