#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ddfem/grid.hpp"

namespace ddfem {

// ---------------------------------------------------------------------------
// StateField: nodal values on the conforming global grid, one contiguous
// block per component (component-major).
// ---------------------------------------------------------------------------

struct StateField {
  int n_components = 1;
  int n_global = 0;
  Eigen::VectorXd values;

  double& at(int component, int global_node) {
    return values[static_cast<Eigen::Index>(component) * n_global + global_node];
  }
  double at(int component, int global_node) const {
    return values[static_cast<Eigen::Index>(component) * n_global + global_node];
  }
  bool all_finite() const { return values.allFinite(); }
};

inline StateField make_state(const DofMap& dm, int n_components) {
  StateField s;
  s.n_components = n_components;
  s.n_global = dm.n_global;
  s.values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_components) * dm.n_global);
  return s;
}

using SourceFn = std::function<double(double, double)>;
using IcFn = std::function<std::array<double, 2>(double, double)>;

struct PoissonProblem {
  GlobalLayout layout;  // bc_kind must be DirichletZero
  ElementGrid grid;
  SourceFn source;
};

struct BurgersProblem {
  GlobalLayout layout;  // bc_kind must be Periodic
  ElementGrid grid;
  double nu = 1e-3;
  double dt = 0.01;
  double t_final = 1.0;
  int save_every = 10;
  IcFn ic;
};

// ---------------------------------------------------------------------------
// Q1 building blocks. The bilinear stiffness on a square cell is
// h-independent in 2D; cell corners are ordered (0,0),(1,0),(1,1),(0,1).
// ---------------------------------------------------------------------------

inline Eigen::Matrix4d q1_cell_stiffness() {
  Eigen::Matrix4d k;
  k << 4, -1, -2, -1,
      -1, 4, -1, -2,
      -2, -1, 4, -1,
      -1, -2, -1, 4;
  return k / 6.0;
}

// 2x2 Gauss evaluation of the consistent load on one cell with lower-left
// corner (x0, y0); adds into b_local[0..3].
template <typename Fn>
inline void q1_cell_load(double x0, double y0, double h, const Fn& f,
                         std::array<double, 4>& b_local) {
  static const double gp = 0.5773502691896257645;  // 1/sqrt(3)
  const double w = h * h / 4.0;
  for (double xi : {-gp, gp})
    for (double eta : {-gp, gp}) {
      const double x = x0 + h * (1.0 + xi) / 2.0;
      const double y = y0 + h * (1.0 + eta) / 2.0;
      const double fv = f(x, y);
      const double n0 = (1 - xi) * (1 - eta) / 4.0;
      const double n1 = (1 + xi) * (1 - eta) / 4.0;
      const double n2 = (1 + xi) * (1 + eta) / 4.0;
      const double n3 = (1 - xi) * (1 + eta) / 4.0;
      b_local[0] += fv * n0 * w;
      b_local[1] += fv * n1 * w;
      b_local[2] += fv * n2 * w;
      b_local[3] += fv * n3 * w;
    }
}

// Local node indices of cell (ci, cj) inside one element, in the corner
// order used by q1_cell_stiffness.
inline std::array<int, 4> cell_local_nodes(const ElementGrid& grid, int ci, int cj) {
  return {grid.local_index(ci, cj), grid.local_index(ci, cj + 1),
          grid.local_index(ci + 1, cj + 1), grid.local_index(ci + 1, cj)};
}

// ---------------------------------------------------------------------------
// Global Poisson operator on free (non-Dirichlet) DOFs. Element loops add
// cell stiffness contributions; the result is exactly symmetric because
// every insertion is mirrored.
// ---------------------------------------------------------------------------

inline Eigen::SparseMatrix<double> assemble_poisson_operator(const GlobalLayout& layout,
                                                             const ElementGrid& grid,
                                                             const DofMap& dm) {
  if (layout.bc_kind != BcKind::DirichletZero)
    throw Error(ErrorKind::InvalidConfig, "Poisson operator requires dirichlet_zero layout");
  const Eigen::Matrix4d k_cell = q1_cell_stiffness();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(layout.n_elements()) * grid.n_cells * grid.n_cells * 16);
  for (int e = 0; e < layout.n_elements(); ++e) {
    for (int ci = 0; ci < grid.n_cells; ++ci)
      for (int cj = 0; cj < grid.n_cells; ++cj) {
        const auto loc = cell_local_nodes(grid, ci, cj);
        std::array<int, 4> free_idx{};
        for (int a = 0; a < 4; ++a)
          free_idx[static_cast<std::size_t>(a)] =
              dm.global_to_free[static_cast<std::size_t>(dm.global_node(e, loc[static_cast<std::size_t>(a)]))];
        for (int a = 0; a < 4; ++a)
          for (int b = 0; b < 4; ++b)
            if (free_idx[static_cast<std::size_t>(a)] >= 0 && free_idx[static_cast<std::size_t>(b)] >= 0)
              trips.emplace_back(free_idx[static_cast<std::size_t>(a)],
                                 free_idx[static_cast<std::size_t>(b)], k_cell(a, b));
      }
  }
  Eigen::SparseMatrix<double> a(dm.n_free, dm.n_free);
  a.setFromTriplets(trips.begin(), trips.end());
  return a;
}

// Consistent load vector on free DOFs for a globally defined source.
inline Eigen::VectorXd assemble_poisson_load(const GlobalLayout& layout, const ElementGrid& grid,
                                             const DofMap& dm, const SourceFn& source) {
  Eigen::VectorXd b = Eigen::VectorXd::Zero(dm.n_free);
  for (int r = 0; r < layout.rows; ++r)
    for (int c = 0; c < layout.cols; ++c) {
      const int e = dm.element_of(r, c);
      for (int ci = 0; ci < grid.n_cells; ++ci)
        for (int cj = 0; cj < grid.n_cells; ++cj) {
          std::array<double, 4> bl{};
          q1_cell_load(c + cj * grid.h, r + ci * grid.h, grid.h, source, bl);
          const auto loc = cell_local_nodes(grid, ci, cj);
          for (int a = 0; a < 4; ++a) {
            const int fi = dm.global_to_free[static_cast<std::size_t>(
                dm.global_node(e, loc[static_cast<std::size_t>(a)]))];
            if (fi >= 0) b[fi] += bl[static_cast<std::size_t>(a)];
          }
        }
    }
  return b;
}

// Element-local load vector (all (n_cells+1)^2 nodes) for the element at
// layout position (r, c); no boundary handling applied here.
inline Eigen::VectorXd element_load_vector(const ElementGrid& grid, int r, int c,
                                           const SourceFn& source) {
  Eigen::VectorXd b = Eigen::VectorXd::Zero(grid.n_nodes());
  for (int ci = 0; ci < grid.n_cells; ++ci)
    for (int cj = 0; cj < grid.n_cells; ++cj) {
      std::array<double, 4> bl{};
      q1_cell_load(c + cj * grid.h, r + ci * grid.h, grid.h, source, bl);
      const auto loc = cell_local_nodes(grid, ci, cj);
      for (int a = 0; a < 4; ++a) b[loc[static_cast<std::size_t>(a)]] += bl[static_cast<std::size_t>(a)];
    }
  return b;
}

// Element-local Q1 stiffness over the element's own cells (no boundary
// conditions; kernel contains the constant field).
inline Eigen::SparseMatrix<double> element_stiffness(const ElementGrid& grid) {
  const Eigen::Matrix4d k_cell = q1_cell_stiffness();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(grid.n_cells) * grid.n_cells * 16);
  for (int ci = 0; ci < grid.n_cells; ++ci)
    for (int cj = 0; cj < grid.n_cells; ++cj) {
      const auto loc = cell_local_nodes(grid, ci, cj);
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
          trips.emplace_back(loc[static_cast<std::size_t>(a)], loc[static_cast<std::size_t>(b)],
                             k_cell(a, b));
    }
  Eigen::SparseMatrix<double> a(grid.n_nodes(), grid.n_nodes());
  a.setFromTriplets(trips.begin(), trips.end());
  return a;
}

// ---------------------------------------------------------------------------
// Linear solve: CG with Jacobi preconditioning, dense Cholesky fallback at
// small sizes. The residual contract (1e-10 relative) is what callers rely
// on; the CG target is tighter to leave margin.
// ---------------------------------------------------------------------------

struct LinearSolveOptions {
  double cg_tol = 1e-12;
  double residual_contract = 1e-10;
  int dense_fallback_max_dof = 2000;
};

inline Eigen::VectorXd solve_spd(const Eigen::SparseMatrix<double>& a, const Eigen::VectorXd& b,
                                 const LinearSolveOptions& opts = {}) {
  const double bnorm = b.norm();
  if (bnorm == 0.0) return Eigen::VectorXd::Zero(b.size());
  Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
  cg.setTolerance(opts.cg_tol);
  cg.setMaxIterations(static_cast<Eigen::Index>(10.0 * std::sqrt(static_cast<double>(b.size()))));
  cg.compute(a);
  Eigen::VectorXd x = cg.solve(b);
  double rel = (a * x - b).norm() / bnorm;
  if (rel <= opts.residual_contract) return x;
  if (b.size() <= opts.dense_fallback_max_dof) {
    Eigen::MatrixXd dense(a);
    Eigen::LLT<Eigen::MatrixXd> llt(dense);
    if (llt.info() == Eigen::Success) {
      x = llt.solve(b);
      rel = (a * x - b).norm() / bnorm;
      if (rel <= opts.residual_contract) return x;
    }
  }
  throw Error(ErrorKind::SolverFailure,
              "linear solve stalled: rel residual " + std::to_string(rel) + " after " +
                  std::to_string(cg.iterations()) + " CG iterations");
}

inline StateField solve_poisson_fom(const PoissonProblem& problem,
                                    const LinearSolveOptions& opts = {}) {
  const DofMap dm = build_dof_map(problem.layout, problem.grid);
  const auto a = assemble_poisson_operator(problem.layout, problem.grid, dm);
  const auto b = assemble_poisson_load(problem.layout, problem.grid, dm, problem.source);
  const Eigen::VectorXd x = solve_spd(a, b, opts);
  StateField u = make_state(dm, 1);
  for (int f = 0; f < dm.n_free; ++f) u.values[dm.free_to_global[static_cast<std::size_t>(f)]] = x[f];
  if (!u.all_finite()) throw Error(ErrorKind::Divergence, "Poisson solution contains non-finite values");
  return u;
}

// ---------------------------------------------------------------------------
// Viscous Burgers, conservative flux form on the periodic global grid:
//   u_t + (u^2/2)_x + (uv)_y = nu * lap(u)
//   v_t + (uv)_x + (v^2/2)_y = nu * lap(v)
// Second-order central differences; the flux divergence telescopes, so the
// discrete mean of each component is an exact invariant of the RHS.
// ---------------------------------------------------------------------------

inline StateField burgers_rhs(const StateField& state, const DofMap& dm, const ElementGrid& grid,
                              double nu) {
  if (dm.bc_kind != BcKind::Periodic)
    throw Error(ErrorKind::InvalidConfig, "Burgers RHS requires a periodic layout");
  const int nx = dm.nx, ny = dm.ny;
  const double h = grid.h;
  const double inv2h = 1.0 / (2.0 * h);
  const double invh2 = 1.0 / (h * h);
  StateField out;
  out.n_components = 2;
  out.n_global = dm.n_global;
  out.values.resize(2 * static_cast<Eigen::Index>(dm.n_global));
  auto idx = [&](int gy, int gx) {
    return ((gy + ny) % ny) * nx + ((gx + nx) % nx);
  };
  for (int gy = 0; gy < ny; ++gy)
    for (int gx = 0; gx < nx; ++gx) {
      const int g = gy * nx + gx;
      const int ge = idx(gy, gx + 1), gw = idx(gy, gx - 1);
      const int gn = idx(gy + 1, gx), gs = idx(gy - 1, gx);
      const double u = state.at(0, g), v = state.at(1, g);
      const double ue = state.at(0, ge), uw = state.at(0, gw);
      const double un = state.at(0, gn), us = state.at(0, gs);
      const double ve = state.at(1, ge), vw = state.at(1, gw);
      const double vn = state.at(1, gn), vs = state.at(1, gs);
      const double dudx_flux = (ue * ue - uw * uw) * 0.5 * inv2h;
      const double duvy = (un * vn - us * vs) * inv2h;
      const double duvx = (ue * ve - uw * vw) * inv2h;
      const double dvdy_flux = (vn * vn - vs * vs) * 0.5 * inv2h;
      const double lap_u = (ue + uw + un + us - 4.0 * u) * invh2;
      const double lap_v = (ve + vw + vn + vs - 4.0 * v) * invh2;
      out.values[g] = -dudx_flux - duvy + nu * lap_u;
      out.values[static_cast<Eigen::Index>(dm.n_global) + g] = -duvx - dvdy_flux + nu * lap_v;
    }
  return out;
}

struct Trajectory {
  std::vector<double> times;
  std::vector<StateField> states;
};

inline double max_abs_velocity(const StateField& s) {
  return s.values.cwiseAbs().maxCoeff();
}

inline void check_burgers_stability(double dt, double h, double nu, double vmax, int step) {
  double bound = h * h / (4.0 * nu);
  if (vmax > 0.0) bound = std::min(bound, 0.5 * h / vmax);
  if (dt > bound)
    throw Error(ErrorKind::Stability,
                "time step " + std::to_string(dt) + " exceeds stability bound " +
                    std::to_string(bound) + " at step " + std::to_string(step));
}

// Explicit midpoint (RK2) integration with per-step stability checks.
// States are saved at t=0, every save_every-th step, and the final step.
inline Trajectory solve_burgers_fom(const BurgersProblem& problem) {
  if (problem.layout.bc_kind != BcKind::Periodic)
    throw Error(ErrorKind::InvalidConfig, "Burgers FOM requires a periodic layout");
  if (problem.nu <= 0.0) throw Error(ErrorKind::InvalidConfig, "Burgers needs nu > 0");
  if (problem.dt <= 0.0 || problem.dt > problem.t_final)
    throw Error(ErrorKind::InvalidConfig, "Burgers needs 0 < dt <= t_final");
  const DofMap dm = build_dof_map(problem.layout, problem.grid);
  const int n_steps = static_cast<int>(std::llround(problem.t_final / problem.dt));

  StateField y = make_state(dm, 2);
  for (int g = 0; g < dm.n_global; ++g) {
    const int gy = g / dm.nx, gx = g % dm.nx;
    const auto uv = problem.ic(gx * problem.grid.h, gy * problem.grid.h);
    y.at(0, g) = uv[0];
    y.at(1, g) = uv[1];
  }

  Trajectory traj;
  auto save = [&](double t) {
    traj.times.push_back(t);
    traj.states.push_back(y);
  };
  save(0.0);
  for (int step = 0; step < n_steps; ++step) {
    check_burgers_stability(problem.dt, problem.grid.h, problem.nu, max_abs_velocity(y), step);
    const StateField k1 = burgers_rhs(y, dm, problem.grid, problem.nu);
    StateField mid = y;
    mid.values += (problem.dt / 2.0) * k1.values;
    const StateField k2 = burgers_rhs(mid, dm, problem.grid, problem.nu);
    y.values += problem.dt * k2.values;
    if (!y.all_finite())
      throw Error(ErrorKind::Divergence, "Burgers state diverged at step " + std::to_string(step));
    const bool at_save = problem.save_every > 0 && (step + 1) % problem.save_every == 0;
    if (at_save || step + 1 == n_steps) save((step + 1) * problem.dt);
  }
  return traj;
}

// Discrete mean of one component over the periodic grid.
inline double component_mean(const StateField& s, int component) {
  return s.values.segment(static_cast<Eigen::Index>(component) * s.n_global, s.n_global).mean();
}

}  // namespace ddfem
