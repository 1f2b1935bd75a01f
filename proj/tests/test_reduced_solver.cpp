#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include "ddfem/eval.hpp"

using namespace ddfem;

namespace {

ComponentLibrary full_burgers_library(const ElementGrid& grid, std::uint64_t seed) {
  RngStream rng(seed);
  Eigen::MatrixXd data(2 * grid.n_nodes(), 5 * grid.n_nodes());
  for (Eigen::Index j = 0; j < data.cols(); ++j)
    for (Eigen::Index i = 0; i < data.rows(); ++i) data(i, j) = rng.next_normal();
  SnapshotSet set;
  set.element_type = "square";
  set.n_cells = grid.n_cells;
  set.fields_per_snapshot = 2;
  set.data = data;
  ComponentLibrary lib;
  lib.add(train_component(set, grid, false, Truncation::energy_fraction(1.0)));
  return lib;
}

}  // namespace

TEST_CASE("synthetic reduced solves match dense oracles") {
  // K = I -> c = b
  ReducedSystem sys;
  sys.formulation = Formulation::DgPenalty;
  sys.n_red = 10;
  Eigen::SparseMatrix<double> eye(10, 10);
  eye.setIdentity();
  sys.reduced_operator = eye;
  Eigen::VectorXd b(10);
  for (int i = 0; i < 10; ++i) b[i] = 0.1 * i - 0.3;
  CHECK((solve_linear_reduced(sys, b).coords - b).norm() == 0.0);

  // b = 0 -> c = 0
  CHECK(solve_linear_reduced(sys, Eigen::VectorXd::Zero(10)).coords.norm() == 0.0);

  // random SPD system vs explicit dense inverse
  RngStream rng(1);
  Eigen::MatrixXd m(50, 50);
  for (int j = 0; j < 50; ++j)
    for (int i = 0; i < 50; ++i) m(i, j) = rng.next_normal();
  Eigen::MatrixXd spd = m * m.transpose() + 50.0 * Eigen::MatrixXd::Identity(50, 50);
  sys.reduced_operator = spd.sparseView();
  sys.n_red = 50;
  Eigen::VectorXd rhs(50);
  for (int i = 0; i < 50; ++i) rhs[i] = rng.next_normal();
  const Eigen::VectorXd expected = spd.inverse() * rhs;
  CHECK((solve_linear_reduced(sys, rhs).coords - expected).norm() <= 1e-10 * expected.norm());

  // non-SPD detection
  Eigen::MatrixXd indef = Eigen::MatrixXd::Identity(5, 5);
  indef(2, 2) = -1.0;
  sys.reduced_operator = indef.sparseView();
  sys.n_red = 5;
  try {
    solve_linear_reduced(sys, Eigen::VectorXd::Ones(5));
    FAIL("expected solver failure");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SolverFailure);
  }
}

TEST_CASE("reconstruct_global: zero coordinates give the zero field") {
  const ElementGrid grid = build_element_grid(4);
  const GlobalLayout layout = build_layout(2, 2, "square", BcKind::Periodic);
  const ComponentLibrary lib = full_burgers_library(grid, 3);
  const ReducedSystem sys = assemble_constrained(layout, grid, lib, 1e-10);
  ReducedState state;
  state.coords = Eigen::VectorXd::Zero(sys.n_red);
  CHECK(reconstruct_global(sys, state).values.norm() == 0.0);
}

TEST_CASE("strong reconstruction is single-valued at interfaces by construction") {
  const ElementGrid grid = build_element_grid(4);
  const GlobalLayout layout = build_layout(2, 2, "square", BcKind::DirichletZero);
  RngStream rng(5);
  Eigen::MatrixXd data(grid.n_nodes(), 3 * grid.n_nodes());
  for (Eigen::Index j = 0; j < data.cols(); ++j)
    for (Eigen::Index i = 0; i < data.rows(); ++i) data(i, j) = rng.next_normal();
  SnapshotSet set;
  set.element_type = "square";
  set.n_cells = grid.n_cells;
  set.fields_per_snapshot = 1;
  set.data = data;
  ComponentLibrary lib;
  lib.add(train_component(set, grid, true, Truncation::energy_fraction(1.0)));
  const ReducedSystem sys = assemble_strong(layout, grid, lib, [](double x, double y) {
    return std::sin(x + 0.5 * y);
  });
  const ReducedState state = solve_poisson_reduced(sys);
  // each shared port coordinate feeds both neighbors, so writing per
  // element must give every interface node a single value
  const StateField rec = reconstruct_global(sys, state);
  for (std::size_t k = 0; k < sys.dm.edges.size(); ++k) {
    const auto& edge = sys.dm.edges[k];
    for (std::size_t p = 0; p < sys.dm.edge_trace_a[k].size(); ++p) {
      const int ga = sys.dm.global_node(edge.cell_a, sys.dm.edge_trace_a[k][p]);
      const int gb = sys.dm.global_node(edge.cell_b, sys.dm.edge_trace_b[k][p]);
      CHECK(ga == gb);
      CHECK(rec.values[ga] == rec.values[gb]);
    }
  }
  CHECK(max_interface_jump(sys, state) == 0.0);
}

TEST_CASE("constant-field coordinates are a steady state of the reduced stepper") {
  const ElementGrid grid = build_element_grid(4);
  const GlobalLayout layout = build_layout(2, 2, "square", BcKind::Periodic);
  const ComponentLibrary lib = full_burgers_library(grid, 7);
  const ReducedSystem sys = assemble_constrained(layout, grid, lib, 1e-10);
  StateField constant = make_state(sys.dm, 2);
  constant.values.segment(0, sys.dm.n_global).setConstant(0.3);
  constant.values.segment(sys.dm.n_global, sys.dm.n_global).setConstant(-0.15);
  ReducedState state = project_initial_state(sys, constant);
  const StateField before = reconstruct_global(sys, state);
  state = step_burgers_reduced(sys, state, 0.01, 1e-3);
  const StateField after = reconstruct_global(sys, state);
  CHECK((after.values - before.values).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("untruncated reduced burgers matches the full-order trajectory") {
  const ElementGrid grid = build_element_grid(4);
  const GlobalLayout layout = build_layout(2, 2, "square", BcKind::Periodic);
  const ComponentLibrary lib = full_burgers_library(grid, 9);
  const CouplingConfig coupling{Formulation::ConstrainedResidual, 10.0, 1e-10};
  RngStream rng(31);
  const BurgersIcSample ic = sample_burgers_ic(rng, 3);
  const IcFn ic_fn = [&ic](double x, double y) {
    return std::array<double, 2>{ic.eval(0, x, y), ic.eval(1, x, y)};
  };
  const auto result =
      run_burgers_case(lib, grid, layout, coupling, ic_fn, 1e-3, 0.01, 0.3, 10, "oracle");
  CHECK(result.report.rel_l2_max <= 1e-8);
  CHECK(result.report.constraint_res <= 1e-10);
  CHECK(result.report.dof_fom == 2 * 64);

  // mean of the reconstructed components is conserved (untruncated)
  for (int comp = 0; comp < 2; ++comp) {
    const double m0 = component_mean(result.fom_final, comp);
    const double mr = component_mean(result.reduced_final, comp);
    CHECK(std::abs(mr - m0) <= 1e-8 * (1.0 + std::abs(m0)));
  }
}

TEST_CASE("reduced burgers rejects an unstable time step") {
  const ElementGrid grid = build_element_grid(8);
  const GlobalLayout layout = build_layout(2, 2, "square", BcKind::Periodic);
  const ComponentLibrary lib = full_burgers_library(grid, 10);
  const ReducedSystem sys = assemble_constrained(layout, grid, lib, 1e-10);
  StateField fast = make_state(sys.dm, 2);
  fast.values.segment(0, sys.dm.n_global).setConstant(1.0);
  ReducedState state = project_initial_state(sys, fast);
  try {
    step_burgers_reduced(sys, state, 0.2, 1e-3);
    FAIL("expected stability error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Stability);
  }
}
