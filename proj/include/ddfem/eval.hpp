#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "ddfem/reduced_solver.hpp"
#include "ddfem/sampler.hpp"

namespace ddfem {

inline double relative_l2_error(const Eigen::VectorXd& approx, const Eigen::VectorXd& reference) {
  if (approx.size() != reference.size())
    throw Error(ErrorKind::DimensionMismatch, "relative_l2_error: shape mismatch");
  const double ref_norm = reference.norm();
  if (ref_norm == 0.0)
    throw Error(ErrorKind::UndefinedMetric, "relative_l2_error: reference norm is zero");
  return (approx - reference).norm() / ref_norm;
}

inline double relative_l2_error(const StateField& approx, const StateField& reference) {
  return relative_l2_error(approx.values, reference.values);
}

// ---------------------------------------------------------------------------
// RunReport: everything one pipeline stage learned, echoed back. Spectra
// and the config echo go to the run manifest; scalar fields go to the CSV.
// ---------------------------------------------------------------------------

struct RunReport {
  std::string label;
  std::string problem;      // poisson | burgers
  std::string formulation;  // strong_condensation | dg_penalty | constrained_residual
  int rows = 0, cols = 0, n_cells = 0;
  double epsilon = -1.0;  // energy truncation; -1 when fixed_r or full bases were used
  int r = 0;              // monolithic mode count, or interior count for split bases
  int dof_fom = 0;
  int dof_reduced = 0;
  double dof_ratio = 0.0;
  std::vector<double> save_times;
  std::vector<double> rel_l2_per_save;
  double rel_l2_final = 0.0;
  double rel_l2_max = 0.0;
  double max_interface_jump = 0.0;
  double constraint_res = 0.0;
  double offline_seconds = 0.0;
  double online_seconds = 0.0;
  std::uint64_t seed = 0;
  std::string timestamp;
  std::map<std::string, Eigen::VectorXd> spectra;  // per element type
};

inline const char* kCsvHeader =
    "label,problem,formulation,rows,cols,n_cells,epsilon,r,dof_fom,dof_reduced,dof_ratio,"
    "rel_l2_final,rel_l2_max,max_interface_jump,constraint_residual,offline_seconds,"
    "online_seconds,seed,timestamp,errors_per_save";

inline void emit_csv(const std::vector<RunReport>& reports, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open for writing: " + path);
  out << kCsvHeader << "\n";
  for (const auto& rp : reports) {
    std::string per_save;
    for (std::size_t i = 0; i < rp.rel_l2_per_save.size(); ++i) {
      if (i) per_save += ';';
      per_save += fmt17(rp.rel_l2_per_save[i]);
    }
    out << rp.label << ',' << rp.problem << ',' << rp.formulation << ',' << rp.rows << ','
        << rp.cols << ',' << rp.n_cells << ',' << fmt17(rp.epsilon) << ',' << rp.r << ','
        << rp.dof_fom << ',' << rp.dof_reduced << ',' << fmt17(rp.dof_ratio) << ','
        << fmt17(rp.rel_l2_final) << ',' << fmt17(rp.rel_l2_max) << ','
        << fmt17(rp.max_interface_jump) << ',' << fmt17(rp.constraint_res) << ','
        << fmt17(rp.offline_seconds) << ',' << fmt17(rp.online_seconds) << ',' << rp.seed << ','
        << rp.timestamp << ',' << per_save << "\n";
  }
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path);
}

// ---------------------------------------------------------------------------
// Field dump ("DDFFLD01"): components, node count, values, CRC-32.
// ---------------------------------------------------------------------------

inline void write_field_dump(const StateField& field, const std::string& path) {
  ByteWriter w;
  w.write_bytes("DDFFLD01", 8);
  w.write_u32(static_cast<std::uint32_t>(field.n_components));
  w.write_u64(static_cast<std::uint64_t>(field.n_global));
  for (Eigen::Index i = 0; i < field.values.size(); ++i) w.write_f64(field.values[i]);
  w.finish_to_file(path);
}

inline StateField read_field_dump(const std::string& path) {
  ByteReader rd = ByteReader::from_file(path);
  rd.check_crc("field dump " + path);
  char magic[8];
  rd.read_bytes(magic, 8);
  if (std::memcmp(magic, "DDFFLD01", 8) != 0)
    throw Error(ErrorKind::CorruptArchive, path + ": not a field dump");
  StateField f;
  f.n_components = static_cast<int>(rd.read_u32());
  f.n_global = static_cast<int>(rd.read_u64());
  f.values.resize(static_cast<Eigen::Index>(f.n_components) * f.n_global);
  for (Eigen::Index i = 0; i < f.values.size(); ++i) f.values[i] = rd.read_f64();
  return f;
}

// ---------------------------------------------------------------------------
// Study runners: assemble, solve the reduced system and the full-order
// reference, and fill a report. One case per layout; extrapolation
// studies run their layouts smallest-first.
// ---------------------------------------------------------------------------

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline void fill_common(RunReport& rp, const ReducedSystem& sys) {
  rp.formulation = formulation_name(sys.formulation);
  rp.rows = sys.layout.rows;
  rp.cols = sys.layout.cols;
  rp.n_cells = sys.grid.n_cells;
  rp.dof_reduced = sys.n_red;
  rp.timestamp = now_iso8601();
  for (const auto& [type, cb] : sys.library.entries) {
    const PodBasis& head =
        cb.kind == ComponentBasis::Kind::Monolithic ? cb.monolithic : cb.split.interior;
    rp.spectra[type] = head.singular_values;
    rp.r = head.r;
  }
}

}  // namespace detail

struct PoissonCaseResult {
  RunReport report;
  StateField reduced_field;
  StateField fom_field;
};

inline PoissonCaseResult run_poisson_case(const ComponentLibrary& library, const ElementGrid& grid,
                                          const GlobalLayout& layout, const CouplingConfig& coupling,
                                          const SourceFn& source, const std::string& label,
                                          const LinearSolveOptions& fom_opts = {},
                                          const ReducedSolveOptions& red_opts = {}) {
  PoissonCaseResult result;
  RunReport& rp = result.report;
  rp.label = label;
  rp.problem = "poisson";

  const auto t_offline = std::chrono::steady_clock::now();
  ReducedSystem sys;
  switch (coupling.formulation) {
    case Formulation::StrongCondensation:
      sys = assemble_strong(layout, grid, library, source);
      break;
    case Formulation::DgPenalty:
      sys = assemble_dg(layout, grid, library, coupling.eta, source);
      break;
    case Formulation::ConstrainedResidual:
      sys = assemble_constrained(layout, grid, library, coupling.constraint_tol, source);
      break;
  }
  rp.offline_seconds = detail::seconds_since(t_offline);

  const auto t_online = std::chrono::steady_clock::now();
  const ReducedState state = solve_poisson_reduced(sys, red_opts);
  rp.online_seconds = detail::seconds_since(t_online);

  result.reduced_field = reconstruct_global(sys, state);

  PoissonProblem fom;
  fom.layout = layout;
  fom.grid = grid;
  fom.source = source;
  result.fom_field = solve_poisson_fom(fom, fom_opts);

  detail::fill_common(rp, sys);
  rp.dof_fom = sys.dm.n_free;
  rp.dof_ratio = rp.dof_reduced > 0 ? static_cast<double>(rp.dof_fom) / rp.dof_reduced : 0.0;
  const double err = relative_l2_error(result.reduced_field, result.fom_field);
  rp.save_times = {0.0};
  rp.rel_l2_per_save = {err};
  rp.rel_l2_final = err;
  rp.rel_l2_max = err;
  rp.max_interface_jump = max_interface_jump(sys, state);
  rp.constraint_res = constraint_residual(sys, state);
  return result;
}

struct BurgersCaseResult {
  RunReport report;
  StateField reduced_final;
  StateField fom_final;
};

// reduced_dt == 0 means "use the full-order dt"; a larger reduced step is
// an opt-in experiment, in which case only the final time is comparable.
inline BurgersCaseResult run_burgers_case(const ComponentLibrary& library, const ElementGrid& grid,
                                          const GlobalLayout& layout, const CouplingConfig& coupling,
                                          const IcFn& ic, double nu, double dt, double t_final,
                                          int save_every, const std::string& label,
                                          double reduced_dt = 0.0) {
  if (coupling.formulation != Formulation::ConstrainedResidual)
    throw Error(ErrorKind::InvalidConfig, "Burgers cases use the constrained_residual formulation");
  if (reduced_dt == 0.0) reduced_dt = dt;
  BurgersCaseResult result;
  RunReport& rp = result.report;
  rp.label = label;
  rp.problem = "burgers";

  const auto t_offline = std::chrono::steady_clock::now();
  ReducedSystem sys = assemble_constrained(layout, grid, library, coupling.constraint_tol);
  rp.offline_seconds = detail::seconds_since(t_offline);

  BurgersProblem fom;
  fom.layout = layout;
  fom.grid = grid;
  fom.nu = nu;
  fom.dt = dt;
  fom.t_final = t_final;
  fom.save_every = save_every;
  fom.ic = ic;
  const Trajectory fom_traj = solve_burgers_fom(fom);

  const bool same_cadence = reduced_dt == dt;
  const auto t_online = std::chrono::steady_clock::now();
  const ReducedTrajectory red_traj = solve_burgers_reduced(
      sys, fom_traj.states.front(), reduced_dt, t_final, same_cadence ? save_every : 0, nu);
  rp.online_seconds = detail::seconds_since(t_online);

  detail::fill_common(rp, sys);
  rp.dof_fom = 2 * sys.dm.n_global;
  rp.dof_ratio = rp.dof_reduced > 0 ? static_cast<double>(rp.dof_fom) / rp.dof_reduced : 0.0;
  rp.rel_l2_per_save.clear();
  if (same_cadence) {
    if (red_traj.times.size() != fom_traj.times.size())
      throw Error(ErrorKind::SolverFailure, "save cadence mismatch between reduced and full runs");
    rp.save_times = fom_traj.times;
    for (std::size_t i = 0; i < fom_traj.states.size(); ++i) {
      const StateField rec = reconstruct_global(sys, red_traj.states[i]);
      rp.rel_l2_per_save.push_back(relative_l2_error(rec, fom_traj.states[i]));
      if (i + 1 == fom_traj.states.size()) {
        result.reduced_final = rec;
        result.fom_final = fom_traj.states[i];
      }
    }
  } else {
    rp.save_times = {fom_traj.times.back()};
    result.reduced_final = reconstruct_global(sys, red_traj.states.back());
    result.fom_final = fom_traj.states.back();
    rp.rel_l2_per_save.push_back(relative_l2_error(result.reduced_final, result.fom_final));
  }
  rp.rel_l2_final = rp.rel_l2_per_save.back();
  rp.rel_l2_max = *std::max_element(rp.rel_l2_per_save.begin(), rp.rel_l2_per_save.end());
  rp.constraint_res = red_traj.max_constraint_residual;
  rp.max_interface_jump = max_interface_jump(sys, red_traj.states.back());
  return result;
}

// Runs one case per layout, smallest area first so a failure surfaces on
// the cheapest configuration.
inline std::vector<RunReport> run_extrapolation_study(
    const ComponentLibrary& library, const ElementGrid& grid,
    std::vector<std::pair<int, int>> layouts, const CouplingConfig& coupling, BcKind bc,
    const std::string& element_type, const SourceFn& source, const IcFn& ic, double nu, double dt,
    double t_final, int save_every) {
  std::sort(layouts.begin(), layouts.end(), [](const auto& a, const auto& b) {
    return a.first * a.second < b.first * b.second;
  });
  std::vector<RunReport> reports;
  for (const auto& [rows, cols] : layouts) {
    const std::string label =
        (source ? std::string("poisson-") : std::string("burgers-")) + std::to_string(rows) + "x" +
        std::to_string(cols);
    try {
      const GlobalLayout layout = build_layout(rows, cols, element_type, bc);
      if (source) {
        reports.push_back(
            run_poisson_case(library, grid, layout, coupling, source, label).report);
      } else {
        reports.push_back(run_burgers_case(library, grid, layout, coupling, ic, nu, dt, t_final,
                                           save_every, label)
                              .report);
      }
    } catch (const Error& err) {
      throw Error(err.kind(), label + ": " + err.what());
    }
  }
  return reports;
}

// ---------------------------------------------------------------------------
// Basis sweep: one report per truncation level, sorted by requested
// energy. The "full" sentinel (epsilon >= 2) uses exact full-dimension
// bases rather than snapshot POD, which is the untruncated reference
// regardless of snapshot conditioning.
// ---------------------------------------------------------------------------

inline ComponentBasis train_component(const SnapshotSet& snapshots, const ElementGrid& grid,
                                      bool port_split, const Truncation& truncation) {
  if (snapshots.n_cells != grid.n_cells)
    throw Error(ErrorKind::Compatibility, "snapshot archive grid does not match requested grid");
  if (port_split) {
    SplitBasis split = split_port_basis(snapshots.element_type, grid, snapshots.fields_per_snapshot,
                                        snapshots.data, truncation);
    return make_split(snapshots.element_type, grid.n_cells, snapshots.fields_per_snapshot,
                      std::move(split));
  }
  return make_monolithic(compute_pod(snapshots.element_type, grid.n_cells,
                                     snapshots.fields_per_snapshot, snapshots.data, truncation));
}

inline ComponentBasis full_component(const std::string& element_type, const ElementGrid& grid,
                                     int n_components, bool port_split) {
  if (!port_split)
    return make_monolithic(full_basis(element_type, grid.n_cells, n_components,
                                      static_cast<Eigen::Index>(n_components) * grid.n_nodes()));
  const int n = grid.n_cells;
  SplitBasis split;
  split.interior = full_basis(element_type, grid.n_cells, n_components,
                              static_cast<Eigen::Index>(n_components) * (n - 1) * (n - 1));
  split.ports[0] = full_basis(element_type, grid.n_cells, n_components,
                              static_cast<Eigen::Index>(n_components) * (n - 1));
  split.ports[1] = split.ports[0];
  return make_split(element_type, grid.n_cells, n_components, std::move(split));
}

inline std::vector<RunReport> run_basis_sweep(const SnapshotSet& snapshots, const ElementGrid& grid,
                                              std::vector<double> epsilons,
                                              const GlobalLayout& layout,
                                              const CouplingConfig& coupling,
                                              const SourceFn& source) {
  std::sort(epsilons.begin(), epsilons.end());
  const bool split = coupling.formulation == Formulation::StrongCondensation;
  std::vector<RunReport> reports;
  for (double eps : epsilons) {
    const auto t_train = std::chrono::steady_clock::now();
    ComponentLibrary library;
    if (eps >= 2.0)
      library.add(full_component(snapshots.element_type, grid, snapshots.fields_per_snapshot, split));
    else
      library.add(train_component(snapshots, grid, split, Truncation::energy_fraction(eps)));
    const double train_seconds = detail::seconds_since(t_train);
    RunReport rp = run_poisson_case(library, grid, layout, coupling, source,
                                    "sweep-eps-" + fmt17(eps))
                       .report;
    rp.epsilon = eps >= 2.0 ? -1.0 : eps;
    rp.offline_seconds += train_seconds;
    rp.seed = snapshots.seed;
    reports.push_back(std::move(rp));
  }
  return reports;
}

}  // namespace ddfem
