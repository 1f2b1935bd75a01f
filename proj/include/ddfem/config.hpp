#pragma once

#include <cstdlib>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ddfem/reduced_solver.hpp"
#include "ddfem/sampler.hpp"

namespace ddfem {

// ---------------------------------------------------------------------------
// PipelineConfig: every knob of the gen-data / train / solve pipeline,
// parsed from a line-based "section.key = value" file with # comments.
// Unknown keys are rejected with their line number; omitted keys take the
// defaults below, and the effective configuration is echoed back out so a
// run is reproducible from its output directory alone.
// ---------------------------------------------------------------------------

struct PipelineConfig {
  std::string problem = "poisson";  // poisson | burgers

  int grid_n_cells = 8;

  int train_n_samples = 500;  // poisson patches
  int train_n_runs = 200;     // burgers runs
  std::uint64_t train_seed = 12345;
  int train_k_max = 4;
  double train_dt = 0.01;
  double train_t_final = 1.0;
  int train_save_every = 10;
  double train_nu = 1e-3;

  double basis_epsilon = 0.9999;
  int basis_fixed_r = 0;  // > 0 overrides epsilon
  bool basis_port_split = false;

  int layout_rows = 2;
  int layout_cols = 2;
  std::string layout_bc = "dirichlet_zero";  // dirichlet_zero | periodic
  std::string layout_element_type = "square";

  std::string coupling_formulation = "dg_penalty";
  double coupling_eta = 10.0;
  double coupling_constraint_tol = 1e-10;

  double solve_cg_tol = 1e-12;
  double solve_residual_contract = 1e-10;
  int solve_dense_max_dof = 2000;
  int solve_reduced_dense_max_dof = 4000;
  double solve_dt_multiplier = 1.0;  // opt-in reduced time-step enlargement

  std::string test_source = "spiral";  // poisson test: sinusoid | spiral
  double test_k1 = 0.3;
  double test_k2 = -0.2;
  double test_theta = 0.25;
  double test_omega = 0.5;
  double test_gamma = 1.0;
  std::uint64_t test_ic_seed = 777;
  int test_ic_k_max = 0;  // 0 = scale train.K_max by layout width / patch width

  std::string output_dir = "out";
  bool output_dump_fields = false;

  int threads = 0;  // 0 = all hardware threads

  BcKind bc_kind() const {
    return layout_bc == "periodic" ? BcKind::Periodic : BcKind::DirichletZero;
  }
  Formulation formulation() const {
    if (coupling_formulation == "strong_condensation") return Formulation::StrongCondensation;
    if (coupling_formulation == "dg_penalty") return Formulation::DgPenalty;
    return Formulation::ConstrainedResidual;
  }
  Truncation truncation() const {
    return basis_fixed_r > 0 ? Truncation::fixed(basis_fixed_r)
                             : Truncation::energy_fraction(basis_epsilon);
  }
  int effective_test_ic_k_max() const {
    if (test_ic_k_max > 0) return test_ic_k_max;
    return train_k_max * std::max(1, layout_cols / kPatchCols);
  }
  LinearSolveOptions fom_solve_options() const {
    return {solve_cg_tol, solve_residual_contract, solve_dense_max_dof};
  }
  ReducedSolveOptions reduced_solve_options() const {
    return {solve_cg_tol, solve_residual_contract, solve_reduced_dense_max_dof};
  }
  CouplingConfig coupling() const {
    return {formulation(), coupling_eta, coupling_constraint_tol};
  }
};

namespace detail {

struct ConfigEntry {
  std::string value;
  int line = 0;
};

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] inline void config_fail(const std::string& key, int line, const std::string& what) {
  throw Error(ErrorKind::InvalidConfig,
              "config line " + std::to_string(line) + ": " + key + " " + what);
}

class ConfigMap {
 public:
  explicit ConfigMap(const std::string& text) {
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
      ++line_no;
      std::string line = raw;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw Error(ErrorKind::InvalidConfig,
                    "config line " + std::to_string(line_no) + ": expected key = value");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty() || value.empty())
        throw Error(ErrorKind::InvalidConfig,
                    "config line " + std::to_string(line_no) + ": expected key = value");
      entries_[key] = {value, line_no};
    }
  }

  template <typename Fn>
  void take(const std::string& key, Fn&& apply) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return;
    apply(it->second.value, it->second.line);
    entries_.erase(it);
  }

  void reject_unknown() const {
    if (entries_.empty()) return;
    const auto& [key, entry] = *entries_.begin();
    throw Error(ErrorKind::InvalidConfig,
                "config line " + std::to_string(entry.line) + ": unknown key '" + key + "'");
  }

 private:
  std::map<std::string, ConfigEntry> entries_;
};

inline long long parse_int(const std::string& key, const std::string& value, int line) {
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(value, &pos);
  } catch (...) {
    config_fail(key, line, "expects an integer, got '" + value + "'");
  }
  if (pos != value.size()) config_fail(key, line, "expects an integer, got '" + value + "'");
  return v;
}

inline double parse_double(const std::string& key, const std::string& value, int line) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &pos);
  } catch (...) {
    config_fail(key, line, "expects a number, got '" + value + "'");
  }
  if (pos != value.size()) config_fail(key, line, "expects a number, got '" + value + "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& value, int line) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  config_fail(key, line, "expects true/false, got '" + value + "'");
}

}  // namespace detail

inline PipelineConfig parse_config(const std::string& text) {
  detail::ConfigMap map(text);
  PipelineConfig cfg;

  auto int_key = [&](const std::string& key, int& slot, long long lo, long long hi) {
    map.take(key, [&](const std::string& v, int line) {
      const long long x = detail::parse_int(key, v, line);
      if (x < lo || x > hi)
        detail::config_fail(key, line,
                            "must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
      slot = static_cast<int>(x);
    });
  };
  auto u64_key = [&](const std::string& key, std::uint64_t& slot) {
    map.take(key, [&](const std::string& v, int line) {
      const long long x = detail::parse_int(key, v, line);
      if (x < 0) detail::config_fail(key, line, "must be non-negative");
      slot = static_cast<std::uint64_t>(x);
    });
  };
  auto double_key = [&](const std::string& key, double& slot, double lo, double hi) {
    map.take(key, [&](const std::string& v, int line) {
      const double x = detail::parse_double(key, v, line);
      if (!(x >= lo && x <= hi))
        detail::config_fail(key, line, "out of range (" + v + ")");
      slot = x;
    });
  };
  auto bool_key = [&](const std::string& key, bool& slot) {
    map.take(key,
             [&](const std::string& v, int line) { slot = detail::parse_bool(key, v, line); });
  };
  auto enum_key = [&](const std::string& key, std::string& slot,
                      const std::vector<std::string>& allowed) {
    map.take(key, [&](const std::string& v, int line) {
      for (const auto& a : allowed)
        if (v == a) {
          slot = v;
          return;
        }
      std::string opts;
      for (const auto& a : allowed) opts += (opts.empty() ? "" : " | ") + a;
      detail::config_fail(key, line, "must be one of: " + opts);
    });
  };
  auto string_key = [&](const std::string& key, std::string& slot) {
    map.take(key, [&](const std::string& v, int) { slot = v; });
  };

  enum_key("problem", cfg.problem, {"poisson", "burgers"});
  int_key("grid.n_cells", cfg.grid_n_cells, 2, 256);
  int_key("train.n_samples", cfg.train_n_samples, 1, 1000000);
  int_key("train.n_runs", cfg.train_n_runs, 1, 1000000);
  u64_key("train.seed", cfg.train_seed);
  int_key("train.K_max", cfg.train_k_max, 1, 64);
  double_key("train.dt", cfg.train_dt, 1e-9, 1e3);
  double_key("train.t_final", cfg.train_t_final, 1e-9, 1e6);
  int_key("train.save_every", cfg.train_save_every, 0, 1000000);
  map.take("train.nu", [&](const std::string& v, int line) {
    const double x = detail::parse_double("train.nu", v, line);
    if (!(x > 0.0)) detail::config_fail("train.nu", line, "must be positive");
    cfg.train_nu = x;
  });
  double_key("basis.epsilon", cfg.basis_epsilon, 1e-6, 1.0);
  int_key("basis.fixed_r", cfg.basis_fixed_r, 0, 1000000);
  bool_key("basis.port_split", cfg.basis_port_split);
  int_key("layout.rows", cfg.layout_rows, 1, 4096);
  int_key("layout.cols", cfg.layout_cols, 1, 4096);
  enum_key("layout.bc", cfg.layout_bc, {"dirichlet_zero", "periodic"});
  string_key("layout.element_type", cfg.layout_element_type);
  enum_key("coupling.formulation", cfg.coupling_formulation,
           {"strong_condensation", "dg_penalty", "constrained_residual"});
  map.take("coupling.eta", [&](const std::string& v, int line) {
    const double x = detail::parse_double("coupling.eta", v, line);
    if (!(x > 0.0)) detail::config_fail("coupling.eta", line, "must be positive");
    cfg.coupling_eta = x;
  });
  double_key("coupling.constraint_tol", cfg.coupling_constraint_tol, 0.0, 1.0);
  double_key("solve.cg_tol", cfg.solve_cg_tol, 1e-16, 1e-2);
  double_key("solve.residual_contract", cfg.solve_residual_contract, 1e-16, 1e-2);
  int_key("solve.dense_max_dof", cfg.solve_dense_max_dof, 0, 100000);
  int_key("solve.reduced_dense_max_dof", cfg.solve_reduced_dense_max_dof, 0, 100000);
  double_key("solve.dt_multiplier", cfg.solve_dt_multiplier, 1e-6, 1e3);
  enum_key("test.source", cfg.test_source, {"sinusoid", "spiral"});
  double_key("test.k1", cfg.test_k1, -0.5, 0.5);
  double_key("test.k2", cfg.test_k2, -0.5, 0.5);
  double_key("test.theta", cfg.test_theta, 0.0, 1.0);
  double_key("test.omega", cfg.test_omega, 0.0, 64.0);
  double_key("test.gamma", cfg.test_gamma, -64.0, 64.0);
  u64_key("test.ic_seed", cfg.test_ic_seed);
  int_key("test.ic_k_max", cfg.test_ic_k_max, 0, 128);
  string_key("output.dir", cfg.output_dir);
  bool_key("output.dump_fields", cfg.output_dump_fields);
  int_key("threads", cfg.threads, 0, 4096);

  map.reject_unknown();

  // Cross-field validation mirrors the type invariants.
  if (cfg.bc_kind() == BcKind::Periodic && (cfg.layout_rows < 2 || cfg.layout_cols < 2))
    throw Error(ErrorKind::InvalidConfig,
                "layout.bc = periodic needs layout.rows and layout.cols >= 2");
  if (cfg.problem == "burgers" && cfg.train_dt > cfg.train_t_final)
    throw Error(ErrorKind::InvalidConfig, "train.dt must not exceed train.t_final");
  return cfg;
}

// Serialized round-trippable echo of the effective configuration.
inline std::string config_echo(const PipelineConfig& cfg) {
  std::ostringstream out;
  out << "problem = " << cfg.problem << "\n";
  out << "grid.n_cells = " << cfg.grid_n_cells << "\n";
  out << "train.n_samples = " << cfg.train_n_samples << "\n";
  out << "train.n_runs = " << cfg.train_n_runs << "\n";
  out << "train.seed = " << cfg.train_seed << "\n";
  out << "train.K_max = " << cfg.train_k_max << "\n";
  out << "train.dt = " << fmt17(cfg.train_dt) << "\n";
  out << "train.t_final = " << fmt17(cfg.train_t_final) << "\n";
  out << "train.save_every = " << cfg.train_save_every << "\n";
  out << "train.nu = " << fmt17(cfg.train_nu) << "\n";
  out << "basis.epsilon = " << fmt17(cfg.basis_epsilon) << "\n";
  out << "basis.fixed_r = " << cfg.basis_fixed_r << "\n";
  out << "basis.port_split = " << (cfg.basis_port_split ? "true" : "false") << "\n";
  out << "layout.rows = " << cfg.layout_rows << "\n";
  out << "layout.cols = " << cfg.layout_cols << "\n";
  out << "layout.bc = " << cfg.layout_bc << "\n";
  out << "layout.element_type = " << cfg.layout_element_type << "\n";
  out << "coupling.formulation = " << cfg.coupling_formulation << "\n";
  out << "coupling.eta = " << fmt17(cfg.coupling_eta) << "\n";
  out << "coupling.constraint_tol = " << fmt17(cfg.coupling_constraint_tol) << "\n";
  out << "solve.cg_tol = " << fmt17(cfg.solve_cg_tol) << "\n";
  out << "solve.residual_contract = " << fmt17(cfg.solve_residual_contract) << "\n";
  out << "solve.dense_max_dof = " << cfg.solve_dense_max_dof << "\n";
  out << "solve.reduced_dense_max_dof = " << cfg.solve_reduced_dense_max_dof << "\n";
  out << "solve.dt_multiplier = " << fmt17(cfg.solve_dt_multiplier) << "\n";
  out << "test.source = " << cfg.test_source << "\n";
  out << "test.k1 = " << fmt17(cfg.test_k1) << "\n";
  out << "test.k2 = " << fmt17(cfg.test_k2) << "\n";
  out << "test.theta = " << fmt17(cfg.test_theta) << "\n";
  out << "test.omega = " << fmt17(cfg.test_omega) << "\n";
  out << "test.gamma = " << fmt17(cfg.test_gamma) << "\n";
  out << "test.ic_seed = " << cfg.test_ic_seed << "\n";
  out << "test.ic_k_max = " << cfg.test_ic_k_max << "\n";
  out << "output.dir = " << cfg.output_dir << "\n";
  out << "output.dump_fields = " << (cfg.output_dump_fields ? "true" : "false") << "\n";
  out << "threads = " << cfg.threads << "\n";
  return out.str();
}

}  // namespace ddfem
