#pragma once

#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "ddfem/fom.hpp"

namespace ddfem {

inline constexpr const char* kSamplerVersion = "1";
inline constexpr double kTwoPi = 6.283185307179586477;

// ---------------------------------------------------------------------------
// Source families.
// ---------------------------------------------------------------------------

// Sinusoidal source f = sin(2*pi*(k1*x + k2*y + theta)).
struct SourceSample {
  double k1 = 0.0;
  double k2 = 0.0;
  double theta = 0.0;
};

inline SourceSample sample_poisson_source(RngStream& rng) {
  SourceSample s;
  s.k1 = rng.next_uniform(-0.5, 0.5);
  s.k2 = rng.next_uniform(-0.5, 0.5);
  s.theta = rng.next_uniform(0.0, 1.0);
  return s;
}

inline double eval_sinusoidal_source(const SourceSample& s, double x, double y) {
  return std::sin(kTwoPi * (s.k1 * x + s.k2 * y + s.theta));
}

// Radially oscillating spiral about a center point: an out-of-distribution
// test source. Value at the center uses the phi := 0 convention.
struct SpiralParams {
  double omega = 0.5;  // radial frequency
  double cx = 0.0;
  double cy = 0.0;
  double gamma = 1.0;  // swirl
};

inline double eval_spiral_source(const SpiralParams& p, double x, double y) {
  const double dx = x - p.cx, dy = y - p.cy;
  const double r = std::sqrt(dx * dx + dy * dy);
  const double phi = r > 0.0 ? std::atan2(dy, dx) : 0.0;
  return std::sin(kTwoPi * (p.omega * r + p.gamma * phi / kTwoPi));
}

// ---------------------------------------------------------------------------
// Burgers initial conditions: truncated random Fourier series per
// component over the periodic box [0,Lx] x [0,Ly], coefficient amplitude
// decaying as 1/(1+m^2+n^2), plus a uniform mean offset. The whole field
// is rescaled so max |velocity| <= 1; the bound used is the rigorous
// coefficient-sum envelope |c| + sum sqrt(a^2+b^2), so the invariant holds
// at any evaluation point, not just sampled nodes.
// ---------------------------------------------------------------------------

struct BurgersIcSample {
  int k_max = 4;
  double period_x = 2.0;
  double period_y = 2.0;
  // Arrays indexed m*(k_max+1)+n for 0 <= m, n <= k_max; the (0,0) slot is
  // unused (the mean offset carries it).
  std::array<std::vector<double>, 2> coeff_cos;
  std::array<std::vector<double>, 2> coeff_sin;
  std::array<double, 2> mean{};

  double eval(int component, double x, double y) const {
    double v = mean[static_cast<std::size_t>(component)];
    const auto& a = coeff_cos[static_cast<std::size_t>(component)];
    const auto& b = coeff_sin[static_cast<std::size_t>(component)];
    for (int m = 0; m <= k_max; ++m)
      for (int n = 0; n <= k_max; ++n) {
        if (m == 0 && n == 0) continue;
        const int idx = m * (k_max + 1) + n;
        const double arg = kTwoPi * (m * x / period_x + n * y / period_y);
        v += a[static_cast<std::size_t>(idx)] * std::cos(arg) +
             b[static_cast<std::size_t>(idx)] * std::sin(arg);
      }
    return v;
  }
};

inline BurgersIcSample sample_burgers_ic(RngStream& rng, int k_max, double period_x = 2.0,
                                         double period_y = 2.0) {
  if (k_max < 1) throw Error(ErrorKind::InvalidConfig, "sample_burgers_ic needs K_max >= 1");
  BurgersIcSample ic;
  ic.k_max = k_max;
  ic.period_x = period_x;
  ic.period_y = period_y;
  const int n_slots = (k_max + 1) * (k_max + 1);
  double bound = 0.0;
  for (int comp = 0; comp < 2; ++comp) {
    ic.coeff_cos[static_cast<std::size_t>(comp)].assign(static_cast<std::size_t>(n_slots), 0.0);
    ic.coeff_sin[static_cast<std::size_t>(comp)].assign(static_cast<std::size_t>(n_slots), 0.0);
    ic.mean[static_cast<std::size_t>(comp)] = rng.next_uniform(-0.25, 0.25);
    double comp_bound = std::abs(ic.mean[static_cast<std::size_t>(comp)]);
    for (int m = 0; m <= k_max; ++m)
      for (int n = 0; n <= k_max; ++n) {
        if (m == 0 && n == 0) continue;
        const double decay = 1.0 / (1.0 + m * m + n * n);
        const int idx = m * (k_max + 1) + n;
        const double a = decay * rng.next_normal();
        const double b = decay * rng.next_normal();
        ic.coeff_cos[static_cast<std::size_t>(comp)][static_cast<std::size_t>(idx)] = a;
        ic.coeff_sin[static_cast<std::size_t>(comp)][static_cast<std::size_t>(idx)] = b;
        comp_bound += std::sqrt(a * a + b * b);
      }
    bound = std::max(bound, comp_bound);
  }
  if (bound > 1.0) {
    const double scale = 1.0 / bound;
    for (int comp = 0; comp < 2; ++comp) {
      ic.mean[static_cast<std::size_t>(comp)] *= scale;
      for (auto& v : ic.coeff_cos[static_cast<std::size_t>(comp)]) v *= scale;
      for (auto& v : ic.coeff_sin[static_cast<std::size_t>(comp)]) v *= scale;
    }
  }
  return ic;
}

// ---------------------------------------------------------------------------
// SnapshotSet: element-restricted solution samples, one column per
// element per (sample, save time). Burgers columns stack (u; v).
// ---------------------------------------------------------------------------

struct SnapshotSet {
  std::string element_type;
  int n_cells = 0;
  int fields_per_snapshot = 1;
  Eigen::MatrixXd data;  // (fields * (n_cells+1)^2) x n_snapshots
  std::uint64_t seed = 0;
  std::string sampler_version = kSamplerVersion;
  std::string family;
  std::string timestamp;  // provenance only; never serialized

  Eigen::Index n_snapshots() const { return data.cols(); }
};

inline std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

// Restrict a global state to one element's local nodes, component-major.
inline Eigen::VectorXd element_restrict(const StateField& state, const DofMap& dm, int element) {
  const int n_loc = static_cast<int>(dm.local_to_global[static_cast<std::size_t>(element)].size());
  Eigen::VectorXd out(static_cast<Eigen::Index>(state.n_components) * n_loc);
  for (int k = 0; k < state.n_components; ++k)
    for (int loc = 0; loc < n_loc; ++loc)
      out[static_cast<Eigen::Index>(k) * n_loc + loc] = state.at(k, dm.global_node(element, loc));
  return out;
}

inline constexpr int kPatchRows = 2;
inline constexpr int kPatchCols = 2;

// Solve one zero-Dirichlet 2x2 patch with the given sinusoidal source and
// return the four element-restricted columns.
inline std::array<Eigen::VectorXd, 4> poisson_patch_columns(const SourceSample& sample,
                                                            const ElementGrid& grid,
                                                            const std::string& element_type,
                                                            const LinearSolveOptions& opts = {}) {
  PoissonProblem problem;
  problem.layout = build_layout(kPatchRows, kPatchCols, element_type, BcKind::DirichletZero);
  problem.grid = grid;
  problem.source = [sample](double x, double y) { return eval_sinusoidal_source(sample, x, y); };
  const StateField u = solve_poisson_fom(problem, opts);
  const DofMap dm = build_dof_map(problem.layout, grid);
  std::array<Eigen::VectorXd, 4> cols;
  for (int e = 0; e < 4; ++e) cols[static_cast<std::size_t>(e)] = element_restrict(u, dm, e);
  return cols;
}

inline SnapshotSet generate_poisson_patch_snapshots(int n_samples, const ElementGrid& grid,
                                                    const RngStream& rng,
                                                    const std::string& element_type = "square",
                                                    int threads = 1,
                                                    const LinearSolveOptions& opts = {}) {
  if (n_samples < 1)
    throw Error(ErrorKind::InvalidConfig, "generate_poisson_patch_snapshots needs n_samples >= 1");
  SnapshotSet set;
  set.element_type = element_type;
  set.n_cells = grid.n_cells;
  set.fields_per_snapshot = 1;
  set.seed = rng.state();
  set.family = "poisson-sin-2x2";
  set.timestamp = now_iso8601();
  set.data.resize(grid.n_nodes(), 4 * static_cast<Eigen::Index>(n_samples));
  parallel_for(static_cast<std::size_t>(n_samples), threads, [&](std::size_t s) {
    RngStream child = rng.child(s);
    const SourceSample sample = sample_poisson_source(child);
    std::array<Eigen::VectorXd, 4> cols;
    try {
      cols = poisson_patch_columns(sample, grid, element_type, opts);
    } catch (const Error& err) {
      throw Error(err.kind(), "patch sample " + std::to_string(s) + ": " + err.what());
    }
    for (int e = 0; e < 4; ++e)
      set.data.col(static_cast<Eigen::Index>(4 * s) + e) = cols[static_cast<std::size_t>(e)];
  });
  return set;
}

// One periodic 2x2 Burgers run from the given IC; columns are (u; v)
// restrictions per element per save time, save-major then element.
inline std::vector<Eigen::VectorXd> burgers_patch_columns(const BurgersIcSample& ic,
                                                          const ElementGrid& grid, double nu,
                                                          double dt, double t_final, int save_every,
                                                          const std::string& element_type) {
  BurgersProblem problem;
  problem.layout = build_layout(kPatchRows, kPatchCols, element_type, BcKind::Periodic);
  problem.grid = grid;
  problem.nu = nu;
  problem.dt = dt;
  problem.t_final = t_final;
  problem.save_every = save_every;
  problem.ic = [&ic](double x, double y) {
    return std::array<double, 2>{ic.eval(0, x, y), ic.eval(1, x, y)};
  };
  const Trajectory traj = solve_burgers_fom(problem);
  const DofMap dm = build_dof_map(problem.layout, grid);
  std::vector<Eigen::VectorXd> cols;
  cols.reserve(traj.states.size() * 4);
  for (const auto& state : traj.states)
    for (int e = 0; e < 4; ++e) cols.push_back(element_restrict(state, dm, e));
  return cols;
}

inline SnapshotSet generate_burgers_patch_snapshots(int n_runs, const ElementGrid& grid, double dt,
                                                    double t_final, int save_every,
                                                    const RngStream& rng, double nu = 1e-3,
                                                    int k_max = 4,
                                                    const std::string& element_type = "square",
                                                    int threads = 1) {
  if (n_runs < 1)
    throw Error(ErrorKind::InvalidConfig, "generate_burgers_patch_snapshots needs n_runs >= 1");
  SnapshotSet set;
  set.element_type = element_type;
  set.n_cells = grid.n_cells;
  set.fields_per_snapshot = 2;
  set.seed = rng.state();
  set.family = "burgers-ic-2x2";
  set.timestamp = now_iso8601();

  // Save count is fixed by the stepping parameters; probe it once.
  const int n_steps = static_cast<int>(std::llround(t_final / dt));
  int n_saves = 1;
  for (int step = 0; step < n_steps; ++step)
    if ((save_every > 0 && (step + 1) % save_every == 0) || step + 1 == n_steps) ++n_saves;

  set.data.resize(2 * static_cast<Eigen::Index>(grid.n_nodes()),
                  4 * static_cast<Eigen::Index>(n_runs) * n_saves);
  parallel_for(static_cast<std::size_t>(n_runs), threads, [&](std::size_t run) {
    RngStream child = rng.child(run);
    const BurgersIcSample ic = sample_burgers_ic(child, k_max);
    std::vector<Eigen::VectorXd> cols;
    try {
      cols = burgers_patch_columns(ic, grid, nu, dt, t_final, save_every, element_type);
    } catch (const Error& err) {
      throw Error(err.kind(), "patch run " + std::to_string(run) + ": " + err.what());
    }
    for (std::size_t j = 0; j < cols.size(); ++j)
      set.data.col(static_cast<Eigen::Index>(run * cols.size() + j)) = cols[j];
  });
  return set;
}

// ---------------------------------------------------------------------------
// Snapshot archive ("DDFSNP01"): magic, element-type id, n_cells,
// fields_per_snapshot, n_snapshots, seed, column-major f64 data, CRC-32.
// ---------------------------------------------------------------------------

inline void save_snapshots(const SnapshotSet& set, const std::string& path) {
  ByteWriter w;
  w.write_bytes("DDFSNP01", 8);
  w.write_string(set.element_type);
  w.write_u32(static_cast<std::uint32_t>(set.n_cells));
  w.write_u32(static_cast<std::uint32_t>(set.fields_per_snapshot));
  w.write_u64(static_cast<std::uint64_t>(set.data.cols()));
  w.write_u64(set.seed);
  for (Eigen::Index c = 0; c < set.data.cols(); ++c)
    for (Eigen::Index i = 0; i < set.data.rows(); ++i) w.write_f64(set.data(i, c));
  w.finish_to_file(path);
}

inline SnapshotSet load_snapshots(const std::string& path) {
  ByteReader rd = ByteReader::from_file(path);
  rd.check_crc("snapshot archive " + path);
  char magic[8];
  rd.read_bytes(magic, 8);
  if (std::memcmp(magic, "DDFSNP", 6) != 0)
    throw Error(ErrorKind::CorruptArchive, path + ": not a snapshot archive");
  if (std::memcmp(magic, "DDFSNP01", 8) != 0)
    throw Error(ErrorKind::UnsupportedVersion, path + ": unsupported snapshot archive version");
  SnapshotSet set;
  set.element_type = rd.read_string();
  set.n_cells = static_cast<int>(rd.read_u32());
  set.fields_per_snapshot = static_cast<int>(rd.read_u32());
  const std::uint64_t n_snapshots = rd.read_u64();
  set.seed = rd.read_u64();
  const int side = set.n_cells + 1;
  const Eigen::Index rows = static_cast<Eigen::Index>(set.fields_per_snapshot) * side * side;
  if (rd.remaining() != rows * n_snapshots * 8)
    throw Error(ErrorKind::CorruptArchive, path + ": data size does not match header");
  set.data.resize(rows, static_cast<Eigen::Index>(n_snapshots));
  for (Eigen::Index c = 0; c < set.data.cols(); ++c)
    for (Eigen::Index i = 0; i < rows; ++i) set.data(i, c) = rd.read_f64();
  return set;
}

}  // namespace ddfem
