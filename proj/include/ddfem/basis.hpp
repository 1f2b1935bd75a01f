#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <array>
#include <string>
#include <vector>

#include "ddfem/grid.hpp"

namespace ddfem {

// ---------------------------------------------------------------------------
// Truncation rule for POD bases: keep a fixed mode count, or the smallest
// count reaching an energy fraction. Either way the retained count never
// exceeds the numerical rank of the snapshot matrix, so orthonormality
// stays honest.
// ---------------------------------------------------------------------------

struct Truncation {
  enum class Kind { FixedR, Energy };
  Kind kind = Kind::Energy;
  int fixed_r = 0;
  double energy = 0.9999;

  static Truncation fixed(int r) { return {Kind::FixedR, r, 0.0}; }
  static Truncation energy_fraction(double eps) { return {Kind::Energy, 0, eps}; }
};

struct PodBasis {
  std::string element_type;
  int n_cells = 0;
  int n_components = 1;
  Eigen::MatrixXd modes;            // block dim x r, orthonormal columns
  Eigen::VectorXd singular_values;  // all p = min(rows, cols) values, descending
  int r = 0;
  double energy_fraction = 1.0;

  Eigen::Index dim() const { return modes.rows(); }
};

namespace detail {

// Deterministic sign convention: the entry of largest magnitude in each
// mode (lowest index on exact ties) is made positive.
inline void fix_mode_signs(Eigen::MatrixXd& modes) {
  for (Eigen::Index c = 0; c < modes.cols(); ++c) {
    Eigen::Index best = 0;
    double best_abs = std::abs(modes(0, c));
    for (Eigen::Index i = 1; i < modes.rows(); ++i) {
      const double a = std::abs(modes(i, c));
      if (a > best_abs) {
        best_abs = a;
        best = i;
      }
    }
    if (modes(best, c) < 0.0) modes.col(c) = -modes.col(c);
  }
}

// Re-orthonormalization pass for the method-of-snapshots route, which
// loses orthogonality on small singular values. Householder Q preserves
// the nested leading subspaces.
inline void polish_orthonormality(Eigen::MatrixXd& modes) {
  if (modes.cols() == 0) return;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(modes);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(modes.rows(), modes.cols());
  // householderQ can flip directions; re-align with the input columns so
  // the polish is a pure correction, then the caller applies the global
  // sign convention.
  for (Eigen::Index c = 0; c < modes.cols(); ++c)
    if (q.col(c).dot(modes.col(c)) < 0.0) q.col(c) = -q.col(c);
  modes = q;
}

}  // namespace detail

inline PodBasis compute_pod(const std::string& element_type, int n_cells, int n_components,
                            const Eigen::MatrixXd& data, const Truncation& truncation) {
  if (data.rows() == 0 || data.cols() == 0)
    throw Error(ErrorKind::DegenerateData, "empty snapshot matrix");
  if (!data.allFinite())
    throw Error(ErrorKind::DegenerateData, "snapshot matrix contains non-finite entries");
  if (data.norm() == 0.0)
    throw Error(ErrorKind::DegenerateData, "snapshot matrix is identically zero");

  const Eigen::Index rows = data.rows(), cols = data.cols();
  const Eigen::Index p = std::min(rows, cols);
  Eigen::VectorXd sigma(p);
  Eigen::MatrixXd left;
  bool polish = false;

  if (cols <= rows) {
    // Method of snapshots: eigendecomposition of the Gram matrix.
    Eigen::MatrixXd gram = data.transpose() * data;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    if (eig.info() != Eigen::Success)
      throw Error(ErrorKind::SolverFailure, "Gram eigendecomposition failed");
    left.resize(rows, p);
    for (Eigen::Index i = 0; i < p; ++i) {
      const Eigen::Index src = p - 1 - i;  // ascending -> descending
      const double lambda = std::max(eig.eigenvalues()[src], 0.0);
      sigma[i] = std::sqrt(lambda);
      if (sigma[i] > 0.0)
        left.col(i) = data * eig.eigenvectors().col(src) / sigma[i];
      else
        left.col(i).setZero();
    }
    polish = true;
  } else {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(data, Eigen::ComputeThinU);
    sigma = svd.singularValues();
    left = svd.matrixU();
  }

  const double sig_max = sigma[0];
  Eigen::Index rank = 0;
  while (rank < p && sigma[rank] > sig_max * 1e-12) ++rank;
  if (rank == 0) throw Error(ErrorKind::DegenerateData, "snapshot matrix has numerical rank 0");

  const double total = sigma.squaredNorm();
  Eigen::Index r = 0;
  if (truncation.kind == Truncation::Kind::FixedR) {
    if (truncation.fixed_r < 1)
      throw Error(ErrorKind::InvalidConfig, "fixed_r truncation needs r >= 1");
    r = std::min<Eigen::Index>(truncation.fixed_r, rank);
  } else {
    if (truncation.energy <= 0.0)
      throw Error(ErrorKind::InvalidConfig, "energy truncation needs epsilon > 0");
    double cum = 0.0;
    r = p;
    for (Eigen::Index i = 0; i < p; ++i) {
      cum += sigma[i] * sigma[i];
      if (cum >= truncation.energy * total) {
        r = i + 1;
        break;
      }
    }
    r = std::min(r, rank);
  }

  PodBasis basis;
  basis.element_type = element_type;
  basis.n_cells = n_cells;
  basis.n_components = n_components;
  basis.singular_values = sigma;
  basis.r = static_cast<int>(r);
  basis.modes = left.leftCols(r);
  if (polish) detail::polish_orthonormality(basis.modes);
  detail::fix_mode_signs(basis.modes);
  basis.energy_fraction = sigma.head(r).squaredNorm() / total;
  return basis;
}

// Full-dimension orthonormal basis (the identity): the untruncated
// reference point of basis sweeps, exact by construction regardless of
// snapshot conditioning.
inline PodBasis full_basis(const std::string& element_type, int n_cells, int n_components,
                           Eigen::Index dim) {
  PodBasis basis;
  basis.element_type = element_type;
  basis.n_cells = n_cells;
  basis.n_components = n_components;
  basis.modes = Eigen::MatrixXd::Identity(dim, dim);
  basis.singular_values = Eigen::VectorXd::Ones(dim);
  basis.r = static_cast<int>(dim);
  basis.energy_fraction = 1.0;
  return basis;
}

inline Eigen::VectorXd project(const PodBasis& basis, const Eigen::VectorXd& field_values) {
  if (field_values.size() != basis.modes.rows())
    throw Error(ErrorKind::DimensionMismatch,
                "project: field has " + std::to_string(field_values.size()) + " entries, basis dim " +
                    std::to_string(basis.modes.rows()));
  return basis.modes.transpose() * field_values;
}

inline Eigen::VectorXd reconstruct(const PodBasis& basis, const Eigen::VectorXd& coords) {
  if (coords.size() != basis.r)
    throw Error(ErrorKind::DimensionMismatch,
                "reconstruct: got " + std::to_string(coords.size()) + " coordinates, basis r = " +
                    std::to_string(basis.r));
  return basis.modes * coords;
}

// ---------------------------------------------------------------------------
// Interior + port split. Ports live on edge-interior traces (endpoints
// excluded); facing edges pool into one shared class, so a vertical
// interface trains on left and right traces together. Corner nodes are
// not compressed at all: in an assembled layout a corner couples up to
// four elements and keeps its nodal value as its own coupling slot.
// ---------------------------------------------------------------------------

struct SplitBasis {
  PodBasis interior;
  std::array<PodBasis, 2> ports;  // indexed by EdgeClass (Vertical, Horizontal)

  const PodBasis& port(EdgeClass cls) const { return ports[static_cast<int>(cls)]; }
};

namespace detail {

inline Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& data, const std::vector<int>& locals,
                                   int n_components, int nodes_per_component) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(locals.size()) * n_components, data.cols());
  for (int k = 0; k < n_components; ++k)
    for (std::size_t i = 0; i < locals.size(); ++i)
      out.row(static_cast<Eigen::Index>(k) * locals.size() + i) =
          data.row(static_cast<Eigen::Index>(k) * nodes_per_component + locals[i]);
  return out;
}

}  // namespace detail

inline SplitBasis split_port_basis(const std::string& element_type, const ElementGrid& grid,
                                   int n_components, const Eigen::MatrixXd& data,
                                   const Truncation& truncation) {
  const int n_nodes = grid.n_nodes();
  if (data.rows() != static_cast<Eigen::Index>(n_components) * n_nodes)
    throw Error(ErrorKind::DimensionMismatch, "split_port_basis: snapshot rows do not match grid");
  const ElementIndexSets sets = element_index_sets(grid);
  if (sets.edge(EdgeSide::Left).empty())
    throw Error(ErrorKind::DegenerateData, "split_port_basis: empty edge trace set");

  SplitBasis split;
  split.interior = compute_pod(element_type, grid.n_cells, n_components,
                               detail::gather_rows(data, sets.interior, n_components, n_nodes),
                               truncation);

  auto pooled = [&](EdgeSide a, EdgeSide b) {
    Eigen::MatrixXd ta = detail::gather_rows(data, sets.edge(a), n_components, n_nodes);
    Eigen::MatrixXd tb = detail::gather_rows(data, sets.edge(b), n_components, n_nodes);
    Eigen::MatrixXd pool(ta.rows(), ta.cols() + tb.cols());
    pool << ta, tb;
    return pool;
  };
  split.ports[static_cast<int>(EdgeClass::Vertical)] =
      compute_pod(element_type, grid.n_cells, n_components,
                  pooled(EdgeSide::Left, EdgeSide::Right), truncation);
  split.ports[static_cast<int>(EdgeClass::Horizontal)] =
      compute_pod(element_type, grid.n_cells, n_components,
                  pooled(EdgeSide::Bottom, EdgeSide::Top), truncation);
  return split;
}

// ---------------------------------------------------------------------------
// Trained component: one element type's basis content, monolithic or
// interior+ports. This is what basis archives store and what assembly
// consumes.
// ---------------------------------------------------------------------------

struct ComponentBasis {
  enum class Kind { Monolithic, Split };
  Kind kind = Kind::Monolithic;
  std::string element_type;
  int n_cells = 0;
  int n_components = 1;
  PodBasis monolithic;
  SplitBasis split;
};

inline ComponentBasis make_monolithic(PodBasis basis) {
  ComponentBasis cb;
  cb.kind = ComponentBasis::Kind::Monolithic;
  cb.element_type = basis.element_type;
  cb.n_cells = basis.n_cells;
  cb.n_components = basis.n_components;
  cb.monolithic = std::move(basis);
  return cb;
}

inline ComponentBasis make_split(const std::string& element_type, int n_cells, int n_components,
                                 SplitBasis split) {
  ComponentBasis cb;
  cb.kind = ComponentBasis::Kind::Split;
  cb.element_type = element_type;
  cb.n_cells = n_cells;
  cb.n_components = n_components;
  cb.split = std::move(split);
  return cb;
}

// ---------------------------------------------------------------------------
// Basis archive ("DDFBAS01"): little-endian, CRC-32 trailer. Split
// archives store the interior block plus the two pooled edge-class port
// blocks (vertical, horizontal); facing sides share a basis by
// construction, so per-side duplicates would carry no information.
// ---------------------------------------------------------------------------

namespace detail {

inline void write_pod_block(ByteWriter& w, const PodBasis& b) {
  w.write_u32(static_cast<std::uint32_t>(b.r));
  w.write_u32(static_cast<std::uint32_t>(b.singular_values.size()));
  w.write_u32(static_cast<std::uint32_t>(b.modes.rows()));
  for (Eigen::Index i = 0; i < b.singular_values.size(); ++i) w.write_f64(b.singular_values[i]);
  for (Eigen::Index c = 0; c < b.modes.cols(); ++c)
    for (Eigen::Index i = 0; i < b.modes.rows(); ++i) w.write_f64(b.modes(i, c));
}

inline PodBasis read_pod_block(ByteReader& rd, const std::string& element_type, int n_cells,
                               int n_components) {
  PodBasis b;
  b.element_type = element_type;
  b.n_cells = n_cells;
  b.n_components = n_components;
  b.r = static_cast<int>(rd.read_u32());
  const auto p = rd.read_u32();
  const auto rows = rd.read_u32();
  b.singular_values.resize(p);
  for (std::uint32_t i = 0; i < p; ++i) b.singular_values[i] = rd.read_f64();
  b.modes.resize(rows, b.r);
  for (int c = 0; c < b.r; ++c)
    for (std::uint32_t i = 0; i < rows; ++i) b.modes(i, c) = rd.read_f64();
  const double total = b.singular_values.squaredNorm();
  b.energy_fraction =
      total > 0.0 ? b.singular_values.head(std::min<Eigen::Index>(b.r, p)).squaredNorm() / total : 1.0;
  return b;
}

}  // namespace detail

inline void save_basis(const ComponentBasis& cb, const std::string& path) {
  ByteWriter w;
  w.write_bytes("DDFBAS01", 8);
  w.write_string(cb.element_type);
  w.write_u32(static_cast<std::uint32_t>(cb.n_cells));
  w.write_u32(static_cast<std::uint32_t>(cb.n_components));
  const PodBasis& head = cb.kind == ComponentBasis::Kind::Monolithic ? cb.monolithic : cb.split.interior;
  w.write_u32(static_cast<std::uint32_t>(head.r));
  w.write_u32(static_cast<std::uint32_t>(head.singular_values.size()));
  w.write_u32(cb.kind == ComponentBasis::Kind::Monolithic ? 0u : 1u);
  if (cb.kind == ComponentBasis::Kind::Monolithic) {
    detail::write_pod_block(w, cb.monolithic);
  } else {
    detail::write_pod_block(w, cb.split.interior);
    detail::write_pod_block(w, cb.split.ports[0]);
    detail::write_pod_block(w, cb.split.ports[1]);
  }
  w.finish_to_file(path);
}

inline ComponentBasis load_basis(const std::string& path) {
  ByteReader rd = ByteReader::from_file(path);
  rd.check_crc("basis archive " + path);
  char magic[8];
  rd.read_bytes(magic, 8);
  if (std::memcmp(magic, "DDFBAS", 6) != 0)
    throw Error(ErrorKind::CorruptArchive, path + ": not a basis archive");
  if (std::memcmp(magic, "DDFBAS01", 8) != 0)
    throw Error(ErrorKind::UnsupportedVersion, path + ": unsupported basis archive version");
  ComponentBasis cb;
  cb.element_type = rd.read_string();
  cb.n_cells = static_cast<int>(rd.read_u32());
  cb.n_components = static_cast<int>(rd.read_u32());
  rd.read_u32();  // head r (redundant with block data)
  rd.read_u32();  // head p
  const auto kind = rd.read_u32();
  if (kind == 0) {
    cb.kind = ComponentBasis::Kind::Monolithic;
    cb.monolithic = detail::read_pod_block(rd, cb.element_type, cb.n_cells, cb.n_components);
  } else if (kind == 1) {
    cb.kind = ComponentBasis::Kind::Split;
    cb.split.interior = detail::read_pod_block(rd, cb.element_type, cb.n_cells, cb.n_components);
    cb.split.ports[0] = detail::read_pod_block(rd, cb.element_type, cb.n_cells, cb.n_components);
    cb.split.ports[1] = detail::read_pod_block(rd, cb.element_type, cb.n_cells, cb.n_components);
  } else {
    throw Error(ErrorKind::CorruptArchive, path + ": unknown block descriptor");
  }
  return cb;
}

}  // namespace ddfem
