#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <filesystem>

#include "ddfem/eval.hpp"
#include "ddfem/sampler.hpp"

using namespace ddfem;

namespace {

// Brute-force oracle: all singular values squared from a dense
// eigendecomposition of the Gram matrix S'S.
Eigen::VectorXd gram_singular_energies(const Eigen::MatrixXd& s) {
  Eigen::MatrixXd gram = s.transpose() * s;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  Eigen::VectorXd energies = eig.eigenvalues().reverse();
  for (Eigen::Index i = 0; i < energies.size(); ++i) energies[i] = std::max(energies[i], 0.0);
  return energies;
}

Eigen::MatrixXd random_matrix(int rows, int cols, std::uint64_t seed) {
  RngStream rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = rng.next_normal();
  return m;
}

double orthonormality_defect(const Eigen::MatrixXd& modes) {
  return (modes.transpose() * modes -
          Eigen::MatrixXd::Identity(modes.cols(), modes.cols()))
      .lpNorm<Eigen::Infinity>();
}

}  // namespace

TEST_CASE("identity snapshots need full rank to reach 0.9 energy") {
  const PodBasis b = compute_pod("t", 2, 1, Eigen::MatrixXd::Identity(4, 4),
                                 Truncation::energy_fraction(0.9));
  REQUIRE(b.singular_values.size() == 4);
  for (int i = 0; i < 4; ++i) CHECK(b.singular_values[i] == Catch::Approx(1.0));
  CHECK(b.r == 4);  // 3/4 energy < 0.9, so all four modes are needed
}

TEST_CASE("repeated column collapses to rank one with the sign convention") {
  Eigen::VectorXd v(3);
  v << -2.0, 1.0, 2.0;  // tie in magnitude between entries 0 and 2; lowest index wins
  Eigen::MatrixXd s(3, 3);
  s << v, v, v;
  const PodBasis b = compute_pod("t", 2, 1, s, Truncation::energy_fraction(0.5));
  CHECK(b.r == 1);
  CHECK(b.singular_values[0] == Catch::Approx(v.norm() * std::sqrt(3.0)));
  // sign convention makes the largest-magnitude entry (index 0) positive
  CHECK(b.modes(0, 0) == Catch::Approx(2.0 / 3.0));
  CHECK(b.modes(1, 0) == Catch::Approx(-1.0 / 3.0));
  CHECK(b.modes(2, 0) == Catch::Approx(-2.0 / 3.0));
}

TEST_CASE("eckart-young: projection error equals tail singular energy") {
  const Eigen::MatrixXd s = random_matrix(20, 8, 17);
  const Eigen::VectorXd energies = gram_singular_energies(s);
  for (int r = 1; r <= 8; ++r) {
    const PodBasis b = compute_pod("t", 2, 1, s, Truncation::fixed(r));
    REQUIRE(b.r == r);
    const double err = (s - b.modes * (b.modes.transpose() * s)).squaredNorm();
    const double tail = energies.tail(8 - r).sum();
    CHECK(err == Catch::Approx(tail).margin(1e-9 * energies.sum()));
  }
}

TEST_CASE("degenerate snapshot matrices are rejected") {
  CHECK_THROWS_AS(compute_pod("t", 2, 1, Eigen::MatrixXd::Zero(4, 3), Truncation::fixed(1)), Error);
  try {
    compute_pod("t", 2, 1, Eigen::MatrixXd::Zero(4, 3), Truncation::fixed(1));
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateData);
  }
}

TEST_CASE("orthonormality and determinism across both svd routes") {
  // tall: method of snapshots; wide: direct SVD
  for (auto [rows, cols] : {std::pair{40, 12}, std::pair{12, 40}}) {
    const Eigen::MatrixXd s = random_matrix(rows, cols, 99);
    const PodBasis a = compute_pod("t", 2, 1, s, Truncation::energy_fraction(0.999));
    const PodBasis b = compute_pod("t", 2, 1, s, Truncation::energy_fraction(0.999));
    CHECK(orthonormality_defect(a.modes) <= 1e-10);
    CHECK((a.modes - b.modes).lpNorm<Eigen::Infinity>() == 0.0);
    // sigma non-increasing
    for (Eigen::Index i = 1; i < a.singular_values.size(); ++i)
      CHECK(a.singular_values[i] <= a.singular_values[i - 1] + 1e-15);
  }
}

TEST_CASE("energy truncation is monotone in epsilon") {
  const Eigen::MatrixXd s = random_matrix(30, 10, 5);
  int prev_r = 0;
  double prev_energy = 0.0;
  for (double eps : {0.5, 0.9, 0.99, 0.999, 0.9999}) {
    const PodBasis b = compute_pod("t", 2, 1, s, Truncation::energy_fraction(eps));
    CHECK(b.r >= prev_r);
    CHECK(b.energy_fraction >= eps);
    CHECK(b.energy_fraction >= prev_energy);
    prev_r = b.r;
    prev_energy = b.energy_fraction;
  }
}

TEST_CASE("project and reconstruct identities") {
  const Eigen::MatrixXd s = random_matrix(25, 10, 3);
  const PodBasis b = compute_pod("t", 2, 1, s, Truncation::fixed(6));
  RngStream rng(12);

  // x in the span round-trips
  Eigen::VectorXd c0(6);
  for (int i = 0; i < 6; ++i) c0[i] = rng.next_normal();
  const Eigen::VectorXd x_in = reconstruct(b, c0);
  CHECK((reconstruct(b, project(b, x_in)) - x_in).norm() <= 1e-10 * x_in.norm());
  CHECK((project(b, x_in) - c0).norm() <= 1e-12 * c0.norm());

  // x orthogonal to the span projects to ~zero
  Eigen::VectorXd x(25);
  for (int i = 0; i < 25; ++i) x[i] = rng.next_normal();
  const Eigen::VectorXd x_perp = x - b.modes * (b.modes.transpose() * x);
  CHECK(project(b, x_perp).norm() <= 1e-10 * x_perp.norm());

  // best-approximation property against random competitors in the span
  const Eigen::VectorXd best = reconstruct(b, project(b, x));
  const double best_dist = (x - best).norm();
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd c(6);
    for (int i = 0; i < 6; ++i) c[i] = rng.next_normal();
    CHECK((x - reconstruct(b, c)).norm() >= best_dist - 1e-12);
  }

  CHECK_THROWS_AS(project(b, Eigen::VectorXd::Zero(7)), Error);
  CHECK_THROWS_AS(reconstruct(b, Eigen::VectorXd::Zero(7)), Error);
}

TEST_CASE("port split: constant snapshots give rank-one normalized modes") {
  const ElementGrid grid = build_element_grid(4);
  Eigen::MatrixXd data = Eigen::MatrixXd::Constant(grid.n_nodes(), 5, 3.0);
  const SplitBasis split = split_port_basis("t", grid, 1, data, Truncation::energy_fraction(0.99));
  for (const auto& port : split.ports) {
    CHECK(port.r == 1);
    const Eigen::VectorXd expected =
        Eigen::VectorXd::Constant(port.modes.rows(), 1.0 / std::sqrt(double(port.modes.rows())));
    CHECK((port.modes.col(0) - expected).lpNorm<Eigen::Infinity>() <= 1e-12);
  }
  CHECK(split.interior.r == 1);
}

TEST_CASE("port split blocks cover each element dof exactly once") {
  const ElementGrid grid = build_element_grid(5);
  const ElementIndexSets sets = element_index_sets(grid);
  std::vector<int> count(static_cast<std::size_t>(grid.n_nodes()), 0);
  for (int loc : sets.interior) ++count[static_cast<std::size_t>(loc)];
  for (const auto& edge : sets.edge_interior)
    for (int loc : edge) ++count[static_cast<std::size_t>(loc)];
  for (int loc : sets.corners) ++count[static_cast<std::size_t>(loc)];
  for (int c : count) CHECK(c == 1);
}

TEST_CASE("port split trace reconstruction loses exactly the tail energy") {
  const ElementGrid grid = build_element_grid(6);
  const SnapshotSet set = generate_poisson_patch_snapshots(10, grid, RngStream(44));
  const SplitBasis split = split_port_basis("square", grid, 1, set.data, Truncation::fixed(3));
  const ElementIndexSets sets = element_index_sets(grid);

  // rebuild the pooled vertical-class trace matrix the same way
  Eigen::MatrixXd traces(grid.n_cells - 1, 2 * set.data.cols());
  for (Eigen::Index c = 0; c < set.data.cols(); ++c) {
    for (int i = 0; i < grid.n_cells - 1; ++i) {
      traces(i, c) = set.data(sets.edge(EdgeSide::Left)[static_cast<std::size_t>(i)], c);
      traces(i, set.data.cols() + c) =
          set.data(sets.edge(EdgeSide::Right)[static_cast<std::size_t>(i)], c);
    }
  }
  const PodBasis& psi = split.port(EdgeClass::Vertical);
  const Eigen::VectorXd energies = gram_singular_energies(traces);
  const double err = (traces - psi.modes * (psi.modes.transpose() * traces)).squaredNorm();
  const double tail = energies.tail(energies.size() - psi.r).sum();
  CHECK(err == Catch::Approx(tail).margin(1e-9 * energies.sum()));
}

TEST_CASE("basis archive round-trip is bit-exact") {
  const ElementGrid grid = build_element_grid(4);
  const SnapshotSet set = generate_poisson_patch_snapshots(5, grid, RngStream(21));
  for (bool split : {false, true}) {
    const ComponentBasis cb = train_component(set, grid, split, Truncation::energy_fraction(0.999));
    const std::string path = split ? "test_basis_split.ddfb" : "test_basis_mono.ddfb";
    save_basis(cb, path);
    const ComponentBasis loaded = load_basis(path);
    CHECK(loaded.element_type == cb.element_type);
    CHECK(loaded.n_cells == cb.n_cells);
    CHECK(static_cast<int>(loaded.kind) == static_cast<int>(cb.kind));
    if (split) {
      CHECK((loaded.split.interior.modes - cb.split.interior.modes).lpNorm<Eigen::Infinity>() == 0.0);
      CHECK((loaded.split.ports[0].singular_values - cb.split.ports[0].singular_values)
                .lpNorm<Eigen::Infinity>() == 0.0);
    } else {
      CHECK((loaded.monolithic.modes - cb.monolithic.modes).lpNorm<Eigen::Infinity>() == 0.0);
      CHECK((loaded.monolithic.singular_values - cb.monolithic.singular_values)
                .lpNorm<Eigen::Infinity>() == 0.0);
    }
    save_basis(loaded, path + ".b");
    CHECK(crc32_of_file(path) == crc32_of_file(path + ".b"));
    std::filesystem::remove(path);
    std::filesystem::remove(path + ".b");
  }
}

TEST_CASE("basis archive corruption and version checks") {
  const ElementGrid grid = build_element_grid(3);
  const SnapshotSet set = generate_poisson_patch_snapshots(2, grid, RngStream(2));
  const ComponentBasis cb = train_component(set, grid, false, Truncation::energy_fraction(0.999));
  save_basis(cb, "test_basis.ddfb");

  std::ifstream in("test_basis.ddfb", std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();

  // truncation breaks the CRC
  {
    std::ofstream out("test_basis_trunc.ddfb", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 3));
  }
  try {
    load_basis("test_basis_trunc.ddfb");
    FAIL("expected corrupt-archive error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::CorruptArchive);
  }

  // version bump with a repaired CRC -> unsupported-version error
  {
    std::vector<char> v2(bytes.begin(), bytes.end() - 4);
    v2[7] = '2';
    const std::uint32_t crc = crc32_of(v2.data(), v2.size());
    for (int i = 0; i < 4; ++i) v2.push_back(static_cast<char>((crc >> (8 * i)) & 0xFF));
    std::ofstream out("test_basis_v2.ddfb", std::ios::binary);
    out.write(v2.data(), static_cast<std::streamsize>(v2.size()));
  }
  try {
    load_basis("test_basis_v2.ddfb");
    FAIL("expected unsupported-version error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UnsupportedVersion);
  }
  std::filesystem::remove("test_basis.ddfb");
  std::filesystem::remove("test_basis_trunc.ddfb");
  std::filesystem::remove("test_basis_v2.ddfb");
}
