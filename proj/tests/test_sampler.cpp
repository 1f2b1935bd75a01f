#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "ddfem/sampler.hpp"

using namespace ddfem;

TEST_CASE("seeded source sampling is deterministic and in range") {
  RngStream a(123), b(123);
  const SourceSample sa = sample_poisson_source(a);
  const SourceSample sb = sample_poisson_source(b);
  CHECK(sa.k1 == sb.k1);
  CHECK(sa.k2 == sb.k2);
  CHECK(sa.theta == sb.theta);

  RngStream rng(99);
  double theta_sum = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const SourceSample s = sample_poisson_source(rng);
    CHECK(std::abs(s.k1) <= 0.5);
    CHECK(std::abs(s.k2) <= 0.5);
    CHECK(s.theta >= 0.0);
    CHECK(s.theta <= 1.0);
    theta_sum += s.theta;
  }
  const double theta_mean = theta_sum / 10000.0;
  CHECK(theta_mean > 0.47);
  CHECK(theta_mean < 0.53);
}

TEST_CASE("sinusoidal source analytic values") {
  CHECK(eval_sinusoidal_source({0.0, 0.0, 0.25}, 0.123, 0.87) == Catch::Approx(1.0).margin(1e-15));
  CHECK(eval_sinusoidal_source({0.5, 0.0, 0.0}, 1.0, 0.3) == Catch::Approx(0.0).margin(1e-15));
  CHECK(eval_sinusoidal_source({0.25, 0.25, 0.5}, 1.0, 1.0) == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("spiral source analytic values and conventions") {
  CHECK(eval_spiral_source({1.0, 0.0, 0.0, 0.0}, 1.0, 0.0) == Catch::Approx(0.0).margin(1e-15));
  // value at the center uses the phi := 0 convention
  CHECK(eval_spiral_source({2.0, 0.3, 0.4, 5.0}, 0.3, 0.4) == 0.0);
  // gamma = 0 makes the field radially symmetric
  const SpiralParams p{0.7, 0.2, -0.1, 0.0};
  const double r = 0.37;
  const double v1 = eval_spiral_source(p, p.cx + r, p.cy);
  const double v2 = eval_spiral_source(p, p.cx, p.cy + r);
  const double v3 = eval_spiral_source(p, p.cx - r / std::sqrt(2.0), p.cy + r / std::sqrt(2.0));
  CHECK(v1 == Catch::Approx(v2).margin(1e-15));
  CHECK(v1 == Catch::Approx(v3).margin(1e-14));
}

TEST_CASE("burgers ic is periodic, bounded, and deterministic") {
  RngStream a(5), b(5);
  const BurgersIcSample ia = sample_burgers_ic(a, 4);
  const BurgersIcSample ib = sample_burgers_ic(b, 4);
  CHECK(ia.coeff_cos[0] == ib.coeff_cos[0]);
  CHECK(ia.coeff_sin[1] == ib.coeff_sin[1]);
  CHECK(ia.mean == ib.mean);

  for (double y : {0.0, 0.31, 1.7}) {
    CHECK(ia.eval(0, 0.0, y) == Catch::Approx(ia.eval(0, 2.0, y)).margin(1e-12));
    CHECK(ia.eval(1, 0.0, y) == Catch::Approx(ia.eval(1, 2.0, y)).margin(1e-12));
  }
  double max_abs = 0.0;
  for (int i = 0; i <= 64; ++i)
    for (int j = 0; j <= 64; ++j)
      for (int comp = 0; comp < 2; ++comp)
        max_abs = std::max(max_abs, std::abs(ia.eval(comp, 2.0 * i / 64, 2.0 * j / 64)));
  CHECK(max_abs <= 1.0);

  CHECK_THROWS_AS(sample_burgers_ic(a, 0), Error);
}

TEST_CASE("poisson patch snapshots: counting, zero control, recompute oracle") {
  const ElementGrid grid = build_element_grid(4);
  const RngStream rng(2024);
  const SnapshotSet set = generate_poisson_patch_snapshots(3, grid, rng);
  CHECK(set.data.cols() == 12);
  CHECK(set.data.rows() == grid.n_nodes());
  CHECK(set.fields_per_snapshot == 1);
  CHECK(set.data.allFinite());

  // zero source (k = 0, theta = 0) produces all-zero columns
  const auto zero_cols = poisson_patch_columns({0.0, 0.0, 0.0}, grid, "square");
  for (const auto& col : zero_cols) CHECK(col.norm() == 0.0);

  // recompute the second sample by hand and compare its element restrictions
  RngStream child = rng.child(1);
  const SourceSample s1 = sample_poisson_source(child);
  const auto cols = poisson_patch_columns(s1, grid, "square");
  for (int e = 0; e < 4; ++e)
    CHECK((set.data.col(4 + e) - cols[static_cast<std::size_t>(e)]).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("burgers patch snapshots: counting, steady control, bounds") {
  const ElementGrid grid = build_element_grid(4);
  const RngStream rng(77);
  // saves only at t=0 and t=T
  const SnapshotSet set = generate_burgers_patch_snapshots(1, grid, 0.05, 0.2, 0, rng);
  CHECK(set.data.cols() == 8);
  CHECK(set.data.rows() == 2 * grid.n_nodes());
  CHECK(set.fields_per_snapshot == 2);
  CHECK(set.data.lpNorm<Eigen::Infinity>() <= 1.0);

  // constant IC stays constant in every restricted column
  BurgersIcSample constant_ic;
  constant_ic.k_max = 1;
  constant_ic.coeff_cos[0].assign(4, 0.0);
  constant_ic.coeff_sin[0].assign(4, 0.0);
  constant_ic.coeff_cos[1].assign(4, 0.0);
  constant_ic.coeff_sin[1].assign(4, 0.0);
  constant_ic.mean = {0.2, -0.1};
  const auto cols = burgers_patch_columns(constant_ic, grid, 1e-3, 0.05, 0.2, 0, "square");
  for (const auto& col : cols) {
    CHECK(col.head(grid.n_nodes()).isConstant(0.2));
    CHECK(col.tail(grid.n_nodes()).isConstant(-0.1));
  }
}

TEST_CASE("snapshot generation is deterministic and thread-count independent") {
  const ElementGrid grid = build_element_grid(4);
  const SnapshotSet s1 = generate_poisson_patch_snapshots(6, grid, RngStream(31), "square", 1);
  const SnapshotSet s4 = generate_poisson_patch_snapshots(6, grid, RngStream(31), "square", 4);
  CHECK((s1.data - s4.data).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(s1.seed == s4.seed);
}

TEST_CASE("snapshot archive round-trip and corruption detection") {
  const ElementGrid grid = build_element_grid(3);
  const SnapshotSet set = generate_poisson_patch_snapshots(2, grid, RngStream(8));
  const std::string path = "test_snapshots.ddfs";
  save_snapshots(set, path);
  const SnapshotSet loaded = load_snapshots(path);
  CHECK(loaded.element_type == set.element_type);
  CHECK(loaded.n_cells == set.n_cells);
  CHECK(loaded.fields_per_snapshot == set.fields_per_snapshot);
  CHECK(loaded.seed == set.seed);
  CHECK((loaded.data - set.data).lpNorm<Eigen::Infinity>() == 0.0);

  // identical content, identical bytes
  save_snapshots(set, "test_snapshots_b.ddfs");
  CHECK(crc32_of_file(path) == crc32_of_file("test_snapshots_b.ddfs"));

  // truncate -> corrupt-archive error
  {
    std::ifstream in(path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    bytes.resize(bytes.size() - 7);
    std::ofstream out("test_snapshots_trunc.ddfs", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  try {
    load_snapshots("test_snapshots_trunc.ddfs");
    FAIL("expected corrupt-archive error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::CorruptArchive);
  }
  std::filesystem::remove(path);
  std::filesystem::remove("test_snapshots_b.ddfs");
  std::filesystem::remove("test_snapshots_trunc.ddfs");
}
