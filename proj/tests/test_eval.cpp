#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "ddfem/eval.hpp"

using namespace ddfem;

namespace {

// Independent summation-order oracle for the relative l2 metric: long
// double accumulation over reversed index order.
double rel_l2_oracle(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  long double num = 0.0L, den = 0.0L;
  for (Eigen::Index i = a.size() - 1; i >= 0; --i) {
    const long double d = static_cast<long double>(a[i]) - static_cast<long double>(b[i]);
    num += d * d;
    den += static_cast<long double>(b[i]) * static_cast<long double>(b[i]);
  }
  return static_cast<double>(std::sqrt(num / den));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

TEST_CASE("relative l2 error basics") {
  Eigen::VectorXd ref(4);
  ref << 1.0, -2.0, 0.5, 3.0;
  CHECK(relative_l2_error(ref, ref) == 0.0);
  CHECK(relative_l2_error((1.01 * ref).eval(), ref) == Catch::Approx(0.01).margin(1e-12));
  CHECK_THROWS_AS(relative_l2_error(ref, Eigen::VectorXd::Zero(4)), Error);
  CHECK_THROWS_AS(relative_l2_error(ref, Eigen::VectorXd::Zero(5)), Error);
}

TEST_CASE("relative l2 error agrees with an independent summation order") {
  RngStream rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd a(257), b(257);
    for (int i = 0; i < 257; ++i) {
      b[i] = rng.next_normal() * std::pow(10.0, rng.next_uniform(-3, 3));
      a[i] = b[i] + 0.01 * rng.next_normal();
    }
    const double got = relative_l2_error(a, b);
    CHECK(got == Catch::Approx(rel_l2_oracle(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("csv emission: header-only file, fixed columns, 17-digit round trip") {
  emit_csv({}, "test_empty.csv");
  {
    std::ifstream in("test_empty.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == kCsvHeader);
    std::string rest;
    CHECK_FALSE(std::getline(in, rest));
  }

  RunReport rp;
  rp.label = "demo";
  rp.problem = "poisson";
  rp.formulation = "dg_penalty";
  rp.rows = 2;
  rp.cols = 3;
  rp.n_cells = 8;
  rp.epsilon = 0.9999;
  rp.r = 7;
  rp.dof_fom = 100;
  rp.dof_reduced = 10;
  rp.dof_ratio = 10.0;
  rp.rel_l2_final = 0.1 + 1e-17;  // exercises full-precision formatting
  rp.rel_l2_max = 1.0 / 3.0;
  rp.rel_l2_per_save = {0.25, 1.0 / 3.0};
  rp.timestamp = "2000-01-01T00:00:00Z";
  RunReport rp2 = rp;
  rp2.label = "demo2";
  emit_csv({rp, rp2}, "test_two.csv");
  {
    std::ifstream in("test_two.csv");
    std::string header, row1, row2;
    std::getline(in, header);
    std::getline(in, row1);
    std::getline(in, row2);
    const auto cols_h = split_csv_line(header);
    const auto cols_1 = split_csv_line(row1);
    const auto cols_2 = split_csv_line(row2);
    CHECK(cols_h.size() == cols_1.size());
    CHECK(cols_1.size() == cols_2.size());
    // rel_l2_max parses back exactly
    CHECK(std::stod(cols_1[12]) == rp.rel_l2_max);
    const auto semi = cols_1.back().find(';');
    REQUIRE(semi != std::string::npos);
    CHECK(std::stod(cols_1.back().substr(semi + 1)) == 1.0 / 3.0);
  }
  std::filesystem::remove("test_empty.csv");
  std::filesystem::remove("test_two.csv");
}

TEST_CASE("field dump round trip and corruption detection") {
  StateField f;
  f.n_components = 2;
  f.n_global = 9;
  f.values.resize(18);
  for (int i = 0; i < 18; ++i) f.values[i] = std::sin(i * 0.7);
  write_field_dump(f, "test_field.ddff");
  const StateField g = read_field_dump("test_field.ddff");
  CHECK(g.n_components == 2);
  CHECK(g.n_global == 9);
  CHECK((g.values - f.values).lpNorm<Eigen::Infinity>() == 0.0);

  {
    std::ifstream in("test_field.ddff", std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    bytes[20] ^= 0x5A;
    std::ofstream out("test_field_bad.ddff", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_AS(read_field_dump("test_field_bad.ddff"), Error);
  std::filesystem::remove("test_field.ddff");
  std::filesystem::remove("test_field_bad.ddff");
}

TEST_CASE("extrapolation study orders layouts and keeps the dof ratio steady") {
  const ElementGrid grid = build_element_grid(4);
  const SnapshotSet set = generate_burgers_patch_snapshots(4, grid, 0.02, 0.2, 5, RngStream(12));
  ComponentLibrary lib;
  lib.add(train_component(set, grid, false, Truncation::fixed(12)));
  CouplingConfig coupling{Formulation::ConstrainedResidual, 10.0, 1e-10};
  RngStream rng(13);
  const BurgersIcSample ic = sample_burgers_ic(rng, 2);
  const IcFn ic_fn = [&ic](double x, double y) {
    return std::array<double, 2>{ic.eval(0, x, y), ic.eval(1, x, y)};
  };
  const auto reports = run_extrapolation_study(lib, grid, {{3, 3}, {2, 2}}, coupling,
                                               BcKind::Periodic, "square", nullptr, ic_fn, 1e-3,
                                               0.02, 0.1, 0);
  REQUIRE(reports.size() == 2);
  CHECK(reports[0].rows * reports[0].cols < reports[1].rows * reports[1].cols);
  // periodic tilings: dof_fom and dof_reduced both scale with the element
  // count, so the ratio is constant
  CHECK(reports[0].dof_ratio == Catch::Approx(reports[1].dof_ratio).epsilon(0.05));
}
