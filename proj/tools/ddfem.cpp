// ddfem: configuration-driven DD-FEM pipeline driver.
//
//   ddfem gen-data  --config cfg   harvest patch snapshots
//   ddfem train     --config cfg   compress snapshots into a basis archive
//   ddfem solve     --config cfg   assemble + solve a tiled layout, report errors
//   ddfem sweep     --config cfg   accuracy-vs-basis-size study
//   ddfem reproduce NAME           pinned end-to-end studies with pass/fail bounds
//
// Exit codes: 0 success, 1 usage/config error, 2 numerical failure, 3 I/O failure.

#include <CLI11.hpp>
#include <iostream>

#include "ddfem/pipeline.hpp"

namespace {

ddfem::PipelineConfig load_config(const std::string& path, const std::string& out_dir,
                                  int threads) {
  ddfem::PipelineConfig cfg = ddfem::parse_config(ddfem::detail::read_text_file(path));
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  if (threads >= 0) cfg.threads = threads;
  ddfem::apply_env_overrides(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Data-driven finite element pipeline"};
  app.require_subcommand(1);

  std::string config_path, out_dir, reproduce_name;
  int threads = -1;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", config_path, "pipeline configuration file");
    if (needs_config) opt->required();
    sub->add_option("--out", out_dir, "output directory (overrides output.dir)");
    sub->add_option("--threads", threads, "worker threads (0 = all cores)");
  };

  auto* gen = app.add_subcommand("gen-data", "generate training snapshots");
  add_common(gen, true);
  auto* train = app.add_subcommand("train", "compress snapshots into a basis archive");
  add_common(train, true);
  auto* solve = app.add_subcommand("solve", "assemble and solve a tiled layout");
  add_common(solve, true);
  auto* sweep = app.add_subcommand("sweep", "accuracy vs basis size study");
  add_common(sweep, true);
  auto* reproduce = app.add_subcommand("reproduce", "run a pinned study");
  reproduce->add_option("name", reproduce_name, "poisson-spiral | burgers-extrapolation")
      ->required();
  add_common(reproduce, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      ddfem::cmd_gen_data(load_config(config_path, out_dir, threads));
    } else if (train->parsed()) {
      ddfem::cmd_train(load_config(config_path, out_dir, threads));
    } else if (solve->parsed()) {
      const ddfem::RunReport report = ddfem::cmd_solve(load_config(config_path, out_dir, threads));
      std::cout << "rel_l2_final = " << ddfem::fmt17(report.rel_l2_final)
                << "  dof_fom/dof_reduced = " << ddfem::fmt17(report.dof_ratio) << "\n";
    } else if (sweep->parsed()) {
      const auto reports = ddfem::cmd_sweep(load_config(config_path, out_dir, threads));
      for (const auto& rp : reports)
        std::cout << rp.label << ": r = " << rp.r
                  << "  rel_l2_final = " << ddfem::fmt17(rp.rel_l2_final) << "\n";
    } else if (reproduce->parsed()) {
      const auto result =
          ddfem::cmd_reproduce(reproduce_name, out_dir, threads >= 0 ? threads : 0);
      if (!result.all_passed()) return 2;
    }
  } catch (const ddfem::Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return ddfem::exit_code_for(err.kind());
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  }
  return 0;
}
