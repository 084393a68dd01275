// atbptt command-line front-end: distill, eval, verify, bench.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "atbptt/commands.hpp"

namespace cli = atbptt::cli;

namespace {

cli::ExperimentConfig load(const std::string& path, const std::optional<std::uint64_t>& seed) {
  auto cfg = path.empty() ? cli::ExperimentConfig{} : cli::load_config(path);
  if (seed) cfg.outer.seed = *seed;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dataset distillation with adaptive truncated backpropagation through time"};
  app.require_subcommand(1);

  std::string config_path, out, sidecar, level = "fast";
  std::optional<std::uint64_t> seed;
  std::optional<double> tolerance;

  auto* distill = app.add_subcommand("distill", "run the outer loop and write a run directory");
  distill->add_option("--config", config_path, "config file")->required()->check(CLI::ExistingFile);
  distill->add_option("--out", out, "output root (overrides ATBPTT_OUT_ROOT and [run] out)");
  distill->add_option("--seed", seed, "master seed (overrides [run] seed)");

  auto* eval = app.add_subcommand("eval", "evaluate a distilled sidecar");
  eval->add_option("distilled", sidecar, "distilled.bin path")->required();
  eval->add_option("--config", config_path, "config file")->required()->check(CLI::ExistingFile);
  eval->add_option("--seed", seed, "master seed (overrides [run] seed)");

  auto* verify = app.add_subcommand("verify", "run the hypergradient oracle suite");
  verify->add_option("--level", level, "fast or full")->check(CLI::IsMember({"fast", "full"}));
  verify->add_option("--seed", seed, "suite seed");
  verify->add_option("--tolerance", tolerance, "replace every asserted tolerance");
  verify->add_option("--out", out, "directory for verify.json");

  auto* bench = app.add_subcommand("bench", "low-rank vs dense Hessian product costs");
  bench->add_option("--config", config_path, "config file")->check(CLI::ExistingFile);
  bench->add_option("--out", out, "directory for bench.csv");
  bench->add_option("--seed", seed, "master seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*distill) {
      const auto cfg = load(config_path, seed);
      const auto res = cli::cmd_distill(cfg, cli::output_root(cfg, out));
      std::printf("run directory: %s\n", res.dir.c_str());
      std::printf("accuracy: %.2f +- %.2f over %zu seeds\n", res.report.eval.mean, res.report.eval.stddev,
                  res.report.eval.accuracies.size());
      return 0;
    }
    if (*eval) {
      const auto res = cli::cmd_eval(sidecar, load(config_path, seed));
      for (std::size_t i = 0; i < res.accuracies.size(); ++i) std::printf("seed %zu: %.4f\n", i, res.accuracies[i]);
      std::printf("accuracy: %.2f +- %.2f over %zu seeds\n", res.mean, res.stddev, res.accuracies.size());
      return 0;
    }
    if (*verify) {
      const auto rep = cli::cmd_verify(atbptt::oracle::parse_level(level), seed.value_or(0), tolerance,
                                       out.empty() ? std::string(".") : out);
      for (const auto& c : rep.cells) {
        std::printf("%-4s %-60s error %.3e tol %.1e%s\n", c.pass ? "ok" : "FAIL", c.name.c_str(), c.error,
                    c.tolerance, c.asserted ? "" : " (reported)");
      }
      std::printf("%zu cells, %zu failures, %.2f s\n", rep.cells.size(), rep.failures(), rep.seconds);
      return rep.all_pass() ? 0 : 1;
    }
    if (*bench) {
      const auto cfg = load(config_path, seed);
      const auto rows = cli::cmd_bench(cfg, out.empty() ? std::string(".") : out);
      std::cout << atbptt::bench::to_csv(rows);
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
