// Command-line front end: solve | reduce | measure | check-omega | selftest.

#include <CLI11.hpp>

#include "airy/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Response solutions and reducibility for forced Airy-type equations"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::int64_t seed = -1;
  bool verbose = false;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", config_path, "configuration file");
    if (needs_config) opt->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "seed override")->check(CLI::NonNegativeNumber);
    sub->add_flag("--verbose", verbose, "progress messages");
  };
  auto* solve = app.add_subcommand("solve", "run the outer iteration on a forced problem");
  auto* reduce = app.add_subcommand("reduce", "reduce a linear operator to constant coefficients");
  auto* measure = app.add_subcommand("measure", "Monte Carlo measure of Diophantine sets");
  auto* check = app.add_subcommand("check-omega", "evaluate the non-resonance predicates for one frequency");
  auto* selftest = app.add_subcommand("selftest", "run the built-in invariant checks");
  add_common(solve, true);
  add_common(reduce, true);
  add_common(measure, true);
  add_common(check, true);
  add_common(selftest, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : airy::cli::kExitInput;
  }

  airy::cli::Options o;
  o.out = out_dir;
  o.verbose = verbose;
  if (seed >= 0) o.seed = static_cast<std::uint64_t>(seed);

  if (selftest->parsed()) return airy::cli::cmd_selftest(o);

  airy::Config cfg;
  try {
    cfg = airy::Config::load(config_path);
  } catch (const airy::ConfigError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return airy::cli::kExitInput;
  }
  if (solve->parsed()) return airy::cli::cmd_solve(cfg, o);
  if (reduce->parsed()) return airy::cli::cmd_reduce(cfg, o);
  if (measure->parsed()) return airy::cli::cmd_measure(cfg, o);
  return airy::cli::cmd_check_omega(cfg, o);
}
