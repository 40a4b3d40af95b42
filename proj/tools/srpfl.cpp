// srpfl: run, compare, verify and gen subcommands.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "srpfl/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Straggler-resilient personalized federated learning simulator"};
  app.require_subcommand(1);

  srpfl::cli::Options opt;
  std::uint64_t seed = 0;
  std::string out_dir;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "Config file (key = value lines)");
    sub->add_option("--seed", seed, "Override the master seed");
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--override", opt.overrides, "key=value, repeatable")->take_all();
  };
  auto* run = app.add_subcommand("run", "Run one configuration and write trace.csv");
  auto* compare = app.add_subcommand("compare", "Doubling scheme vs full participation over a seed sweep");
  auto* verify = app.add_subcommand("verify", "Contraction, order-statistic and kernel checks");
  auto* gen = app.add_subcommand("gen", "Write the ground-truth model to ground_truth.txt");
  for (auto* sub : {run, compare, verify, gen}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : srpfl::cli::kConfigError;
  }

  for (auto* sub : {run, compare, verify, gen}) {
    if (sub->count("--seed")) opt.seed = seed;
    if (sub->count("--out")) opt.out_dir = out_dir;
  }

  if (run->parsed()) return srpfl::cli::cmd_run(opt, std::cout, std::cerr);
  if (compare->parsed()) return srpfl::cli::cmd_compare(opt, std::cout, std::cerr);
  if (verify->parsed()) return srpfl::cli::cmd_verify(opt, std::cout, std::cerr);
  return srpfl::cli::cmd_gen(opt, std::cout, std::cerr);
}
