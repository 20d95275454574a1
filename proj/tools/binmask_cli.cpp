#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "binmask/experiment.hpp"

namespace {

struct Args {
  std::string config;
  std::size_t jobs = 1;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
};

CLI::App* add_task(CLI::App& app, const std::string& name, const std::string& help, Args& args,
                   bool config_required) {
  auto* sub = app.add_subcommand(name, help);
  auto* opt = sub->add_option("--config", args.config, "experiment config (JSON)");
  if (config_required) opt->required()->check(CLI::ExistingFile);
  sub->add_option("--jobs", args.jobs, "trials to run concurrently")->check(CLI::PositiveNumber);
  sub->add_option("--seed", args.seed, "override the config seed");
  sub->add_option("--out", args.out, "output directory");
  return sub;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BinMask: L0 regularization with deterministic binary masks"};
  app.require_subcommand(1);
  Args args;
  add_task(app, "sparsify", "train with per-weight masks", args, true);
  add_task(app, "select-features", "select input features with an input mask", args, true);
  add_task(app, "regularize-compare", "compare BinMask with L1, L2 and dropout", args, true);
  add_task(app, "gradcheck", "check backward against finite differences", args, false);
  CLI11_PARSE(app, argc, argv);

  const auto task = binmask::parse_task(app.get_subcommands().front()->get_name());
  try {
    const auto config = args.config.empty() ? binmask::parse_config(nlohmann::json::object(), task)
                                            : binmask::load_config(args.config, task);
    const auto report = binmask::run_experiment(config, {args.jobs, args.seed, args.out});
    for (const auto& f : report.written) std::cout << (std::filesystem::path(args.out) / f).string() << "\n";
    if (report.partial) {
      std::cerr << "binmask: some trials failed; see summary.json\n";
      return 1;
    }
    return 0;
  } catch (const binmask::ConfigError& e) {
    std::cerr << "binmask: config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "binmask: " << e.what() << "\n";
    return 1;
  }
}
