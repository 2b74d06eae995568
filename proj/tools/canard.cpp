// canard: simulation, fold analysis, canard control and parameter sweeps for
// the fast-slow decision model and its local normal forms.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "canard/app.hpp"

int main(int argc, char** argv) {
  CLI::App cli{"Canard cycles in a fast-slow decision model"};
  cli.require_subcommand(1);

  canard::app::Options opt;
  std::size_t workers = 0;
  for (const std::string& name : canard::app::commands()) {
    CLI::App* sub = cli.add_subcommand(name);
    sub->add_option("--config", opt.config, "JSON config or a previous run.json")
        ->required();
    sub->add_option("--out", opt.out, "output directory")->required();
    sub->add_option("--workers", workers, "sweep worker threads (overrides CANARD_WORKERS)")
        ->check(CLI::PositiveNumber);
    sub->add_flag("--seedless", opt.seedless, "assert that no random numbers are drawn");
  }

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? 0 : canard::app::kConfigError;
  }
  if (workers > 0) opt.workers = workers;
  return canard::app::run(cli.get_subcommands().front()->get_name(), opt, std::cout, std::cerr);
}
