#include "sdot/app/commands.hpp"

#include <CLI11.hpp>

int main(int argc, char** argv) {
  CLI::App app{"Semidiscrete optimal transport: dual solver, derivatives, limit laws and bootstrap inference"};
  app.require_subcommand(1, 1);

  std::string config;
  std::filesystem::path out = "out";
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;

  const std::vector<std::pair<std::string, std::string>> commands{
      {"solve", "Solve the dual problem; write potentials, cell masses and the facet table"},
      {"infer", "Plug-in estimate, limit laws, bootstrap, confidence sets and bands"},
      {"validate", "Check derivatives, Hessian and backends on the configured problem"},
      {"coverage-study", "Outer Monte Carlo study of confidence-set and band coverage"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config, "Problem configuration (YAML)")->required();
    sub->add_option("--seed", seed, "Override the configured seed");
    sub->add_option("--out", out, "Output directory")->capture_default_str();
    sub->add_option("--threads", threads, "Worker threads for replications");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : sdot::app::exit_config;
  }

  sdot::app::RunOptions opts;
  opts.out = out;
  opts.seed = seed;
  opts.threads = threads;
  return sdot::app::run_command(app.get_subcommands().front()->get_name(), config, opts);
}
