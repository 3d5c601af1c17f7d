#include <omp.h>

#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "ehrenfest/harness.hpp"

namespace h = ehrenfest::harness;

namespace {

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int threads = 0;
};

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config, "experiment config file")->required()->check(CLI::ExistingFile);
  sub->add_option("--out", o.out, "output directory (default: [output] dir)");
  sub->add_option("--seed", o.seed, "master seed, overrides [run] seed");
  sub->add_option("--threads", o.threads, "OpenMP threads (default: runtime choice)")
      ->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ehrenfest urn model experiments"};
  app.require_subcommand(1);
  Options opts;
  const std::pair<const char*, const char*> commands[] = {
      {"hydro", "hydrodynamic convergence of the empirical measure"},
      {"clt", "fluctuation variance and the exact moment generating function"},
      {"replacement", "replacement-lemma decay of sup-norm deviations"},
      {"mdp", "moderate-deviation marginal probabilities against the rate"},
      {"martingale", "unit mean of the exponential martingale"},
      {"tilted-lln", "law of large numbers under tilted dynamics"},
      {"rate", "rate functional evaluation and consistency"}};
  for (const auto& [name, help] : commands) add_common(app.add_subcommand(name, help), opts);
  CLI11_PARSE(app, argc, argv);

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    auto cfg = h::load_config(opts.config);
    const auto kind = h::parse_kind(command);
    if (cfg.kind_declared && cfg.kind != kind) {
      std::cerr << "error: config declares experiment '" << h::to_string(cfg.kind)
                << "' but the command is '"
                << command << "'\n";
      return 2;
    }
    cfg.kind = kind;
    if (opts.seed) cfg.master_seed = *opts.seed;
    if (opts.threads > 0) omp_set_num_threads(opts.threads);
    const std::filesystem::path out = opts.out.empty() ? cfg.out_dir : std::filesystem::path(opts.out);

    const auto report = h::run_experiment(cfg);
    h::write_report(report, out);
    h::print_checks(std::cout, report);
    std::cout << (report.passed() ? "all checks passed" : "some checks failed") << " ("
              << report.wall_seconds << " s, report in " << (out / "report.json").string() << ")\n";
    return report.passed() ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
