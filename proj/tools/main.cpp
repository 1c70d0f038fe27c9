// rankone: run an experiment spec and write its artifacts.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "rankone/experiment.hpp"

namespace {

struct Flags {
  std::string spec;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  unsigned threads = 1;
  std::optional<std::string> k_policy;
};

void add_flags(CLI::App* sub, Flags& f) {
  sub->add_option("--spec", f.spec, "experiment spec (JSON)")->required();
  sub->add_option("--seed", f.seed, "override the spec seed");
  sub->add_option("--out-dir", f.out_dir, "directory for artifacts")->capture_default_str();
  sub->add_option("--threads", f.threads, "worker threads for scans")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--k-policy", f.k_policy, "top stage policy: auto, max or fixed:<K>");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rank-one cutting-and-stacking experiments"};
  app.set_version_flag("--version", std::string(rankone::kVersion));
  app.require_subcommand(1);

  Flags flags;
  const std::pair<const char*, const char*> commands[] = {
      {"realize", "heights, level measures and coverages per stage (CSV)"},
      {"name", "tower name of one stage inside another (JSON)"},
      {"correlate", "correlations over a time range with error bounds (CSV)"},
      {"scan", "weak-limit operator fits over a time range (CSV + JSON)"},
      {"estimate", "alpha, beta, rho or mild-mixing estimates (JSON)"},
      {"audit", "strip, component or relative-product joining audits (JSON)"},
      {"product", "product towers, correlations and estimates (JSON)"},
  };
  for (const auto& [name, help] : commands) add_flags(app.add_subcommand(name, help), flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : rankone::error_exit_code(rankone::ErrorClass::kConfig);
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    rankone::RunOptions opts;
    opts.seed = flags.seed;
    opts.k_policy = flags.k_policy;
    opts.threads = flags.threads;
    const auto result = rankone::run(command, rankone::load_spec(flags.spec), opts);
    rankone::write_artifacts(result, flags.out_dir);
    std::cout << result.summary;
    for (const auto& a : result.artifacts) {
      std::cout << "wrote " << (std::filesystem::path(flags.out_dir) / a.name).string() << "\n";
    }
    return 0;
  } catch (const rankone::Error& e) {
    std::cerr << "error: " << rankone::error_class_name(e.error_class()) << ": " << e.what()
              << "\n";
    return rankone::error_exit_code(e.error_class());
  } catch (const std::exception& e) {
    std::cerr << "error: INTERNAL: " << e.what() << "\n";
    return 1;
  }
}
