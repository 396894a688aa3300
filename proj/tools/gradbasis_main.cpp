#include "gradbasis/harness.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace gradbasis;

int main(int argc, char** argv) {
  CLI::App app{"numerical verification of landscape guarantees for gradient basis models"};
  app.require_subcommand(1);

  std::string config_path, out_dir, in_dir, csv_path, config_dir;
  std::int64_t seed_override = -1;

  CLI::App* verify = app.add_subcommand("verify", "run one scenario config");
  verify->add_option("--config", config_path, "scenario config JSON")->required();
  verify->add_option("--out", out_dir, "output directory (overrides config)");
  verify->add_option("--seed", seed_override, "single seed override");

  CLI::App* suite = app.add_subcommand("suite", "run every config in a directory");
  suite->add_option("--dir", config_dir, "directory of scenario configs")->required();
  suite->add_option("--out", out_dir, "output directory");

  CLI::App* report = app.add_subcommand("report", "merge report JSONs into a CSV");
  report->add_option("--in", in_dir, "directory of *.report.json files")->required();
  report->add_option("--csv", csv_path, "output CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (verify->parsed()) {
      ScenarioConfig cfg = load_config(config_path);
      if (!out_dir.empty()) cfg.out_dir = out_dir;
      if (seed_override >= 0) cfg.seeds = {static_cast<std::uint64_t>(seed_override)};
      const ScenarioResult result = run_scenario(cfg);
      for (const VerificationReport& rep : result.reports)
        std::cout << (rep.pass() ? "PASS " : "FAIL ") << rep.scenario_id << "  L="
                  << format_double(rep.loss_value) << "  gap=" << format_double(rep.gap)
                  << "\n";
      return result.pass ? 0 : 1;
    }
    if (suite->parsed()) {
      const bool ok = run_suite(config_dir, out_dir.empty() ? "." : out_dir);
      std::cout << (ok ? "suite: all verdicts pass\n" : "suite: FAILURES present\n");
      return ok ? 0 : 1;
    }
    merge_reports_csv(in_dir, csv_path);
    std::cout << "wrote " << csv_path << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
