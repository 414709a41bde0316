#include <CLI11.hpp>
#include <iostream>

#include "aggfolio/error.hpp"
#include "aggfolio/experiment.hpp"

namespace {

int exit_code(aggfolio::ErrorKind kind) {
  using aggfolio::ErrorKind;
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::Parameter:
    case ErrorKind::Capacity: return 1;
    case ErrorKind::Data:
    case ErrorKind::Schema:
    case ErrorKind::Shape:
    case ErrorKind::Domain: return 2;
    case ErrorKind::Invariant:
    case ErrorKind::Numerical: return 3;
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online aggregation of expert long-short portfolios"};
  app.set_version_flag("--version", std::string("aggfolio ") + AGGFOLIO_VERSION);
  app.require_subcommand(1);

  std::string config_path;
  std::string output_dir;
  int threads = -1;
  bool quiet = false;
  for (const char* name : {"backtest", "importance", "verify", "synth"}) {
    const char* help = std::string_view(name) == "backtest"     ? "run the full backtest and write reports"
                       : std::string_view(name) == "importance" ? "leave-one-out expert importance"
                       : std::string_view(name) == "verify"     ? "regret check against the grid oracle"
                                                                : "write a synthetic panel and forecasts";
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", config_path, "JSON configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("-o,--output", output_dir, "output directory (overrides the config)");
    sub->add_option("--threads", threads, "worker thread cap (0 = all cores)")->check(CLI::NonNegativeNumber);
    sub->add_flag("-q,--quiet", quiet, "do not print the summary");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    aggfolio::ExperimentConfig config = aggfolio::load_config(config_path);
    if (threads >= 0) config.threads = static_cast<unsigned>(threads);
    if (!output_dir.empty()) config.output_dir = output_dir;

    aggfolio::Report report;
    if (command == "backtest") {
      report = aggfolio::backtest_report(config, aggfolio::run_backtest(config));
    } else if (command == "importance") {
      report = aggfolio::importance_report(config, aggfolio::run_importance(config));
    } else if (command == "verify") {
      report = aggfolio::verify_report(config, aggfolio::run_verify(config));
    } else {
      report = aggfolio::synth_report(config);
    }
    aggfolio::write_report(report, config.output_dir);
    if (!quiet) std::cout << report.summary;
    if (report.violation) {
      std::cerr << "aggfolio " << command << ": invariant violated (see " << config.output_dir.string()
                << "/summary.txt)\n";
      return 3;
    }
    return 0;
  } catch (const aggfolio::Error& e) {
    std::cerr << "aggfolio " << command << ": " << to_string(e.kind()) << " error: " << e.what() << '\n';
    if (e.kind() == aggfolio::ErrorKind::Capacity) std::cerr << "hint: use fewer experts or a coarser grid step\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "aggfolio " << command << ": " << e.what() << '\n';
    return 2;
  }
}
