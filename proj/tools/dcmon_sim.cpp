// Scenario runner: `dcmon-sim run <file> [--report text|csv] [--out path]` and
// `dcmon-sim validate <file>`. Exits 0 iff the scenario holds.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "dcmon/scenario.hpp"

namespace {

int print_problems(const dcmon::InvalidScenario& e) {
  std::cerr << "invalid scenario:\n";
  for (const auto& p : e.problems()) std::cerr << "  " << p << "\n";
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic monitoring-pipeline scenario runner"};
  app.require_subcommand(1);

  std::string run_file;
  std::string format = "text";
  std::string out_path;
  auto* run = app.add_subcommand("run", "Run a scenario and report the outcome");
  run->add_option("scenario-file", run_file, "Scenario YAML file")->required()->check(CLI::ExistingFile);
  run->add_option("--report", format, "Report format")->check(CLI::IsMember({"text", "csv"}));
  run->add_option("--out", out_path, "Write the report here instead of stdout");

  std::string validate_file;
  auto* validate = app.add_subcommand("validate", "Check a scenario file without running it");
  validate->add_option("scenario-file", validate_file, "Scenario YAML file")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*validate) {
      const auto spec = dcmon::load_scenario(validate_file);
      std::size_t nodes = 0;
      for (const auto& dc : spec.dcs) nodes += dc.nodes.size();
      std::cout << "ok: " << spec.name << " (" << spec.dcs.size() << " dcs, " << nodes << " nodes, "
                << spec.faults.size() << " faults)\n";
      return 0;
    }
    const auto spec = dcmon::load_scenario(run_file);
    const auto report = dcmon::run_scenario(spec);
    const std::string body =
        format == "csv" ? dcmon::render_report_csv(report) : dcmon::render_report_text(report);
    if (out_path.empty()) {
      std::cout << body;
    } else {
      std::ofstream out(out_path, std::ios::binary);
      if (!(out << body)) {
        std::cerr << "cannot write " << out_path << "\n";
        return 2;
      }
    }
    if (!report.all_passed()) {
      for (const auto& a : report.assertions) {
        if (!a.passed) std::cerr << "assertion failed: " << a.name << ": " << a.detail << "\n";
      }
      return 1;
    }
    return 0;
  } catch (const dcmon::InvalidScenario& e) {
    return print_problems(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
