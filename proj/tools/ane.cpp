#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "ane/io.hpp"
#include "ane/runner.hpp"

namespace {

int cmd_run(const std::string& config_path) {
  ane::RunConfig cfg;
  try {
    cfg = ane::load_config(config_path);
  } catch (const ane::ConfigError& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return 2;
  }
  const auto summary = ane::run_experiment(cfg);
  std::ifstream table(std::filesystem::path(cfg.outdir) / "run_table.csv");
  ane::pretty_print_table(std::cout, ane::read_run_table(table));
  std::cout << "status: " << (summary.converged ? "converged" : "unconverged") << '\n';
  for (const auto& w : summary.result.warnings) std::cerr << "warning: " << w << '\n';
  return 0;
}

int cmd_render(const std::string& in_path, const std::string& out_path) {
  std::ifstream in(in_path);
  if (!in) {
    std::cerr << "cannot open " << in_path << '\n';
    return 2;
  }
  ane::PartitionExport p;
  try {
    p = ane::parse_partition_json(ane::json::parse(in));
  } catch (const std::exception& e) {
    std::cerr << in_path << ": " << e.what() << '\n';
    return 2;
  }
  ane::write_text(out_path, ane::render_svg(p));
  return 0;
}

int cmd_report(const std::string& outdir) {
  const auto path = std::filesystem::path(outdir) / "run_table.csv";
  std::ifstream in(path);
  if (!in) {
    std::cerr << "cannot open " << path.string() << '\n';
    return 2;
  }
  ane::pretty_print_table(std::cout, ane::read_run_table(in));
  std::ifstream summary(std::filesystem::path(outdir) / "summary.json");
  if (summary) std::cout << "status: " << ane::json::parse(summary).value("status", "?") << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive network enhancement runner"};
  app.require_subcommand(1);

  std::string config;
  auto* run = app.add_subcommand("run", "Run an experiment from a config file");
  run->add_option("config", config, "key = value config file")->required();

  std::string partition, svg;
  auto* render = app.add_subcommand("render", "Render a partition export as SVG");
  render->add_option("partition", partition, "partition JSON")->required();
  render->add_option("out", svg, "output SVG path")->required();

  std::string outdir;
  auto* report = app.add_subcommand("report", "Pretty-print the run table of an output directory");
  report->add_option("outdir", outdir)->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(config);
    if (*render) return cmd_render(partition, svg);
    if (*report) return cmd_report(outdir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
