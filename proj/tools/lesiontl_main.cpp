// Command-line entry point: run / compare-arch / compare-opt / ablate / report.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "lesiontl/errors.hpp"
#include "lesiontl/evaluation.hpp"
#include "lesiontl/experiment.hpp"

namespace fs = std::filesystem;
using namespace lesiontl;

namespace {

enum Exit { kOk = 0, kFailure = 1, kInvalid = 2, kDataset = 3, kDivergence = 4, kPartial = 5 };

int exit_code(const Error& e) {
  switch (e.code()) {
    case ErrorCode::validation:
    case ErrorCode::config:
    case ErrorCode::spec:
    case ErrorCode::policy:
      return kInvalid;
    case ErrorCode::divergence: return kDivergence;
    case ErrorCode::partial_suite: return kPartial;
    default: return is_dataset_error(e.code()) ? kDataset : kFailure;
  }
}

struct GlobalFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
  bool dry_run = false;
  int jobs = 1;
};

int run_suite(const GlobalFlags& flags, std::optional<experiment::Suite> forced) {
  if (flags.config.empty()) {
    std::cerr << "error: --config is required\n";
    return kInvalid;
  }
  auto config = experiment::load_config(flags.config);
  if (flags.seed) config.seed = *flags.seed;
  if (flags.output_dir) config.output_dir = *flags.output_dir;
  if (forced) config.suite = *forced;

  if (flags.dry_run) {
    experiment::validate(config);
    std::cout << experiment::describe_plan(config);
    return kOk;
  }
  experiment::RunOptions options;
  options.jobs = flags.jobs;
  options.log = &std::cerr;
  const auto artifacts = experiment::run_experiment(config, options);
  std::cout << artifacts.run_dir.string() << '\n';
  return kOk;
}

std::vector<fs::path> collect_reports(const std::vector<std::string>& inputs) {
  std::vector<fs::path> out;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> found;
      for (const auto& entry : fs::recursive_directory_iterator(in)) {
        if (entry.is_regular_file() && entry.path().filename() == "report.json") found.push_back(entry.path());
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.emplace_back(in);
    }
  }
  return out;
}

int report(const GlobalFlags& flags, const std::vector<std::string>& inputs) {
  std::vector<evaluation::EvaluationReport> reports;
  for (const auto& path : collect_reports(inputs)) reports.push_back(evaluation::read_report(path));
  const auto table = evaluation::aggregate_reports(reports);
  std::cout << evaluation::render_text(table);
  if (flags.output_dir) {
    fs::create_directories(*flags.output_dir);
    std::ofstream(fs::path(*flags.output_dir) / "comparison.csv", std::ios::binary) << evaluation::render_csv(table);
    std::ofstream(fs::path(*flags.output_dir) / "comparison.txt", std::ios::binary) << evaluation::render_text(table);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transfer-learning skin-lesion classification experiments"};
  app.require_subcommand(1);

  GlobalFlags flags;
  app.add_option("--config", flags.config, "Experiment config (JSON)");
  app.add_option("--seed", flags.seed, "Override the config seed");
  app.add_option("--output-dir", flags.output_dir, "Override the config output_dir");
  app.add_flag("--dry-run", flags.dry_run, "Validate and print the plan without training");
  app.add_option("--jobs", flags.jobs, "Suite members trained concurrently")->check(CLI::PositiveNumber);

  auto* run = app.add_subcommand("run", "Run the suite named in the config (default: single)");
  auto* arch = app.add_subcommand("compare-arch", "Compare the configured backbones");
  auto* opt = app.add_subcommand("compare-opt", "Compare Adam and SGD on the configured model");
  auto* ablate = app.add_subcommand("ablate", "Baseline plus one run per removable head layer");
  auto* rep = app.add_subcommand("report", "Aggregate report.json files into a comparison table");
  std::vector<std::string> inputs;
  rep->add_option("reports", inputs, "report.json files or directories searched recursively")->required();
  for (auto* sub : {run, arch, opt, ablate, rep}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInvalid;
  }

  try {
    if (*run) return run_suite(flags, std::nullopt);
    if (*arch) return run_suite(flags, experiment::Suite::compare_architectures);
    if (*opt) return run_suite(flags, experiment::Suite::compare_optimizers);
    if (*ablate) return run_suite(flags, experiment::Suite::ablation);
    return report(flags, inputs);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const Error& e) {
    std::cerr << "error [" << error_code_name(e.code()) << "]: " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}
