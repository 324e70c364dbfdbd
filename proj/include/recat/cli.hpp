#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "recat/error.hpp"
#include "recat/pipeline.hpp"

namespace recat::cli {

/// Exit status per error family; 0 is success.
inline int exit_code(Errc e) {
  switch (e) {
    case Errc::ConfigInvalid:
    case Errc::InvalidConfig: return 2;
    case Errc::MissingPriorStage: return 3;
    case Errc::StageComplete: return 4;
    case Errc::RunLocked: return 5;
    default: return 1;
  }
}

inline void report_error(std::ostream& err, std::string_view code, std::string_view message) {
  nlohmann::json j{{"status", "error"}, {"error", code}, {"message", message}};
  err << j.dump() << '\n';
}

/// Entry point shared by the `recat` binary and in-process tests.
inline int run(int argc, const char* const* argv, std::ostream& err = std::cerr) {
  CLI::App app{"recat: weakly supervised FoR 2008 to FoR 2020 reclassification pipeline"};
  app.require_subcommand(1);
  std::string config_path = "recat.conf";
  std::optional<std::string> run_dir;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "Configuration file")->capture_default_str();
  app.add_option("--run-dir", run_dir, "Run directory (default: latest run for this config)");
  app.add_option("--seed", seed, "Seed, overriding the config");

  auto* ingest = app.add_subcommand("ingest", "Load the corpus into a new run directory");
  auto* label = app.add_subcommand("label", "Build 2008 weak labels");
  std::vector<std::string> strategies;
  label->add_option("--strategy", strategies, "grants, journals or contributed (repeatable)")
      ->check(CLI::IsMember({"grants", "journals", "contributed"}));
  auto* remap = app.add_subcommand("remap", "Move labels to FoR 2020");
  auto* train = app.add_subcommand("train", "Shape the training set and fit the classifier");
  auto* predict = app.add_subcommand("predict", "Classify publications from a JSONL file");
  std::string predict_input;
  predict->add_option("file", predict_input, "Publications JSONL")->required();
  auto* evaluate = app.add_subcommand("evaluate", "k-fold cross-validation");
  auto* report = app.add_subcommand("report", "Write a report");
  std::string which;
  report->add_option("which", which, "coverage, distribution, transition or journal-list")
      ->required()
      ->check(CLI::IsMember({"coverage", "distribution", "transition", "journal-list"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error(err, "UsageError", e.what());
    return 64;
  }

  try {
    auto cfg = pipeline::load_config(config_path, seed);
    std::optional<std::filesystem::path> dir;
    if (run_dir) dir = std::filesystem::path(*run_dir);
    const bool first = ingest->parsed();
    pipeline::Context ctx{cfg, pipeline::RunDir::open(cfg, dir, first)};
    pipeline::RunLock lock(ctx.run.path() / ".lock");
    ctx.log("run directory " + ctx.run.path().string());
    if (first) {
      pipeline::stage_ingest(ctx);
    } else if (label->parsed()) {
      std::set<pipeline::Strategy> s;
      for (const auto& name : strategies) s.insert(pipeline::parse_strategy(name));
      pipeline::stage_label(ctx, s);
    } else if (remap->parsed()) {
      pipeline::stage_remap(ctx);
    } else if (train->parsed()) {
      pipeline::stage_train(ctx);
    } else if (predict->parsed()) {
      pipeline::stage_predict(ctx, predict_input);
    } else if (evaluate->parsed()) {
      pipeline::stage_evaluate(ctx);
    } else if (report->parsed()) {
      pipeline::stage_report(ctx, pipeline::parse_report(which));
    }
  } catch (const Error& e) {
    report_error(err, errc_name(e.code()), e.what());
    return exit_code(e.code());
  } catch (const std::exception& e) {
    report_error(err, "Internal", e.what());
    return 1;
  }
  return 0;
}

}  // namespace recat::cli
