#include "dialogcode/cli.hpp"

#include <iostream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "dialogcode/error.hpp"
#include "dialogcode/pipeline.hpp"

namespace dialogcode {

namespace {

struct CommonArgs {
  std::string config;
  std::string run_id;
  bool resume = false;
  std::string subset;
  std::string mode;
  std::string log_level = "info";
  std::vector<std::string> compare;
};

void add_common(CLI::App* cmd, CommonArgs& a, bool with_subset) {
  cmd->add_option("--config", a.config, "Run configuration file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--run-id", a.run_id, "Run directory name (default: derived from the config hash)");
  cmd->add_flag("--resume", a.resume, "Skip stages this run has already completed");
  cmd->add_option("--mode", a.mode, "Prediction mode override")
      ->check(CLI::IsMember({"separate", "combined"}, CLI::ignore_case));
  if (with_subset) {
    cmd->add_option("--subset", a.subset, "Subset to process")
        ->check(CLI::IsMember({"validation", "test", "remainder", "all"}, CLI::ignore_case));
  }
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"Multi-model coding of collaborative-learning dialogue"};
  app.require_subcommand(1);
  CommonArgs args;
  app.add_option("--log-level", args.log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  auto* pre = app.add_subcommand("preprocess", "Revise transcripts and split the corpus");
  auto* pred = app.add_subcommand("predict", "Collect model samples and vote");
  auto* chk = app.add_subcommand("check", "Iterative consistency checking of event codes");
  auto* eval = app.add_subcommand("evaluate", "Metrics against human codes and the reliability gate");
  auto* rep = app.add_subcommand("report", "Render the run's metrics, optionally beside other runs");
  auto* run = app.add_subcommand("run", "All stages; without --subset the staged validation/test/remainder protocol");
  add_common(pre, args, false);
  for (auto* c : {pred, chk, eval, run}) add_common(c, args, true);
  add_common(rep, args, false);
  rep->add_option("--compare", args.compare, "Other run ids to show side by side");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  auto logger = spdlog::get("dialogcode");
  if (!logger) logger = spdlog::stderr_logger_mt("dialogcode");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(args.log_level));

  try {
    auto config = RunConfig::load(args.config);
    RunOptions opts;
    if (!args.run_id.empty()) opts.run_id = args.run_id;
    opts.resume = args.resume;
    if (!args.mode.empty()) opts.mode = mode_from_string(args.mode);
    Pipeline pipeline(std::move(config), opts);
    spdlog::info("run {} in {}", pipeline.run_id(), pipeline.run_dir().string());

    auto subset = [&](Subset fallback) { return args.subset.empty() ? fallback : subset_from_string(args.subset); };
    if (*pre) {
      pipeline.preprocess();
    } else if (*pred) {
      pipeline.predict(subset(Subset::kValidation));
    } else if (*chk) {
      pipeline.check(subset(Subset::kValidation));
    } else if (*eval) {
      const auto v = pipeline.evaluate(subset(Subset::kValidation));
      std::cout << "gate: " << to_string(v) << "\n";
      return v == GateVerdict::kFail ? 2 : 0;
    } else if (*rep) {
      std::cout << pipeline.report(args.compare);
    } else if (*run) {
      std::optional<Subset> s;
      if (!args.subset.empty()) s = subset_from_string(args.subset);
      const int code = pipeline.run(s);
      std::cout << "run " << pipeline.run_id() << ": " << (code == 0 ? "complete" : "gate FAIL") << "\n";
      return code;
    }
    return 0;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}

}  // namespace dialogcode
