#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "affkp/error.hpp"
#include "affkp/pipeline.hpp"
#include "affkp/version.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "pipeline configuration (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", args.seed, "override the configured global seed")
      ->each([&args](const std::string&) { args.seed_set = true; });
  cmd->add_option("--out", args.out, "override the configured output directory");
}

affkp::PipelineConfig load_with_overrides(const CommonArgs& args) {
  affkp::PipelineConfig cfg = affkp::load_pipeline_config(args.config_path);
  if (args.seed_set) cfg.seed = args.seed;
  if (!args.out.empty()) cfg.paths.out = args.out;
  return cfg;
}

std::string join_args(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i) s += ' ';
    s += argv[i];
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"affordance keypoint pipeline"};
  app.set_version_flag("--version", affkp::kToolVersion);
  app.require_subcommand(1);

  CommonArgs args;
  CLI::App* c_generate = app.add_subcommand("generate", "write a synthetic scene dataset");
  CLI::App* c_train = app.add_subcommand("train", "train the model on a dataset");
  CLI::App* c_predict = app.add_subcommand("predict", "run inference over a dataset");
  CLI::App* c_evaluate = app.add_subcommand("evaluate", "score predictions against ground truth");
  CLI::App* c_interpret = app.add_subcommand("interpret", "derive execution frames");
  CLI::App* c_simulate = app.add_subcommand("simulate", "run manipulation task campaigns");
  CLI::App* c_validate = app.add_subcommand("validate", "check a dataset against the contract");
  for (CLI::App* cmd :
       {c_generate, c_train, c_predict, c_evaluate, c_interpret, c_simulate, c_validate})
    add_common(cmd, args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;  // --help/--version exit 0, usage errors are config errors
  }

  const std::string command_line = join_args(argc, argv);
  try {
    affkp::PipelineConfig cfg = load_with_overrides(args);
    if (c_generate->parsed()) affkp::cmd_generate(cfg, command_line);
    if (c_train->parsed()) affkp::cmd_train(cfg, command_line);
    if (c_predict->parsed()) affkp::cmd_predict(cfg, command_line);
    if (c_evaluate->parsed()) affkp::cmd_evaluate(cfg, command_line);
    if (c_interpret->parsed()) affkp::cmd_interpret(cfg, command_line);
    if (c_simulate->parsed()) affkp::cmd_simulate(cfg, command_line);
    if (c_validate->parsed()) affkp::cmd_validate(cfg);
  } catch (const affkp::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 5;
  }
  return 0;
}
