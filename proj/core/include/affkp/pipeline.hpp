#pragma once

#include <filesystem>
#include <string>

#include "affkp/dataset_io.hpp"
#include "affkp/losses.hpp"
#include "affkp/metrics.hpp"
#include "affkp/model.hpp"
#include "affkp/scene.hpp"
#include "affkp/tasks.hpp"
#include "affkp/voting.hpp"

namespace affkp {

struct PathsConfig {
  std::string dataset;      // scene directories root
  std::string out;          // command output directory
  std::string checkpoint;   // model checkpoint file
  std::string predictions;  // prediction directories root
};

struct EvalConfig {
  double pck_threshold = 0.3;
};

// Everything a run needs; schema-validated on load, unknown keys rejected.
struct PipelineConfig {
  std::uint64_t seed = 7;
  PathsConfig paths;
  SynthConfig synth;
  ModelConfig model;
  LossConfig loss;
  ClusterConfig cluster;
  FMeasureConfig fmeasure;
  EvalConfig eval;
  SimConfig sim;

  void validate() const;
};

PipelineConfig load_pipeline_config(const std::filesystem::path& path);
std::string pipeline_config_to_json(const PipelineConfig& cfg);

struct RunManifest {
  std::string tool_version;
  std::string config_hash;
  std::string input_hash;
  std::string command;
  std::string timestamp;
};

void write_manifest(const std::filesystem::path& dir, const RunManifest& manifest);
std::string fnv1a_hex(const void* data, std::size_t size);
std::string hash_config(const PipelineConfig& cfg);
std::string hash_tree(const std::filesystem::path& root);  // names, sizes and contents

// Subcommand implementations; the CLI maps thrown errors onto exit codes.
void cmd_generate(const PipelineConfig& cfg, const std::string& command_line);
void cmd_train(const PipelineConfig& cfg, const std::string& command_line);
void cmd_predict(const PipelineConfig& cfg, const std::string& command_line);
void cmd_evaluate(const PipelineConfig& cfg, const std::string& command_line);
void cmd_interpret(const PipelineConfig& cfg, const std::string& command_line);
void cmd_simulate(const PipelineConfig& cfg, const std::string& command_line);
void cmd_validate(const PipelineConfig& cfg);

// Inference over one scene: subsample, forward, cluster; indices in the dump
// reference the scene cloud.
PredictionDump predict_scene(const SceneGroundTruth& scene, const ModelParams& params,
                             const ClusterConfig& cluster, std::uint64_t subsample_seed);

// Predictor backed by a trained model, for campaigns.
Predictor model_predictor(ModelParams params, ClusterConfig cluster, std::uint64_t seed);

}  // namespace affkp
