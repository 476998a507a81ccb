#pragma once

#include <string>

#include <nlohmann/json.hpp>

namespace romx::pipeline {

// Stage runners behind the CLI subcommands. Each takes a JSON options
// document; unknown stages are a usage error. All randomness derives from
// the single "seed" option via stage-scoped sub-seeds.
void run_synth(const nlohmann::json& opts);
void run_preprocess(const nlohmann::json& opts);
void run_train(const nlohmann::json& opts);
void run_evaluate(const nlohmann::json& opts);
void run_explain(const nlohmann::json& opts);
void run_aggregate(const nlohmann::json& opts);
void run_report(const nlohmann::json& opts);
void run_timing(const nlohmann::json& opts);

void run_stage(const std::string& name, const nlohmann::json& opts);

}  // namespace romx::pipeline
