#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "ocgraf/pipeline.hpp"
#include "ocgraf/synthdata.hpp"
#include "ocgraf/training.hpp"

namespace ocgraf::io {

struct EvalConfig {
    int mc_samples = 200000;
    int matching_scenes = 20;
    bool fg_only = false;
};

struct RunConfig {
    uint64_t seed = 0;
    std::string out_dir = "out";
    synth::GeneratorConfig data;
    pipeline::ModelConfig model;
    train::LossConfig training;
    int checkpoint_every = 1000;
    EvalConfig eval;
};

// Strict parse: any unknown key fails with its full path. Missing keys keep
// their defaults.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json run_config_to_json(const RunConfig& cfg);

// Hash of every numerics-affecting field (everything but output paths).
std::string config_digest(const RunConfig& cfg);

}  // namespace ocgraf::io
