#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "collis/point_cloud.hpp"
#include "collis/trainer.hpp"

namespace collis {

struct DataConfig {
    int train_scenes = 200;
    int val_scenes = 20;
    double label_fraction = 0.10;
    bool long_tail = false;
    std::uint64_t seed = 1;
    SceneConfig scene;
};

// The full experiment tree; every module-level invariant is checked at load
// time and unknown keys are rejected.
struct RunConfig {
    DataConfig data;
    std::vector<StudentConfig> students;
    TrainMode mode = TrainMode::Collis;
    int epochs = 60;
    double lambda_0 = 0.5;
    double delta_0 = 0.95;
    double lambda_reg = 0.1;
    double learning_rate = 0.05;
    int hidden = 32;
    int log_window = 50;
    CdaConfig cda;
    std::filesystem::path output_dir = "out";

    void validate() const;

    // Assembles the trainer-facing view (roster, mixing fov, seed, names).
    TrainerConfig trainer_config() const;
};

RunConfig default_run_config();

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

TrainMode parse_train_mode(const std::string& name);

// Deterministic dataset construction from the config: generated scenes,
// split, sealed diagnostics and validation set.
DatasetSplit build_dataset(const RunConfig& config);

std::uint64_t derive_seed(std::uint64_t master, std::string_view name, std::uint64_t index = 0);

}  // namespace collis
