#pragma once

#include <optional>
#include <string>
#include <vector>

#include "jamlab/experiments.hpp"

namespace jamlab {

/// Structured run configuration shared by all CLI subcommands. Every block
/// is optional in the JSON file; missing keys keep these defaults.
struct ExperimentConfig {
    // dataset block
    std::string dataset_kind = "stripe";  // stripe | random_labels | image
    Eigen::Index P = 500;
    Eigen::Index P_test = 10000;
    int d = 5;
    int d_parallel = 1;
    std::vector<double> boundaries = {0.0};
    std::uint64_t data_seed = 1;
    std::string images_path, labels_path;  // image kind
    int pca_k = 0;                         // 0 = no PCA reduction

    // arch block
    int depth = 2;
    std::string activation = "relu";
    double softplus_beta = 5.0;

    // dynamics block
    FlowConfig flow;
    LossSpec loss;

    // grid block
    std::vector<int> h_grid = {32, 64, 128, 256};
    std::vector<double> alpha_grid = {1e-2, 1e2};
    std::vector<Eigen::Index> P_list = {128, 256, 512, 1024, 2048, 4096, 8192};
    int h_lo = 2, h_hi = 64;  // jamming bracket
    double alpha_tilde = 1.0;

    // seeds block
    std::uint64_t base_seed = 1234;
    int M = 10;
    int repeats = 5;

    std::string out_dir = "results";
    bool plots = true;
};

ExperimentConfig load_config(const std::string& path);

/// Builds the per-run plan out of the config's arch/dynamics/seed blocks.
RunPlan make_plan(const ExperimentConfig& cfg);

/// Materializes the configured train/test datasets. For image configs this
/// loads IDX files, applies parity labels, splits, then PCA-reduces.
SplitDataset make_datasets(const ExperimentConfig& cfg);

}  // namespace jamlab
