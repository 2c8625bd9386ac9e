#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "poro/fomlite.hpp"
#include "poro/modelselect.hpp"
#include "poro/twolayer.hpp"

namespace poro {

/// One train/test partition request: shuffle with `seed`, keep the first
/// `train_count` samples for training.
struct SplitSpec {
    uint64_t seed = 0;
    size_t train_count = 0;
};

/// Settings shared by the train / report / sweep-nf commands, loaded from the
/// "train" (and "sweep_nf") sections of a JSON config file.
struct PipelineConfig {
    std::filesystem::path geoms_dir;     // needed for "pca" feature mode
    std::filesystem::path features_path; // morphological feature CSV
    std::filesystem::path curves_path;   // breakthrough curve CSV
    std::filesystem::path out_dir;       // model artifacts

    std::vector<std::string> feature_modes = {"mf", "pca"}; // "mf" | "pca"
    std::vector<std::string> depths = {"1l", "2l"};
    int n_f = 6;       // retained principal components
    int n_greedy = 10; // greedy expansion size
    std::vector<SplitSpec> splits;

    HyperGrid grid;
    TwoLayerTrainConfig two_layer; // family/lambda fields are ignored (searched)

    // sweep-nf only
    std::vector<int> nf_list;
    std::vector<std::string> sweep_depths = {"1l"};
    std::filesystem::path sweep_out;

    void validate() const;
};

PipelineConfig load_pipeline_config(const std::filesystem::path& p);

/// Entry point behind main(); args exclude the program name. Returns the
/// process exit code: 0 success, 1 unexpected error, 2 bad configuration,
/// 3 numeric failure, 4 bad artifact.
int cli_main(std::vector<std::string> args);
int cli_main(int argc, const char* const* argv);

} // namespace poro
