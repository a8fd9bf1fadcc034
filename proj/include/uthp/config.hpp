#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace uthp {

enum class LayerSharing { Shared, Stacked };
enum class Estimator { MonteCarlo, Trapezoid };
enum class Objective { Likelihood, Prediction };

/// Model hyperparameters. Defaults follow the synthetic-data column of the
/// reference configuration table (D=64, D_H=256, D_RNN=128, D_K=D_V=16, 3 heads,
/// 2 iterations, dropout 0.1, conv 3/2/0, pool 2/2).
struct ModelConfig {
    int d_model = 64;
    int d_hidden = 256;
    int d_key = 16;
    int d_value = 16;
    int heads = 3;
    int d_rnn = 128;  // 0 disables the recurrent postprocessing block
    int max_iterations = 2;
    bool act = true;
    double act_threshold = 0.99;
    bool cnn_ffn = true;
    LayerSharing layer_sharing = LayerSharing::Shared;
    double dropout = 0.1;
    double softplus_beta = 1.0;
    int conv_kernel = 3;
    int conv_stride = 2;
    int conv_padding = 0;
    int pool_size = 2;
    int pool_stride = 2;
    bool alpha_trainable = false;
    double alpha_init = -0.1;
    /// Multiplier applied to every timestamp before the model sees it.
    double time_scale = 1.0;

    /// Throws ConfigError on an invalid combination.
    void validate() const;
    /// Feature length entering FC2: D_H after conv+pool, or D_H without the CNN.
    [[nodiscard]] int ffn_reduced_length() const;
    /// Number of distinct encoding layers (1 when shared).
    [[nodiscard]] int num_layers() const { return layer_sharing == LayerSharing::Shared ? 1 : max_iterations; }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TrainConfig {
    int epochs = 50;
    int batch_size = 16;
    std::uint64_t seed = 1;
    Estimator estimator = Estimator::MonteCarlo;
    int mc_samples = 100;
    int eval_mc_samples = 10000;
    Objective objective = Objective::Likelihood;
    std::optional<double> alpha_type;  // unset: 0 for likelihood runs, 1 for prediction runs
    std::optional<double> alpha_time;  // unset: 0 for likelihood runs, 0.01 for prediction runs
    int eval_every = 1;
    int early_stop_patience = 10;
    std::string checkpoint_path;
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.0;
    double grad_clip = 5.0;

    void validate() const;
    [[nodiscard]] double type_weight() const;
    [[nodiscard]] double time_weight() const;
};

/// Contents of a flat `key = value` configuration file.
struct ConfigFile {
    ModelConfig model;
    TrainConfig train;
    std::string train_path;
    std::string dev_path;
    std::optional<int> num_types;
};

ConfigFile parse_config_text(const std::string& text);
ConfigFile load_config_file(const std::filesystem::path& path);

/// Every accepted key with its default, one per line, for documentation.
std::vector<std::pair<std::string, std::string>> config_keys_with_defaults();

nlohmann::json to_json(const ModelConfig& c);
/// Strict: unknown or missing keys are rejected.
ModelConfig model_config_from_json(const nlohmann::json& j);

std::string to_string(LayerSharing s);
std::string to_string(Estimator e);
std::string to_string(Objective o);

}  // namespace uthp
