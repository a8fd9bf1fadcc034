#pragma once

#include "uthp/intensity.hpp"
#include "uthp/predict.hpp"
#include "uthp/recurrence.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace uthp {

struct ForwardResult {
    Tensor hidden;  // I x D
    ActStats stats;
};

/// All parameters of the model plus typed views on them.
class UthpModel {
public:
    /// Fresh parameters drawn from `seed`.
    UthpModel(ModelConfig config, int num_types, std::uint64_t seed);
    // Copies would alias the parameter storage.
    UthpModel(const UthpModel&) = delete;
    UthpModel& operator=(const UthpModel&) = delete;
    UthpModel(UthpModel&&) = default;
    UthpModel& operator=(UthpModel&&) = default;

    [[nodiscard]] const ModelConfig& config() const noexcept { return config_; }
    [[nodiscard]] int num_types() const noexcept { return num_types_; }
    [[nodiscard]] ParameterSet& params() noexcept { return params_; }
    [[nodiscard]] const ParameterSet& params() const noexcept { return params_; }

    [[nodiscard]] const IntensityParams& intensity() const noexcept { return intensity_; }
    [[nodiscard]] const HeadParams& heads() const noexcept { return heads_; }

    /// Hidden rows for one sequence, processed at its own length.
    [[nodiscard]] ForwardResult forward(const EventSequence& seq, const ForwardMode& mode = {}) const;

    /// Per-row results for a padded batch; each row is trimmed to its length,
    /// so padding never reaches the computation.
    [[nodiscard]] std::vector<ForwardResult> forward(const Batch& batch, const ForwardMode& mode = {}) const;

    /// Trainable scalar count, PAD embedding row excluded.
    [[nodiscard]] std::size_t count_params() const { return params_.count(); }
    [[nodiscard]] std::vector<std::pair<std::string, std::size_t>> count_breakdown() const;

private:
    ModelConfig config_;
    int num_types_;
    ParameterSet params_;
    Tensor embedding_;
    std::vector<EncodingLayerParams> layers_;
    ActParams act_;
    PostprocessParams post_;
    IntensityParams intensity_;
    HeadParams heads_;
};

/// Parameter count of the model a config would build, without keeping it.
[[nodiscard]] std::size_t count_params(const ModelConfig& config, int num_types);

/// Scalar count of one encoding layer under `config`.
[[nodiscard]] std::size_t encoding_layer_param_count(const ModelConfig& config);

}  // namespace uthp
