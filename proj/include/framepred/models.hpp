#pragma once

// Next-frame predictors conditioned on a history window and an action.
//
//   SdfTiling      conv encoder, action tiled over the bottleneck and
//                  concatenated as extra channels, deconv decoder to n_b
//                  basis images, bias-free weighted sum of the basis.
//   SdfVector      same encoder/decoder around a fully connected bottleneck
//                  where an action embedding gates the image embedding
//                  multiplicatively.
//   CopyLastFrame  returns the newest history frame.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "framepred/autodiff.hpp"
#include "framepred/types.hpp"

namespace framepred {

enum class ModelKind : std::uint32_t { SdfTiling = 1, SdfVector = 2, CopyLastFrame = 3 };

std::string_view model_name(ModelKind kind);
/// Accepts "sdf-tiling", "sdf" (or "sdf-vector") and "copy".
ModelKind parse_model_kind(std::string_view name);

struct ModelConfig {
    std::uint32_t window = 4;
    std::uint32_t height = 80;
    std::uint32_t width = 160;
    std::uint32_t action_dim = kActionDim;
    std::array<std::uint32_t, 3> encoder_channels{64, 64, 64};
    /// (d1, d2, n_b) for SdfTiling; the vector model decodes (d1, d2, 1).
    std::array<std::uint32_t, 3> decoder_channels{80, 80, 80};
    std::uint32_t kernel = 6;
    std::uint32_t stride = 2;
    std::uint32_t padding = 2;
    std::uint32_t fc_hidden = 2048;

    std::uint32_t basis_count() const { return decoder_channels[2]; }
    std::uint32_t bottleneck_height() const { return height / 8; }
    std::uint32_t bottleneck_width() const { return width / 8; }

    /// Throws std::invalid_argument describing the first violated constraint.
    void validate(ModelKind kind) const;

    bool operator==(const ModelConfig&) const = default;
};

template <typename T>
struct ForwardResult {
    Var<T> frame;                 ///< (B,H,W,1)
    std::optional<Var<T>> basis;  ///< (B,H,W,n_b), SdfTiling only
    std::optional<Var<T>> merged; ///< bottleneck after action merge, SdfTiling only
};

template <typename T>
struct Prediction {
    Tensor<T> frame;                ///< (H,W,1), unclamped
    Tensor<T> basis;                ///< (H,W,n_b), empty unless SdfTiling
    std::vector<T> basis_weights;   ///< empty unless SdfTiling
};

template <typename T>
class PredictiveModel {
   public:
    PredictiveModel(ModelKind kind, ModelConfig config);

    ModelKind kind() const noexcept { return kind_; }
    const ModelConfig& config() const noexcept { return config_; }
    ParameterSet<T>& parameters() noexcept { return params_; }
    const ParameterSet<T>& parameters() const noexcept { return params_; }

    /// Stats used to normalize raw actions before they reach the model.
    const NormalizationStats& action_stats() const noexcept { return stats_; }
    void set_action_stats(const NormalizationStats& stats) { stats_ = stats; }

    /// Records the forward graph. history (B,H,W,window), action (B,A).
    /// Parameters enter as trainable leaves when the tape records gradients.
    ForwardResult<T> forward(Tape<T>& tape, Var<T> history, Var<T> action);
    /// Inference-only forward; parameters enter as constant views.
    ForwardResult<T> forward(Tape<T>& tape, Var<T> history, Var<T> action) const;

    /// history (H,W,window) or (1,H,W,window); action normalized.
    Prediction<T> predict(const Tensor<T>& history, std::span<const T> action) const;
    /// history (B,H,W,window), actions (B,A) -> (B,H,W,1), unclamped.
    Tensor<T> predict_batch(const Tensor<T>& history, const Tensor<T>& actions) const;

    /// Autoregressive prediction: every clamped prediction is pushed into the
    /// window and the oldest frame dropped. Actions normalized. Returns one
    /// (H,W,1) frame per action.
    std::vector<Tensor<T>> rollout(const Tensor<T>& history, std::span<const ActionVector> actions) const;

    std::size_t parameter_count() const { return params_.element_count(); }

   private:
    template <typename Leaf>
    ForwardResult<T> forward_impl(Tape<T>& tape, Var<T> history, Var<T> action, Leaf&& leaf) const;
    void check_inputs(const Shape& history, const Shape& action) const;

    ModelKind kind_;
    ModelConfig config_;
    ParameterSet<T> params_;
    NormalizationStats stats_;
};

template <typename T>
PredictiveModel<T> build_sdf_tiling(const ModelConfig& config, std::uint64_t seed);
template <typename T>
PredictiveModel<T> build_sdf_vector(const ModelConfig& config, std::uint64_t seed);
template <typename T>
PredictiveModel<T> build_copy_last_frame(const ModelConfig& config);
template <typename T>
PredictiveModel<T> build_model(ModelKind kind, const ModelConfig& config, std::uint64_t seed);

/// Closed-form parameter count for a kind/config, without building the model.
std::size_t analytic_parameter_count(ModelKind kind, const ModelConfig& config);

template <typename T>
std::size_t count_params(const PredictiveModel<T>& model) {
    return model.parameter_count();
}

/// Values clamped into [0,1].
template <typename T>
Tensor<T> clamp_unit(Tensor<T> t);

extern template class PredictiveModel<float>;
extern template class PredictiveModel<double>;

}  // namespace framepred
