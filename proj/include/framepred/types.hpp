#pragma once

#include <array>
#include <cstddef>

namespace framepred {

inline constexpr std::size_t kActionDim = 3;

/// (acceleration, steering angle, brake).
using ActionVector = std::array<float, kActionDim>;

/// Per-component z-score statistics of training actions.
struct NormalizationStats {
    std::array<double, kActionDim> mean{0.0, 0.0, 0.0};
    std::array<double, kActionDim> std{1.0, 1.0, 1.0};

    static constexpr double kStdFloor = 1e-6;

    ActionVector normalize(const ActionVector& raw) const {
        ActionVector out{};
        for (std::size_t c = 0; c < kActionDim; ++c)
            out[c] = static_cast<float>((static_cast<double>(raw[c]) - mean[c]) / std[c]);
        return out;
    }

    ActionVector denormalize(const ActionVector& z) const {
        ActionVector out{};
        for (std::size_t c = 0; c < kActionDim; ++c)
            out[c] = static_cast<float>(static_cast<double>(z[c]) * std[c] + mean[c]);
        return out;
    }

    bool operator==(const NormalizationStats&) const = default;
};

}  // namespace framepred
