#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "framepred/autodiff.hpp"

namespace framepred {

/// Raised when a loss or gradient stops being finite.
class DivergenceError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// First and second moments per parameter, in ParameterSet order.
template <typename T>
struct AdamState {
    std::vector<Tensor<T>> m;
    std::vector<Tensor<T>> v;
    std::uint64_t step = 0;

    static AdamState for_parameters(const ParameterSet<T>& params);
};

/// One bias-corrected Adam update from the gradients stored on `params`.
/// Throws DivergenceError, leaving parameters untouched, if any gradient is
/// not finite.
template <typename T>
void adam_step(ParameterSet<T>& params, AdamState<T>& state, const AdamConfig& config);

}  // namespace framepred
