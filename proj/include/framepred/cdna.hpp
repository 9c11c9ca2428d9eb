#pragma once

// Compositing head of convolutional dynamic neural advection: the previous
// frame is transformed by a set of normalized kernels, and the transformed
// images (optionally plus the current frame) are blended with per-pixel
// softmax masks.

#include <cstddef>
#include <optional>
#include <type_traits>

#include "framepred/autodiff.hpp"

namespace framepred::cdna {

struct KernelSetConfig {
    std::size_t count = 10;
    std::size_t size = 5;
};

/// Per-kernel spatial softmax of raw (m,k,k) logits.
template <typename T>
Var<T> normalize_kernels(Var<T> raw);

/// prev (B,H,W,1) convolved with each normalized kernel (m,k,k), "same"
/// size with replicated edges. Returns (B,H,W,m). k must be odd.
template <typename T>
Var<T> advect(Var<T> prev, Var<T> kernels);

/// Per-pixel sum over channels of a*b, (B,H,W,C) x2 -> (B,H,W,1).
template <typename T>
Var<T> channel_dot(Var<T> a, Var<T> b);

/// softmax(mask_logits) weighted sum of the m transformed images and, when
/// given, the current frame as the last source. mask_logits has m or m+1
/// channels accordingly.
template <typename T>
Var<T> composite(Var<T> transformed, std::type_identity_t<std::optional<Var<T>>> current, Var<T> mask_logits);

// Tensor-level forms. Frames may be (H,W,C) or (B,H,W,C); the result keeps
// the rank of `prev` / `transformed`.

template <typename T>
Tensor<T> normalize_kernels(const Tensor<T>& raw);
template <typename T>
Tensor<T> advect(const Tensor<T>& prev, const Tensor<T>& kernels);
template <typename T>
Tensor<T> composite(const Tensor<T>& transformed, const std::type_identity_t<Tensor<T>>* current, const Tensor<T>& mask_logits);

}  // namespace framepred::cdna
