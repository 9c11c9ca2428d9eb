#pragma once

// Convolution kernels. The top-level functions are the production path
// (im2col + BLAS GEMM, OpenMP over rows); `reference::` holds serial direct
// loops that define the semantics and are kept for tests and benchmarks.
//
// Layouts: activations (batch, height, width, channels); weights
// (kernel, kernel, in_channels, out_channels). Transposed convolution is
// expressed through the geometry of the convolution it is the adjoint of.

#include <cstddef>
#include <span>

#include "framepred/tensor.hpp"

namespace framepred::kernels {

struct ConvGeometry {
    std::size_t batch = 1;
    std::size_t in_h = 0;
    std::size_t in_w = 0;
    std::size_t in_c = 0;
    std::size_t out_c = 0;
    std::size_t kernel = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;

    std::size_t out_h() const { return (in_h + 2 * padding - kernel) / stride + 1; }
    std::size_t out_w() const { return (in_w + 2 * padding - kernel) / stride + 1; }
    std::size_t input_size() const { return batch * in_h * in_w * in_c; }
    std::size_t output_size() const { return batch * out_h() * out_w() * out_c; }
    std::size_t weight_size() const { return kernel * kernel * in_c * out_c; }

    /// Geometry of a forward convolution of `input` (B,H,W,Cin) by `weights`
    /// (k,k,Cin,Cout).
    static ConvGeometry for_conv(const Shape& input, const Shape& weights, std::size_t stride,
                                 std::size_t padding);

    /// Geometry of the convolution whose adjoint maps `input` (B,H,W,C) with
    /// `weights` (k,k,Cout,C) to a (B,(H-1)s-2p+k,(W-1)s-2p+k,Cout) output.
    static ConvGeometry for_deconv(const Shape& input, const Shape& weights, std::size_t stride,
                                   std::size_t padding);
};

/// y = conv(x, w) + bias. `bias` may be empty.
template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> bias, std::span<T> y);

/// dx = conv^T(dy, w). Overwrites dx. This is also the forward pass of the
/// transposed convolution.
template <typename T>
void conv2d_backward_data(const ConvGeometry& g, std::span<const T> dy, std::span<const T> w,
                          std::span<T> dx);

/// dw = sum over batch and positions of x-patch outer dy; db = sum of dy.
/// Overwrites both; `db` may be empty.
template <typename T>
void conv2d_backward_weights(const ConvGeometry& g, std::span<const T> x, std::span<const T> dy,
                             std::span<T> dw, std::span<T> db);

namespace reference {

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> bias, std::span<T> y);

template <typename T>
void conv2d_backward_data(const ConvGeometry& g, std::span<const T> dy, std::span<const T> w,
                          std::span<T> dx);

template <typename T>
void conv2d_backward_weights(const ConvGeometry& g, std::span<const T> x, std::span<const T> dy,
                             std::span<T> dw, std::span<T> db);

}  // namespace reference

/// C = alpha * op(A) * op(B) + beta * C, row-major.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha,
          const T* a, std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc);

}  // namespace framepred::kernels
