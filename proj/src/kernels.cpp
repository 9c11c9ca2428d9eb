#include "framepred/kernels.hpp"

#include <cblas.h>

#include <algorithm>
#include <string>
#include <vector>

namespace framepred::kernels {

namespace {

void check_span(std::size_t got, std::size_t want, const char* what) {
    if (got != want) {
        throw ShapeError(std::string(what) + ": buffer holds " + std::to_string(got) +
                         " elements, geometry needs " + std::to_string(want));
    }
}

void check_geometry(const ConvGeometry& g) {
    if (g.kernel == 0 || g.stride == 0) throw ShapeError("convolution: kernel and stride must be positive");
    if (g.in_h + 2 * g.padding < g.kernel || g.in_w + 2 * g.padding < g.kernel) {
        throw ShapeError("convolution: padded input " + std::to_string(g.in_h + 2 * g.padding) + "x" +
                         std::to_string(g.in_w + 2 * g.padding) + " smaller than kernel " +
                         std::to_string(g.kernel));
    }
}

// col[(oh*ow + ow_), (kh*k + kw)*C + c] = x[b, oh*s-p+kh, ow_*s-p+kw, c]
template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* col) {
    const std::ptrdiff_t oh_n = g.out_h(), ow_n = g.out_w();
    const std::ptrdiff_t k = g.kernel, s = g.stride, p = g.padding;
    const std::ptrdiff_t ih_n = g.in_h, iw_n = g.in_w, c_n = g.in_c;
    const std::size_t row_len = g.kernel * g.kernel * g.in_c;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t oh = 0; oh < oh_n; ++oh) {
        for (std::ptrdiff_t ow = 0; ow < ow_n; ++ow) {
            T* row = col + (oh * ow_n + ow) * row_len;
            for (std::ptrdiff_t kh = 0; kh < k; ++kh) {
                const std::ptrdiff_t ih = oh * s - p + kh;
                for (std::ptrdiff_t kw = 0; kw < k; ++kw) {
                    const std::ptrdiff_t iw = ow * s - p + kw;
                    T* dst = row + (kh * k + kw) * c_n;
                    if (ih < 0 || ih >= ih_n || iw < 0 || iw >= iw_n) {
                        std::fill(dst, dst + c_n, T{0});
                    } else {
                        const T* src = x + (ih * iw_n + iw) * c_n;
                        std::copy(src, src + c_n, dst);
                    }
                }
            }
        }
    }
}

// Gather form of col2im: each input row is owned by one thread, so the
// summation order is fixed regardless of thread count.
template <typename T>
void col2im(const ConvGeometry& g, const T* col, T* dx) {
    const std::ptrdiff_t oh_n = g.out_h(), ow_n = g.out_w();
    const std::ptrdiff_t k = g.kernel, s = g.stride, p = g.padding;
    const std::ptrdiff_t ih_n = g.in_h, iw_n = g.in_w, c_n = g.in_c;
    const std::size_t row_len = g.kernel * g.kernel * g.in_c;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ih = 0; ih < ih_n; ++ih) {
        for (std::ptrdiff_t iw = 0; iw < iw_n; ++iw) {
            T* dst = dx + (ih * iw_n + iw) * c_n;
            std::fill(dst, dst + c_n, T{0});
            for (std::ptrdiff_t kh = 0; kh < k; ++kh) {
                const std::ptrdiff_t th = ih + p - kh;
                if (th < 0 || th % s != 0) continue;
                const std::ptrdiff_t oh = th / s;
                if (oh >= oh_n) continue;
                for (std::ptrdiff_t kw = 0; kw < k; ++kw) {
                    const std::ptrdiff_t tw = iw + p - kw;
                    if (tw < 0 || tw % s != 0) continue;
                    const std::ptrdiff_t ow = tw / s;
                    if (ow >= ow_n) continue;
                    const T* src = col + (oh * ow_n + ow) * row_len + (kh * k + kw) * c_n;
                    for (std::ptrdiff_t c = 0; c < c_n; ++c) dst[c] += src[c];
                }
            }
        }
    }
}

}  // namespace

ConvGeometry ConvGeometry::for_conv(const Shape& input, const Shape& weights, std::size_t stride,
                                    std::size_t padding) {
    if (input.size() != 4 || weights.size() != 4 || weights[0] != weights[1]) {
        throw ShapeError("conv2d: expected input (B,H,W,C) and weights (k,k,Cin,Cout), got " +
                         to_string(input) + " and " + to_string(weights));
    }
    if (input[3] != weights[2]) {
        throw ShapeError("conv2d: input channels of " + to_string(input) +
                         " do not match weight Cin of " + to_string(weights));
    }
    ConvGeometry g{input[0], input[1], input[2], input[3], weights[3], weights[0], stride, padding};
    check_geometry(g);
    return g;
}

ConvGeometry ConvGeometry::for_deconv(const Shape& input, const Shape& weights, std::size_t stride,
                                      std::size_t padding) {
    if (input.size() != 4 || weights.size() != 4 || weights[0] != weights[1]) {
        throw ShapeError("deconv2d: expected input (B,H,W,C) and weights (k,k,Cout,Cin), got " +
                         to_string(input) + " and " + to_string(weights));
    }
    if (input[3] != weights[3]) {
        throw ShapeError("deconv2d: input channels of " + to_string(input) +
                         " do not match weight Cin of " + to_string(weights));
    }
    const std::size_t k = weights[0];
    if (stride == 0 || (input[1] - 1) * stride + k < 2 * padding + 1 ||
        (input[2] - 1) * stride + k < 2 * padding + 1) {
        throw ShapeError("deconv2d: empty output for input " + to_string(input));
    }
    ConvGeometry g{input[0],
                   (input[1] - 1) * stride + k - 2 * padding,
                   (input[2] - 1) * stride + k - 2 * padding,
                   weights[2],
                   weights[3],
                   k,
                   stride,
                   padding};
    check_geometry(g);
    return g;
}

template <>
void gemm<float>(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, float alpha,
                 const float* a, std::size_t lda, const float* b, std::size_t ldb, float beta, float* c,
                 std::size_t ldc) {
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
                static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a,
                static_cast<int>(lda), b, static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

// Double precision is used for verification only. It runs a plain loop because the OpenBLAS 0.3.20
// SkylakeX/Cooperlake dgemm kernel returns wrong results for transposed B.
template <>
void gemm<double>(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha,
                  const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta,
                  double* c, std::size_t ldc) {
    std::vector<double> row(n);
    for (std::size_t i = 0; i < m; ++i) {
        std::fill(row.begin(), row.end(), 0.0);
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = trans_a ? a[p * lda + i] : a[i * lda + p];
            if (aip == 0.0) continue;
            if (trans_b)
                for (std::size_t j = 0; j < n; ++j) row[j] += aip * b[j * ldb + p];
            else
                for (std::size_t j = 0; j < n; ++j) row[j] += aip * b[p * ldb + j];
        }
        double* ci = c + i * ldc;
        for (std::size_t j = 0; j < n; ++j) ci[j] = alpha * row[j] + (beta == 0.0 ? 0.0 : beta * ci[j]);
    }
}

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> bias, std::span<T> y) {
    check_geometry(g);
    check_span(x.size(), g.input_size(), "conv2d input");
    check_span(w.size(), g.weight_size(), "conv2d weights");
    check_span(y.size(), g.output_size(), "conv2d output");
    if (!bias.empty()) check_span(bias.size(), g.out_c, "conv2d bias");

    const std::size_t rows = g.out_h() * g.out_w();
    const std::size_t row_len = g.kernel * g.kernel * g.in_c;
    std::vector<T> col(rows * row_len);
    for (std::size_t b = 0; b < g.batch; ++b) {
        T* yb = y.data() + b * rows * g.out_c;
        im2col(g, x.data() + b * g.in_h * g.in_w * g.in_c, col.data());
        T beta = T{0};
        if (!bias.empty()) {
            for (std::size_t r = 0; r < rows; ++r) std::copy(bias.begin(), bias.end(), yb + r * g.out_c);
            beta = T{1};
        }
        gemm<T>(false, false, rows, g.out_c, row_len, T{1}, col.data(), row_len, w.data(), g.out_c, beta,
                yb, g.out_c);
    }
}

template <typename T>
void conv2d_backward_data(const ConvGeometry& g, std::span<const T> dy, std::span<const T> w,
                          std::span<T> dx) {
    check_geometry(g);
    check_span(dy.size(), g.output_size(), "conv2d output gradient");
    check_span(w.size(), g.weight_size(), "conv2d weights");
    check_span(dx.size(), g.input_size(), "conv2d input gradient");

    const std::size_t rows = g.out_h() * g.out_w();
    const std::size_t row_len = g.kernel * g.kernel * g.in_c;
    std::vector<T> col(rows * row_len);
    for (std::size_t b = 0; b < g.batch; ++b) {
        gemm<T>(false, true, rows, row_len, g.out_c, T{1}, dy.data() + b * rows * g.out_c, g.out_c, w.data(),
                g.out_c, T{0}, col.data(), row_len);
        col2im(g, col.data(), dx.data() + b * g.in_h * g.in_w * g.in_c);
    }
}

template <typename T>
void conv2d_backward_weights(const ConvGeometry& g, std::span<const T> x, std::span<const T> dy,
                             std::span<T> dw, std::span<T> db) {
    check_geometry(g);
    check_span(x.size(), g.input_size(), "conv2d input");
    check_span(dy.size(), g.output_size(), "conv2d output gradient");
    check_span(dw.size(), g.weight_size(), "conv2d weight gradient");
    if (!db.empty()) check_span(db.size(), g.out_c, "conv2d bias gradient");

    const std::size_t rows = g.out_h() * g.out_w();
    const std::size_t row_len = g.kernel * g.kernel * g.in_c;
    std::vector<T> col(rows * row_len);
    for (std::size_t b = 0; b < g.batch; ++b) {
        im2col(g, x.data() + b * g.in_h * g.in_w * g.in_c, col.data());
        gemm<T>(true, false, row_len, g.out_c, rows, T{1}, col.data(), row_len,
                dy.data() + b * rows * g.out_c, g.out_c, b == 0 ? T{0} : T{1}, dw.data(), g.out_c);
    }
    if (g.batch == 0) std::fill(dw.begin(), dw.end(), T{0});
    if (!db.empty()) {
        std::fill(db.begin(), db.end(), T{0});
        const std::size_t all_rows = g.batch * rows;
        for (std::size_t r = 0; r < all_rows; ++r) {
            const T* src = dy.data() + r * g.out_c;
            for (std::size_t c = 0; c < g.out_c; ++c) db[c] += src[c];
        }
    }
}

namespace reference {

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> bias, std::span<T> y) {
    check_geometry(g);
    check_span(x.size(), g.input_size(), "conv2d input");
    check_span(w.size(), g.weight_size(), "conv2d weights");
    check_span(y.size(), g.output_size(), "conv2d output");
    const std::ptrdiff_t oh_n = g.out_h(), ow_n = g.out_w(), k = g.kernel;
    for (std::size_t b = 0; b < g.batch; ++b) {
        for (std::ptrdiff_t oh = 0; oh < oh_n; ++oh) {
            for (std::ptrdiff_t ow = 0; ow < ow_n; ++ow) {
                for (std::size_t co = 0; co < g.out_c; ++co) {
                    T acc = bias.empty() ? T{0} : bias[co];
                    for (std::ptrdiff_t kh = 0; kh < k; ++kh) {
                        const std::ptrdiff_t ih = oh * std::ptrdiff_t(g.stride) - std::ptrdiff_t(g.padding) + kh;
                        if (ih < 0 || ih >= std::ptrdiff_t(g.in_h)) continue;
                        for (std::ptrdiff_t kw = 0; kw < k; ++kw) {
                            const std::ptrdiff_t iw =
                                ow * std::ptrdiff_t(g.stride) - std::ptrdiff_t(g.padding) + kw;
                            if (iw < 0 || iw >= std::ptrdiff_t(g.in_w)) continue;
                            for (std::size_t ci = 0; ci < g.in_c; ++ci) {
                                acc += x[((b * g.in_h + ih) * g.in_w + iw) * g.in_c + ci] *
                                       w[((kh * k + kw) * g.in_c + ci) * g.out_c + co];
                            }
                        }
                    }
                    y[((b * oh_n + oh) * ow_n + ow) * g.out_c + co] = acc;
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_data(const ConvGeometry& g, std::span<const T> dy, std::span<const T> w,
                          std::span<T> dx) {
    check_geometry(g);
    check_span(dy.size(), g.output_size(), "conv2d output gradient");
    check_span(w.size(), g.weight_size(), "conv2d weights");
    check_span(dx.size(), g.input_size(), "conv2d input gradient");
    std::fill(dx.begin(), dx.end(), T{0});
    const std::ptrdiff_t oh_n = g.out_h(), ow_n = g.out_w(), k = g.kernel;
    for (std::size_t b = 0; b < g.batch; ++b) {
        for (std::ptrdiff_t oh = 0; oh < oh_n; ++oh) {
            for (std::ptrdiff_t ow = 0; ow < ow_n; ++ow) {
                for (std::ptrdiff_t kh = 0; kh < k; ++kh) {
                    const std::ptrdiff_t ih = oh * std::ptrdiff_t(g.stride) - std::ptrdiff_t(g.padding) + kh;
                    if (ih < 0 || ih >= std::ptrdiff_t(g.in_h)) continue;
                    for (std::ptrdiff_t kw = 0; kw < k; ++kw) {
                        const std::ptrdiff_t iw = ow * std::ptrdiff_t(g.stride) - std::ptrdiff_t(g.padding) + kw;
                        if (iw < 0 || iw >= std::ptrdiff_t(g.in_w)) continue;
                        for (std::size_t ci = 0; ci < g.in_c; ++ci) {
                            T acc{0};
                            for (std::size_t co = 0; co < g.out_c; ++co) {
                                acc += dy[((b * oh_n + oh) * ow_n + ow) * g.out_c + co] *
                                       w[((kh * k + kw) * g.in_c + ci) * g.out_c + co];
                            }
                            dx[((b * g.in_h + ih) * g.in_w + iw) * g.in_c + ci] += acc;
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_weights(const ConvGeometry& g, std::span<const T> x, std::span<const T> dy,
                             std::span<T> dw, std::span<T> db) {
    check_geometry(g);
    check_span(x.size(), g.input_size(), "conv2d input");
    check_span(dy.size(), g.output_size(), "conv2d output gradient");
    check_span(dw.size(), g.weight_size(), "conv2d weight gradient");
    std::fill(dw.begin(), dw.end(), T{0});
    std::fill(db.begin(), db.end(), T{0});
    const std::ptrdiff_t oh_n = g.out_h(), ow_n = g.out_w(), k = g.kernel;
    for (std::size_t b = 0; b < g.batch; ++b) {
        for (std::ptrdiff_t oh = 0; oh < oh_n; ++oh) {
            for (std::ptrdiff_t ow = 0; ow < ow_n; ++ow) {
                const T* g_out = dy.data() + ((b * oh_n + oh) * ow_n + ow) * g.out_c;
                for (std::size_t co = 0; co < db.size(); ++co) db[co] += g_out[co];
                for (std::ptrdiff_t kh = 0; kh < k; ++kh) {
                    const std::ptrdiff_t ih = oh * std::ptrdiff_t(g.stride) - std::ptrdiff_t(g.padding) + kh;
                    if (ih < 0 || ih >= std::ptrdiff_t(g.in_h)) continue;
                    for (std::ptrdiff_t kw = 0; kw < k; ++kw) {
                        const std::ptrdiff_t iw = ow * std::ptrdiff_t(g.stride) - std::ptrdiff_t(g.padding) + kw;
                        if (iw < 0 || iw >= std::ptrdiff_t(g.in_w)) continue;
                        for (std::size_t ci = 0; ci < g.in_c; ++ci) {
                            const T xv = x[((b * g.in_h + ih) * g.in_w + iw) * g.in_c + ci];
                            T* dst = dw.data() + ((kh * k + kw) * g.in_c + ci) * g.out_c;
                            for (std::size_t co = 0; co < g.out_c; ++co) dst[co] += xv * g_out[co];
                        }
                    }
                }
            }
        }
    }
}

}  // namespace reference

#define FRAMEPRED_INSTANTIATE(T)                                                                       \
    template void conv2d_forward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>,       \
                                    std::span<const T>, std::span<T>);                                 \
    template void conv2d_backward_data<T>(const ConvGeometry&, std::span<const T>, std::span<const T>, \
                                          std::span<T>);                                               \
    template void conv2d_backward_weights<T>(const ConvGeometry&, std::span<const T>,                  \
                                             std::span<const T>, std::span<T>, std::span<T>);          \
    template void reference::conv2d_forward<T>(const ConvGeometry&, std::span<const T>,                \
                                               std::span<const T>, std::span<const T>, std::span<T>);  \
    template void reference::conv2d_backward_data<T>(const ConvGeometry&, std::span<const T>,          \
                                                     std::span<const T>, std::span<T>);                \
    template void reference::conv2d_backward_weights<T>(const ConvGeometry&, std::span<const T>,       \
                                                        std::span<const T>, std::span<T>, std::span<T>);

FRAMEPRED_INSTANTIATE(float)
FRAMEPRED_INSTANTIATE(double)

#undef FRAMEPRED_INSTANTIATE

}  // namespace framepred::kernels
