#include <gtest/gtest.h>

#include <random>

#include "framepred/metrics.hpp"
#include "test_support.hpp"

using namespace framepred;
using framepred::testing::random_tensor;

namespace {

// Direct 2-D summation over every fully contained 11x11 window, with the 2-D
// Gaussian built from scratch.
double ssim_oracle(const Tensor<float>& a, const Tensor<float>& b) {
    const std::size_t h = a.dim(0), w = a.dim(1), n = 11;
    double g[11][11], total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double di = double(i) - 5.0, dj = double(j) - 5.0;
            g[i][j] = std::exp(-(di * di + dj * dj) / (2 * 1.5 * 1.5));
            total += g[i][j];
        }
    const double c1 = 0.0001, c2 = 0.0009;
    double sum = 0.0;
    for (std::size_t y = 0; y + n <= h; ++y)
        for (std::size_t x = 0; x + n <= w; ++x) {
            double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    const double wt = g[i][j] / total, va = a[(y + i) * w + x + j], vb = b[(y + i) * w + x + j];
                    ma += wt * va;
                    mb += wt * vb;
                    saa += wt * va * va;
                    sbb += wt * vb * vb;
                    sab += wt * va * vb;
                }
            const double var_a = saa - ma * ma, var_b = sbb - mb * mb, cov = sab - ma * mb;
            sum += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
        }
    return sum / double((h - n + 1) * (w - n + 1));
}

Tensor<float> checkerboard(std::size_t h, std::size_t w, std::size_t cell, bool invert) {
    Tensor<float> t({h, w, 1});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) t[y * w + x] = float(((y / cell + x / cell) % 2 == 1) != invert);
    return t;
}

Tensor<float> smooth_image(std::size_t h, std::size_t w) {
    Tensor<float> t({h, w, 1});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            t[y * w + x] = float(0.5 + 0.3 * std::sin(0.2 * double(x)) * std::cos(0.15 * double(y)));
    return t;
}

Tensor<float> with_noise(const Tensor<float>& x, double sigma, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, sigma);
    auto out = x;
    for (auto& v : out.data()) v = float(std::clamp(double(v) + n(rng), 0.0, 1.0));
    return out;
}

}  // namespace

TEST(SsimParams, GaussianTapsSumToOne) {
    const auto taps = SsimParams{}.gaussian_taps();
    ASSERT_EQ(taps.size(), 11u);
    double total = 0.0, total_2d = 0.0;
    for (double t : taps) total += t;
    for (double a : taps)
        for (double b : taps) total_2d += a * b;
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_NEAR(total_2d, 1.0, 1e-9);
    EXPECT_DOUBLE_EQ(taps[0], taps[10]);
}

TEST(MseImage, KnownValues) {
    const auto x = random_tensor<float>({8, 8, 1}, 1, 0, 0.9);
    EXPECT_EQ(mse_image(x, x), 0.0);
    EXPECT_DOUBLE_EQ(mse_image(Tensor<float>({4, 4, 1}, 1.0f), Tensor<float>({4, 4, 1})), 1.0);
    Tensor<float> gt({6, 6, 1}, 0.25f), pred({6, 6, 1}, 0.27f);
    EXPECT_NEAR(mse_image(pred, gt) * 1e4, 4.0, 1e-4);
    EXPECT_THROW(mse_image(Tensor<float>({4, 4, 1}), Tensor<float>({4, 5, 1})), ShapeError);
}

TEST(Ssim, SelfSimilarityIsOne) {
    const auto x = random_tensor<float>({24, 40, 1}, 2, 0, 1);
    EXPECT_NEAR(ssim(x, x), 1.0, 1e-9);
}

TEST(Ssim, Symmetric) {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto a = random_tensor<float>({20, 30, 1}, s, 0, 1), b = random_tensor<float>({20, 30, 1}, s + 50, 0, 1);
        EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-9);
    }
}

TEST(Ssim, InvertedCheckerboardRegression) {
    // Value from an independent double-precision evaluation of the same
    // definition (agrees with scikit-image's Gaussian-weighted SSIM).
    const double v = ssim(checkerboard(24, 32, 4, false), checkerboard(24, 32, 4, true));
    EXPECT_LT(v, 0.0);
    EXPECT_NEAR(v, -0.9003121293808684, 1e-9);
}

TEST(Ssim, MatchesDirectSummationOracle) {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto a = random_tensor<float>({18, 25, 1}, 10 + s, 0, 1), b = with_noise(a, 0.1, 20 + s);
        EXPECT_NEAR(ssim(a, b), ssim_oracle(a, b), 1e-7);
        double mse = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) mse += (double(a[i]) - b[i]) * (double(a[i]) - b[i]);
        EXPECT_NEAR(mse_image(a, b), mse / double(a.size()), 1e-7);
    }
}

TEST(Ssim, DecreasesWithNoise) {
    const auto x = smooth_image(80, 160);
    double previous = 1.0;
    for (double sigma : {0.01, 0.05, 0.1}) {
        const double v = ssim(x, with_noise(x, sigma, 7));
        EXPECT_LT(v, previous) << "sigma " << sigma;
        EXPECT_GE(v, -1.0);
        previous = v;
    }
}

TEST(Ssim, RejectsSmallImages) {
    EXPECT_THROW(ssim(Tensor<float>({10, 40, 1}), Tensor<float>({10, 40, 1})), ShapeError);
    EXPECT_THROW(ssim(Tensor<float>({20, 20, 2}), Tensor<float>({20, 20, 2})), ShapeError);
}

namespace {

WindowedDataset static_sequence(std::size_t frames, std::size_t window) {
    DrivingLog log;
    log.height = 16;
    log.width = 24;
    const auto frame = random_tensor<float>({16, 24, 1}, 4, 0, 1);
    log.frames.assign(frames, frame);
    log.actions.assign(frames - 1, ActionVector{0, 0, 0});
    return windows(log, window, NormalizationStats{});
}

ModelConfig copy_config(std::uint32_t window) {
    ModelConfig c;
    c.window = window;
    c.height = 16;
    c.width = 24;
    return c;
}

}  // namespace

TEST(Evaluate, CopyOnStaticSequenceIsPerfect) {
    const auto report = evaluate(build_copy_last_frame<float>(copy_config(4)), static_sequence(12, 4));
    EXPECT_EQ(report.n_samples, 8u);
    EXPECT_EQ(report.mean_mse, 0.0);
    EXPECT_NEAR(report.mean_ssim, 1.0, 1e-12);
    EXPECT_EQ(report.summary_line(), "model=copy n=8 mse_e4=0.0000 ssim=1.0000");
}

TEST(Evaluate, SampleCountIsLengthMinusWindowPerSequence) {
    std::vector<DrivingLog> logs;
    for (std::size_t len : {10u, 7u, 4u}) {
        DrivingLog log;
        log.height = 16;
        log.width = 24;
        for (std::size_t i = 0; i < len; ++i) log.frames.push_back(random_tensor<float>({16, 24, 1}, i, 0, 1));
        log.actions.assign(len - 1, ActionVector{});
        logs.push_back(log);
    }
    const auto report = evaluate(build_copy_last_frame<float>(copy_config(4)), windows(logs, 4, {}));
    EXPECT_EQ(report.n_samples, 6u + 3u + 0u);
    ASSERT_EQ(report.sequences.size(), 2u);
    EXPECT_EQ(report.sequences[0].n_samples, 6u);
    EXPECT_EQ(report.sequences[1].n_samples, 3u);
    double total = 0.0;
    for (const auto& s : report.samples) total += s.mse;
    EXPECT_DOUBLE_EQ(report.mean_mse, total / 9.0);
}

TEST(Evaluate, BatchSizeDoesNotChangeResult) {
    std::vector<DrivingLog> logs(1);
    logs[0].height = 16;
    logs[0].width = 24;
    for (std::size_t i = 0; i < 15; ++i) logs[0].frames.push_back(random_tensor<float>({16, 24, 1}, 30 + i, 0, 1));
    logs[0].actions.assign(14, ActionVector{});
    const auto data = windows(logs, 4, {});
    const auto model = build_copy_last_frame<float>(copy_config(4));
    const auto a = evaluate(model, data, 1), b = evaluate(model, data, 7);
    EXPECT_EQ(a.mean_mse, b.mean_mse);
    EXPECT_EQ(a.mean_ssim, b.mean_ssim);
}

TEST(Evaluate, RejectsEmptyDataAndWindowMismatch) {
    const auto model = build_copy_last_frame<float>(copy_config(4));
    EXPECT_THROW(evaluate(model, static_sequence(4, 4)), std::invalid_argument);
    EXPECT_THROW(evaluate(model, static_sequence(12, 5)), std::invalid_argument);
}

TEST(EvalReport, SummaryLineGrammar) {
    EvalReport r;
    r.model = "sdf-tiling";
    r.n_samples = 496;
    r.mean_mse = 3.613e-4;
    r.mean_ssim = 0.96331;
    EXPECT_EQ(r.summary_line(), "model=sdf-tiling n=496 mse_e4=3.6130 ssim=0.9633");
}
