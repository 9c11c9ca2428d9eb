#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "framepred/dataset.hpp"
#include "framepred/models.hpp"

namespace framepred {

/// Gaussian-windowed SSIM constants. C1 = (k1*L)^2, C2 = (k2*L)^2.
struct SsimParams {
    std::size_t window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;

    /// Normalized 1-D taps; the 2-D window is their outer product.
    std::vector<double> gaussian_taps() const;
};

/// Mean squared pixel difference of two single-channel images, (H,W) or (H,W,1).
double mse_image(const Tensor<float>& pred, const Tensor<float>& gt);

/// Mean of the local SSIM map over every position where the window fits
/// entirely inside the image.
double ssim(const Tensor<float>& a, const Tensor<float>& b, const SsimParams& params = {});

struct SampleScore {
    std::size_t log = 0;
    std::size_t t = 0;
    double mse = 0.0;
    double ssim = 0.0;
};

struct SequenceScore {
    std::size_t log = 0;
    std::size_t n_samples = 0;
    double mean_mse = 0.0;
    double mean_ssim = 0.0;
};

struct EvalReport {
    std::string model;
    std::size_t n_samples = 0;
    double mean_mse = 0.0;
    double mean_ssim = 0.0;
    std::vector<SampleScore> samples;
    std::vector<SequenceScore> sequences;

    double mse_e4() const { return mean_mse * 1e4; }
    /// `model=<name> n=<int> mse_e4=<x.xxxx> ssim=<x.xxxx>`
    std::string summary_line() const;
    /// `log,t,mse,ssim` rows.
    void write_csv(const std::filesystem::path& path) const;
};

/// Predicts every window (in dataset order), clamps to [0,1] and scores
/// against the target. Per-image SSIM, then arithmetic means over samples.
EvalReport evaluate(const PredictiveModel<float>& model, const WindowedDataset& data, std::size_t batch_size = 16);

}  // namespace framepred
