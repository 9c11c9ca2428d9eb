#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "framepred/adam.hpp"
#include "framepred/dataset.hpp"
#include "framepred/models.hpp"

namespace framepred {

struct TrainConfig {
    double learning_rate = 1e-4;
    std::uint32_t epochs = 50;
    std::uint32_t batch_size = 16;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 1;
    bool shuffle = true;
    /// Trailing share of the training windows held out for best-checkpoint
    /// selection. Zero trains on everything and keeps the final weights as best.
    double validation_fraction = 0.1;

    std::filesystem::path checkpoint_path;       ///< final weights; empty skips
    std::filesystem::path best_checkpoint_path;  ///< lowest validation MSE; empty skips
    std::filesystem::path loss_csv_path;         ///< `epoch,mean_mse`; empty skips

    AdamConfig adam() const { return {learning_rate, beta1, beta2, epsilon}; }
    /// Throws std::invalid_argument on a non-positive rate, zero epochs or
    /// batch size, or a validation fraction outside [0,1).
    void validate() const;
};

struct EpochStats {
    std::uint32_t epoch = 0;  ///< 1-based
    double train_mse = 0.0;
    std::optional<double> validation_mse;
};

struct TrainResult {
    std::vector<double> loss_curve;  ///< mean training MSE per epoch
    std::vector<EpochStats> epochs;
    std::uint32_t best_epoch = 0;
    std::optional<double> best_validation_mse;
    AdamState<float> optimizer;
};

/// Mean per-sample MSE of clamped predictions over a dataset.
double dataset_mse(const PredictiveModel<float>& model, const WindowedDataset& data, std::size_t batch_size = 16);

/// Minimizes mean squared next-frame error with Adam. The model's action
/// stats are replaced by the dataset's. Throws DivergenceError naming the
/// epoch and batch when the loss or a gradient stops being finite; nothing is
/// written in that case.
TrainResult train(PredictiveModel<float>& model, const WindowedDataset& data, const TrainConfig& config,
                  const std::function<void(const EpochStats&)>& on_epoch = {});

void write_loss_csv(const std::vector<double>& curve, const std::filesystem::path& path);

}  // namespace framepred
