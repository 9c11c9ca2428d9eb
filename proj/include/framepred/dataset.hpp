#pragma once

// Driving logs and windowed training samples.
//
// Log file ("ADVL"), little-endian:
//   magic "ADVL" | u32 version | u32 n_frames | u16 height | u16 width |
//   u32 n_actions | f32 frames[n_frames][height][width] | f32 actions[n_actions][3]
//
// actions[i] is the control applied between frames[i] and frames[i+1]; a log
// carries n_frames-1 actions, or n_frames with the trailing one unused.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "framepred/tensor.hpp"
#include "framepred/types.hpp"

namespace framepred {

inline constexpr std::uint32_t kLogVersion = 1;

class LogFormatError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

struct DrivingLog {
    std::uint32_t height = 80;
    std::uint32_t width = 160;
    std::vector<Tensor<float>> frames;  ///< each (height,width,1), values in [0,1]
    std::vector<ActionVector> actions;  ///< raw units

    /// Throws LogFormatError on misaligned actions, bad frame shapes or
    /// out-of-range pixels.
    void validate() const;
};

void save_log(const DrivingLog& log, const std::filesystem::path& path);

/// Converts an interleaved 8-bit RGB image (in_h,in_w,3) into a grayscale
/// frame: luminance 0.299R + 0.587G + 0.114B, then area-averaged down (or
/// up) to (out_h,out_w,1). Entry point for adapting external driving data.
Tensor<float> frame_from_rgb(std::span<const std::uint8_t> rgb, std::size_t in_h, std::size_t in_w,
                             std::size_t out_h = 80, std::size_t out_w = 160);
DrivingLog load_log(const std::filesystem::path& path);

/// Mean and population std of every action of every training log (the
/// trailing unused action excluded). std floored at 1e-6.
NormalizationStats compute_stats(std::span<const DrivingLog> logs);

struct WindowedSample {
    Tensor<float> history;  ///< (H,W,window), oldest frame in channel 0
    ActionVector action;    ///< normalized
    Tensor<float> target;   ///< (H,W,1)
    std::size_t log = 0;
    std::size_t t = 0;      ///< index of the newest history frame
};

struct SampleBatch {
    Tensor<float> history;  ///< (B,H,W,window)
    Tensor<float> actions;  ///< (B,3)
    Tensor<float> targets;  ///< (B,H,W,1)
};

/// Every (log, t) position with a full window and a successor frame, in log
/// order then time order. Logs are shared, not copied.
class WindowedDataset {
   public:
    struct Ref {
        std::size_t log;
        std::size_t t;
    };

    WindowedDataset(std::shared_ptr<const std::vector<DrivingLog>> logs, std::size_t window,
                    NormalizationStats stats);

    std::size_t size() const noexcept { return refs_.size(); }
    bool empty() const noexcept { return refs_.empty(); }
    std::size_t window() const noexcept { return window_; }
    const NormalizationStats& stats() const noexcept { return stats_; }
    const std::vector<DrivingLog>& logs() const noexcept { return *logs_; }
    const Ref& ref(std::size_t i) const { return refs_.at(i); }

    WindowedSample sample(std::size_t i) const;
    SampleBatch batch(std::span<const std::size_t> indices) const;

    /// Windows [begin, end) of this dataset, sharing the same logs.
    WindowedDataset slice(std::size_t begin, std::size_t end) const;

   private:
    WindowedDataset() = default;

    std::shared_ptr<const std::vector<DrivingLog>> logs_;
    std::size_t window_ = 0;
    NormalizationStats stats_;
    std::vector<Ref> refs_;
};

/// Windows of a single log. A log shorter than window+1 frames yields an
/// empty dataset and a warning on std::clog.
WindowedDataset windows(const DrivingLog& log, std::size_t window, const NormalizationStats& stats);
WindowedDataset windows(std::vector<DrivingLog> logs, std::size_t window, const NormalizationStats& stats);

}  // namespace framepred
