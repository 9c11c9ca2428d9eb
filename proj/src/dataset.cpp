#include "framepred/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <string>

#include "binary_io.hpp"

namespace framepred {

void DrivingLog::validate() const {
    if (!(actions.size() + 1 == frames.size() || actions.size() == frames.size())) {
        throw LogFormatError("log has " + std::to_string(frames.size()) + " frames and " +
                             std::to_string(actions.size()) + " actions; expected n-1 or n actions");
    }
    const Shape expected{height, width, 1};
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (frames[i].shape() != expected) {
            throw LogFormatError("frame " + std::to_string(i) + " has shape " + to_string(frames[i].shape()) +
                                 ", log declares " + to_string(expected));
        }
        for (float v : frames[i].data()) {
            if (!(v >= 0.0f && v <= 1.0f)) {
                throw LogFormatError("frame " + std::to_string(i) + " has pixel value " + std::to_string(v) +
                                     " outside [0,1]");
            }
        }
    }
}

void save_log(const DrivingLog& log, const std::filesystem::path& path) {
    log.validate();
    if (log.height > 0xFFFF || log.width > 0xFFFF) throw LogFormatError("frame size exceeds 16-bit fields");
    detail::ByteWriter w;
    w.text("ADVL");
    w.u32(kLogVersion);
    w.u32(static_cast<std::uint32_t>(log.frames.size()));
    w.u16(static_cast<std::uint16_t>(log.height));
    w.u16(static_cast<std::uint16_t>(log.width));
    w.u32(static_cast<std::uint32_t>(log.actions.size()));
    for (const auto& f : log.frames) w.f32s(f.data().data(), f.size());
    for (const auto& a : log.actions) w.f32s(a.data(), a.size());
    w.write_file(path);
}

DrivingLog load_log(const std::filesystem::path& path) {
    auto r = detail::ByteReader<LogFormatError>::from_file(path);
    if (r.size() < 20 || r.text(4) != "ADVL") {
        throw LogFormatError("'" + path.string() + "' is not a driving log (bad magic)");
    }
    const std::uint32_t version = r.u32();
    if (version != kLogVersion) {
        throw LogFormatError("log version " + std::to_string(version) + " unsupported, expected " +
                             std::to_string(kLogVersion));
    }
    DrivingLog log;
    const std::uint32_t n_frames = r.u32();
    log.height = r.u16();
    log.width = r.u16();
    const std::uint32_t n_actions = r.u32();
    const std::uint64_t expected = 20 + std::uint64_t(n_frames) * log.height * log.width * 4 +
                                   std::uint64_t(n_actions) * kActionDim * 4;
    if (r.size() != expected) {
        throw LogFormatError("'" + path.string() + "' should hold " + std::to_string(expected) + " bytes for " +
                             std::to_string(n_frames) + " frames and " + std::to_string(n_actions) +
                             " actions, found " + std::to_string(r.size()));
    }
    log.frames.reserve(n_frames);
    for (std::uint32_t i = 0; i < n_frames; ++i) {
        Tensor<float> f({log.height, log.width, 1});
        r.f32s(f.data().data(), f.size());
        log.frames.push_back(std::move(f));
    }
    log.actions.resize(n_actions);
    for (auto& a : log.actions) r.f32s(a.data(), a.size());
    log.validate();
    return log;
}

Tensor<float> frame_from_rgb(std::span<const std::uint8_t> rgb, std::size_t in_h, std::size_t in_w,
                             std::size_t out_h, std::size_t out_w) {
    if (in_h == 0 || in_w == 0 || out_h == 0 || out_w == 0) throw std::invalid_argument("frame_from_rgb: empty size");
    if (rgb.size() != in_h * in_w * 3) {
        throw std::invalid_argument("frame_from_rgb: expected " + std::to_string(in_h * in_w * 3) + " bytes, got " +
                                    std::to_string(rgb.size()));
    }
    std::vector<double> luma(in_h * in_w);
    for (std::size_t i = 0; i < luma.size(); ++i)
        luma[i] = (0.299 * rgb[3 * i] + 0.587 * rgb[3 * i + 1] + 0.114 * rgb[3 * i + 2]) / 255.0;
    // Each output pixel covers [o*in/out, (o+1)*in/out) of the source along
    // each axis; source pixels contribute by their overlap length.
    auto spans = [](std::size_t in, std::size_t out) {
        std::vector<std::vector<std::pair<std::size_t, double>>> s(out);
        const double step = double(in) / double(out);
        for (std::size_t o = 0; o < out; ++o) {
            const double a = double(o) * step, b = a + step;
            for (auto i = std::size_t(a); i < in && double(i) < b; ++i) {
                const double cover = std::min(b, double(i + 1)) - std::max(a, double(i));
                if (cover > 0.0) s[o].emplace_back(i, cover / step);
            }
        }
        return s;
    };
    const auto rows = spans(in_h, out_h), cols = spans(in_w, out_w);
    Tensor<float> frame({out_h, out_w, 1});
    for (std::size_t y = 0; y < out_h; ++y)
        for (std::size_t x = 0; x < out_w; ++x) {
            double acc = 0.0;
            for (const auto& [iy, wy] : rows[y])
                for (const auto& [ix, wx] : cols[x]) acc += wy * wx * luma[iy * in_w + ix];
            frame[y * out_w + x] = static_cast<float>(std::clamp(acc, 0.0, 1.0));
        }
    return frame;
}

NormalizationStats compute_stats(std::span<const DrivingLog> logs) {
    std::array<double, kActionDim> sum{}, sq{};
    std::size_t n = 0;
    // Mean first, then squared deviations: two passes for accuracy.
    for (const auto& log : logs) {
        const std::size_t used = log.frames.empty() ? 0 : std::min(log.actions.size(), log.frames.size() - 1);
        for (std::size_t i = 0; i < used; ++i) {
            for (std::size_t c = 0; c < kActionDim; ++c) sum[c] += log.actions[i][c];
            ++n;
        }
    }
    if (n == 0) throw std::invalid_argument("compute_stats: training split holds no actions");
    NormalizationStats stats;
    for (std::size_t c = 0; c < kActionDim; ++c) stats.mean[c] = sum[c] / double(n);
    for (const auto& log : logs) {
        const std::size_t used = log.frames.empty() ? 0 : std::min(log.actions.size(), log.frames.size() - 1);
        for (std::size_t i = 0; i < used; ++i)
            for (std::size_t c = 0; c < kActionDim; ++c) {
                const double d = log.actions[i][c] - stats.mean[c];
                sq[c] += d * d;
            }
    }
    for (std::size_t c = 0; c < kActionDim; ++c)
        stats.std[c] = std::max(std::sqrt(sq[c] / double(n)), NormalizationStats::kStdFloor);
    return stats;
}

WindowedDataset::WindowedDataset(std::shared_ptr<const std::vector<DrivingLog>> logs, std::size_t window,
                                 NormalizationStats stats)
    : logs_(std::move(logs)), window_(window), stats_(stats) {
    if (window_ == 0) throw std::invalid_argument("window must be positive");
    for (std::size_t l = 0; l < logs_->size(); ++l) {
        const auto& log = (*logs_)[l];
        log.validate();
        if (log.frames.size() < window_ + 1) {
            std::clog << "warning: log " << l << " has " << log.frames.size() << " frames, fewer than window+1 = "
                      << window_ + 1 << "; no samples\n";
            continue;
        }
        for (std::size_t t = window_ - 1; t + 1 < log.frames.size(); ++t) refs_.push_back({l, t});
    }
}

WindowedSample WindowedDataset::sample(std::size_t i) const {
    const Ref& r = refs_.at(i);
    const DrivingLog& log = (*logs_)[r.log];
    const std::size_t px = std::size_t(log.height) * log.width;
    WindowedSample s;
    s.history = Tensor<float>({log.height, log.width, window_});
    for (std::size_t k = 0; k < window_; ++k) {
        const auto& f = log.frames[r.t + 1 - window_ + k];
        for (std::size_t p = 0; p < px; ++p) s.history[p * window_ + k] = f[p];
    }
    s.action = stats_.normalize(log.actions[r.t]);
    s.target = log.frames[r.t + 1];
    s.log = r.log;
    s.t = r.t;
    return s;
}

SampleBatch WindowedDataset::batch(std::span<const std::size_t> indices) const {
    if (indices.empty()) throw std::invalid_argument("batch: no indices");
    const DrivingLog& first = (*logs_)[refs_.at(indices[0]).log];
    const std::size_t h = first.height, w = first.width, px = h * w, n = indices.size();
    SampleBatch b{Tensor<float>({n, h, w, window_}), Tensor<float>({n, kActionDim}), Tensor<float>({n, h, w, 1})};
    for (std::size_t j = 0; j < n; ++j) {
        const Ref& r = refs_.at(indices[j]);
        const DrivingLog& log = (*logs_)[r.log];
        if (log.height != h || log.width != w) throw ShapeError("batch: logs with different frame sizes");
        float* hist = b.history.data().data() + j * px * window_;
        for (std::size_t k = 0; k < window_; ++k) {
            const auto& f = log.frames[r.t + 1 - window_ + k];
            for (std::size_t p = 0; p < px; ++p) hist[p * window_ + k] = f[p];
        }
        const ActionVector a = stats_.normalize(log.actions[r.t]);
        std::copy(a.begin(), a.end(), b.actions.data().begin() + j * kActionDim);
        const auto& target = log.frames[r.t + 1];
        std::copy(target.data().begin(), target.data().end(), b.targets.data().begin() + j * px);
    }
    return b;
}

WindowedDataset WindowedDataset::slice(std::size_t begin, std::size_t end) const {
    if (begin > end || end > refs_.size()) {
        throw std::out_of_range("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
                                std::to_string(refs_.size()) + " windows");
    }
    WindowedDataset out;
    out.logs_ = logs_;
    out.window_ = window_;
    out.stats_ = stats_;
    out.refs_.assign(refs_.begin() + begin, refs_.begin() + end);
    return out;
}

WindowedDataset windows(const DrivingLog& log, std::size_t window, const NormalizationStats& stats) {
    return windows(std::vector<DrivingLog>{log}, window, stats);
}

WindowedDataset windows(std::vector<DrivingLog> logs, std::size_t window, const NormalizationStats& stats) {
    return WindowedDataset(std::make_shared<const std::vector<DrivingLog>>(std::move(logs)), window, stats);
}

}  // namespace framepred
