#include "framepred/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace framepred {

namespace {

struct ImageView {
    std::size_t h;
    std::size_t w;
    const float* data;
};

ImageView single_channel(const Tensor<float>& t, const char* what) {
    const Shape& s = t.shape();
    if (s.size() == 2) return {s[0], s[1], t.data().data()};
    if (s.size() == 3 && s[2] == 1) return {s[0], s[1], t.data().data()};
    throw ShapeError(std::string(what) + ": expected a single-channel (H,W) or (H,W,1) image, got " + to_string(s));
}

// Separable 'valid' filtering, rows then columns.
std::vector<double> filter_valid(const std::vector<double>& img, std::size_t h, std::size_t w,
                                 const std::vector<double>& taps) {
    const std::size_t n = taps.size(), oh = h - n + 1, ow = w - n + 1;
    std::vector<double> rows(h * ow);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k) acc += taps[k] * img[y * w + x + k];
            rows[y * ow + x] = acc;
        }
    std::vector<double> out(oh * ow);
    for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k) acc += taps[k] * rows[(y + k) * ow + x];
            out[y * ow + x] = acc;
        }
    return out;
}

}  // namespace

std::vector<double> SsimParams::gaussian_taps() const {
    std::vector<double> taps(window);
    const double c = 0.5 * double(window - 1);
    for (std::size_t i = 0; i < window; ++i) taps[i] = std::exp(-(double(i) - c) * (double(i) - c) / (2.0 * sigma * sigma));
    const double total = std::accumulate(taps.begin(), taps.end(), 0.0);
    for (double& v : taps) v /= total;
    return taps;
}

double mse_image(const Tensor<float>& pred, const Tensor<float>& gt) {
    const ImageView a = single_channel(pred, "mse_image");
    const ImageView b = single_channel(gt, "mse_image");
    if (a.h != b.h || a.w != b.w) {
        throw ShapeError("mse_image: shape mismatch " + to_string(pred.shape()) + " vs " + to_string(gt.shape()));
    }
    double acc = 0.0;
    const std::size_t n = a.h * a.w;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = double(a.data[i]) - double(b.data[i]);
        acc += d * d;
    }
    return acc / double(n);
}

double ssim(const Tensor<float>& pa, const Tensor<float>& pb, const SsimParams& params) {
    const ImageView a = single_channel(pa, "ssim");
    const ImageView b = single_channel(pb, "ssim");
    if (a.h != b.h || a.w != b.w) {
        throw ShapeError("ssim: shape mismatch " + to_string(pa.shape()) + " vs " + to_string(pb.shape()));
    }
    if (a.h < params.window || a.w < params.window) {
        throw ShapeError("ssim: image " + to_string(pa.shape()) + " smaller than the " + std::to_string(params.window) +
                         "x" + std::to_string(params.window) + " window");
    }
    const std::size_t n = a.h * a.w;
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = a.data[i];
        y[i] = b.data[i];
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    const auto taps = params.gaussian_taps();
    const auto mx = filter_valid(x, a.h, a.w, taps);
    const auto my = filter_valid(y, a.h, a.w, taps);
    const auto sxx = filter_valid(xx, a.h, a.w, taps);
    const auto syy = filter_valid(yy, a.h, a.w, taps);
    const auto sxy = filter_valid(xy, a.h, a.w, taps);

    const double c1 = std::pow(params.k1 * params.dynamic_range, 2);
    const double c2 = std::pow(params.k2 * params.dynamic_range, 2);
    double total = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
        const double vx = sxx[i] - mx[i] * mx[i];
        const double vy = syy[i] - my[i] * my[i];
        const double cxy = sxy[i] - mx[i] * my[i];
        total += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2)) /
                 ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    return total / double(mx.size());
}

std::string EvalReport::summary_line() const {
    char buf[256];
    std::snprintf(buf, sizeof buf, "model=%s n=%zu mse_e4=%.4f ssim=%.4f", model.c_str(), n_samples, mse_e4(), mean_ssim);
    return buf;
}

void EvalReport::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out << "log,t,mse,ssim\n";
    char buf[128];
    for (const auto& s : samples) {
        std::snprintf(buf, sizeof buf, "%zu,%zu,%.9g,%.9g\n", s.log, s.t, s.mse, s.ssim);
        out << buf;
    }
}

EvalReport evaluate(const PredictiveModel<float>& model, const WindowedDataset& data, std::size_t batch_size) {
    if (data.empty()) throw std::invalid_argument("evaluate: dataset has no windowed samples");
    if (data.window() != model.config().window) {
        throw std::invalid_argument("evaluate: dataset window " + std::to_string(data.window()) +
                                    " differs from model window " + std::to_string(model.config().window));
    }
    batch_size = std::max<std::size_t>(batch_size, 1);
    const std::size_t n = data.size();
    std::vector<SampleScore> scores(n);
    const std::size_t n_batches = (n + batch_size - 1) / batch_size;
    const std::size_t h = model.config().height, w = model.config().width, px = h * w;

    // Scores land in per-sample slots, so the ordered sums below do not depend
    // on how batches are spread over threads.
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t bi = 0; bi < std::ptrdiff_t(n_batches); ++bi) {
        const std::size_t begin = std::size_t(bi) * batch_size, end = std::min(n, begin + batch_size);
        std::vector<std::size_t> idx(end - begin);
        std::iota(idx.begin(), idx.end(), begin);
        const SampleBatch batch = data.batch(idx);
        const Tensor<float> pred = clamp_unit(model.predict_batch(batch.history, batch.actions));
        for (std::size_t j = 0; j < idx.size(); ++j) {
            std::vector<float> p(pred.data().begin() + j * px, pred.data().begin() + (j + 1) * px);
            std::vector<float> g(batch.targets.data().begin() + j * px, batch.targets.data().begin() + (j + 1) * px);
            const Tensor<float> pt({h, w, 1}, std::move(p)), gt({h, w, 1}, std::move(g));
            const auto& r = data.ref(idx[j]);
            scores[idx[j]] = SampleScore{r.log, r.t, mse_image(pt, gt), ssim(pt, gt)};
        }
    }

    EvalReport report;
    report.model = std::string(model_name(model.kind()));
    report.n_samples = n;
    double mse_sum = 0.0, ssim_sum = 0.0;
    for (const auto& s : scores) {
        mse_sum += s.mse;
        ssim_sum += s.ssim;
        if (report.sequences.empty() || report.sequences.back().log != s.log) report.sequences.push_back({s.log, 0, 0.0, 0.0});
        auto& seq = report.sequences.back();
        ++seq.n_samples;
        seq.mean_mse += s.mse;
        seq.mean_ssim += s.ssim;
    }
    for (auto& seq : report.sequences) {
        seq.mean_mse /= double(seq.n_samples);
        seq.mean_ssim /= double(seq.n_samples);
    }
    report.mean_mse = mse_sum / double(n);
    report.mean_ssim = ssim_sum / double(n);
    report.samples = std::move(scores);
    return report;
}

}  // namespace framepred
