#include "framepred/models.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace framepred {

std::string_view model_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::SdfTiling:
            return "sdf-tiling";
        case ModelKind::SdfVector:
            return "sdf";
        case ModelKind::CopyLastFrame:
            return "copy";
    }
    return "unknown";
}

ModelKind parse_model_kind(std::string_view name) {
    if (name == "sdf-tiling") return ModelKind::SdfTiling;
    if (name == "sdf" || name == "sdf-vector") return ModelKind::SdfVector;
    if (name == "copy" || name == "copy-last-frame") return ModelKind::CopyLastFrame;
    throw std::invalid_argument("unknown model kind '" + std::string(name) + "'");
}

void ModelConfig::validate(ModelKind kind) const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("model config: " + msg); };
    if (window == 0) fail("window must be positive");
    if (action_dim == 0) fail("action_dim must be positive");
    if (height == 0 || width == 0 || height % 8 != 0 || width % 8 != 0) {
        fail("input " + std::to_string(height) + "x" + std::to_string(width) + " not divisible by 8");
    }
    if (kind == ModelKind::CopyLastFrame) return;
    if (stride == 0 || kernel == 0) fail("kernel and stride must be positive");
    // Each stage must halve exactly on the way down and double on the way up.
    for (std::uint32_t size : {height, width, height / 2, width / 2, height / 4, width / 4}) {
        const long padded = long(size) + 2 * long(padding) - long(kernel);
        if (padded < 0 || padded % long(stride) != 0 || padded / long(stride) + 1 != long(size / 2)) {
            fail("kernel " + std::to_string(kernel) + ", stride " + std::to_string(stride) + ", padding " +
                 std::to_string(padding) + " do not halve " + std::to_string(size));
        }
        const long up = (long(size / 2) - 1) * long(stride) - 2 * long(padding) + long(kernel);
        if (up != long(size)) fail("decoder stage does not restore " + std::to_string(size));
    }
    for (auto c : encoder_channels)
        if (c == 0) fail("encoder channels must be positive");
    for (auto c : decoder_channels)
        if (c == 0) fail("decoder channels must be positive");
    if (kind == ModelKind::SdfTiling && basis_count() > height) {
        fail("basis count " + std::to_string(basis_count()) + " exceeds the rank bound " + std::to_string(height));
    }
    if (kind == ModelKind::SdfVector && fc_hidden == 0) fail("fc_hidden must be positive");
}

namespace {

template <typename T>
Tensor<T> glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor<T> t(std::move(shape));
    for (auto& v : t.data()) {
        // 53 random bits mapped to [-limit, limit); independent of <random> distributions.
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        v = static_cast<T>((2.0 * u - 1.0) * limit);
    }
    return t;
}

std::size_t conv_count(std::size_t k, std::size_t cin, std::size_t cout) { return k * k * cin * cout + cout; }

template <typename T>
void add_encoder(ParameterSet<T>& p, const ModelConfig& c, std::mt19937_64& rng) {
    const std::size_t k = c.kernel;
    std::size_t cin = c.window;
    for (int i = 0; i < 3; ++i) {
        const std::size_t cout = c.encoder_channels[i];
        const std::string name = "enc" + std::to_string(i + 1);
        p.add(name + ".w", glorot<T>({k, k, cin, cout}, k * k * cin, k * k * cout, rng));
        p.add(name + ".b", Tensor<T>({cout}));
        cin = cout;
    }
}

template <typename T>
void add_decoder(ParameterSet<T>& p, const ModelConfig& c, std::size_t cin, std::size_t last_out,
                 std::mt19937_64& rng) {
    const std::size_t k = c.kernel;
    const std::array<std::size_t, 3> outs{c.decoder_channels[0], c.decoder_channels[1], last_out};
    for (int i = 0; i < 3; ++i) {
        const std::string name = "dec" + std::to_string(i + 1);
        p.add(name + ".w", glorot<T>({k, k, outs[i], cin}, k * k * cin, k * k * outs[i], rng));
        p.add(name + ".b", Tensor<T>({outs[i]}));
        cin = outs[i];
    }
}

}  // namespace

std::size_t analytic_parameter_count(ModelKind kind, const ModelConfig& c) {
    if (kind == ModelKind::CopyLastFrame) return 0;
    const std::size_t k = c.kernel;
    const auto& e = c.encoder_channels;
    const auto& d = c.decoder_channels;
    std::size_t n = conv_count(k, c.window, e[0]) + conv_count(k, e[0], e[1]) + conv_count(k, e[1], e[2]);
    if (kind == ModelKind::SdfTiling) {
        n += conv_count(k, e[2] + c.action_dim, d[0]) + conv_count(k, d[0], d[1]) + conv_count(k, d[1], d[2]);
        n += d[2];
        return n;
    }
    const std::size_t flat = std::size_t(c.bottleneck_height()) * c.bottleneck_width() * e[2];
    const std::size_t h = c.fc_hidden;
    n += (flat * h + h) + (h * h + h) + (c.action_dim * h + h) + (h * h + h) + (h * flat + flat);
    n += conv_count(k, e[2], d[0]) + conv_count(k, d[0], d[1]) + conv_count(k, d[1], 1);
    return n;
}

template <typename T>
PredictiveModel<T>::PredictiveModel(ModelKind kind, ModelConfig config) : kind_(kind), config_(config) {
    config_.validate(kind_);
}

template <typename T>
void PredictiveModel<T>::check_inputs(const Shape& history, const Shape& action) const {
    if (history.size() != 4 || history[1] != config_.height || history[2] != config_.width ||
        history[3] != config_.window) {
        throw ShapeError("predict: history " + to_string(history) + " does not match a window of " +
                         std::to_string(config_.window) + " frames of " + std::to_string(config_.height) + "x" +
                         std::to_string(config_.width));
    }
    if (action.size() != 2 || action[0] != history[0] || action[1] != config_.action_dim) {
        throw ShapeError("predict: action " + to_string(action) + " incompatible with history " +
                         to_string(history));
    }
}

template <typename T>
template <typename Leaf>
ForwardResult<T> PredictiveModel<T>::forward_impl(Tape<T>& tape, Var<T> history, Var<T> action,
                                                  Leaf&& leaf) const {
    check_inputs(history.shape(), action.shape());
    const std::size_t s = config_.stride, p = config_.padding;
    const std::size_t batch = history.shape()[0];

    if (kind_ == ModelKind::CopyLastFrame) {
        const auto& h = history.value();
        Tensor<T> last = slice_channels(h, config_.window - 1, config_.window);
        return {tape.constant(std::move(last)), std::nullopt, std::nullopt};
    }

    Var<T> x = history;
    for (int i = 1; i <= 3; ++i) {
        const std::string name = "enc" + std::to_string(i);
        x = relu(conv2d(x, leaf(name + ".w"), std::optional<Var<T>>(leaf(name + ".b")), s, p));
    }

    ForwardResult<T> result;
    if (kind_ == ModelKind::SdfTiling) {
        x = concat_channels(x, tile_action(action, config_.bottleneck_height(), config_.bottleneck_width()));
        result.merged = x;
        for (int i = 1; i <= 3; ++i) {
            const std::string name = "dec" + std::to_string(i);
            x = relu(deconv2d(x, leaf(name + ".w"), std::optional<Var<T>>(leaf(name + ".b")), s, p));
        }
        result.basis = x;
        result.frame = linear_combine(x, leaf("basis.w"));
        return result;
    }

    const std::size_t bh = config_.bottleneck_height(), bw = config_.bottleneck_width();
    const std::size_t flat = bh * bw * config_.encoder_channels[2];
    auto opt = [](Var<T> v) { return std::optional<Var<T>>(v); };
    x = reshape(x, {batch, flat});
    x = relu(dense(x, leaf("fc_enc.w"), opt(leaf("fc_enc.b"))));
    Var<T> image_code = dense(x, leaf("factor_in.w"), opt(leaf("factor_in.b")));
    Var<T> action_code = dense(action, leaf("action.w"), opt(leaf("action.b")));
    x = dense(mul(image_code, action_code), leaf("factor_out.w"), opt(leaf("factor_out.b")));
    x = relu(dense(x, leaf("fc_dec.w"), opt(leaf("fc_dec.b"))));
    x = reshape(x, {batch, bh, bw, config_.encoder_channels[2]});
    x = relu(deconv2d(x, leaf("dec1.w"), opt(leaf("dec1.b")), s, p));
    x = relu(deconv2d(x, leaf("dec2.w"), opt(leaf("dec2.b")), s, p));
    result.frame = deconv2d(x, leaf("dec3.w"), opt(leaf("dec3.b")), s, p);
    return result;
}

template <typename T>
ForwardResult<T> PredictiveModel<T>::forward(Tape<T>& tape, Var<T> history, Var<T> action) {
    if (!tape.records_gradients()) return std::as_const(*this).forward(tape, history, action);
    return forward_impl(tape, history, action,
                        [&](const std::string& name) { return tape.parameter(params_.get(name)); });
}

template <typename T>
ForwardResult<T> PredictiveModel<T>::forward(Tape<T>& tape, Var<T> history, Var<T> action) const {
    return forward_impl(tape, history, action,
                        [&](const std::string& name) { return tape.view(params_.get(name).value); });
}

template <typename T>
Prediction<T> PredictiveModel<T>::predict(const Tensor<T>& history, std::span<const T> action) const {
    Tensor<T> h = history.rank() == 3 ? history.reshaped({1, history.dim(0), history.dim(1), history.dim(2)})
                                      : history;
    if (h.rank() != 4 || h.dim(0) != 1) {
        throw ShapeError("predict: expected a single history window, got " + to_string(history.shape()));
    }
    if (h.dim(3) != config_.window) {
        throw ShapeError("predict: history holds " + std::to_string(h.dim(3)) + " frames, model window is " +
                         std::to_string(config_.window));
    }
    Tape<T> tape(false);
    Var<T> hv = tape.constant(std::move(h));
    Var<T> av = tape.constant(Tensor<T>({1, action.size()}, std::vector<T>(action.begin(), action.end())));
    ForwardResult<T> r = forward(tape, hv, av);

    Prediction<T> out;
    out.frame = r.frame.value().reshaped({config_.height, config_.width, 1});
    if (r.basis) {
        out.basis = r.basis->value().reshaped({config_.height, config_.width, config_.basis_count()});
        const auto& w = params_.get("basis.w").value;
        out.basis_weights.assign(w.data().begin(), w.data().end());
    }
    return out;
}

template <typename T>
Tensor<T> PredictiveModel<T>::predict_batch(const Tensor<T>& history, const Tensor<T>& actions) const {
    Tape<T> tape(false);
    Var<T> hv = tape.view(history);
    Var<T> av = tape.view(actions);
    return forward(tape, hv, av).frame.value();
}

template <typename T>
std::vector<Tensor<T>> PredictiveModel<T>::rollout(const Tensor<T>& history,
                                                   std::span<const ActionVector> actions) const {
    if (actions.empty()) throw std::invalid_argument("rollout: action list is empty");
    Tensor<T> window = history.rank() == 3 ? history : history.reshaped({history.dim(1), history.dim(2), history.dim(3)});
    const std::size_t px = std::size_t(config_.height) * config_.width, w = config_.window;
    std::vector<Tensor<T>> frames;
    frames.reserve(actions.size());
    for (const auto& a : actions) {
        const std::array<T, kActionDim> av{static_cast<T>(a[0]), static_cast<T>(a[1]), static_cast<T>(a[2])};
        Tensor<T> next = clamp_unit(predict(window, std::span<const T>(av.data(), config_.action_dim)).frame);
        Tensor<T> shifted(window.shape());
        for (std::size_t i = 0; i < px; ++i) {
            for (std::size_t c = 0; c + 1 < w; ++c) shifted[i * w + c] = window[i * w + c + 1];
            shifted[i * w + w - 1] = next[i];
        }
        window = std::move(shifted);
        frames.push_back(std::move(next));
    }
    return frames;
}

template <typename T>
Tensor<T> clamp_unit(Tensor<T> t) {
    for (auto& v : t.data()) v = std::clamp(v, T{0}, T{1});
    return t;
}

template <typename T>
PredictiveModel<T> build_sdf_tiling(const ModelConfig& config, std::uint64_t seed) {
    PredictiveModel<T> model(ModelKind::SdfTiling, config);
    std::mt19937_64 rng(seed);
    auto& p = model.parameters();
    add_encoder(p, config, rng);
    add_decoder(p, config, config.encoder_channels[2] + config.action_dim, config.basis_count(), rng);
    p.add("basis.w", glorot<T>({config.basis_count()}, config.basis_count(), 1, rng));
    return model;
}

template <typename T>
PredictiveModel<T> build_sdf_vector(const ModelConfig& config, std::uint64_t seed) {
    PredictiveModel<T> model(ModelKind::SdfVector, config);
    std::mt19937_64 rng(seed);
    auto& p = model.parameters();
    const std::size_t flat = std::size_t(config.bottleneck_height()) * config.bottleneck_width() *
                             config.encoder_channels[2];
    const std::size_t h = config.fc_hidden;
    add_encoder(p, config, rng);
    p.add("fc_enc.w", glorot<T>({flat, h}, flat, h, rng));
    p.add("fc_enc.b", Tensor<T>({h}));
    p.add("factor_in.w", glorot<T>({h, h}, h, h, rng));
    p.add("factor_in.b", Tensor<T>({h}));
    p.add("action.w", glorot<T>({config.action_dim, h}, config.action_dim, h, rng));
    p.add("action.b", Tensor<T>({h}));
    p.add("factor_out.w", glorot<T>({h, h}, h, h, rng));
    p.add("factor_out.b", Tensor<T>({h}));
    p.add("fc_dec.w", glorot<T>({h, flat}, h, flat, rng));
    p.add("fc_dec.b", Tensor<T>({flat}));
    add_decoder(p, config, config.encoder_channels[2], 1, rng);
    return model;
}

template <typename T>
PredictiveModel<T> build_copy_last_frame(const ModelConfig& config) {
    return PredictiveModel<T>(ModelKind::CopyLastFrame, config);
}

template <typename T>
PredictiveModel<T> build_model(ModelKind kind, const ModelConfig& config, std::uint64_t seed) {
    switch (kind) {
        case ModelKind::SdfTiling:
            return build_sdf_tiling<T>(config, seed);
        case ModelKind::SdfVector:
            return build_sdf_vector<T>(config, seed);
        case ModelKind::CopyLastFrame:
            return build_copy_last_frame<T>(config);
    }
    throw std::invalid_argument("unknown model kind");
}

#define FRAMEPRED_INSTANTIATE(T)                                                             \
    template class PredictiveModel<T>;                                                       \
    template PredictiveModel<T> build_sdf_tiling<T>(const ModelConfig&, std::uint64_t);      \
    template PredictiveModel<T> build_sdf_vector<T>(const ModelConfig&, std::uint64_t);      \
    template PredictiveModel<T> build_copy_last_frame<T>(const ModelConfig&);                \
    template PredictiveModel<T> build_model<T>(ModelKind, const ModelConfig&, std::uint64_t); \
    template Tensor<T> clamp_unit<T>(Tensor<T>);

FRAMEPRED_INSTANTIATE(float)
FRAMEPRED_INSTANTIATE(double)

#undef FRAMEPRED_INSTANTIATE

}  // namespace framepred
