#include "framepred/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <string>

#include "framepred/checkpoint.hpp"

namespace framepred {

template <typename T>
AdamState<T> AdamState<T>::for_parameters(const ParameterSet<T>& params) {
    AdamState<T> s;
    for (const auto& p : params) {
        s.m.emplace_back(p.value.shape());
        s.v.emplace_back(p.value.shape());
    }
    return s;
}

template <typename T>
void adam_step(ParameterSet<T>& params, AdamState<T>& state, const AdamConfig& config) {
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        throw std::invalid_argument("adam_step: optimizer state holds " + std::to_string(state.m.size()) +
                                    " moments for " + std::to_string(params.size()) + " parameters");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& p = params[i];
        if (p.grad.shape() != p.value.shape() || state.m[i].shape() != p.value.shape() ||
            state.v[i].shape() != p.value.shape()) {
            throw ShapeError("adam_step: '" + p.name + "' gradient or moment shape differs from " +
                             to_string(p.value.shape()));
        }
        if (!p.grad.all_finite()) throw DivergenceError("non-finite gradient in parameter '" + p.name + "'");
    }
    state.step += 1;
    const double t = double(state.step);
    const double c1 = 1.0 - std::pow(config.beta1, t);
    const double c2 = 1.0 - std::pow(config.beta2, t);
    const double b1 = config.beta1, b2 = config.beta2, eps = config.epsilon;
    const double step_size = config.learning_rate / c1, inv_c2 = 1.0 / c2;
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        T* theta = p.value.data().data();
        const T* g = p.grad.data().data();
        T* m = state.m[i].data().data();
        T* v = state.v[i].data().data();
        const std::ptrdiff_t n = std::ptrdiff_t(p.value.size());
#pragma omp parallel for simd schedule(static)
        for (std::ptrdiff_t j = 0; j < n; ++j) {
            const double gj = g[j];
            const double mj = b1 * double(m[j]) + (1.0 - b1) * gj;
            const double vj = b2 * double(v[j]) + (1.0 - b2) * gj * gj;
            m[j] = static_cast<T>(mj);
            v[j] = static_cast<T>(vj);
            theta[j] = static_cast<T>(double(theta[j]) - step_size * mj / (std::sqrt(vj * inv_c2) + eps));
        }
    }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(ParameterSet<float>&, AdamState<float>&, const AdamConfig&);
template void adam_step<double>(ParameterSet<double>&, AdamState<double>&, const AdamConfig&);

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        throw std::invalid_argument("learning rate must be positive, got " + std::to_string(learning_rate));
    if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
    if (batch_size < 1) throw std::invalid_argument("batch size must be at least 1");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
        throw std::invalid_argument("validation fraction must lie in [0,1), got " + std::to_string(validation_fraction));
}

double dataset_mse(const PredictiveModel<float>& model, const WindowedDataset& data, std::size_t batch_size) {
    if (data.empty()) throw std::invalid_argument("dataset_mse: empty dataset");
    batch_size = std::max<std::size_t>(batch_size, 1);
    const std::size_t px = std::size_t(model.config().height) * model.config().width;
    double total = 0.0;
    for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
        std::vector<std::size_t> idx(std::min(batch_size, data.size() - begin));
        std::iota(idx.begin(), idx.end(), begin);
        const SampleBatch b = data.batch(idx);
        const Tensor<float> pred = clamp_unit(model.predict_batch(b.history, b.actions));
        for (std::size_t j = 0; j < idx.size(); ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < px; ++p) {
                const double d = double(pred[j * px + p]) - double(b.targets[j * px + p]);
                acc += d * d;
            }
            total += acc / double(px);
        }
    }
    return total / double(data.size());
}

void write_loss_csv(const std::vector<double>& curve, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out << "epoch,mean_mse\n";
    char buf[64];
    for (std::size_t e = 0; e < curve.size(); ++e) {
        std::snprintf(buf, sizeof buf, "%zu,%.9g\n", e + 1, curve[e]);
        out << buf;
    }
}

namespace {

void require_finite(const ParameterSet<float>& params, const std::string& where) {
    for (const auto& p : params)
        if (!p.value.all_finite()) throw DivergenceError(where + ": parameter '" + p.name + "' is not finite");
}

}  // namespace

TrainResult train(PredictiveModel<float>& model, const WindowedDataset& data, const TrainConfig& config,
                  const std::function<void(const EpochStats&)>& on_epoch) {
    config.validate();
    if (data.empty()) throw std::invalid_argument("train: no windowed training samples");
    if (data.window() != model.config().window) {
        throw std::invalid_argument("train: dataset window " + std::to_string(data.window()) +
                                    " differs from model window " + std::to_string(model.config().window));
    }
    model.set_action_stats(data.stats());

    const std::size_t n_val = static_cast<std::size_t>(std::floor(double(data.size()) * config.validation_fraction));
    const WindowedDataset fit = data.slice(0, data.size() - n_val);
    if (fit.empty()) throw std::invalid_argument("train: validation slice leaves no training windows");
    const std::optional<WindowedDataset> val = n_val > 0 ? std::optional(data.slice(data.size() - n_val, data.size()))
                                                         : std::nullopt;

    TrainResult result;
    result.optimizer = AdamState<float>::for_parameters(model.parameters());
    const AdamConfig adam = config.adam();
    const bool trainable = model.parameters().size() > 0;

    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(fit.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::uint32_t epoch = 1; epoch <= config.epochs; ++epoch) {
        if (config.shuffle) std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size, ++batch_index) {
            const std::size_t end = std::min(order.size(), begin + config.batch_size);
            const std::span<const std::size_t> idx(order.data() + begin, end - begin);
            SampleBatch b = fit.batch(idx);

            Tape<float> tape(trainable);
            const Var<float> history = tape.view(b.history);
            const Var<float> action = tape.view(b.actions);
            const Var<float> target = tape.view(b.targets);
            const auto out = model.forward(tape, history, action);
            const Var<float> loss = mse_loss(out.frame, target);
            const double value = loss.value()[0];
            const std::string where = "epoch " + std::to_string(epoch) + " batch " + std::to_string(batch_index + 1);
            if (!std::isfinite(value)) throw DivergenceError(where + ": training loss is not finite");
            loss_sum += value * double(idx.size());

            if (trainable) {
                model.parameters().zero_grad();
                tape.backward(loss);
                try {
                    adam_step(model.parameters(), result.optimizer, adam);
                } catch (const DivergenceError& e) {
                    throw DivergenceError(where + ": " + e.what());
                }
                require_finite(model.parameters(), where);
            }
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_mse = loss_sum / double(order.size());
        if (val) {
            stats.validation_mse = dataset_mse(model, *val, config.batch_size);
            if (!std::isfinite(*stats.validation_mse))
                throw DivergenceError("epoch " + std::to_string(epoch) + ": validation MSE is not finite");
        }
        result.loss_curve.push_back(stats.train_mse);
        result.epochs.push_back(stats);

        const bool best = !val || !result.best_validation_mse || *stats.validation_mse < *result.best_validation_mse;
        if (best) {
            result.best_epoch = epoch;
            result.best_validation_mse = stats.validation_mse;
            if (!config.best_checkpoint_path.empty())
                save_checkpoint(model, &result.optimizer, config.best_checkpoint_path);
        }
        if (on_epoch) on_epoch(stats);
    }

    if (!config.checkpoint_path.empty()) save_checkpoint(model, &result.optimizer, config.checkpoint_path);
    if (!config.loss_csv_path.empty()) write_loss_csv(result.loss_curve, config.loss_csv_path);
    return result;
}

}  // namespace framepred
