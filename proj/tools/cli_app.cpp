#include "cli_app.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>

#include "framepred/checkpoint.hpp"
#include "framepred/metrics.hpp"
#include "framepred/pgm.hpp"
#include "framepred/roadworld.hpp"
#include "framepred/trainer.hpp"
#include "key_value_config.hpp"

namespace framepred::cli {

namespace {

namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

std::string padded(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04zu", i);
    return buf;
}

std::vector<DrivingLog> load_logs(const std::vector<std::string>& paths) {
    std::vector<DrivingLog> logs;
    for (const auto& p : paths) logs.push_back(load_log(p));
    return logs;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (!fs::is_directory(dir)) throw UsageError("cannot create output directory '" + dir.string() + "'");
}

fs::path sibling(const fs::path& out, const std::string& suffix) {
    fs::path p = out;
    p.replace_extension();
    return p.string() + suffix;
}

struct GenDataArgs {
    std::string out;
    RoadworldConfig world;
};

struct TrainArgs {
    std::string model = "sdf-tiling";
    std::uint32_t window = 4;
    std::uint32_t basis = 80;
    std::vector<std::uint32_t> decoder{80, 80};
    std::vector<std::string> data;
    TrainConfig train;
    std::string out;
    std::string loss_csv;
    std::string best;
};

/// Where a model comes from for inference commands: a checkpoint, or the
/// parameter-free copy baseline.
struct ModelSource {
    std::string checkpoint;
    std::string model;
    std::optional<std::uint32_t> window;

    void add_to(CLI::App& cmd) {
        cmd.add_option("--checkpoint", checkpoint, "trained model file");
        cmd.add_option("--model", model, "use `copy` for the copy-last-frame baseline instead of a checkpoint");
        cmd.add_option("--window", window, "history length; must agree with the checkpoint");
    }

    PredictiveModel<float> resolve(const DrivingLog& shape_of) const {
        if (!checkpoint.empty() && !model.empty())
            throw UsageError("give either --checkpoint or --model, not both");
        if (!checkpoint.empty()) {
            PredictiveModel<float> m = load_checkpoint(checkpoint).model;
            if (window && *window != m.config().window)
                throw UsageError("--window " + std::to_string(*window) + " does not match the checkpoint window " +
                                 std::to_string(m.config().window));
            if (m.config().height != shape_of.height || m.config().width != shape_of.width)
                throw UsageError("checkpoint expects " + std::to_string(m.config().height) + "x" +
                                 std::to_string(m.config().width) + " frames, data has " +
                                 std::to_string(shape_of.height) + "x" + std::to_string(shape_of.width));
            return m;
        }
        if (model.empty()) throw UsageError("one of --checkpoint or --model copy is required");
        if (parse_model_kind(model) != ModelKind::CopyLastFrame)
            throw UsageError("--model without a checkpoint only supports `copy`");
        ModelConfig cfg;
        cfg.window = window.value_or(4);
        cfg.height = shape_of.height;
        cfg.width = shape_of.width;
        return build_copy_last_frame<float>(cfg);
    }
};

int cmd_gen_data(const GenDataArgs& a, std::ostream& out) {
    const DrivingLog log = generate_roadworld(a.world);
    try {
        save_log(log, a.out);
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
    out << "frames=" << log.frames.size() << " actions=" << log.actions.size() << "\n";
    return kExitOk;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
    const ModelKind kind = parse_model_kind(a.model);
    if (kind == ModelKind::CopyLastFrame)
        throw UsageError("the copy baseline has no trainable parameters; use `eval --model copy`");
    auto logs = load_logs(a.data);
    if (logs.empty()) throw UsageError("--data needs at least one log");

    ModelConfig cfg;
    cfg.window = a.window;
    cfg.height = logs.front().height;
    cfg.width = logs.front().width;
    cfg.decoder_channels = {a.decoder.at(0), a.decoder.at(1), kind == ModelKind::SdfTiling ? a.basis : 1u};
    cfg.validate(kind);
    PredictiveModel<float> model = build_model<float>(kind, cfg, a.train.seed);
    out << "params=" << model.parameter_count() << "\n" << std::flush;

    const NormalizationStats stats = compute_stats(logs);
    const WindowedDataset data = windows(std::move(logs), a.window, stats);
    TrainConfig tc = a.train;
    tc.checkpoint_path = a.out;
    tc.best_checkpoint_path = a.best.empty() ? sibling(a.out, ".best.advt") : fs::path(a.best);
    tc.loss_csv_path = a.loss_csv.empty() ? sibling(a.out, ".loss.csv") : fs::path(a.loss_csv);

    const TrainResult r = train(model, data, tc, [&](const EpochStats& s) {
        char buf[160];
        if (s.validation_mse)
            std::snprintf(buf, sizeof buf, "epoch=%u train_mse=%.9g val_mse=%.9g\n", s.epoch, s.train_mse,
                          *s.validation_mse);
        else
            std::snprintf(buf, sizeof buf, "epoch=%u train_mse=%.9g\n", s.epoch, s.train_mse);
        out << buf << std::flush;
    });
    out << "best_epoch=" << r.best_epoch << " checkpoint=" << tc.checkpoint_path.string() << "\n";
    return kExitOk;
}

int cmd_eval(const ModelSource& src, const std::vector<std::string>& data_paths, const std::string& csv,
             std::ostream& out) {
    auto logs = load_logs(data_paths);
    if (logs.empty()) throw UsageError("--data needs at least one log");
    const PredictiveModel<float> model = src.resolve(logs.front());
    const WindowedDataset data = windows(std::move(logs), model.config().window, model.action_stats());
    if (data.empty()) throw UsageError("no log is long enough for window " + std::to_string(model.config().window));
    const EvalReport report = evaluate(model, data);
    out << report.summary_line() << "\n";
    if (!csv.empty()) report.write_csv(csv);
    return kExitOk;
}

struct FrameArgs {
    std::string data;
    std::size_t start = 0;
    std::size_t steps = 1;
    std::string out;
};

int cmd_predict(const ModelSource& src, const FrameArgs& a, bool autoregressive, std::ostream& out) {
    const DrivingLog log = load_log(a.data);
    const PredictiveModel<float> model = src.resolve(log);
    const std::size_t w = model.config().window;
    if (a.steps == 0) throw UsageError("--steps must be positive");
    if (a.start + w + a.steps > log.frames.size() || a.start + w - 1 + a.steps > log.actions.size())
        throw UsageError("--start " + std::to_string(a.start) + " with window " + std::to_string(w) + " and " +
                         std::to_string(a.steps) + " steps runs past the " + std::to_string(log.frames.size()) +
                         "-frame log");
    ensure_dir(a.out);
    const WindowedDataset ds = windows(log, w, model.action_stats());
    // Window i of `ds` has its newest frame at t = i + w - 1.
    std::vector<Tensor<float>> preds;
    if (autoregressive) {
        std::vector<ActionVector> actions;
        for (std::size_t k = 0; k < a.steps; ++k)
            actions.push_back(model.action_stats().normalize(log.actions[a.start + w - 1 + k]));
        preds = model.rollout(ds.sample(a.start).history, actions);
    } else {
        for (std::size_t k = 0; k < a.steps; ++k) {
            const WindowedSample s = ds.sample(a.start + k);
            preds.push_back(clamp_unit(model.predict(s.history, s.action).frame));
        }
    }
    for (std::size_t k = 0; k < a.steps; ++k) {
        write_pgm(log.frames[a.start + w + k], fs::path(a.out) / ("gt_" + padded(k) + ".pgm"));
        write_pgm(preds[k], fs::path(a.out) / ("pred_" + padded(k) + ".pgm"));
    }
    out << "wrote " << a.steps << " frame pairs to " << a.out << "\n";
    return kExitOk;
}

int cmd_inspect_basis(const ModelSource& src, const FrameArgs& a, std::ostream& out) {
    const DrivingLog log = load_log(a.data);
    const PredictiveModel<float> model = src.resolve(log);
    if (model.kind() != ModelKind::SdfTiling)
        throw UsageError("inspect-basis needs an sdf-tiling checkpoint, got " + std::string(model_name(model.kind())));
    const std::size_t w = model.config().window;
    if (a.start + w >= log.frames.size() || a.start + w - 1 >= log.actions.size())
        throw UsageError("--t " + std::to_string(a.start) + " with window " + std::to_string(w) +
                         " runs past the " + std::to_string(log.frames.size()) + "-frame log");
    ensure_dir(a.out);
    const WindowedSample s = windows(log, w, model.action_stats()).sample(a.start);
    const Prediction<float> p = model.predict(s.history, s.action);

    const std::size_t nb = p.basis_weights.size(), px = std::size_t(log.height) * log.width;
    std::vector<std::size_t> order(nb);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return p.basis_weights[i] > p.basis_weights[j]; });

    std::ofstream csv(fs::path(a.out) / "weights.csv");
    if (!csv) throw UsageError("cannot write weights.csv in '" + a.out + "'");
    csv << "rank,index,weight,raw_min,raw_max\n";
    for (std::size_t r = 0; r < nb; ++r) {
        const std::size_t i = order[r];
        Tensor<float> img({log.height, log.width, 1});
        for (std::size_t q = 0; q < px; ++q) img[q] = p.basis[q * nb + i];
        const auto [lo, hi] = write_pgm_normalized(img, fs::path(a.out) / ("basis_" + padded(r) + ".pgm"));
        char buf[160];
        std::snprintf(buf, sizeof buf, "%zu,%zu,%.9g,%.9g,%.9g\n", r, i, double(p.basis_weights[i]), double(lo),
                      double(hi));
        csv << buf;
    }
    write_pgm(clamp_unit(p.frame), fs::path(a.out) / "prediction.pgm");
    out << "wrote " << nb << " basis images to " << a.out << "\n";
    return kExitOk;
}

/// Moves `--config FILE` out of the arguments and splices its entries in
/// right after the subcommand name, so flags given later on the command line
/// take precedence.
std::vector<std::string> expand_config(const CLI::App& app, std::vector<std::string> args) {
    std::optional<std::string> config;
    for (std::size_t i = 0; i < args.size();) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) throw UsageError("--config needs a file path");
            config = args[i + 1];
            args.erase(args.begin() + std::ptrdiff_t(i), args.begin() + std::ptrdiff_t(i) + 2);
        } else if (args[i].rfind("--config=", 0) == 0) {
            config = args[i].substr(9);
            args.erase(args.begin() + std::ptrdiff_t(i));
        } else {
            ++i;
        }
    }
    if (!config) return args;
    const auto sub_it = std::find_if(args.begin(), args.end(), [&](const std::string& a) {
        return app.get_subcommand_no_throw(a) != nullptr;
    });
    if (sub_it == args.end()) throw UsageError("--config needs a subcommand");
    const CLI::App* sub = app.get_subcommand_no_throw(*sub_it);
    std::vector<std::string> injected;
    for (const auto& [key, value] : read_key_value_file(*config)) {
        std::string flag = key;
        std::replace(flag.begin(), flag.end(), '_', '-');
        if (flag == "help" || flag == "config" || sub->get_option_no_throw("--" + flag) == nullptr)
            throw UsageError("unknown config key '" + key + "' for " + sub->get_name());
        injected.push_back("--" + flag + "=" + value);
    }
    args.insert(sub_it + 1, injected.begin(), injected.end());
    return args;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Action-conditioned next-frame prediction for driving video", "framepred"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.require_subcommand(1);
    app.add_option("--config", "key = value file applied before command-line flags");

    GenDataArgs gen;
    auto* g = app.add_subcommand("gen-data", "generate a synthetic roadworld driving log");
    g->add_option("--out", gen.out, "output log file")->required();
    g->add_option("--seed", gen.world.seed, "generator seed");
    g->add_option("--frames", gen.world.n_frames, "number of frames")->check(CLI::PositiveNumber);
    g->add_option("--noise", gen.world.noise_sigma, "observation noise std")->check(CLI::NonNegativeNumber);
    g->add_option("--steer-gain", gen.world.steer_gain, "pixels of lateral shift per unit steering");
    g->add_option("--accel-gain", gen.world.accel_gain, "relative vehicle scale change per unit acceleration");
    g->add_option("--brake-gain", gen.world.brake_gain, "brightness drop per unit brake");
    g->add_option("--steer-std", gen.world.steer_std, "steering innovation std (0 for a static scene)");
    g->add_option("--accel-std", gen.world.accel_std, "acceleration innovation std");
    g->add_option("--brake-std", gen.world.brake_std, "brake innovation std");

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "train a predictor");
    t->add_option("--model", tr.model, "sdf-tiling | sdf | copy");
    t->add_option("--window", tr.window, "history length")->check(CLI::PositiveNumber);
    t->add_option("--basis", tr.basis, "number of basis images (sdf-tiling)")->check(CLI::PositiveNumber);
    t->add_option("--decoder", tr.decoder, "widths of the first two decoder layers")->expected(2)->delimiter(',');
    t->add_option("--data", tr.data, "training logs")->required()->expected(1, -1);
    t->add_option("--epochs", tr.train.epochs, "passes over the training windows")->check(CLI::PositiveNumber);
    t->add_option("--lr", tr.train.learning_rate, "Adam learning rate")->check(CLI::PositiveNumber);
    t->add_option("--batch", tr.train.batch_size, "mini-batch size")->check(CLI::PositiveNumber);
    t->add_option("--seed", tr.train.seed, "initialization and shuffling seed");
    t->add_option("--validation", tr.train.validation_fraction, "held-out share of training windows")
        ->check(CLI::Range(0.0, 0.99));
    t->add_option("--out", tr.out, "final checkpoint")->required();
    t->add_option("--best", tr.best, "best-validation checkpoint (default <out>.best.advt)");
    t->add_option("--loss-csv", tr.loss_csv, "per-epoch loss (default <out>.loss.csv)");

    ModelSource eval_src;
    std::vector<std::string> eval_data;
    std::string eval_csv;
    auto* e = app.add_subcommand("eval", "score a model on test logs");
    eval_src.add_to(*e);
    e->add_option("--data", eval_data, "test logs")->required()->expected(1, -1);
    e->add_option("--csv", eval_csv, "per-sample scores");

    ModelSource pred_src, roll_src, basis_src;
    FrameArgs pred_args, roll_args, basis_args;
    auto* p = app.add_subcommand("predict", "one-step predictions from logged history");
    auto* r = app.add_subcommand("rollout", "autoregressive predictions under logged actions");
    for (auto [cmd, src, fa] : {std::tuple{p, &pred_src, &pred_args}, std::tuple{r, &roll_src, &roll_args}}) {
        src->add_to(*cmd);
        cmd->add_option("--data", fa->data, "driving log")->required();
        cmd->add_option("--start", fa->start, "index of the oldest history frame");
        cmd->add_option("--steps", fa->steps, "frames to predict")->check(CLI::PositiveNumber);
        cmd->add_option("--out", fa->out, "output directory")->required();
    }
    auto* b = app.add_subcommand("inspect-basis", "export basis images of an sdf-tiling model");
    basis_src.add_to(*b);
    b->add_option("--data", basis_args.data, "driving log")->required();
    b->add_option("--t", basis_args.start, "index of the oldest history frame");
    b->add_option("--out", basis_args.out, "output directory")->required();

    try {
        std::vector<std::string> args = expand_config(app, raw_args);
        std::reverse(args.begin(), args.end());
        app.parse(std::move(args));
    } catch (const CLI::ParseError& ex) {
        const int code = app.exit(ex, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << "\n";
        return kExitUsage;
    }

    try {
        if (*g) return cmd_gen_data(gen, out);
        if (*t) return cmd_train(tr, out);
        if (*e) return cmd_eval(eval_src, eval_data, eval_csv, out);
        if (*p) return cmd_predict(pred_src, pred_args, false, out);
        if (*r) return cmd_predict(roll_src, roll_args, true, out);
        if (*b) return cmd_inspect_basis(basis_src, basis_args, out);
    } catch (const DivergenceError& ex) {
        err << "diverged: " << ex.what() << "\n";
        return kExitDivergence;
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}

}  // namespace framepred::cli
