#include "framepred/checkpoint.hpp"

#include <algorithm>

#include "binary_io.hpp"

namespace framepred {

namespace {

using Reader = detail::ByteReader<FormatError>;

void write_config(detail::ByteWriter& w, const ModelConfig& c, const NormalizationStats& stats) {
    for (std::uint32_t v : {c.window, c.height, c.width, c.action_dim}) w.u32(v);
    for (auto v : c.encoder_channels) w.u32(v);
    for (auto v : c.decoder_channels) w.u32(v);
    for (std::uint32_t v : {c.kernel, c.stride, c.padding, c.fc_hidden}) w.u32(v);
    for (double v : stats.mean) w.f64(v);
    for (double v : stats.std) w.f64(v);
}

ModelConfig read_config(Reader& r, NormalizationStats& stats) {
    ModelConfig c;
    c.window = r.u32();
    c.height = r.u32();
    c.width = r.u32();
    c.action_dim = r.u32();
    for (auto& v : c.encoder_channels) v = r.u32();
    for (auto& v : c.decoder_channels) v = r.u32();
    c.kernel = r.u32();
    c.stride = r.u32();
    c.padding = r.u32();
    c.fc_hidden = r.u32();
    for (double& v : stats.mean) v = r.f64();
    for (double& v : stats.std) v = r.f64();
    return c;
}

// Reads one parameter header and checks it against `target`.
void read_parameter_into(Reader& r, Parameter<float>& target) {
    const std::uint32_t name_len = r.u32();
    std::string name = r.text(name_len);
    const std::uint32_t rank = r.u32();
    if (rank > 4) throw FormatError("parameter '" + name + "' has rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    if (name != target.name) {
        throw FormatError("checkpoint parameter '" + name + "' found where the model expects '" + target.name + "'");
    }
    if (shape != target.value.shape()) {
        throw FormatError("parameter '" + name + "' has shape " + to_string(shape) + " in the checkpoint, model expects " +
                          to_string(target.value.shape()));
    }
    r.f32s(target.value.data().data(), target.value.size());
}

Reader open_and_check_header(const std::filesystem::path& path, ModelKind& kind) {
    Reader r = Reader::from_file(path);
    const std::string magic = r.text(4);
    if (magic != "ADVT") throw FormatError("'" + path.string() + "' is not a checkpoint (bad magic)");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw FormatError("checkpoint version " + std::to_string(version) + " unsupported, expected " +
                          std::to_string(kCheckpointVersion));
    }
    const std::uint32_t tag = r.u32();
    if (tag < 1 || tag > 3) throw FormatError("unknown model kind tag " + std::to_string(tag));
    kind = static_cast<ModelKind>(tag);
    return r;
}

void read_parameters(Reader& r, PredictiveModel<float>& model) {
    const std::uint32_t count = r.u32();
    auto& params = model.parameters();
    const std::size_t common = std::min<std::size_t>(count, params.size());
    for (std::size_t i = 0; i < common; ++i) read_parameter_into(r, params[i]);
    if (count < params.size()) {
        throw FormatError("checkpoint ends before parameter '" + params[count].name + "'");
    }
    if (count > params.size()) {
        throw FormatError("checkpoint holds " + std::to_string(count) + " parameters, model has only " +
                          std::to_string(params.size()));
    }
}

}  // namespace

void save_checkpoint(const PredictiveModel<float>& model, const AdamState<float>* optimizer,
                     const std::filesystem::path& path) {
    for (const auto& p : model.parameters())
        if (!p.value.all_finite())
            throw DivergenceError("refusing to checkpoint: parameter '" + p.name + "' is not finite");
    detail::ByteWriter w;
    w.text("ADVT");
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(model.kind()));
    write_config(w, model.config(), model.action_stats());
    const auto& params = model.parameters();
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        w.u32(static_cast<std::uint32_t>(p.name.size()));
        w.text(p.name);
        w.u32(static_cast<std::uint32_t>(p.value.rank()));
        for (auto d : p.value.shape()) w.u32(static_cast<std::uint32_t>(d));
        w.f32s(p.value.data().data(), p.value.size());
    }
    if (optimizer) {
        if (optimizer->m.size() != params.size() || optimizer->v.size() != params.size()) {
            throw std::invalid_argument("optimizer state does not match the model's parameters");
        }
        w.u32(1);
        w.u64(optimizer->step);
        for (std::size_t i = 0; i < params.size(); ++i) {
            w.f32s(optimizer->m[i].data().data(), optimizer->m[i].size());
            w.f32s(optimizer->v[i].data().data(), optimizer->v[i].size());
        }
    } else {
        w.u32(0);
    }
    w.write_file(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    ModelKind kind{};
    Reader r = open_and_check_header(path, kind);
    NormalizationStats stats;
    const ModelConfig config = read_config(r, stats);
    Checkpoint ck{build_model<float>(kind, config, 0), std::nullopt};
    ck.model.set_action_stats(stats);
    read_parameters(r, ck.model);
    if (r.u32() == 1) {
        AdamState<float> state = AdamState<float>::for_parameters(ck.model.parameters());
        state.step = r.u64();
        for (std::size_t i = 0; i < state.m.size(); ++i) {
            r.f32s(state.m[i].data().data(), state.m[i].size());
            r.f32s(state.v[i].data().data(), state.v[i].size());
        }
        ck.optimizer = std::move(state);
    }
    if (r.remaining() != 0) {
        throw FormatError("'" + path.string() + "' has " + std::to_string(r.remaining()) + " trailing bytes");
    }
    return ck;
}

void load_parameters_into(PredictiveModel<float>& model, const std::filesystem::path& path) {
    ModelKind kind{};
    Reader r = open_and_check_header(path, kind);
    if (kind != model.kind()) {
        throw FormatError("checkpoint holds a '" + std::string(model_name(kind)) + "' model, target is '" +
                          std::string(model_name(model.kind())) + "'");
    }
    NormalizationStats stats;
    read_config(r, stats);
    read_parameters(r, model);
    model.set_action_stats(stats);
}

}  // namespace framepred
