#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "framepred/checkpoint.hpp"
#include "framepred/metrics.hpp"
#include "framepred/roadworld.hpp"
#include "test_support.hpp"

using namespace framepred;

namespace {

namespace fs = std::filesystem;

fs::path temp_path(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "framepred_checkpoint_tests";
    fs::create_directories(dir);
    return dir / name;
}

std::vector<char> file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

PredictiveModel<float> trained_like_model(ModelKind kind, ModelConfig cfg = {}) {
    auto m = build_model<float>(kind, cfg, 17);
    NormalizationStats s;
    s.mean = {0.1, -0.2, 0.3};
    s.std = {1.5, 0.25, 0.125};
    m.set_action_stats(s);
    return m;
}

ModelConfig small_vector_config() {
    ModelConfig c;
    c.fc_hidden = 16;
    return c;
}

}  // namespace

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
    for (auto kind : {ModelKind::SdfTiling, ModelKind::SdfVector, ModelKind::CopyLastFrame}) {
        const auto m = trained_like_model(kind, small_vector_config());
        const auto a = temp_path("a.advt"), b = temp_path("b.advt");
        save_checkpoint(m, nullptr, a);
        const auto loaded = load_checkpoint(a);
        EXPECT_FALSE(loaded.optimizer.has_value());
        EXPECT_EQ(loaded.model.kind(), kind);
        EXPECT_EQ(loaded.model.config(), m.config());
        EXPECT_EQ(loaded.model.action_stats(), m.action_stats());
        save_checkpoint(loaded.model, nullptr, b);
        EXPECT_EQ(file_bytes(a), file_bytes(b)) << model_name(kind);
    }
}

TEST(Checkpoint, OptimizerStateRoundTrips) {
    auto m = trained_like_model(ModelKind::SdfTiling);
    auto state = AdamState<float>::for_parameters(m.parameters());
    state.step = 42;
    state.m[3][7] = 0.25f;
    state.v[5][1] = 1e-7f;
    const auto a = temp_path("opt.advt"), b = temp_path("opt2.advt");
    save_checkpoint(m, &state, a);
    const auto loaded = load_checkpoint(a);
    ASSERT_TRUE(loaded.optimizer.has_value());
    EXPECT_EQ(loaded.optimizer->step, 42u);
    EXPECT_EQ(loaded.optimizer->m[3][7], 0.25f);
    EXPECT_EQ(loaded.optimizer->v[5][1], 1e-7f);
    save_checkpoint(loaded.model, &*loaded.optimizer, b);
    EXPECT_EQ(file_bytes(a), file_bytes(b));
}

TEST(Checkpoint, HeaderLayout) {
    const auto p = temp_path("header.advt");
    save_checkpoint(trained_like_model(ModelKind::SdfTiling), nullptr, p);
    const auto bytes = file_bytes(p);
    ASSERT_GT(bytes.size(), 12u);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "ADVT");
    EXPECT_EQ(bytes[4], 1);
    EXPECT_EQ(bytes[8], 1);
    // 958,400 floats dominate the file.
    EXPECT_GT(bytes.size(), 958400u * 4);
    EXPECT_LT(bytes.size(), 958400u * 4 + 1024);
}

TEST(Checkpoint, EvaluationOfLoadedModelIsBitExact) {
    RoadworldConfig rc;
    rc.n_frames = 12;
    rc.noise_sigma = 0.01;
    const auto m = trained_like_model(ModelKind::SdfTiling);
    const auto p = temp_path("eval.advt");
    save_checkpoint(m, nullptr, p);
    const auto loaded = load_checkpoint(p).model;
    const auto data = windows(generate_roadworld(rc), 4, m.action_stats());
    const auto a = evaluate(m, data), b = evaluate(loaded, data);
    EXPECT_EQ(a.mean_mse, b.mean_mse);
    EXPECT_EQ(a.mean_ssim, b.mean_ssim);
    EXPECT_EQ(a.summary_line(), b.summary_line());
}

TEST(Checkpoint, MismatchedConfigNamesFirstOffendingParameter) {
    const auto p = temp_path("w4.advt");
    save_checkpoint(trained_like_model(ModelKind::SdfTiling), nullptr, p);
    ModelConfig c16;
    c16.window = 16;
    auto other = build_sdf_tiling<float>(c16, 1);
    try {
        load_parameters_into(other, p);
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("enc1.w"), std::string::npos) << e.what();
    }
    ModelConfig wide;
    wide.decoder_channels = {80, 80, 40};
    auto fewer = build_sdf_tiling<float>(wide, 1);
    try {
        load_parameters_into(fewer, p);
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("dec3.w"), std::string::npos) << e.what();
    }
    auto same = build_sdf_tiling<float>(ModelConfig{}, 99);
    load_parameters_into(same, p);
    EXPECT_EQ(same.parameters()[0].value, trained_like_model(ModelKind::SdfTiling).parameters()[0].value);
}

TEST(Checkpoint, VersionMismatchTruncationAndTrailingBytesRejected) {
    const auto p = temp_path("corrupt.advt");
    save_checkpoint(trained_like_model(ModelKind::CopyLastFrame), nullptr, p);
    auto bytes = file_bytes(p);

    auto write = [&](const std::vector<char>& b) { std::ofstream(p, std::ios::binary).write(b.data(), std::streamsize(b.size())); };
    auto v2 = bytes;
    v2[4] = 2;
    write(v2);
    try {
        load_checkpoint(p);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("version"), std::string::npos) << e.what();
    }
    write(std::vector<char>(bytes.begin(), bytes.end() - 3));
    EXPECT_THROW(load_checkpoint(p), FormatError);
    auto longer = bytes;
    longer.push_back(0);
    write(longer);
    EXPECT_THROW(load_checkpoint(p), FormatError);
    write(std::vector<char>{'N', 'O', 'P', 'E'});
    EXPECT_THROW(load_checkpoint(p), FormatError);
}

TEST(Checkpoint, NonFiniteParametersAreNeverWritten) {
    auto m = trained_like_model(ModelKind::SdfTiling);
    m.parameters().get("dec2.b").value[3] = std::numeric_limits<float>::infinity();
    const auto p = temp_path("inf.advt");
    fs::remove(p);
    EXPECT_THROW(save_checkpoint(m, nullptr, p), DivergenceError);
    EXPECT_FALSE(fs::exists(p));
}
