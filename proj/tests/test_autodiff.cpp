#include <gtest/gtest.h>

#include "framepred/autodiff.hpp"
#include "test_support.hpp"

using namespace framepred;
using framepred::testing::gradient_check;
using framepred::testing::inner;
using framepred::testing::project;
using framepred::testing::random_tensor;

TEST(Tensor, RejectsMismatchedDataLength) {
    EXPECT_THROW(Tensor<float>({2, 3}, std::vector<float>(5)), ShapeError);
    EXPECT_THROW(Tensor<float>({1, 1, 1, 1, 1}), ShapeError);
    EXPECT_EQ(Tensor<float>({2, 3, 4}).size(), 24u);
}

TEST(Tensor, ReshapeKeepsDataAndChecksCount) {
    Tensor<float> t({2, 3}, {1, 2, 3, 4, 5, 6});
    auto r = t.reshaped({3, 2});
    EXPECT_EQ(r.vector(), t.vector());
    EXPECT_THROW(t.reshaped({4, 2}), ShapeError);
}

TEST(Conv2d, PaperGeometryHalvesSpatialSize) {
    Tape<float> tape(false);
    auto x = tape.constant(Tensor<float>({1, 80, 160, 4}));
    auto w = tape.constant(Tensor<float>({6, 6, 4, 64}));
    auto b = tape.constant(Tensor<float>({64}));
    auto y = conv2d(x, w, b, 2, 2);
    EXPECT_EQ(y.shape(), (Shape{1, 40, 80, 64}));
    for (float v : y.value().data()) EXPECT_EQ(v, 0.0f);
}

TEST(Conv2d, SinglePixelScalar) {
    Tape<float> tape(false);
    auto x = tape.constant(Tensor<float>({1, 1, 1, 1}, {3.0f}));
    auto w = tape.constant(Tensor<float>({1, 1, 1, 1}, {2.0f}));
    auto b = tape.constant(Tensor<float>({1}, {1.0f}));
    EXPECT_EQ(conv2d(x, w, b, 1, 0).value()[0], 7.0f);
}

TEST(Conv2d, ChannelMismatchNamesBothShapes) {
    Tape<float> tape(false);
    auto x = tape.constant(Tensor<float>({1, 8, 8, 3}));
    auto w = tape.constant(Tensor<float>({6, 6, 4, 8}));
    try {
        conv2d(x, w, std::nullopt, 2, 2);
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("(1,8,8,3)"), std::string::npos) << msg;
        EXPECT_NE(msg.find("(6,6,4,8)"), std::string::npos) << msg;
    }
}

TEST(Conv2d, RandomShapesFollowOutputFormula) {
    std::mt19937 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t k = 1 + rng() % 5, s = 1 + rng() % 3, p = rng() % k;
        const std::size_t h = k + rng() % 9, w = k + rng() % 9, ci = 1 + rng() % 3, co = 1 + rng() % 3;
        Tape<float> tape(false);
        auto y = conv2d(tape.constant(Tensor<float>({2, h, w, ci})), tape.constant(Tensor<float>({k, k, ci, co})),
                        std::nullopt, s, p);
        EXPECT_EQ(y.shape(), (Shape{2, (h + 2 * p - k) / s + 1, (w + 2 * p - k) / s + 1, co}));
    }
}

TEST(Deconv2d, DecoderGeometryDoublesSpatialSize) {
    Tape<float> tape(false);
    auto x = tape.constant(Tensor<float>({1, 10, 20, 67}));
    auto w = tape.constant(Tensor<float>({6, 6, 80, 67}));
    auto b = tape.constant(Tensor<float>({80}));
    auto y = deconv2d(x, w, b, 2, 2);
    EXPECT_EQ(y.shape(), (Shape{1, 20, 40, 80}));
    for (float v : y.value().data()) EXPECT_EQ(v, 0.0f);
}

TEST(Deconv2d, ChannelMismatchRejected) {
    Tape<float> tape(false);
    EXPECT_THROW(deconv2d(tape.constant(Tensor<float>({1, 4, 4, 5})), tape.constant(Tensor<float>({6, 6, 8, 4})),
                          std::nullopt, 2, 2),
                 ShapeError);
}

TEST(Deconv2d, IsAdjointOfConv) {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        const auto x = random_tensor<double>({2, 8, 8, 3}, seed);
        const auto w = random_tensor<double>({6, 6, 3, 5}, seed + 10);
        Tape<double> tape(false);
        const auto cx = conv2d(tape.constant(x), tape.constant(w), std::nullopt, 2, 2);
        const auto y = random_tensor<double>(cx.shape(), seed + 20);
        const auto dy = deconv2d(tape.constant(y), tape.constant(w), std::nullopt, 2, 2);
        ASSERT_EQ(dy.shape(), x.shape());
        const double lhs = inner(cx.value(), y), rhs = inner(x, dy.value());
        EXPECT_LE(std::abs(lhs - rhs), 1e-5 * std::abs(lhs));
    }
}

TEST(Deconv2d, IsAdjointOfConvInSinglePrecision) {
    const auto x = random_tensor<float>({1, 8, 8, 4}, 3);
    const auto w = random_tensor<float>({6, 6, 4, 4}, 4);
    Tape<float> tape(false);
    const auto cx = conv2d(tape.constant(x), tape.constant(w), std::nullopt, 2, 2);
    const auto y = random_tensor<float>(cx.shape(), 5);
    const auto dy = deconv2d(tape.constant(y), tape.constant(w), std::nullopt, 2, 2);
    const double lhs = inner(cx.value(), y), rhs = inner(x, dy.value());
    EXPECT_LE(std::abs(lhs - rhs), 1e-5 * std::abs(lhs));
}

TEST(Relu, ClampsNegatives) {
    Tape<float> tape(false);
    EXPECT_EQ(relu(tape.constant(Tensor<float>({3}, {-1, 0, 2}))).value().vector(), (std::vector<float>{0, 0, 2}));
    EXPECT_EQ(relu(tape.constant(Tensor<float>({2}, {-3, -0.5f}))).value().vector(), (std::vector<float>{0, 0}));
}

TEST(Relu, IsIdempotent) {
    Tape<float> tape(false);
    const auto x = tape.constant(random_tensor<float>({4, 5, 6}, 11));
    EXPECT_EQ(relu(relu(x)).value(), relu(x).value());
}

TEST(ConcatChannels, AppendsActionPlanes) {
    Tape<float> tape(false);
    auto c = concat_channels(tape.constant(Tensor<float>({1, 10, 20, 64})), tape.constant(Tensor<float>({1, 10, 20, 3})));
    EXPECT_EQ(c.shape(), (Shape{1, 10, 20, 67}));
}

TEST(ConcatChannels, SliceRecoversInputsAndEmptyIsIdentity) {
    const auto a = random_tensor<float>({2, 3, 4, 5}, 1), b = random_tensor<float>({2, 3, 4, 2}, 2);
    const auto c = concat_channels(a, b);
    EXPECT_EQ(slice_channels(c, 0, 5), a);
    EXPECT_EQ(slice_channels(c, 5, 7), b);
    EXPECT_EQ(concat_channels(a, Tensor<float>({2, 3, 4, 0})), a);
}

TEST(ConcatChannels, SpatialMismatchRejected) {
    EXPECT_THROW(concat_channels(Tensor<float>({1, 3, 4, 2}), Tensor<float>({1, 3, 5, 2})), ShapeError);
}

TEST(TileAction, EveryPixelCarriesTheAction) {
    Tape<float> tape(false);
    auto t = tile_action(tape.constant(Tensor<float>({2, 3}, {1, 2, 3, 4, 5, 6})), 10, 20);
    ASSERT_EQ(t.shape(), (Shape{2, 10, 20, 3}));
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t p = 0; p < 200; ++p)
            for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(t.value()[(b * 200 + p) * 3 + c], float(b * 3 + c + 1));
}

TEST(LinearCombine, OneHotZeroAndMean) {
    const auto basis = random_tensor<float>({1, 4, 5, 3}, 8);
    Tape<float> tape(false);
    auto bv = tape.constant(basis);
    auto one_hot = linear_combine(bv, tape.constant(Tensor<float>({3}, {0, 1, 0})));
    EXPECT_EQ(one_hot.value().vector(), slice_channels(basis, 1, 2).vector());
    for (float v : linear_combine(bv, tape.constant(Tensor<float>({3}))).value().data()) EXPECT_EQ(v, 0.0f);

    const auto two = random_tensor<float>({1, 4, 5, 2}, 9);
    auto mean = linear_combine(tape.constant(two), tape.constant(Tensor<float>({2}, {0.5f, 0.5f})));
    for (std::size_t p = 0; p < 20; ++p) EXPECT_FLOAT_EQ(mean.value()[p], 0.5f * (two[2 * p] + two[2 * p + 1]));
}

TEST(LinearCombine, LengthMismatchRejected) {
    Tape<float> tape(false);
    EXPECT_THROW(linear_combine(tape.constant(Tensor<float>({1, 2, 2, 3})), tape.constant(Tensor<float>({4}))),
                 ShapeError);
}

TEST(SoftmaxChannels, UniformSaturatedAndShiftInvariant) {
    Tape<float> tape(false);
    for (float v : softmax_channels(tape.constant(Tensor<float>({1, 2, 2, 4}, 3.0f))).value().data())
        EXPECT_NEAR(v, 0.25f, 1e-7);

    auto sat = softmax_channels(tape.constant(Tensor<float>({1, 1, 1, 3}, {1000, 0, 0}))).value();
    EXPECT_NEAR(sat[0], 1.0f, 1e-6);
    EXPECT_TRUE(sat.all_finite());

    const auto x = random_tensor<float>({2, 3, 3, 5}, 4, -5, 5);
    auto shifted = x;
    for (std::size_t p = 0; p < 18; ++p)
        for (std::size_t c = 0; c < 5; ++c) shifted[p * 5 + c] += float(p) * 3.0f - 20.0f;
    const auto a = softmax_channels(tape.constant(x)).value(), b = softmax_channels(tape.constant(shifted)).value();
    for (std::size_t p = 0; p < 18; ++p) {
        double total = 0.0;
        for (std::size_t c = 0; c < 5; ++c) {
            total += a[p * 5 + c];
            EXPECT_NEAR(a[p * 5 + c], b[p * 5 + c], 1e-6);
        }
        EXPECT_NEAR(total, 1.0, 1e-6);
    }
}

TEST(MseLoss, ZeroAndConstantOffset) {
    const auto t = random_tensor<float>({2, 4, 4, 1}, 6, 0, 1);
    auto shifted = t;
    for (auto& v : shifted.data()) v += 0.1f;
    Tape<float> tape(false);
    EXPECT_EQ(mse_loss(tape.constant(t), tape.constant(t)).value()[0], 0.0f);
    EXPECT_NEAR(mse_loss(tape.constant(shifted), tape.constant(t)).value()[0], 0.01f, 1e-6);
    EXPECT_THROW(mse_loss(tape.constant(t), tape.constant(Tensor<float>({2, 4, 4, 2}))), ShapeError);
}

TEST(MseLoss, GradientIsScaledResidual) {
    const auto p = random_tensor<double>({3, 4}, 1), t = random_tensor<double>({3, 4}, 2);
    Tape<double> tape;
    auto pv = tape.input(p);
    tape.backward(mse_loss(pv, tape.constant(t)));
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(pv.grad()[i], 2.0 * (p[i] - t[i]) / 12.0, 1e-15);
    EXPECT_LT(gradient_check({p, t}, [](Tape<double>&, const std::vector<Var<double>>& v) { return mse_loss(v[0], v[1]); }), 1e-4);
}

TEST(Backward, SumOfProductGivesOtherFactor) {
    ParameterSet<double> params;
    auto& w = params.add("w", random_tensor<double>({5}, 1));
    const auto x = random_tensor<double>({5}, 2);
    Tape<double> tape;
    tape.backward(sum(mul(tape.parameter(w), tape.constant(x))));
    EXPECT_EQ(w.grad, x);
}

TEST(Backward, FanOutAccumulates) {
    ParameterSet<double> params;
    auto& w = params.add("w", Tensor<double>({1}, {3.0}));
    auto& unused = params.add("unused", Tensor<double>({2}, 1.0));
    Tape<double> tape;
    auto wv = tape.parameter(w);
    tape.parameter(unused);
    tape.backward(sum(add(wv, wv)));
    EXPECT_EQ(w.grad[0], 2.0);
    EXPECT_EQ(unused.grad.vector(), (std::vector<double>{0.0, 0.0}));
}

TEST(Backward, RejectsNonScalarLoss) {
    Tape<float> tape;
    auto x = tape.input(Tensor<float>({3}, 1.0f));
    EXPECT_THROW(tape.backward(relu(x)), ShapeError);
}

TEST(Backward, VisitsEachOpOnceNewestFirst) {
    Tape<double> tape;
    auto x = tape.input(random_tensor<double>({2, 3}, 1));
    auto a = relu(x);
    auto b = mul(a, x);
    auto c = add(b, a);
    auto loss = sum(c);
    tape.backward(loss);
    EXPECT_EQ(tape.last_backward_order(), (std::vector<std::size_t>{loss.id(), c.id(), b.id(), a.id()}));
}

TEST(Parameters, DuplicateNamesRejected) {
    ParameterSet<float> params;
    params.add("w", Tensor<float>({2}));
    EXPECT_THROW(params.add("w", Tensor<float>({2})), std::invalid_argument);
    EXPECT_EQ(params.get("w").grad.shape(), (Shape{2}));
}

TEST(Determinism, RepeatedForwardIsBitIdentical) {
    const auto x = random_tensor<float>({2, 16, 16, 3}, 1), w = random_tensor<float>({6, 6, 3, 8}, 2);
    Tape<float> t1(false), t2(false);
    EXPECT_EQ(conv2d(t1.constant(x), t1.constant(w), std::nullopt, 2, 2).value(),
              conv2d(t2.constant(x), t2.constant(w), std::nullopt, 2, 2).value());
}

// Central-difference checks in double precision, eps = 1e-5.

TEST(GradientCheck, Conv2dWithBias) {
    EXPECT_LT(gradient_check({random_tensor<double>({2, 8, 8, 4}, 1), random_tensor<double>({6, 6, 4, 3}, 2),
                              random_tensor<double>({3}, 3)},
                             [](Tape<double>&, const std::vector<Var<double>>& v) { return project(conv2d(v[0], v[1], v[2], 2, 2), 7); }),
              1e-3);
}

TEST(GradientCheck, Conv2dOddGeometry) {
    EXPECT_LT(gradient_check({random_tensor<double>({1, 7, 6, 2}, 4), random_tensor<double>({3, 3, 2, 4}, 5)},
                             [](Tape<double>&, const std::vector<Var<double>>& v) {
                                 return project(conv2d(v[0], v[1], std::nullopt, 1, 1), 8);
                             }),
              1e-3);
}

TEST(GradientCheck, Deconv2dWithBias) {
    EXPECT_LT(gradient_check({random_tensor<double>({2, 4, 4, 3}, 1), random_tensor<double>({6, 6, 4, 3}, 2),
                              random_tensor<double>({4}, 3)},
                             [](Tape<double>&, const std::vector<Var<double>>& v) { return project(deconv2d(v[0], v[1], v[2], 2, 2), 9); }),
              1e-3);
}

TEST(GradientCheck, Dense) {
    EXPECT_LT(gradient_check({random_tensor<double>({3, 5}, 1), random_tensor<double>({5, 4}, 2),
                              random_tensor<double>({4}, 3)},
                             [](Tape<double>&, const std::vector<Var<double>>& v) { return project(dense(v[0], v[1], v[2]), 4); }),
              1e-3);
}

TEST(GradientCheck, ReluAwayFromKink) {
    auto x = random_tensor<double>({4, 4, 4}, 1);
    for (auto& v : x.data()) v += v >= 0 ? 0.1 : -0.1;
    EXPECT_LT(gradient_check({x}, [](Tape<double>&, const std::vector<Var<double>>& v) { return project(relu(v[0]), 2); }), 1e-3);
}

TEST(GradientCheck, AddMulReshape) {
    EXPECT_LT(gradient_check({random_tensor<double>({2, 3, 4}, 1), random_tensor<double>({2, 3, 4}, 2)},
                             [](Tape<double>&, const std::vector<Var<double>>& v) {
                                 return project(reshape(mul(add(v[0], v[1]), v[0]), {6, 4}), 3);
                             }),
              1e-3);
}

TEST(GradientCheck, ConcatAndTile) {
    EXPECT_LT(gradient_check({random_tensor<double>({2, 3, 4, 5}, 1), random_tensor<double>({2, 3}, 2)},
                             [](Tape<double>&, const std::vector<Var<double>>& v) {
                                 return project(concat_channels(v[0], tile_action(v[1], 3, 4)), 3);
                             }),
              1e-3);
}

TEST(GradientCheck, LinearCombine) {
    EXPECT_LT(gradient_check({random_tensor<double>({2, 4, 4, 6}, 1), random_tensor<double>({6}, 2)},
                             [](Tape<double>&, const std::vector<Var<double>>& v) { return project(linear_combine(v[0], v[1]), 3); }),
              1e-3);
}

TEST(GradientCheck, SoftmaxChannels) {
    EXPECT_LT(gradient_check({random_tensor<double>({2, 3, 3, 4}, 1, -3, 3)},
                             [](Tape<double>&, const std::vector<Var<double>>& v) { return project(softmax_channels(v[0]), 2); }),
              1e-3);
}
