#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dib/network.hpp"
#include "test_util.hpp"

using namespace dib;

TEST_CASE("tensor shape bookkeeping") {
    Tensor<float> t({2, 3, 4});
    CHECK(t.size() == 24);
    CHECK(t.is_finite());
    CHECK_THROWS_AS(Tensor<float>({2, 2}, ArrayX<float>::Zero(5)), ShapeError);
}

TEST_CASE("layer spec validation") {
    CHECK_THROWS_AS(LayerSpec::dense(0), ValueError);
    CHECK_THROWS_AS(LayerSpec::dropout(1.0), ValueError);
    CHECK_THROWS_AS(LayerSpec::dropout(-0.1), ValueError);
    CHECK_THROWS_AS(LayerSpec::conv2d(8, 0, 3), ValueError);
    CHECK_NOTHROW(LayerSpec::dropout(0.0));
}

TEST_CASE("shape inference walks the stack") {
    NetworkSpec spec{{1, 28, 28},
                     {LayerSpec::conv2d(32, 5, 5), LayerSpec::relu(), LayerSpec::maxpool2d(2, 2),
                      LayerSpec::conv2d(64, 5, 5), LayerSpec::relu(), LayerSpec::maxpool2d(2, 2),
                      LayerSpec::flatten(), LayerSpec::dense(10), LayerSpec::softmax()}};
    const auto shapes = infer_shapes(spec);
    CHECK(shapes[1] == Shape{32, 24, 24});
    CHECK(shapes[3] == Shape{32, 12, 12});
    CHECK(shapes[4] == Shape{64, 8, 8});
    CHECK(shapes[6] == Shape{64, 4, 4});
    CHECK(shapes[7] == Shape{1024});
    CHECK(class_count(spec) == 10);
}

TEST_CASE("shape errors name the offending layer") {
    NetworkSpec bad{{1, 4, 4},
                    {LayerSpec::conv2d(2, 5, 5), LayerSpec::flatten(), LayerSpec::dense(2),
                     LayerSpec::softmax()}};
    CHECK_THROWS_WITH_AS(infer_shapes(bad), doctest::Contains("layer 0"), ShapeError);

    NetworkSpec misplaced{{4}, {LayerSpec::softmax(), LayerSpec::dense(2), LayerSpec::softmax()}};
    CHECK_THROWS_AS(infer_shapes(misplaced), ShapeError);

    NetworkSpec no_softmax{{4}, {LayerSpec::dense(2), LayerSpec::relu()}};
    CHECK_THROWS_AS(infer_shapes(no_softmax), ShapeError);
}

TEST_CASE("build_network: parameter shapes follow the spec") {
    NetworkSpec spec{{1, 28, 28},
                     {LayerSpec::conv2d(64, 3, 3), LayerSpec::relu(), LayerSpec::flatten(),
                      LayerSpec::dense(10), LayerSpec::softmax()}};
    const auto net = build_network<float>(spec, 7);
    CHECK(net.params[0].weights.shape == Shape{64, 1, 3, 3});
    CHECK(net.params[0].bias.shape == Shape{64});
    CHECK(net.params[3].weights.shape == Shape{64 * 26 * 26, 10});
    CHECK(net.params[1].has_params() == false);
    CHECK(net.params[0].weights.is_finite());
    // biases start at zero
    CHECK(net.params[0].bias.data.abs().maxCoeff() == 0.0f);
}

TEST_CASE("build_network: same spec and seed is bit-identical") {
    const auto spec = testutil::micro_conv(3);
    const auto a = build_network<float>(spec, 7);
    const auto b = build_network<float>(spec, 7);
    CHECK(bit_equal(a, b));
    const auto c = build_network<float>(spec, 8);
    CHECK_FALSE(bit_equal(a, c));
}

TEST_CASE("forward: softmax rows sum to one") {
    const auto spec = testutil::micro_conv(4);
    const auto net = build_network<float>(spec, 3);
    const auto x = testutil::random_batch<float>(17, net.input_size(), 11);
    const auto p = forward(net, x);
    CHECK(p.rows() == 17);
    CHECK(p.cols() == 4);
    for (Index i = 0; i < p.rows(); ++i) {
        CHECK(p.row(i).minCoeff() >= 0.0f);
        CHECK(std::abs(p.row(i).sum() - 1.0f) < 1e-6f);
    }
}

TEST_CASE("forward: batch shape mismatch throws") {
    const auto net = build_network<float>(testutil::micro_dense(3), 1);
    MatrixR<float> wrong(2, 7);
    wrong.setZero();
    CHECK_THROWS_AS(forward(net, wrong), ShapeError);
}

TEST_CASE("forward: dropout p=0 makes train and eval identical") {
    NetworkSpec spec{{5},
                     {LayerSpec::dense(6), LayerSpec::relu(), LayerSpec::dropout(0.0),
                      LayerSpec::dense(3), LayerSpec::softmax()}};
    const auto net = build_network<float>(spec, 5);
    const auto x = testutil::random_batch<float>(9, 5, 2);
    Rng rng(99);
    const MatrixR<float> train_out = forward(net, x, rng);
    const MatrixR<float> eval_out = forward(net, x);
    CHECK((train_out - eval_out).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("forward: dropout eval path needs no rescale") {
    // with inverted dropout the eval output of a dropout layer is the input
    NetworkSpec spec{{4}, {LayerSpec::dropout(0.5), LayerSpec::dense(2), LayerSpec::softmax()}};
    auto net = build_network<float>(spec, 1);
    const auto x = testutil::random_batch<float>(4, 4, 3);
    const auto acts = forward_activations(net, x);
    CHECK((acts[1] - x).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("forward: hand-computed scaled-identity dense softmax") {
    // W = 2*I on one-hot input: logits (0,2,0), softmax = (1, e^2, 1)/(2+e^2)
    NetworkSpec spec{{3}, {LayerSpec::dense(3), LayerSpec::softmax()}};
    auto net = build_network<double>(spec, 0);
    net.params[0].weights.data.setZero();
    for (Index i = 0; i < 3; ++i) net.params[0].weights.data[i * 3 + i] = 2.0;
    MatrixR<double> x(1, 3);
    x << 0.0, 1.0, 0.0;
    const auto p = forward(net, x);
    const double e2 = std::exp(2.0);
    CHECK(p(0, 1) == doctest::Approx(e2 / (2.0 + e2)).epsilon(1e-12));
    CHECK(p(0, 0) == doctest::Approx(1.0 / (2.0 + e2)).epsilon(1e-12));
    CHECK(argmax_lowest(p.row(0)) == 1);
}

TEST_CASE("grad: label out of range throws") {
    const auto net = build_network<float>(testutil::micro_dense(3), 2);
    const auto x = testutil::random_batch<float>(4, 4, 1);
    std::vector<int> labels{0, 1, 3, 0};
    CHECK_THROWS_AS(grad(net, x, labels), ValueError);
}

TEST_CASE("grad: finite differences agree for every layer kind") {
    // The acceptance suite runs the full 20-net battery; this keeps a
    // representative of each kind in the unit tests.
    struct Case {
        NetworkSpec spec;
        bool train_mode;
    };
    const Case cases[] = {
        {testutil::micro_dense(3), false},
        {testutil::micro_conv(3), false},
        {testutil::micro_conv_stride(2), false},
        {testutil::micro_dropout(3), true},
        {testutil::micro_deep_conv(4), true},
    };
    std::uint64_t seed = 100;
    for (const auto& c : cases) {
        auto net = build_network<double>(c.spec, seed);
        const Index in = net.input_size();
        const auto x = testutil::random_batch<double>(5, in, seed + 1);
        const auto y = testutil::random_labels(5, static_cast<int>(net.classes()), seed + 2);
        const auto r = testutil::finite_difference_check(net, x, y, seed + 3, c.train_mode);
        INFO("spec starting with ", layer_kind_name(c.spec.layers.front().kind));
        CHECK(r.max_rel_err < 1e-4);
        CHECK(r.checked > 0);
        seed += 10;
    }
}

TEST_CASE("grad: zero-weight softmax head has the analytic bias gradient") {
    // logits all zero -> P = 1/K; balanced labels make every bias component
    // (1/K - n_k/n)/1 = 0, and the components always sum to zero.
    NetworkSpec spec{{4}, {LayerSpec::dense(3), LayerSpec::softmax()}};
    auto net = build_network<double>(spec, 9);
    net.params[0].weights.data.setZero();
    const auto x = testutil::random_batch<double>(6, 4, 5);
    const std::vector<int> balanced{0, 1, 2, 0, 1, 2};
    const auto g = grad(net, x, balanced);
    CHECK(g.grads[0].bias.data.abs().maxCoeff() < 1e-15);

    const std::vector<int> skewed{0, 0, 0, 0, 1, 2};
    const auto g2 = grad(net, x, skewed);
    CHECK(std::abs(g2.grads[0].bias.data.sum()) < 1e-15);
}

TEST_CASE("grad: duplicated example leaves the mean gradient unchanged") {
    const auto net = build_network<double>(testutil::micro_dense(3), 21);
    const auto x1 = testutil::random_batch<double>(1, 4, 8);
    MatrixR<double> x2(2, 4);
    x2.row(0) = x1.row(0);
    x2.row(1) = x1.row(0);
    const auto g1 = grad(net, x1, {1});
    const auto g2 = grad(net, x2, {1, 1});
    for (std::size_t l = 0; l < g1.grads.size(); ++l) {
        if (g1.grads[l].weights.size() == 0) continue;
        CHECK((g1.grads[l].weights.data - g2.grads[l].weights.data).abs().maxCoeff() < 1e-12);
        CHECK((g1.grads[l].bias.data - g2.grads[l].bias.data).abs().maxCoeff() < 1e-12);
    }
    CHECK(g1.loss == doctest::Approx(g2.loss).epsilon(1e-12));
}

TEST_CASE("forward outputs stay finite on extreme inputs") {
    const auto net = build_network<float>(testutil::micro_dense(2), 4);
    MatrixR<float> x(2, 4);
    x << 1e30f, -1e30f, 1e30f, -1e30f, 0.f, 0.f, 0.f, 0.f;
    const auto p = forward(net, x);
    CHECK(p.allFinite());
}
