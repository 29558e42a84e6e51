#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dib/surgery.hpp"
#include "test_util.hpp"

using namespace dib;

namespace {

// the paper's MNIST network: 64 5x5 convs, pool, 128 5x5 convs, pool,
// dense 1024 with 50% dropout, softmax over 10 classes
NetworkSpec mnist_spec() {
    return {{1, 28, 28},
            {LayerSpec::conv2d(64, 5, 5), LayerSpec::relu(), LayerSpec::maxpool2d(2, 2),
             LayerSpec::conv2d(128, 5, 5), LayerSpec::relu(), LayerSpec::maxpool2d(2, 2),
             LayerSpec::flatten(), LayerSpec::dense(1024), LayerSpec::relu(),
             LayerSpec::dropout(0.5), LayerSpec::dense(10), LayerSpec::softmax()}};
}

NetworkSpec small_conv_spec() {
    return {{1, 10, 10},
            {LayerSpec::conv2d(4, 3, 3), LayerSpec::relu(), LayerSpec::maxpool2d(2, 2),
             LayerSpec::flatten(), LayerSpec::dense(3), LayerSpec::softmax()}};
}

} // namespace

TEST_CASE("grow: copies every non-inserted layer bit-exactly") {
    const auto net = build_network<float>(small_conv_spec(), 5);
    GrowthPolicy policy;
    policy.block = {LayerSpec::conv2d(4, 1, 1), LayerSpec::relu()};
    policy.position = 3; // after the max-pool

    const auto grown = grow(net, policy, 0, 99);
    REQUIRE(grown.spec.layers.size() == net.spec.layers.size() + 2);
    CHECK(grown.spec.layers[3] == policy.block[0]);
    CHECK(grown.spec.layers[4] == policy.block[1]);

    // below the insertion
    CHECK(bit_equal(grown.params[0].weights, net.params[0].weights));
    CHECK(bit_equal(grown.params[0].bias, net.params[0].bias));
    // above the insertion (shapes still match: the 1x1 conv preserves them)
    CHECK(bit_equal(grown.params[6].weights, net.params[4].weights));
    CHECK(bit_equal(grown.params[6].bias, net.params[4].bias));
    // the inserted conv is freshly initialized
    CHECK(grown.params[3].weights.data.abs().maxCoeff() > 0.0f);
}

TEST_CASE("grow: does not mutate its input and is deterministic") {
    const auto net = build_network<float>(small_conv_spec(), 5);
    const auto before = net;
    GrowthPolicy policy;
    policy.block = {LayerSpec::conv2d(4, 1, 1)};
    policy.position = 3;
    const auto g1 = grow(net, policy, 0, 7);
    const auto g2 = grow(net, policy, 0, 7);
    const auto g3 = grow(net, policy, 0, 8);
    CHECK(bit_equal(net, before));
    CHECK(bit_equal(g1, g2));
    CHECK_FALSE(bit_equal(g1, g3));
}

TEST_CASE("grow: function below the insertion point is exactly preserved") {
    const auto net = build_network<float>(small_conv_spec(), 21);
    GrowthPolicy policy;
    policy.block = {LayerSpec::conv2d(4, 1, 1), LayerSpec::relu()};
    policy.position = 3;
    const auto grown = grow(net, policy, 0, 3);

    const auto x = testutil::random_batch<float>(100, net.input_size(), 17);
    const auto acts_src = forward_activations(net, x);
    const auto acts_grown = forward_activations(grown, x);
    // boundary activations entering the inserted block: identical layers and
    // parameters below, so bitwise equality is required
    CHECK((acts_src[3] - acts_grown[3]).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("grow: shape-incompatible insertion names the position") {
    const auto net = build_network<float>(small_conv_spec(), 2);
    GrowthPolicy policy;
    policy.block = {LayerSpec::conv2d(4, 5, 5)}; // the 4x4 map cannot take a 5x5 kernel
    policy.position = 3;
    CHECK_THROWS_WITH_AS(grow(net, policy, 0, 1), doctest::Contains("position 3"), ShapeError);
}

TEST_CASE("grow: cap reached returns a same-spec full-weight copy") {
    const auto net = build_network<float>(small_conv_spec(), 9);
    GrowthPolicy policy;
    policy.block = {LayerSpec::conv2d(4, 1, 1)};
    policy.position = 3;
    policy.max_insertions = 2;

    const auto copy = grow(net, policy, 2, 55);
    CHECK(copy.spec == net.spec);
    CHECK(bit_equal(copy, net));

    // cap = 0 is the paper's no-additional-layer mode: pure weight transfer
    policy.max_insertions = 0;
    const auto pure = grow(net, policy, 0, 55);
    CHECK(bit_equal(pure, net));
}

TEST_CASE("grow: channel-changing insertion re-initializes only the frontier") {
    NetworkSpec spec{{2, 8, 8},
                     {LayerSpec::conv2d(4, 3, 3), LayerSpec::relu(), LayerSpec::conv2d(6, 3, 3),
                      LayerSpec::relu(), LayerSpec::flatten(), LayerSpec::dense(3),
                      LayerSpec::softmax()}};
    const auto net = build_network<float>(spec, 31);
    GrowthPolicy policy;
    policy.block = {LayerSpec::conv2d(2, 1, 1)}; // 4 channels -> 2
    policy.position = 2;
    const auto grown = grow(net, policy, 0, 77);

    // below: copied
    CHECK(bit_equal(grown.params[0].weights, net.params[0].weights));
    // the conv just above the insertion now expects 2 input channels, so its
    // weights cannot transfer and stay freshly initialized
    CHECK(grown.params[3].weights.shape == Shape{6, 2, 3, 3});
    // the dense head's input size is unchanged (1x1 conv kept spatial dims,
    // the frontier conv kept its channel count): it is copied
    const std::size_t dense_old = 5, dense_new = 6;
    CHECK(bit_equal(grown.params[dense_new].weights, net.params[dense_old].weights));
}

TEST_CASE("grow: copy_above = false re-initializes everything above") {
    const auto net = build_network<float>(small_conv_spec(), 12);
    GrowthPolicy policy;
    policy.block = {LayerSpec::conv2d(4, 1, 1)};
    policy.position = 3;
    policy.copy_above = false;
    const auto grown = grow(net, policy, 0, 13);
    CHECK(bit_equal(grown.params[0].weights, net.params[0].weights));
    CHECK_FALSE(bit_equal(grown.params[5].weights, net.params[4].weights));
}

TEST_CASE("grow: paper's MNIST policy grown once") {
    // a 64-channel 3x3 conv added after the second max-pooling layer
    const auto net = build_network<float>(mnist_spec(), 1);
    GrowthPolicy policy;
    policy.block = {LayerSpec::conv2d(64, 3, 3)};
    policy.position = 6; // directly after the second maxpool2d

    validate_policy(net.spec, policy, 2);
    const auto grown = grow(net, policy, 0, 4);
    REQUIRE(grown.spec.layers.size() == 13);
    CHECK(grown.spec.layers[5].kind == LayerKind::MaxPool2d);
    CHECK(grown.spec.layers[6].kind == LayerKind::Conv2d);
    CHECK(grown.spec.layers[6].channels == 64);
    CHECK(grown.spec.layers[6].kh == 3);
    CHECK(grown.spec.layers[6].kw == 3);
    // 4x4x128 input -> inserted conv output is 2x2x64; the dense head's
    // input width changes, so only that frontier re-initializes
    const auto shapes = infer_shapes(grown.spec);
    CHECK(shapes[7] == Shape{64, 2, 2});
    CHECK(bit_equal(grown.params[3].weights, net.params[3].weights)); // conv 128 copied
}

TEST_CASE("validate_policy: simulates the whole schedule") {
    SUBCASE("shape-preserving block is valid for 10 rounds") {
        GrowthPolicy policy;
        policy.block = {LayerSpec::conv2d(128, 1, 1), LayerSpec::relu()};
        policy.position = 6;
        CHECK_NOTHROW(validate_policy(mnist_spec(), policy, 10));
    }
    SUBCASE("shrinking block fails at the predicted round") {
        // 14x14 input, 3x3 conv at position 2 shrinks the map by 2 per round:
        // 12,10,8,6,4,2 after rounds 1-5; round 6 cannot fit a 3x3 kernel
        NetworkSpec spec{{1, 14, 14},
                         {LayerSpec::conv2d(4, 3, 3), LayerSpec::relu(), LayerSpec::flatten(),
                          LayerSpec::dense(2), LayerSpec::softmax()}};
        GrowthPolicy policy;
        policy.block = {LayerSpec::conv2d(4, 3, 3)};
        policy.position = 2;
        CHECK_NOTHROW(validate_policy(spec, policy, 6));
        CHECK_THROWS_WITH_AS(validate_policy(spec, policy, 10), doctest::Contains("round 6"),
                             ShapeError);
    }
    SUBCASE("cap = 0 is always valid") {
        GrowthPolicy policy;
        policy.block = {LayerSpec::conv2d(999, 9, 9)};
        policy.position = 0;
        policy.max_insertions = 0;
        CHECK_NOTHROW(validate_policy(mnist_spec(), policy, 50));
    }
}
