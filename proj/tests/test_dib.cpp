#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "dib/data_io.hpp"
#include "dib/dib.hpp"
#include "test_util.hpp"

using namespace dib;

namespace {

Dataset<float> blobs(Index n, int k, double noise, std::uint64_t seed) {
    return make_synthetic<float>(SyntheticKind::GaussianBlobs, n, k, noise, seed);
}

NetworkSpec dense_spec(int hidden, int classes) {
    return {{2},
            {LayerSpec::dense(hidden), LayerSpec::relu(), LayerSpec::dense(classes),
             LayerSpec::softmax()}};
}

GrowthPolicy dense_growth(int hidden, Index position) {
    GrowthPolicy p;
    p.block = {LayerSpec::dense(hidden), LayerSpec::relu()};
    p.position = position;
    return p;
}

Dataset<float> with_ids(std::vector<std::int64_t> ids) {
    Dataset<float> ds;
    const Index n = static_cast<Index>(ids.size());
    ds.examples = Tensor<float>({n, 1});
    ds.labels.assign(static_cast<std::size_t>(n), 0);
    ds.ids = std::move(ids);
    ds.classes = 1;
    return ds;
}

} // namespace

TEST_CASE("jaccard: frozen small-set values") {
    CHECK(jaccard(with_ids({1, 2, 3}), with_ids({1, 2, 3})) == 1.0);
    CHECK(jaccard(with_ids({1, 2, 3}), with_ids({4, 5})) == 0.0);
    CHECK(jaccard(with_ids({1, 2, 3}), with_ids({2, 3, 4})) == 0.5);
    // duplicates collapse to unique ids
    CHECK(jaccard(with_ids({1, 1, 2, 3, 3}), with_ids({2, 3, 4, 4})) == 0.5);
    const auto stats = jaccard_ids({1, 2, 3}, {2, 3, 4});
    CHECK(stats.intersection == 2);
    CHECK(stats.sym_difference == 2);
    CHECK_THROWS_AS(jaccard_ids({}, {1}), ValueError);
}

TEST_CASE("mistake_count: perfect, constant, and brute-force oracle") {
    const auto data = blobs(300, 3, 0.3, 2);
    const auto parts = split(data, {0.7, 0.15, 0.15}, 2);
    TrainConfig cfg;
    cfg.epochs = 25;
    cfg.learning_rate = 0.02;
    auto [net, rep] = train(build_network<float>(dense_spec(8, 3), 3), parts[0], parts[1], cfg);

    SUBCASE("well-trained member on separable blobs makes no mistakes") {
        CHECK(mistake_count(net, parts[0]) == 0);
    }
    SUBCASE("constant predictor on balanced data misses (K-1)/K") {
        auto constant = build_network<float>(dense_spec(4, 3), 1);
        for (auto& p : constant.params)
            if (p.has_params()) p.weights.data.setZero();
        constant.params[2].bias.data[0] = 1.0f; // always class 0
        const auto balanced = blobs(300, 3, 0.3, 5);
        CHECK(mistake_count(constant, balanced) == 200); // 300 * 2/3
    }
    SUBCASE("agrees with an independent loop") {
        const auto member = build_network<float>(dense_spec(5, 3), 9); // untrained
        Index expect = 0;
        const auto m = parts[0].matrix();
        for (Index i = 0; i < parts[0].size(); ++i) {
            const auto p = forward(member, MatrixR<float>(m.middleRows(i, 1)));
            Index best = 0;
            for (Index j = 1; j < p.cols(); ++j)
                if (p(0, j) > p(0, best)) best = j;
            if (static_cast<int>(best) != parts[0].labels[static_cast<std::size_t>(i)]) ++expect;
        }
        CHECK(mistake_count(member, parts[0]) == expect);
    }
}

TEST_CASE("overlap_decomposition: identity holds exactly") {
    const auto base = blobs(400, 2, 2.5, 7);
    const auto member = build_network<float>(dense_spec(6, 2), 11);

    SUBCASE("a == b collapses the difference terms") {
        const auto d = overlap_decomposition(member, base, base);
        CHECK(d.e_a_only == 0);
        CHECK(d.e_b_only == 0);
        CHECK(d.e_common == mistake_count(member, base));
    }
    SUBCASE("disjoint sets have no common term") {
        std::vector<Index> left, right;
        for (Index i = 0; i < base.size(); ++i) (i % 2 ? left : right).push_back(i);
        const auto a = base.gather(left);
        const auto b = base.gather(right);
        const auto d = overlap_decomposition(member, a, b);
        CHECK(d.e_common == 0);
        CHECK(d.e_a_only == mistake_count(member, a));
        CHECK(d.e_b_only == mistake_count(member, b));
    }
    SUBCASE("random resamples satisfy E(h, unique(a)) = common + a_only") {
        const auto dist = init_distribution(base.size());
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto a = resample(base, dist, seed * 2);
            const auto b = resample(base, dist, seed * 2 + 1);
            const auto d = overlap_decomposition(member, a, b);
            // independent recount over the unique rows of a
            std::set<std::int64_t> seen;
            std::vector<Index> rows;
            for (Index i = 0; i < a.size(); ++i)
                if (seen.insert(a.ids[static_cast<std::size_t>(i)]).second) rows.push_back(i);
            const auto ua = a.gather(rows);
            CHECK(d.e_common + d.e_a_only == mistake_count(member, ua));
        }
    }
}

TEST_CASE("run_dib: T=1 coincides with run_adaboost_m2 bit for bit") {
    const auto data = blobs(400, 3, 1.0, 4);
    const auto parts = split(data, {0.6, 0.2, 0.2}, 4);
    const auto spec = dense_spec(8, 3);
    TrainConfig cfg;
    cfg.epochs = 5;

    DibConfig dc;
    dc.rounds = 1;
    dc.first_round_epochs = 5;
    dc.later_round_epochs = 5;
    dc.growth = dense_growth(8, 2);
    dc.train = cfg;
    dc.base_seed = 321;

    auto [dib_ens, overlap] = run_dib(parts[0], parts[1], spec, dc);
    const auto ada_ens = run_adaboost_m2(parts[0], parts[1], spec, cfg, 1, 321);

    REQUIRE(dib_ens.rounds.size() == 1);
    REQUIRE(ada_ens.rounds.size() == 1);
    CHECK(bit_equal(dib_ens.rounds[0].member, ada_ens.rounds[0].member));
    CHECK(dib_ens.rounds[0].beta == ada_ens.rounds[0].beta);
    CHECK(dib_ens.rounds[0].pseudo_loss == ada_ens.rounds[0].pseudo_loss);
    CHECK(overlap.pairs.empty());
}

TEST_CASE("run_dib: growth arithmetic, epoch budget, overlap coverage") {
    const auto data = blobs(1200, 3, 1.2, 6);
    const auto parts = split(data, {0.7, 0.15, 0.15}, 6);
    const auto spec = dense_spec(8, 3);

    DibConfig dc;
    dc.rounds = 5;
    dc.first_round_epochs = 6;
    dc.later_round_epochs = 2;
    dc.growth = dense_growth(8, 2);
    dc.growth.max_insertions = 3;
    dc.train.batch_size = 32;
    dc.base_seed = 9;

    auto [ens, overlap] = run_dib(parts[0], parts[1], spec, dc);
    REQUIRE(ens.rounds.size() == 5);

    // layer count grows by the block size until the cap
    const auto base_layers = spec.layers.size();
    for (int t = 0; t < 5; ++t) {
        const std::size_t expect = base_layers + 2 * static_cast<std::size_t>(std::min(t, 3));
        CHECK(ens.rounds[static_cast<std::size_t>(t)].member.spec.layers.size() == expect);
    }

    // epoch budget: N + (T-1) * M, visible in the per-round error series
    int total = 0;
    for (const auto& r : ens.rounds) total += static_cast<int>(r.train_report.val_errors.size());
    CHECK(total == 6 + 4 * 2);
    CHECK(ens.rounds[0].train_report.val_errors.size() == 6);
    CHECK(ens.rounds[1].train_report.val_errors.size() == 2);

    // overlap report covers every consecutive pair, J in [0,1]
    REQUIRE(overlap.pairs.size() == 4);
    for (int t = 0; t < 4; ++t) {
        CHECK(overlap.pairs[static_cast<std::size_t>(t)].round == t);
        CHECK(overlap.pairs[static_cast<std::size_t>(t)].jaccard >= 0.0);
        CHECK(overlap.pairs[static_cast<std::size_t>(t)].jaccard <= 1.0);
    }

    // near-uniform early distributions on m >= 1000: J above 0.4
    CHECK(overlap.pairs[0].jaccard > 0.4);
}

TEST_CASE("run_dib: rejects an invalid schedule or policy up front") {
    const auto data = blobs(60, 2, 0.4, 1);
    const auto spec = dense_spec(4, 2);
    DibConfig dc;
    dc.rounds = 4;
    dc.first_round_epochs = 2;
    dc.later_round_epochs = 3; // M > N
    dc.growth = dense_growth(4, 2);
    CHECK_THROWS_AS(run_dib(data, data, spec, dc), ConfigError);

    dc.later_round_epochs = 1;
    dc.growth.block = {LayerSpec::conv2d(2, 3, 3)}; // conv into a flat input
    CHECK_THROWS_AS(run_dib(data, data, spec, dc), ShapeError);
}

TEST_CASE("run_dib: conv growth on image data end to end") {
    // the same surgery pattern the MNIST acceptance config uses: a
    // shape-preserving 1x1 conv + relu block inserted between the conv stack
    // and the flatten
    Dataset<float> images;
    images.examples = Tensor<float>({90, 1, 10, 10});
    images.labels.resize(90);
    images.ids.resize(90);
    images.classes = 3;
    Rng rng(40);
    for (Index i = 0; i < images.examples.size(); ++i)
        images.examples.data[i] = static_cast<float>(rng.uniform());
    for (Index i = 0; i < 90; ++i) {
        // make labels weakly learnable from the mean pixel
        const float mean = images.examples.data.segment(i * 100, 100).mean();
        images.labels[static_cast<std::size_t>(i)] = mean < 0.47f ? 0 : (mean < 0.53f ? 1 : 2);
        images.ids[static_cast<std::size_t>(i)] = i;
    }

    NetworkSpec spec{{1, 10, 10},
                     {LayerSpec::conv2d(4, 3, 3), LayerSpec::relu(), LayerSpec::maxpool2d(2, 2),
                      LayerSpec::conv2d(8, 3, 3), LayerSpec::relu(), LayerSpec::flatten(),
                      LayerSpec::dense(16), LayerSpec::relu(), LayerSpec::dense(3),
                      LayerSpec::softmax()}};
    DibConfig dc;
    dc.rounds = 3;
    dc.first_round_epochs = 2;
    dc.later_round_epochs = 1;
    dc.growth.block = {LayerSpec::conv2d(8, 1, 1), LayerSpec::relu()};
    dc.growth.position = 5;
    dc.base_seed = 8;

    auto [ens, overlap] = run_dib(images, images, spec, dc);
    REQUIRE(ens.rounds.size() == 3);
    CHECK(ens.rounds[1].member.spec.layers.size() == spec.layers.size() + 2);
    CHECK(ens.rounds[2].member.spec.layers.size() == spec.layers.size() + 4);
    for (const auto& r : ens.rounds) {
        CHECK(r.beta > 0.0);
        CHECK(r.beta < 1.0);
        CHECK(r.member.params[0].weights.is_finite());
    }
    const auto pred = ensemble_predict(ens, images);
    CHECK(pred.size() == 90);
}

TEST_CASE("dib trains faster than adaboost on the same schedule") {
    // epoch budget N + (T-1)M < TN; wall times must respect the ordering
    const auto data = blobs(900, 3, 1.0, 12);
    const auto parts = split(data, {0.7, 0.15, 0.15}, 12);
    const auto spec = dense_spec(10, 3);

    TrainConfig cfg;
    cfg.epochs = 10; // N
    DibConfig dc;
    dc.rounds = 4;
    dc.first_round_epochs = 10;
    dc.later_round_epochs = 2;
    dc.growth = dense_growth(10, 2);
    dc.train = cfg;
    dc.base_seed = 77;

    auto [dib_ens, overlap] = run_dib(parts[0], parts[1], spec, dc);
    const auto ada_ens = run_adaboost_m2(parts[0], parts[1], spec, cfg, 4, 77);

    double dib_time = 0.0, ada_time = 0.0;
    int dib_epochs = 0, ada_epochs = 0;
    for (const auto& r : dib_ens.rounds) {
        dib_time += r.train_report.wall_time_s;
        dib_epochs += static_cast<int>(r.train_report.val_errors.size());
    }
    for (const auto& r : ada_ens.rounds) {
        ada_time += r.train_report.wall_time_s;
        ada_epochs += static_cast<int>(r.train_report.val_errors.size());
    }
    CHECK(dib_epochs == 10 + 3 * 2);
    CHECK(ada_epochs == 4 * 10);
    CHECK(dib_time < ada_time);

    // paired round-0 initial weights are shared by construction
    const auto a = build_network<float>(spec, derive_seed(77, RngStream::Init));
    const auto b = build_network<float>(spec, derive_seed(77, RngStream::Init));
    CHECK(bit_equal(a, b));
}
