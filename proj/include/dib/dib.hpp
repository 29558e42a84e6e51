#pragma once

#include <algorithm>
#include <cstdio>
#include <set>
#include <vector>

#include "dib/boosting.hpp"
#include "dib/surgery.hpp"

namespace dib {

struct DibConfig {
    int rounds = 10;            // T
    int first_round_epochs = 20; // N
    int later_round_epochs = 5;  // M, intended M << N
    GrowthPolicy growth;
    TrainConfig train;          // per-round epoch count is overridden
    std::uint64_t base_seed = 0;

    void validate() const {
        if (rounds < 1) throw ConfigError("DIB rounds must be >= 1");
        if (first_round_epochs < 1) throw ConfigError("first-round epochs must be >= 1");
        if (later_round_epochs < 1 || later_round_epochs > first_round_epochs)
            throw ConfigError("later-round epochs must satisfy 1 <= M <= N");
        if (2 * later_round_epochs >= first_round_epochs)
            std::fprintf(stderr,
                         "warning: M = %d is not much smaller than N = %d; the schedule gives "
                         "little time advantage\n",
                         later_round_epochs, first_round_epochs);
        train.validate();
    }
};

namespace detail {

inline std::set<std::int64_t> unique_ids(const std::vector<std::int64_t>& ids) {
    return {ids.begin(), ids.end()};
}

} // namespace detail

// Jaccard similarity |A and B| / |A or B| of the unique-id sets of two
// datasets, the similarity form of the overlap measure.
struct JaccardStats {
    double similarity = 0.0;
    std::size_t intersection = 0;
    std::size_t sym_difference = 0;
};

inline JaccardStats jaccard_ids(const std::vector<std::int64_t>& a,
                                const std::vector<std::int64_t>& b) {
    if (a.empty() || b.empty()) throw ValueError("jaccard: dataset without ids");
    const auto sa = detail::unique_ids(a);
    const auto sb = detail::unique_ids(b);
    std::size_t common = 0;
    for (auto id : sa) common += sb.count(id);
    const std::size_t uni = sa.size() + sb.size() - common;
    JaccardStats s;
    s.intersection = common;
    s.sym_difference = uni - common;
    s.similarity = static_cast<double>(common) / static_cast<double>(uni);
    return s;
}

template <typename Scalar>
double jaccard(const Dataset<Scalar>& a, const Dataset<Scalar>& b) {
    return jaccard_ids(a.ids, b.ids).similarity;
}

// Mistake function E: how many rows of `data` the member labels incorrectly.
template <typename Scalar>
Index mistake_count(const Network<Scalar>& member, const Dataset<Scalar>& data) {
    const auto pred = predict_labels(member, data);
    Index wrong = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] != data.labels[i]) ++wrong;
    return wrong;
}

// Mistakes split over the unique-id intersection of a and b and the two
// difference sets; E(h, unique(a)) = common + a_only exactly.
struct OverlapDecomposition {
    Index e_common = 0;
    Index e_a_only = 0;
    Index e_b_only = 0;
};

namespace detail {

// First row per unique id, kept in first-seen order.
template <typename Scalar>
Dataset<Scalar> unique_rows(const Dataset<Scalar>& d) {
    std::vector<Index> rows;
    std::set<std::int64_t> seen;
    for (Index i = 0; i < d.size(); ++i)
        if (seen.insert(d.ids[static_cast<std::size_t>(i)]).second) rows.push_back(i);
    return d.gather(rows);
}

} // namespace detail

template <typename Scalar>
OverlapDecomposition overlap_decomposition(const Network<Scalar>& member,
                                           const Dataset<Scalar>& a, const Dataset<Scalar>& b) {
    const auto ids_a = detail::unique_ids(a.ids);
    const auto ids_b = detail::unique_ids(b.ids);
    const Dataset<Scalar> ua = detail::unique_rows(a);
    const Dataset<Scalar> ub = detail::unique_rows(b);

    OverlapDecomposition out;
    const auto pred_a = predict_labels(member, ua);
    for (Index i = 0; i < ua.size(); ++i) {
        if (pred_a[static_cast<std::size_t>(i)] == ua.labels[static_cast<std::size_t>(i)]) continue;
        if (ids_b.count(ua.ids[static_cast<std::size_t>(i)]))
            ++out.e_common; // intersection mistakes counted once, from a's side
        else
            ++out.e_a_only;
    }
    const auto pred_b = predict_labels(member, ub);
    for (Index i = 0; i < ub.size(); ++i) {
        if (pred_b[static_cast<std::size_t>(i)] == ub.labels[static_cast<std::size_t>(i)]) continue;
        if (!ids_a.count(ub.ids[static_cast<std::size_t>(i)])) ++out.e_b_only;
    }
    return out;
}

struct OverlapPair {
    int round = 0; // pair (round, round+1)
    double jaccard = 0.0;
    std::size_t intersection = 0;
    std::size_t sym_difference = 0;
};

struct OverlapReport {
    std::vector<OverlapPair> pairs;
};

// Deep Incremental Boosting. Round 0 trains a fresh network for N epochs on
// resample X_0; every later round resamples X_t with the updated D_t, grows
// the previous round's trained member (copying all transferable weights) and
// retrains it for only M epochs. The epsilon/beta/D bookkeeping is the
// AdaBoost.M2 step. The overlap report covers every consecutive resample
// pair. Errors from surgery or training propagate to the caller; completed
// rounds have already been delivered through the callback by then.
template <typename Scalar>
std::pair<Ensemble<Scalar>, OverlapReport> run_dib(const Dataset<Scalar>& base,
                                                   const Dataset<Scalar>& valid,
                                                   const NetworkSpec& spec, const DibConfig& cfg,
                                                   const RoundCallback<Scalar>* on_round = nullptr) {
    cfg.validate();
    validate_policy(spec, cfg.growth, cfg.rounds);
    base.validate();
    valid.validate();

    Ensemble<Scalar> ens;
    ens.classes = static_cast<int>(class_count(spec));
    OverlapReport overlaps;
    WeightDistribution dist = init_distribution(base.size());
    std::vector<std::int64_t> prev_ids;
    int insertions = 0;

    for (int t = 0; t < cfg.rounds; ++t) {
        const std::uint64_t round_seed = cfg.base_seed + static_cast<std::uint64_t>(t);
        BoostRound<Scalar> round;
        round.resample_seed = round_seed;
        Dataset<Scalar> xt = resample(base, dist, round_seed);

        Network<Scalar> start;
        TrainConfig cfg_t = cfg.train;
        cfg_t.seed = round_seed;
        if (t == 0) {
            start = build_network<Scalar>(spec, derive_seed(round_seed, RngStream::Init));
            cfg_t.epochs = cfg.first_round_epochs;
        } else {
            start = grow(ens.rounds.back().member, cfg.growth, insertions,
                         derive_seed(round_seed, RngStream::Init));
            if (cfg.growth.insertion_allowed(insertions)) ++insertions;
            cfg_t.epochs = cfg.later_round_epochs;
        }

        auto [trained, report] = train(start, xt, valid, cfg_t);
        round.member = std::move(trained);
        round.train_report = std::move(report);

        detail::finish_round(round, base, dist);

        if (t > 0) {
            const JaccardStats js = jaccard_ids(prev_ids, xt.ids);
            overlaps.pairs.push_back({t - 1, js.similarity, js.intersection, js.sym_difference});
        }
        prev_ids = xt.ids;

        ens.rounds.push_back(std::move(round));
        if (on_round) (*on_round)(t, ens.rounds.back(), xt.ids);
    }
    return {std::move(ens), std::move(overlaps)};
}

} // namespace dib
