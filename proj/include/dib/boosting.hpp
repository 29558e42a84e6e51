#pragma once

#include <Eigen/Dense>

#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "dib/dataset.hpp"
#include "dib/network.hpp"
#include "dib/rng.hpp"
#include "dib/train.hpp"

namespace dib {

// Sampling distribution D_t over the original training examples, indexed by
// example position in the base set. Non-negative, sums to 1.
using WeightDistribution = Eigen::VectorXd;

// Pseudo-loss is clamped into [kEpsilonFloor, 0.5 - kEpsilonFloor] before
// computing beta: a perfect member would otherwise make beta = 0 and its
// vote weight infinite, and a member at or past 1/2 breaks the weak-learning
// premise. Clamped rounds stay in the ensemble and show up in the logs.
inline constexpr double kEpsilonFloor = 1e-4;

inline double clamp_pseudo_loss(double eps) {
    return std::min(std::max(eps, kEpsilonFloor), 0.5 - kEpsilonFloor);
}

inline WeightDistribution init_distribution(Index m) {
    if (m < 1) throw ValueError("init_distribution: need at least one example");
    return WeightDistribution::Constant(m, 1.0 / static_cast<double>(m));
}

inline void check_distribution(const WeightDistribution& d) {
    if (d.size() == 0) throw ValueError("empty weight distribution");
    if ((d.array() < 0.0).any()) throw ValueError("negative weight in distribution");
    if (std::abs(d.sum() - 1.0) > 1e-9) throw ValueError("distribution does not sum to 1");
}

// m weighted draws with replacement (inverse-CDF on the cumulative weights),
// preserving original example ids.
template <typename Scalar>
Dataset<Scalar> resample(const Dataset<Scalar>& base, const WeightDistribution& dist,
                         std::uint64_t seed) {
    if (dist.size() != base.size())
        throw ValueError("resample: distribution length " + std::to_string(dist.size()) +
                         " != dataset size " + std::to_string(base.size()));
    const Index m = base.size();
    std::vector<double> cdf(static_cast<std::size_t>(m));
    double acc = 0.0;
    for (Index i = 0; i < m; ++i) {
        acc += dist[i];
        cdf[static_cast<std::size_t>(i)] = acc;
    }
    cdf.back() = std::max(cdf.back(), 1.0); // guard the top edge against fp slack

    Rng rng(derive_seed(seed, RngStream::Resample));
    std::vector<Index> rows(static_cast<std::size_t>(m));
    for (Index j = 0; j < m; ++j) {
        const double u = rng.uniform();
        const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        rows[static_cast<std::size_t>(j)] =
            static_cast<Index>(std::min<std::ptrdiff_t>(it - cdf.begin(), m - 1));
    }
    return base.gather(rows);
}

// Member class scores over a dataset, as 64-bit values for the boosting
// algebra regardless of the engine scalar.
template <typename Scalar>
Eigen::MatrixXd member_scores(const Network<Scalar>& member, const Dataset<Scalar>& data,
                              Index chunk = 256) {
    Eigen::MatrixXd scores(data.size(), member.classes());
    const auto m = data.matrix();
    for (Index start = 0; start < data.size(); start += chunk) {
        const Index len = std::min(chunk, data.size() - start);
        MatrixR<Scalar> p = forward(member, MatrixR<Scalar>(m.middleRows(start, len)));
        scores.middleRows(start, len) = p.template cast<double>();
    }
    return scores;
}

// AdaBoost.M2 pseudo-loss over the mislabel pairs (i, y != y_i):
//   eps = 1/2 * sum_i D(i) * 1/(K-1) * sum_{y != y_i} (1 - h(x_i,y_i) + h(x_i,y))
// D is kept per example; the 1/(K-1) factor spreads each example's weight
// over its K-1 pairs so a uniform scorer lands exactly at 1/2.
inline double pseudo_loss(const Eigen::MatrixXd& scores, const std::vector<int>& labels,
                          const WeightDistribution& dist) {
    const Index n = scores.rows();
    const Index k = scores.cols();
    if (static_cast<Index>(labels.size()) != n || dist.size() != n)
        throw ValueError("pseudo_loss: size mismatch");
    if (k < 2) throw ValueError("pseudo_loss: need at least two classes");
    double eps = 0.0;
    for (Index i = 0; i < n; ++i) {
        const int yi = labels[static_cast<std::size_t>(i)];
        double pair_sum = 0.0;
        for (Index y = 0; y < k; ++y) {
            if (y == yi) continue;
            pair_sum += 1.0 - scores(i, yi) + scores(i, y);
        }
        eps += dist[i] * pair_sum / static_cast<double>(k - 1);
    }
    return 0.5 * eps;
}

template <typename Scalar>
double pseudo_loss(const Network<Scalar>& member, const Dataset<Scalar>& base,
                   const WeightDistribution& dist) {
    return pseudo_loss(member_scores(member, base), base.labels, dist);
}

// beta_t = eps_t / (1 - eps_t); callers clamp eps first.
inline double beta(double epsilon) {
    assert(epsilon > 0.0 && epsilon < 1.0);
    return epsilon / (1.0 - epsilon);
}

// Weight multiplier beta^{(1 + margin)/2} where margin = h(x,y_true) minus
// the strongest wrong-class score.
inline double update_factor(double margin, double beta_t) {
    return std::pow(beta_t, 0.5 * (1.0 + margin));
}

inline double worst_competitor_margin(const Eigen::MatrixXd& scores, Index i, int yi) {
    double worst = -std::numeric_limits<double>::infinity();
    for (Index y = 0; y < scores.cols(); ++y)
        if (static_cast<int>(y) != yi) worst = std::max(worst, scores(i, y));
    return scores(i, yi) - worst;
}

// D_{t+1}(i) = D_t(i)/Z_t * beta^{(1/2)(1 + h(x_i,y_i) - h(x_i,y*))} with y*
// the strongest incorrect class; Z_t renormalizes.
inline WeightDistribution update_distribution(const WeightDistribution& dist,
                                              const Eigen::MatrixXd& scores,
                                              const std::vector<int>& labels, double beta_t) {
    if (!(beta_t > 0.0 && beta_t < 1.0))
        throw ValueError("update_distribution: beta must be in (0,1)");
    const Index n = dist.size();
    if (scores.rows() != n || static_cast<Index>(labels.size()) != n)
        throw ValueError("update_distribution: size mismatch");
    WeightDistribution next(n);
    for (Index i = 0; i < n; ++i) {
        const double margin = worst_competitor_margin(scores, i, labels[static_cast<std::size_t>(i)]);
        next[i] = dist[i] * update_factor(margin, beta_t);
    }
    const double z = next.sum();
    if (!(z > 0.0)) throw ValueError("update_distribution: zero normalizer");
    next /= z;
    return next;
}

template <typename Scalar>
WeightDistribution update_distribution(const WeightDistribution& dist,
                                       const Network<Scalar>& member,
                                       const Dataset<Scalar>& base, double beta_t) {
    return update_distribution(dist, member_scores(member, base), base.labels, beta_t);
}

// One trained round: the member plus its vote bookkeeping.
template <typename Scalar>
struct BoostRound {
    Network<Scalar> member;
    double beta = 0.0;
    double alpha = 0.0;            // 1/beta
    double pseudo_loss = 0.0;      // clamped value used for beta
    double raw_pseudo_loss = 0.0;  // as measured, before clamping
    std::uint64_t resample_seed = 0;
    TrainReport train_report;
};

template <typename Scalar>
struct Ensemble {
    std::vector<BoostRound<Scalar>> rounds;
    int classes = 0;
};

// H(x) = argmax_y sum_t log(alpha_t) * h_t(x, y), ties to the lowest class.
template <typename Scalar>
Eigen::MatrixXd ensemble_scores(const Ensemble<Scalar>& ens, const Dataset<Scalar>& data) {
    if (ens.rounds.empty()) throw ValueError("ensemble is empty");
    Eigen::MatrixXd total = Eigen::MatrixXd::Zero(data.size(), ens.classes);
    for (const auto& round : ens.rounds)
        total += std::log(round.alpha) * member_scores(round.member, data);
    return total;
}

template <typename Scalar>
std::vector<int> ensemble_predict(const Ensemble<Scalar>& ens, const Dataset<Scalar>& data) {
    const Eigen::MatrixXd scores = ensemble_scores(ens, data);
    std::vector<int> pred(static_cast<std::size_t>(scores.rows()));
    for (Index i = 0; i < scores.rows(); ++i)
        pred[static_cast<std::size_t>(i)] = static_cast<int>(argmax_lowest(scores.row(i)));
    return pred;
}

template <typename Scalar>
int ensemble_predict(const Ensemble<Scalar>& ens, const Tensor<Scalar>& x) {
    if (ens.rounds.empty()) throw ValueError("ensemble is empty");
    Eigen::RowVectorXd total = Eigen::RowVectorXd::Zero(ens.classes);
    MatrixR<Scalar> batch = x.matrix(1, x.size());
    for (const auto& round : ens.rounds) {
        MatrixR<Scalar> p = forward(round.member, batch);
        total += std::log(round.alpha) * p.row(0).template cast<double>();
    }
    return static_cast<int>(argmax_lowest(total));
}

template <typename Scalar>
double ensemble_error(const Ensemble<Scalar>& ens, const Dataset<Scalar>& data) {
    const auto pred = ensemble_predict(ens, data);
    Index wrong = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] != data.labels[i]) ++wrong;
    return static_cast<double>(wrong) / static_cast<double>(data.size());
}

// Called after each completed round with the round record and the ids drawn
// into that round's resample (for overlap diagnostics and streamed metrics).
template <typename Scalar>
using RoundCallback =
    std::function<void(int round, const BoostRound<Scalar>&, const std::vector<std::int64_t>&)>;

namespace detail {

// Shared epsilon/beta/distribution step of Algorithms 1 and 2.
template <typename Scalar>
void finish_round(BoostRound<Scalar>& round, const Dataset<Scalar>& base,
                  WeightDistribution& dist) {
    const Eigen::MatrixXd scores = member_scores(round.member, base);
    round.raw_pseudo_loss = pseudo_loss(scores, base.labels, dist);
    round.pseudo_loss = clamp_pseudo_loss(round.raw_pseudo_loss);
    round.beta = beta(round.pseudo_loss);
    round.alpha = 1.0 / round.beta;
    dist = update_distribution(dist, scores, base.labels, round.beta);
    check_distribution(dist);
}

} // namespace detail

// AdaBoost.M2: every round trains a fresh randomly-initialized network on a
// fresh weighted resample for the full epoch budget. Round t derives its
// init/resample/shuffle streams from base_seed + t.
template <typename Scalar>
Ensemble<Scalar> run_adaboost_m2(const Dataset<Scalar>& base, const Dataset<Scalar>& valid,
                                 const NetworkSpec& spec, const TrainConfig& cfg, int rounds,
                                 std::uint64_t base_seed,
                                 const RoundCallback<Scalar>* on_round = nullptr) {
    if (rounds < 1) throw ValueError("run_adaboost_m2: rounds must be >= 1");
    base.validate();
    valid.validate();

    Ensemble<Scalar> ens;
    ens.classes = static_cast<int>(class_count(spec));
    WeightDistribution dist = init_distribution(base.size());

    for (int t = 0; t < rounds; ++t) {
        const std::uint64_t round_seed = base_seed + static_cast<std::uint64_t>(t);
        BoostRound<Scalar> round;
        round.resample_seed = round_seed;
        Dataset<Scalar> xt = resample(base, dist, round_seed);

        Network<Scalar> fresh = build_network<Scalar>(spec, derive_seed(round_seed, RngStream::Init));
        TrainConfig cfg_t = cfg;
        cfg_t.seed = round_seed;
        auto [trained, report] = train(fresh, xt, valid, cfg_t);
        round.member = std::move(trained);
        round.train_report = std::move(report);

        detail::finish_round(round, base, dist);
        ens.rounds.push_back(std::move(round));
        if (on_round) (*on_round)(t, ens.rounds.back(), xt.ids);
    }
    return ens;
}

} // namespace dib
