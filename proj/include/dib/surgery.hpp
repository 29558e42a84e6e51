#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dib/network.hpp"

namespace dib {

// How round t+1's network is built from round t's trained network: one new
// hidden layer (a block of primitive LayerSpecs, typically a conv or dense
// plus its activation) inserted at a fixed position, all pre-existing
// weights transferred.
struct GrowthPolicy {
    std::vector<LayerSpec> block;        // inserted as a unit each growth round
    Index position = 0;                  // insertion index in the current layer list
    std::optional<int> max_insertions;   // growth stops after this many; copying continues
    bool copy_above = true;              // false: re-initialize every layer above the insertion

    bool insertion_allowed(int insertions_done) const {
        return !max_insertions || insertions_done < *max_insertions;
    }
};

// The spec after one insertion. Throws ShapeError naming the position and
// shapes when the block breaks forward compatibility.
inline NetworkSpec grown_spec(const NetworkSpec& spec, const GrowthPolicy& policy) {
    if (policy.block.empty()) throw ConfigError("growth policy has an empty layer block");
    if (policy.position < 0 || policy.position > static_cast<Index>(spec.layers.size()))
        throw ConfigError("growth position " + std::to_string(policy.position) +
                          " outside layer list of size " + std::to_string(spec.layers.size()));
    NetworkSpec out = spec;
    out.layers.insert(out.layers.begin() + policy.position, policy.block.begin(),
                      policy.block.end());
    try {
        infer_shapes(out);
    } catch (const ShapeError& e) {
        throw ShapeError("inserting at position " + std::to_string(policy.position) + ": " +
                         e.what());
    }
    return out;
}

// Simulates the insertions the policy would perform over `rounds` boosting
// rounds (one per round from round 1, until the cap) and reports the first
// round whose insertion is shape-incompatible.
inline void validate_policy(const NetworkSpec& spec, const GrowthPolicy& policy, int rounds) {
    if (rounds < 1) throw ConfigError("validate_policy: rounds must be >= 1");
    infer_shapes(spec);
    NetworkSpec cur = spec;
    int insertions = 0;
    for (int t = 1; t < rounds; ++t) {
        if (!policy.insertion_allowed(insertions)) break;
        try {
            cur = grown_spec(cur, policy);
        } catch (const ShapeError& e) {
            throw ShapeError("growth policy fails at round " + std::to_string(t) + ": " +
                             e.what());
        }
        ++insertions;
    }
}

// Round t+1's untrained-at-top network: the new block inserted at the policy
// position and freshly initialized from `seed`; every pre-existing layer
// whose parameter shapes still match is copied bit-exactly. A layer above
// the insertion whose shapes no longer line up (channel or width change at
// the frontier) keeps its fresh initialization. With copy_above = false only
// layers below the insertion are transferred. Once the insertion cap is
// reached the same spec is kept and all weights are transferred.
template <typename Scalar>
Network<Scalar> grow(const Network<Scalar>& trained, const GrowthPolicy& policy,
                     int insertions_done, std::uint64_t seed) {
    const bool insert = policy.insertion_allowed(insertions_done);
    const NetworkSpec new_spec = insert ? grown_spec(trained.spec, policy) : trained.spec;
    Network<Scalar> out = build_network<Scalar>(new_spec, seed);

    const Index block = insert ? static_cast<Index>(policy.block.size()) : 0;
    for (std::size_t old_l = 0; old_l < trained.spec.layers.size(); ++old_l) {
        const std::size_t new_l =
            (static_cast<Index>(old_l) < policy.position || !insert)
                ? old_l
                : old_l + static_cast<std::size_t>(block);
        if (!policy.copy_above && insert && static_cast<Index>(old_l) >= policy.position)
            continue;
        if (!trained.params[old_l].has_params()) continue;
        if (trained.params[old_l].weights.shape == out.params[new_l].weights.shape &&
            trained.params[old_l].bias.shape == out.params[new_l].bias.shape) {
            out.params[new_l].weights = trained.params[old_l].weights;
            out.params[new_l].bias = trained.params[old_l].bias;
        }
    }
    return out;
}

} // namespace dib
