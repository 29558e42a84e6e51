#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace dib {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Named sub-streams hung off one base seed. A boosting round derives its
// init / resample / shuffle streams independently so that, e.g., growing a
// network does not shift the resampling sequence.
enum class RngStream : std::uint64_t {
    Init = 0x1a2b3c4d,
    Resample = 0x5e6f7081,
    Train = 0x92a3b4c5,
    Data = 0xd6e7f809,
};

inline std::uint64_t derive_seed(std::uint64_t base, RngStream stream) {
    return splitmix64(base ^ splitmix64(static_cast<std::uint64_t>(stream)));
}

// mt19937_64 with explicit output transforms. The standard pins down the
// engine's output sequence but not the library distributions, so the
// mappings live here: results are bit-identical across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    std::uint64_t next_u64() { return engine_(); }

    // [0, 1), 53-bit resolution
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n); bias is negligible for n << 2^53
    std::size_t uniform_index(std::size_t n) {
        auto i = static_cast<std::size_t>(uniform() * static_cast<double>(n));
        return i < n ? i : n - 1;
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller; caches the second variate
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.141592653589793238462643383279502884 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[uniform_index(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace dib
