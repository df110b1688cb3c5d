#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <vector>

namespace cpcfl {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace detail

// xoshiro256++ with splitmix64 seeding. Self-contained so that streams are
// identical across standard libraries and platforms; std:: distributions are
// implementation-defined and must not be used anywhere determinism matters.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = detail::splitmix64(sm);
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n), n >= 1.
    std::uint64_t uniform_int(std::uint64_t n) {
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n + 1) % n;
        std::uint64_t x;
        do {
            x = next();
        } while (x > limit);
        return x % n;
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal via Marsaglia polar; pairs are cached.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double factor = std::sqrt(-2.0 * std::log(s) / s);
        cached_ = v * factor;
        has_cached_ = true;
        return u * factor;
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    // Fisher-Yates.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    // k distinct indices from [0, n), order given by a partial Fisher-Yates.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
        std::vector<std::size_t> pool(n);
        for (std::size_t i = 0; i < n; ++i) pool[i] = i;
        std::vector<std::size_t> picked;
        picked.reserve(k);
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(uniform_int(n - i));
            std::swap(pool[i], pool[j]);
            picked.push_back(pool[i]);
        }
        return picked;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t state_[4] = {};
    double cached_ = 0.0;
    bool has_cached_ = false;
};

// Derives an independent stream seed from a base seed and a path of tags
// (e.g. {kLocalTraining, round, client_id}). Different paths give streams
// that are independent for all practical purposes.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = base;
    (void)detail::splitmix64(s);
    for (std::uint64_t v : path) {
        s ^= v + 0x9E3779B97F4A7C15ULL + (s << 6) + (s >> 2);
        (void)detail::splitmix64(s);
    }
    std::uint64_t mix = s;
    return detail::splitmix64(mix);
}

// Stream tags for derive_seed paths; fixed values are part of the
// reproducibility contract (same seed + config => same run).
namespace stream {
constexpr std::uint64_t kModelInit = 0x01;
constexpr std::uint64_t kEncoderInit = 0x02;
constexpr std::uint64_t kHeadInit = 0x03;
constexpr std::uint64_t kContrastiveHeads = 0x04;
constexpr std::uint64_t kShuffle = 0x05;
constexpr std::uint64_t kAugment = 0x06;
constexpr std::uint64_t kExplore = 0x07;
constexpr std::uint64_t kLocalTraining = 0x08;
constexpr std::uint64_t kParticipation = 0x09;
constexpr std::uint64_t kRestart = 0x0A;
constexpr std::uint64_t kSynthetic = 0x0B;
constexpr std::uint64_t kPartition = 0x0C;
constexpr std::uint64_t kRelevance = 0x0D;
constexpr std::uint64_t kLinearEval = 0x0E;
}  // namespace stream

}  // namespace cpcfl
