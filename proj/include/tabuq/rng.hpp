#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace tabuq {

std::uint64_t fnv1a64(std::string_view s);
std::uint64_t splitmix64(std::uint64_t x);

// Seed of the named substream of a master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view name) {
    return splitmix64(master ^ splitmix64(fnv1a64(name)));
}

// Seeded random source. All experiment randomness flows from one master seed
// through named substreams (data/init/training/inference), so stages can be
// rerun independently and still reproduce byte-identical results.
//
// The uniform and normal transforms are implemented here rather than with
// std::*_distribution: the engine output is specified by the standard but the
// distributions are not, and pinned regression values must not depend on the
// standard-library vendor.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    static Rng substream(std::uint64_t master_seed, std::string_view name) {
        return Rng(derive_seed(master_seed, name));
    }

    std::uint64_t next_u64() { return engine_(); }

    // [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + uniform() * (hi - lo); }

    // [0, n), unbiased via rejection.
    std::uint64_t uniform_int(std::uint64_t n);

    // Standard normal, Marsaglia polar method.
    double normal();

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Seeded in-place Fisher-Yates; std::shuffle's draw pattern is
// implementation-defined, this one is ours.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.uniform_int(i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace tabuq
