#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace icnas {

// Seeded random stream with platform-independent draws.
//
// The engine is std::mt19937_64; integer, uniform and normal draws are
// implemented here instead of through <random> distributions, whose output
// is implementation-defined. Named sub-streams derive their seed from the
// parent seed and the stream name, so "path" and "shuffle" draws never
// interleave.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }

    // Seed of the named sub-stream: splitmix64(seed ^ fnv1a64(name)).
    static std::uint64_t derive_seed(std::uint64_t seed, std::string_view name);
    Rng substream(std::string_view name) const { return Rng(derive_seed(seed_, name)); }

    std::uint64_t next_u64() {
        ++draws_;
        return engine_();
    }

    // Uniform in [0, n), rejection sampled.
    std::uint64_t uniform_int(std::uint64_t n);
    // Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Standard normal via Box-Muller.
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }
    bool bernoulli(double p) { return uniform() < p; }

    // Fisher-Yates permutation of 0..n-1.
    std::vector<int> permutation(int n);

    // Number of raw 64-bit draws consumed so far.
    std::uint64_t draws() const { return draws_; }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    std::uint64_t draws_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view s);

inline Rng seeded_rng(std::uint64_t seed) { return Rng(seed); }

}  // namespace icnas
