#pragma once

#include <cstdint>
#include <random>

namespace lqg {

// SplitMix64 step; also used to mix seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic per-replicate seed stream: results do not depend on how
// replicates are distributed over workers.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    std::uint64_t s = master;
    std::uint64_t a = splitmix64(s);
    s ^= index * 0x2545f4914f6cdd1dULL + 0x9e3779b97f4a7c15ULL;
    std::uint64_t b = splitmix64(s);
    return a ^ (b + 0x632be59bd9b4e019ULL + (a << 6) + (a >> 2));
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double normal() { return normal_(gen_); }
    double normal(double mean, double sd) { return mean + sd * normal_(gen_); }
    double uniform() { return uniform_(gen_); }
    std::uint64_t bits() { return gen_(); }

    std::mt19937_64& engine() { return gen_; }

private:
    std::mt19937_64 gen_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace lqg
