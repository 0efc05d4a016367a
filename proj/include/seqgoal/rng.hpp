#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace seqgoal {

// 64-bit FNV-1a. Used to salt substream seeds and to fingerprint config files.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// mt19937_64 engine with hand-rolled distributions, so a given seed yields the
// same draw sequence on every platform and toolchain.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // [0, 1)
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // integers in [lo, hi], both ends inclusive
    int uniform_int(int lo, int hi) {
        const int span = hi - lo + 1;
        int k = static_cast<int>(uniform() * span);
        if (k >= span) k = span - 1;
        return lo + k;
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller; the second sample of each pair is cached.
    double gaussian(double mean = 0.0, double stddev = 1.0) {
        if (has_spare_) {
            has_spare_ = false;
            return mean + stddev * spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return mean + stddev * r * std::cos(a);
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Named substreams derived from one run seed. Keeps environment resets,
// exploration noise, relabeling draws, network init and target smoothing
// reproducible independently of each other.
class RngStreams {
public:
    explicit RngStreams(std::uint64_t seed)
        : init_(sub(seed, "init")),
          env_(sub(seed, "env")),
          explore_(sub(seed, "explore")),
          relabel_(sub(seed, "relabel")),
          td3_(sub(seed, "td3")) {}

    Rng& init() { return init_; }
    Rng& env() { return env_; }
    Rng& explore() { return explore_; }
    Rng& relabel() { return relabel_; }
    Rng& td3() { return td3_; }

private:
    static std::uint64_t sub(std::uint64_t seed, std::string_view name) {
        return splitmix64(seed ^ fnv1a64(name));
    }

    Rng init_, env_, explore_, relabel_, td3_;
};

}  // namespace seqgoal
