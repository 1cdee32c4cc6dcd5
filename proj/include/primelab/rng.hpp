#ifndef PRIMELAB_RNG_HPP
#define PRIMELAB_RNG_HPP

#include <cmath>
#include <cstdint>
#include <limits>

namespace primelab {

// Counter-based splittable generator. Every output is a pure function of
// (key, counter), so streams derived from the same seed are reproducible
// across platforms and independent of call interleaving.
class SplitRng {
  public:
    explicit SplitRng(std::uint64_t seed, std::uint64_t stream = 0)
        : key_(mix(mix(seed ^ 0x7f4a7c15u, 0x9e3779b97f4a7c15ull), stream)) {}

    // Derive an independent stream. The child shares no outputs with the
    // parent regardless of how many draws either makes.
    SplitRng split(std::uint64_t substream) const {
        SplitRng child(0);
        child.key_ = mix(key_, substream ^ 0xd1b54a32d192ed03ull);
        child.ctr_ = 0;
        return child;
    }

    std::uint64_t next_u64() { return mix(key_, ctr_++); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

    // Standard normal via Box-Muller; the second value of each pair is cached.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        if (u1 <= 0.0) u1 = std::numeric_limits<double>::min();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

  private:
    static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
        // splitmix64 finalizer over the keyed counter.
        std::uint64_t z = a + b * 0x9e3779b97f4a7c15ull + 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::uint64_t key_;
    std::uint64_t ctr_ = 0;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace primelab

#endif  // PRIMELAB_RNG_HPP
