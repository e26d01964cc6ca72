#pragma once

#include <cmath>
#include <cstdint>

namespace clv {

// Deterministic splitmix64 stream with cheap substream derivation.
// Substreams are derived by hashing (master seed, index triple), so draws
// for one (customer, sample) pair never depend on evaluation order.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(mix(seed ^ 0x9e3779b97f4a7c15ull)) {}

    static Rng substream(std::uint64_t master, std::uint64_t a,
                         std::uint64_t b = 0, std::uint64_t c = 0) {
        std::uint64_t s = mix(master + 0x9e3779b97f4a7c15ull);
        s = mix(s ^ mix(a + 0xbf58476d1ce4e5b9ull));
        s = mix(s ^ mix(b + 0x94d049bb133111ebull));
        s = mix(s ^ mix(c + 0xd6e8feb86659fd93ull));
        return Rng(s);
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        return mix(state_);
    }

    // uniform on (0, 1), 53-bit resolution, never exactly 0 or 1
    double next_double() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    // standard normal via polar Box-Muller; second draw is cached
    double next_normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u, v, s;
        do {
            u = 2.0 * next_double() - 1.0;
            v = 2.0 * next_double() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        cached_ = v * f;
        have_cached_ = true;
        return u * f;
    }

    // Exp(rate) draw
    double next_exponential(double rate) {
        return -std::log(next_double()) / rate;
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ull;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebull;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t state_;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

} // namespace clv
