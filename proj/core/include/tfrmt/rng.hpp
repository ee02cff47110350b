#pragma once

#include <cmath>
#include <cstdint>

// Deterministic, splittable random streams. Everything here is counter-based:
// a value is a pure function of (seed, counters), so results do not depend on
// evaluation order or thread scheduling, and distinct (member, block) keys can
// be derived without coordination.

namespace tfrmt::rng {

// splitmix64 finalizer. Full-period bijection on 64-bit words; the standard
// choice for turning structured keys into well-mixed states.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Collision-free combination of a seed with up to two 32-bit indices. The
// indices are packed into one word (injective for a, b < 2^32), then pushed
// through two mixing rounds so related keys land far apart.
constexpr std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) noexcept {
    return mix64(mix64(seed ^ 0x6a09e667f3bcc909ull) ^ ((a << 32) | (b & 0xffffffffull)));
}

// Uniform double in [0, 1) from the top 53 bits of a word.
constexpr double to_u01(std::uint64_t x) noexcept {
    return static_cast<double>(x >> 11) * 0x1.0p-53;
}

// Sequential stream with splitmix64 state advance. Cheap to construct; used
// wherever a keyed, ordered sequence of draws is needed.
class Stream {
  public:
    explicit Stream(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() noexcept {
        state_ += 0x9e3779b97f4a7c15ull;
        std::uint64_t x = state_;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    double u01() noexcept { return to_u01(next_u64()); }

    // Standard normal via Box-Muller. Hand-rolled rather than
    // std::normal_distribution so that byte-identical streams are a property
    // of the file format, not of the standard library build.
    double gauss() noexcept {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = u01();
        } while (u1 <= 0.0);
        const double u2 = u01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

  private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace tfrmt::rng
