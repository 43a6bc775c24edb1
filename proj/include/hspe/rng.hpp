#pragma once

// Counter-based random numbers (Philox4x32-10).
//
// Draws are a pure function of (seed, stream, counter), so ensemble members
// get independent streams by index, replays are bitwise reproducible, and no
// generator state needs to be carried across threads.

#include <cmath>
#include <cstdint>
#include <numbers>

namespace hspe {

namespace detail {

struct PhiloxBlock {
    uint32_t x[4];
};

inline PhiloxBlock philox4x32(uint64_t counter, uint64_t stream, uint64_t seed) {
    constexpr uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
    constexpr uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
    uint32_t c0 = static_cast<uint32_t>(counter);
    uint32_t c1 = static_cast<uint32_t>(counter >> 32);
    uint32_t c2 = static_cast<uint32_t>(stream);
    uint32_t c3 = static_cast<uint32_t>(stream >> 32);
    uint32_t k0 = static_cast<uint32_t>(seed);
    uint32_t k1 = static_cast<uint32_t>(seed >> 32);
    for (int round = 0; round < 10; ++round) {
        const uint64_t p0 = static_cast<uint64_t>(M0) * c0;
        const uint64_t p1 = static_cast<uint64_t>(M1) * c2;
        const uint32_t hi0 = static_cast<uint32_t>(p0 >> 32), lo0 = static_cast<uint32_t>(p0);
        const uint32_t hi1 = static_cast<uint32_t>(p1 >> 32), lo1 = static_cast<uint32_t>(p1);
        c0 = hi1 ^ c1 ^ k0;
        c2 = hi0 ^ c3 ^ k1;
        c1 = lo1;
        c3 = lo0;
        k0 += W0;
        k1 += W1;
    }
    return PhiloxBlock{{c0, c1, c2, c3}};
}

}  // namespace detail

/// Stateless-by-construction generator: all output is derived from
/// (seed, stream) and an advancing 64-bit block counter.
class CounterRng {
  public:
    CounterRng(uint64_t seed, uint64_t stream = 0) : seed_(seed), stream_(stream) {}

    uint64_t seed() const { return seed_; }
    uint64_t stream() const { return stream_; }
    uint64_t counter() const { return counter_; }

    /// Uniform double in (0, 1], 53-bit resolution.
    double uniform() {
        if (pending_ == 0) refill();
        const uint64_t bits = buf_[--pending_];
        return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller on consecutive uniforms.
    double normal() {
        if (have_normal_) {
            have_normal_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        have_normal_ = true;
        return r * std::cos(a);
    }

  private:
    void refill() {
        const detail::PhiloxBlock b = detail::philox4x32(counter_++, stream_, seed_);
        buf_[0] = (static_cast<uint64_t>(b.x[0]) << 32) | b.x[1];
        buf_[1] = (static_cast<uint64_t>(b.x[2]) << 32) | b.x[3];
        pending_ = 2;
    }

    uint64_t seed_, stream_;
    uint64_t counter_ = 0;
    uint64_t buf_[2] = {0, 0};
    int pending_ = 0;
    double spare_ = 0.0;
    bool have_normal_ = false;
};

}  // namespace hspe
