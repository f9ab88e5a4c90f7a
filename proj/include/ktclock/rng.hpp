#ifndef KTCLOCK_RNG_HPP
#define KTCLOCK_RNG_HPP

#include <array>
#include <cstdint>

namespace ktclock {

// splitmix64 step; used for state initialization and seed derivation.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// xoshiro256** generator. Output is platform-independent, so runs seeded
// identically reproduce bit-identical sample streams anywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t s = seed;
        for (auto& w : state_) w = splitmix64(s);
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // uniform double in [0, 1) with 53 random bits
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // uniform integer in [0, n); n > 0
    std::uint32_t uniform_below(std::uint32_t n) {
        return static_cast<std::uint32_t>(
            (static_cast<unsigned __int128>(next()) * n) >> 64);
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }
    std::array<std::uint64_t, 4> state_{};
};

// Deterministic per-run seed: hash of (master seed, d, L, T index, replica).
// Independent of worker count and completion order.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t d,
                                 std::uint64_t l, std::uint64_t t_index,
                                 std::uint64_t replica) {
    std::uint64_t h = master ^ 0xA5A5A5A55A5A5A5Aull;
    auto mix = [&h](std::uint64_t v) {
        h ^= v + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
        splitmix64(h);
    };
    mix(d);
    mix(l);
    mix(t_index);
    mix(replica);
    std::uint64_t s = h;
    return splitmix64(s);
}

} // namespace ktclock

#endif
