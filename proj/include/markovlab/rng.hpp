#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace markovlab {

// SplitMix64; expands seeds into engine state and mixes substream ids.
struct SplitMix64 {
    std::uint64_t state;

    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }
};

class Xoshiro256ss {
public:
    explicit Xoshiro256ss(std::uint64_t seed) {
        SplitMix64 sm(seed);
        for (auto& word : state_) word = sm.next();
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5ULL, 7) * 9ULL;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::array<std::uint64_t, 4> state_;
};

// One substream of a master seed. Distinct (tag, n, trial, attempt) ids give
// statistically independent sequences, and equal ids regenerate identical
// bits, so parallel trials never share generator state.
class RngStream {
public:
    explicit RngStream(std::uint64_t master_seed, std::string_view tag = {},
                       std::uint64_t n = 0, std::uint64_t trial = 0,
                       std::uint64_t attempt = 0)
        : engine_(derive_key(master_seed, tag, n, trial, attempt)) {}

    std::uint64_t next_u64() { return engine_.next_u64(); }

    // 53-bit uniform strictly inside (0,1); safe under log().
    double uniform01() {
        return (static_cast<double>(engine_.next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

private:
    static std::uint64_t derive_key(std::uint64_t master_seed, std::string_view tag,
                                    std::uint64_t n, std::uint64_t trial,
                                    std::uint64_t attempt) {
        std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the tag
        for (unsigned char c : tag) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        std::uint64_t key = master_seed;
        for (std::uint64_t field : {h, n, trial, attempt}) key = SplitMix64(key ^ field).next();
        return key;
    }

    Xoshiro256ss engine_;
};

}  // namespace markovlab
