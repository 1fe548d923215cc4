// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string_view>

namespace hybrid {

/// SplitMix64 finalizer.
uint64_t mix64(uint64_t x);
uint64_t hash_combine(uint64_t seed, uint64_t value);
/// Stable 64-bit hash of a stream label (FNV-1a), for deriving named streams.
uint64_t hash_label(std::string_view label);

/// Uniform on [0, 1) addressed by (seed, counter). Pure function.
double uniform_at(uint64_t seed, uint64_t counter);
/// Standard normal addressed by (seed, index); replaying the same pair
/// always yields the same bits.
float normal_at(uint64_t seed, uint64_t index);

/// Counter-based stream: state is (seed, counter), so any draw can be
/// reproduced from the seed alone.
class RandomStream {
public:
    explicit RandomStream(uint64_t seed = 0) : seed_(seed) {}

    uint64_t next_u64() { return mix64(hash_combine(seed_, counter_++)); }
    double uniform() { return uniform_at(seed_, counter_++); }
    /// Integer on [lo, hi).
    int64_t uniform_int(int64_t lo, int64_t hi);
    float normal() { return normal_at(seed_, counter_++); }

    /// Independent child stream keyed by `id`.
    RandomStream fork(uint64_t id) const { return RandomStream(hash_combine(seed_, mix64(id ^ 0x5bd1e995ULL))); }
    RandomStream fork(std::string_view label) const { return fork(hash_label(label)); }

    uint64_t seed() const { return seed_; }
    uint64_t counter() const { return counter_; }

private:
    uint64_t seed_;
    uint64_t counter_ = 0;
};

}  // namespace hybrid
