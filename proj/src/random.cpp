// SPDX-License-Identifier: Apache-2.0
#include "hybrid/random.hpp"

#include <cmath>
#include <numbers>

namespace hybrid {

uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

uint64_t hash_combine(uint64_t seed, uint64_t value) {
    return mix64(seed ^ (mix64(value) + 0x632be59bd9b4e019ULL + (seed << 6) + (seed >> 2)));
}

uint64_t hash_label(std::string_view label) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : label) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

double uniform_at(uint64_t seed, uint64_t counter) {
    return static_cast<double>(mix64(hash_combine(seed, counter)) >> 11) * 0x1.0p-53;
}

float normal_at(uint64_t seed, uint64_t index) {
    // Box-Muller, cosine branch only; u1 is shifted into (0, 1].
    const double u1 = 1.0 - uniform_at(seed, 2 * index);
    const double u2 = uniform_at(seed, 2 * index + 1);
    return static_cast<float>(std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2));
}

int64_t RandomStream::uniform_int(int64_t lo, int64_t hi) {
    if (hi <= lo) return lo;
    const auto span = static_cast<double>(hi - lo);
    auto v = lo + static_cast<int64_t>(std::floor(uniform() * span));
    return v >= hi ? hi - 1 : v;
}

}  // namespace hybrid
