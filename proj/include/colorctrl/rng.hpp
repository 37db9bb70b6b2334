#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace colorctrl {

// SplitMix64. The state advances by a fixed odd increment and each output is
// the 64-bit finalizer of the state, so draw k of seed s is a pure function of
// (s, k): identical on every platform and independent of threading.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();
    // Uniform in (0, 1], 53-bit resolution.
    double next_unit();

    std::uint64_t state() const { return state_; }

private:
    std::uint64_t state_;
};

// Box-Muller over Rng in double precision, rounded to float. Draws come in
// pairs; an odd n discards the final sine branch.
std::vector<float> seeded_normal(Rng& rng, std::size_t n, float mean, float stddev);

// FNV-1a 64-bit, used for tokenizer hashing and digests.
std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t basis = 0xcbf29ce484222325ULL);

}  // namespace colorctrl
