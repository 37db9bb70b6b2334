#include "colorctrl/rng.hpp"

#include <cmath>
#include <numbers>

#include "colorctrl/errors.hpp"

namespace colorctrl {

std::uint64_t Rng::next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double Rng::next_unit() {
    // (k + 1) / 2^53 for k in [0, 2^53): never zero, so log() below is safe.
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

std::vector<float> seeded_normal(Rng& rng, std::size_t n, float mean, float stddev) {
    if (!(stddev >= 0.0f)) throw InputError("seeded_normal: stddev must be >= 0");
    std::vector<float> out(n, mean);
    if (stddev == 0.0f) return out;
    for (std::size_t i = 0; i < n; i += 2) {
        const double u1 = rng.next_unit();
        const double u2 = rng.next_unit();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        out[i] = static_cast<float>(mean + stddev * radius * std::cos(angle));
        if (i + 1 < n) out[i + 1] = static_cast<float>(mean + stddev * radius * std::sin(angle));
    }
    return out;
}

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t basis) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    std::uint64_t h = basis;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace colorctrl
