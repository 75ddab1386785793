#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace ctnorm {

// Deterministic random source. std::mt19937_64 has a standardized output
// sequence, but the std distributions do not, so uniform/normal draws are
// derived here by hand to keep results bit-identical across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    // Independent substream keyed by (seed, tag, index).
    static Rng derive(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0) {
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (char c : tag) {
            h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
            h *= 0x100000001b3ull;
        }
        h ^= seed + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
        h ^= index * 0xff51afd7ed558ccdull + 0x2545f4914f6cdd1dull;
        return Rng(h);
    }

    std::uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Inclusive integer range.
    int uniform_int(int lo, int hi) {
        if (hi <= lo) return lo;
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(next_u64() % span);
    }

    // Box-Muller with a cached spare draw.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // Normal draw clamped to +/- max_sigmas standard deviations.
    double truncated_normal(double max_sigmas) {
        double v = normal();
        if (v > max_sigmas) v = max_sigmas;
        if (v < -max_sigmas) v = -max_sigmas;
        return v;
    }

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace ctnorm
