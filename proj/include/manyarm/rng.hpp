#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace manyarm {

// Deterministic random source. mt19937_64 output is pinned by the standard,
// but the <random> distributions are not, so the draw routines live here.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 bits of mantissa.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n). n must be > 0.
    std::size_t uniform_index(std::size_t n) {
        return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
    }

    // Standard normal via Box-Muller. The spare draw is cached.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 6.283185307179586476925286766559 * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    // Fisher-Yates shuffle with the deterministic index draw above.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        if (items.size() < 2) return;
        for (std::size_t i = items.size() - 1; i > 0; --i) {
            std::swap(items[i], items[uniform_index(i + 1)]);
        }
    }

    // Uniform k-subset without replacement (partial Fisher-Yates over a copy).
    template <typename T>
    std::vector<T> sample_without_replacement(const std::vector<T>& pool, std::size_t k) {
        std::vector<T> scratch(pool);
        std::vector<T> out;
        out.reserve(k);
        for (std::size_t i = 0; i < k && i < scratch.size(); ++i) {
            const std::size_t j = i + uniform_index(scratch.size() - i);
            std::swap(scratch[i], scratch[j]);
            out.push_back(scratch[i]);
        }
        return out;
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace manyarm
