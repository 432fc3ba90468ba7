#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "fewgan/matrix.hpp"

namespace fewgan {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Seeded random stream. Normal deviates use Box-Muller on top of the raw
// 64-bit generator so sequences are identical across standard libraries;
// derived streams (per chain, per sub-discriminator, per episode) come from
// spawn() and are independent of draw order in the parent.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), gen_(splitmix64(seed)) {}

    std::uint64_t seed() const { return seed_; }

    Rng spawn(std::uint64_t stream) const {
        return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x51ed2701)));
    }

    double uniform() {  // [0, 1)
        return (gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    std::uint64_t integer(std::uint64_t n) {  // uniform on [0, n)
        const std::uint64_t bound = n * ((~0ULL) / n);
        std::uint64_t x = gen_();
        while (x >= bound) x = gen_();
        return x % n;
    }

    Matrix normal_matrix(std::size_t rows, std::size_t cols) {
        Matrix m(rows, cols);
        for (double& v : m.raw()) v = normal();
        return m;
    }

    Matrix uniform_matrix(std::size_t rows, std::size_t cols, double lo, double hi) {
        Matrix m(rows, cols);
        for (double& v : m.raw()) v = uniform(lo, hi);
        return m;
    }

    template <typename It>
    void shuffle(It first, It last) {
        const std::size_t n = static_cast<std::size_t>(last - first);
        for (std::size_t i = n; i > 1; --i) {
            const std::size_t j = integer(i);
            std::swap(first[i - 1], first[j]);
        }
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace fewgan
