#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace smt {

// Deterministic random source. mt19937_64 seeded directly, uniforms built
// from the raw 64-bit stream and gaussians by the Marsaglia polar method,
// so streams do not depend on libstdc++ distribution internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t raw() { return eng_(); }

    // uniform on [0, 1) with 53-bit resolution
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    // uniform on (-1, 1)
    double uniform_sym() { return 2.0 * uniform() - 1.0; }

    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = uniform_sym();
            v = uniform_sym();
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        have_spare_ = true;
        return u * f;
    }

    std::vector<double> gaussian_vector(std::size_t n) {
        std::vector<double> v(n);
        for (auto& x : v) x = gaussian();
        return v;
    }

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Uniform point on the sphere of radius sqrt(n), i.e. ||x||^2 = n.
inline std::vector<double> sphere_vector(std::size_t n, Rng& rng) {
    std::vector<double> x = rng.gaussian_vector(n);
    double nrm2 = 0.0;
    for (double v : x) nrm2 += v * v;
    const double scale = std::sqrt(static_cast<double>(n) / nrm2);
    for (auto& v : x) v *= scale;
    return x;
}

} // namespace smt
