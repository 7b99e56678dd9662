#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace smt {

// Noise parameters of the spiked matrix-tensor problem: order p of the
// tensor channel, variance delta2 of the matrix channel, variance deltaP
// of the tensor channel.
struct ModelParams {
    int p = 3;
    double delta2 = 1.0;
    double deltaP = 1.0;

    void validate() const {
        if (p < 3) throw std::invalid_argument("ModelParams: p must be >= 3");
        if (!(delta2 > 0.0)) throw std::invalid_argument("ModelParams: delta2 must be > 0");
        if (!(deltaP > 0.0)) throw std::invalid_argument("ModelParams: deltaP must be > 0");
    }

    // Inverse variances. delta2 = +inf is a valid degenerate limit (matrix
    // channel switched off) for the landscape formulas.
    double inv_delta2() const { return 1.0 / delta2; }
    double inv_deltaP() const { return 1.0 / deltaP; }
};

inline ModelParams make_params(int p, double delta2, double deltaP) {
    ModelParams mp{p, delta2, deltaP};
    mp.validate();
    return mp;
}

} // namespace smt
