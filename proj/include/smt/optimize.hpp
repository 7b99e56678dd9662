#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <utility>

namespace smt {

// Golden-section search for the maximum of a unimodal f on [a, b].
// Returns (x*, f(x*)).
template <typename F>
std::pair<double, double> golden_max(F&& f, double a, double b,
                                     double xtol = 1e-12, int max_iter = 200) {
    static const double invphi = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = b - invphi * (b - a);
    double x2 = a + invphi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < max_iter && (b - a) > xtol; ++it) {
        if (f1 < f2) {
            a = x1;
            x1 = x2; f1 = f2;
            x2 = a + invphi * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1; f2 = f1;
            x1 = b - invphi * (b - a);
            f1 = f(x1);
        }
    }
    const double xm = 0.5 * (a + b);
    return {xm, f(xm)};
}

// Bisection for a root of f on [a, b]; requires a sign change.
template <typename F>
double bisect_root(F&& f, double a, double b, double xtol = 1e-14, int max_iter = 200) {
    double fa = f(a), fb = f(b);
    if (fa == 0.0) return a;
    if (fb == 0.0) return b;
    if ((fa > 0) == (fb > 0))
        throw std::invalid_argument("bisect_root: no sign change on bracket");
    for (int it = 0; it < max_iter && (b - a) > xtol * (std::abs(a) + std::abs(b) + 1.0); ++it) {
        const double m = 0.5 * (a + b);
        const double fm = f(m);
        if (fm == 0.0) return m;
        if ((fm > 0) == (fa > 0)) { a = m; fa = fm; }
        else { b = m; fb = fm; }
    }
    return 0.5 * (a + b);
}

} // namespace smt
