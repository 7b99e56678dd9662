#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <thread>
#include <vector>

#include "smt/optimize.hpp"
#include "smt/params.hpp"

namespace smt::kacrice {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Annealed-spectrum shift term: t^2/4 inside the bulk, with the log
// correction outside. Even, continuous, C^1 at |t| = 2.
inline double phi_shift(double t) {
    const double at = std::abs(t);
    double v = 0.25 * t * t;
    if (at > 2.0) {
        v += std::log(std::sqrt(0.25 * t * t - 1.0) + 0.5 * at)
             - 0.25 * at * std::sqrt(t * t - 4.0);
    }
    return v;
}

// antiderivative of sqrt(y^2 - 4) for y >= 2
inline double sqrt_int_antideriv(double y) {
    const double s = std::sqrt(y * y - 4.0);
    return 0.5 * y * s - 2.0 * std::log(0.5 * (y + s));
}

// Rank-one BBP correction L(theta, t): +inf below the bulk edge, positive
// inside the window 2 <= t < theta + 1/theta when theta > 1, zero otherwise.
inline double rank_one_correction(double theta, double t) {
    if (t < 2.0) return std::numeric_limits<double>::infinity();
    if (theta > 1.0) {
        const double w = theta + 1.0 / theta;
        if (t < w) {
            return 0.25 * (sqrt_int_antideriv(t) - sqrt_int_antideriv(w))
                   - 0.5 * theta * (t - w) + 0.125 * (t * t - w * w);
        }
    }
    return 0.0;
}

// (t, theta) of the conditioned Hessian: GOE shifted by t with a rank-one
// perturbation of strength theta.
inline std::pair<double, double> shift_params(double m, double eps2, double epsP,
                                              const ModelParams& params) {
    const double id2 = params.inv_delta2();
    const double idp = params.inv_deltaP();
    const int p = params.p;
    const double S = std::sqrt((p - 1) * idp + id2);
    const double t = -(p * epsP + 2.0 * eps2) / S;
    const double theta = ((p - 1) * std::pow(m, p - 2) * idp + id2) * (1.0 - m * m) / S;
    return {t, theta};
}

namespace detail {

// m-dependent pieces of the complexity shared by the inner maximization
struct SigmaParts {
    double A;      // log terms + gradient-conditioning term
    double theta;
    double S;      // sqrt((p-1)/dp + 1/d2)
    double K;      // p/dp + 2/d2
    double c0;     // m^p/dp + m^2/d2
    double id2, idp;
    int p;
};

inline SigmaParts sigma_parts(double m, const ModelParams& params) {
    SigmaParts sp;
    sp.p = params.p;
    sp.id2 = params.inv_delta2();
    sp.idp = params.inv_deltaP();
    const double om2 = 1.0 - m * m;
    const double S2 = (sp.p - 1) * sp.idp + sp.id2;
    const double D = sp.idp + sp.id2;
    const double grad_coef = std::pow(m, sp.p - 1) * sp.idp + m * sp.id2;
    sp.A = 0.5 * std::log(S2 / D) + 0.5 * std::log(om2)
           - 0.5 * grad_coef * grad_coef * om2 / D;
    sp.S = std::sqrt(S2);
    sp.K = sp.p * sp.idp + 2.0 * sp.id2;
    sp.c0 = std::pow(m, sp.p) * sp.idp + m * m * sp.id2;
    sp.theta = ((sp.p - 1) * std::pow(m, sp.p - 2) * sp.idp + sp.id2) * om2 / sp.S;
    return sp;
}

// complexity at fixed t after maximizing the energy quadratics along the
// constraint p*epsP + 2*eps2 = -t*S
inline double sigma_at_t(const SigmaParts& sp, double t) {
    const double c = -t * sp.S + sp.c0;
    return sp.A - 0.5 * c * c / sp.K + phi_shift(t)
           - rank_one_correction(sp.theta, t);
}

} // namespace detail

// Full annealed complexity at given (m, eps2, epsP); -inf when the rank-one
// correction is infinite or |m| = 1.
inline double sigma_tilde(double m, double eps2, double epsP, const ModelParams& params) {
    if (std::abs(m) >= 1.0) return kNegInf;
    const auto sp = detail::sigma_parts(m, params);
    const auto [t, theta] = shift_params(m, eps2, epsP, params);
    const double L = rank_one_correction(theta, t);
    if (std::isinf(L)) return kNegInf;
    const double alpha_p = epsP + std::pow(m, params.p) * params.inv_deltaP() / params.p;
    const double alpha_2 = eps2 + 0.5 * m * m * params.inv_delta2();
    // energy quadratics written with inverse variances so delta2 = inf is exact
    const double quad =
        -0.5 * params.p / params.inv_deltaP() * alpha_p * alpha_p
        - (params.inv_delta2() == 0.0 ? (alpha_2 == 0.0 ? 0.0
                                                        : std::numeric_limits<double>::infinity())
                                      : alpha_2 * alpha_2 / params.inv_delta2());
    if (std::isinf(quad)) return kNegInf;
    return sp.A + quad + phi_shift(t) - L;
}

struct ComplexityPoint {
    double m = 0.0;
    double eps2Star = 0.0;
    double epsPStar = 0.0;
    double sigma = kNegInf;
    double tStar = 0.0;
    double theta = 0.0;
};

// Sigma(m) = max over (eps2, epsP) of sigma_tilde. The quadratic in the
// energies is maximized in closed form at fixed t; the remaining concave 1D
// problem in t >= 2 is solved by golden section with an expanding upper end.
inline ComplexityPoint sigma_of_m(double m, const ModelParams& params) {
    ComplexityPoint pt;
    pt.m = m;
    if (std::abs(m) >= 1.0) return pt;
    const auto sp = detail::sigma_parts(m, params);
    pt.theta = sp.theta;

    auto g = [&](double t) { return detail::sigma_at_t(sp, t); };
    double thi = 52.0;
    std::pair<double, double> best{2.0, g(2.0)};
    for (int round = 0; round < 24; ++round) {
        auto r = golden_max(g, 2.0, thi, 1e-13 * thi);
        if (r.second > best.second) best = r;
        if (thi - r.first > 1e-5 * thi) break;
        thi *= 4.0;
    }
    pt.tStar = best.first;
    pt.sigma = best.second;
    const double c = -pt.tStar * sp.S + sp.c0;
    pt.eps2Star = c / sp.K * sp.id2 - 0.5 * m * m * sp.id2;
    pt.epsPStar = c / sp.K * sp.idp - std::pow(m, sp.p) * sp.idp / sp.p;
    return pt;
}

struct ComplexityCurve {
    ModelParams params;
    std::vector<double> mGrid;
    std::vector<ComplexityPoint> points;
};

inline std::vector<double> linspace(double a, double b, int n) {
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i) v[i] = a + (b - a) * i / (n - 1);
    return v;
}

inline std::vector<double> default_m_grid(int n = 2001) {
    return linspace(-1.0 + 1e-3, 1.0 - 1e-3, n);
}

inline ComplexityCurve complexity_curve(const ModelParams& params,
                                        const std::vector<double>& mGrid,
                                        unsigned nthreads = 1) {
    params.validate();
    ComplexityCurve curve;
    curve.params = params;
    curve.mGrid = mGrid;
    curve.points.resize(mGrid.size());
    if (nthreads <= 1) {
        for (std::size_t i = 0; i < mGrid.size(); ++i)
            curve.points[i] = sigma_of_m(mGrid[i], params);
    } else {
        std::vector<std::thread> pool;
        std::size_t chunk = (mGrid.size() + nthreads - 1) / nthreads;
        for (unsigned w = 0; w < nthreads; ++w) {
            const std::size_t lo = w * chunk;
            const std::size_t hi = std::min(mGrid.size(), lo + chunk);
            if (lo >= hi) break;
            pool.emplace_back([&, lo, hi] {
                for (std::size_t i = lo; i < hi; ++i)
                    curve.points[i] = sigma_of_m(mGrid[i], params);
            });
        }
        for (auto& th : pool) th.join();
    }
    return curve;
}

// ---- landscape morphology --------------------------------------------------

enum class LandscapeKind {
    BandOnly,           // wide non-negative band around m ~ 0, no isolated points
    BandPlusIsolated,   // band plus isolated signal-correlated points
    IsolatedOnly,       // trivialized: only the isolated points survive
};

struct LocalMax {
    double m = 0.0;
    double sigma = kNegInf;
    bool informative = false;
};

struct LandscapeMorphology {
    LandscapeKind kind = LandscapeKind::BandOnly;
    bool band_alive = false;
    double band_max_sigma = kNegInf;
    double band_max_m = 0.0;
    std::vector<LocalMax> maxima;
    std::optional<double> informative_pos;  // largest-m informative maximum
    std::optional<double> informative_neg;
    double sigma_at_zero = kNegInf;
    bool degenerate = false;  // band and informative maxima closer than the grid step
};

namespace detail {

// support components of Sigma >= -tol on the grid, as index ranges
inline std::vector<std::pair<int, int>> support_components(const std::vector<double>& s,
                                                           double tol) {
    std::vector<std::pair<int, int>> comps;
    int start = -1;
    for (int i = 0; i < static_cast<int>(s.size()); ++i) {
        if (s[i] >= -tol) {
            if (start < 0) start = i;
        } else if (start >= 0) {
            comps.emplace_back(start, i - 1);
            start = -1;
        }
    }
    if (start >= 0) comps.emplace_back(start, static_cast<int>(s.size()) - 1);
    return comps;
}

} // namespace detail

// Operational band/informative split. The band is any support component that
// carries strictly positive complexity or macroscopic width; the informative
// maxima are the outermost local maxima, refined to the true (touching-zero)
// points, lying outside every band component.
inline LandscapeMorphology analyze_landscape(const ModelParams& params, int gridN = 2001) {
    constexpr double kSupportTol = 1e-12;
    constexpr double kStrictPositive = 1e-9;
    constexpr double kBandWidth = 0.02;
    constexpr double kTouchTol = 1e-7;

    const auto grid = default_m_grid(gridN);
    std::vector<double> s(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) s[i] = sigma_of_m(grid[i], params).sigma;
    const double step = grid[1] - grid[0];

    LandscapeMorphology out;
    out.sigma_at_zero = sigma_of_m(0.0, params).sigma;

    const auto comps = detail::support_components(s, kSupportTol);
    std::vector<std::pair<double, double>> band_ranges;
    for (const auto& [lo, hi] : comps) {
        double mx = kNegInf;
        int arg = lo;
        for (int i = lo; i <= hi; ++i)
            if (s[i] > mx) { mx = s[i]; arg = i; }
        const double width = grid[hi] - grid[lo];
        if (mx >= kStrictPositive || width >= kBandWidth) {
            band_ranges.emplace_back(grid[lo], grid[hi]);
            if (mx > out.band_max_sigma) {
                out.band_max_sigma = mx;
                out.band_max_m = grid[arg];
            }
        }
    }
    out.band_alive = !band_ranges.empty();

    // interior local maxima on the grid
    std::vector<int> max_idx;
    for (int i = 1; i + 1 < static_cast<int>(s.size()); ++i)
        if (s[i] >= s[i - 1] && s[i] >= s[i + 1] && (s[i] > s[i - 1] || s[i] > s[i + 1]))
            max_idx.push_back(i);

    auto refine = [&](int i) {
        auto r = golden_max([&](double m) { return sigma_of_m(m, params).sigma; },
                            grid[i - 1], grid[i + 1], 1e-13);
        return r;
    };
    auto in_band = [&](double m) {
        for (const auto& [lo, hi] : band_ranges)
            if (m >= lo - step && m <= hi + step) return true;
        return false;
    };

    for (std::size_t k = 0; k < max_idx.size(); ++k) {
        const int i = max_idx[k];
        LocalMax lm;
        const bool outermost = (k == 0 || k + 1 == max_idx.size());
        if (outermost) {
            auto [mr, sr] = refine(i);
            lm.m = mr;
            lm.sigma = sr;
            lm.informative = (sr >= -kTouchTol) && !in_band(mr);
        } else {
            lm.m = grid[i];
            lm.sigma = s[i];
        }
        out.maxima.push_back(lm);
    }
    for (const auto& lm : out.maxima) {
        if (!lm.informative) continue;
        if (lm.m > 0 && (!out.informative_pos || lm.m > *out.informative_pos))
            out.informative_pos = lm.m;
        if (lm.m < 0 && (!out.informative_neg || lm.m < *out.informative_neg))
            out.informative_neg = lm.m;
    }

    // degenerate flag: informative maximum closer than one grid step to a band edge
    for (const auto& lm : out.maxima) {
        if (!lm.informative) continue;
        for (const auto& [lo, hi] : band_ranges)
            if (std::min(std::abs(lm.m - lo), std::abs(lm.m - hi)) < step) out.degenerate = true;
    }

    const bool isolated = out.informative_pos.has_value() || out.informative_neg.has_value();
    if (out.band_alive)
        out.kind = isolated ? LandscapeKind::BandPlusIsolated : LandscapeKind::BandOnly;
    else
        out.kind = LandscapeKind::IsolatedOnly;
    return out;
}

// Location of the largest-m local maximum of Sigma (the signal-correlated
// minima), refined by golden section.
inline std::optional<double> informative_maximum(const ModelParams& params, int gridN = 2001) {
    const auto morph = analyze_landscape(params, gridN);
    if (morph.informative_pos) return morph.informative_pos;
    // fall back to the largest-m local maximum even when inside the band
    if (!morph.maxima.empty()) return morph.maxima.back().m;
    return std::nullopt;
}

struct LandscapeThresholds {
    int p = 3;
    double deltaP = 0.0;
    double delta2Triv = 0.0;
    double delta2Disconnect = 0.0;
    bool degenerate_flagged = false;
};

struct ThresholdOptions {
    double scan_lo = 0.02;
    double scan_hi = 1.6;
    int scan_n = 48;
    double rel_tol = 1e-4;
    int gridN = 2001;
};

namespace detail {

// bisection of a boolean criterion flipping from true (small delta2) to
// false (large delta2); scan upward for the bracket
template <typename Crit>
double threshold_bisect(Crit&& crit, const ThresholdOptions& opt) {
    double prev_d2 = 0.0;
    bool prev_val = false;
    bool have_prev = false;
    double lo = 0.0, hi = 0.0;
    bool found = false;
    for (int i = 0; i < opt.scan_n; ++i) {
        const double d2 = opt.scan_lo * std::pow(opt.scan_hi / opt.scan_lo,
                                                 static_cast<double>(i) / (opt.scan_n - 1));
        const bool v = crit(d2);
        if (have_prev && prev_val && !v) {
            lo = prev_d2;
            hi = d2;
            found = true;
            break;
        }
        prev_d2 = d2;
        prev_val = v;
        have_prev = true;
    }
    if (!found)
        throw std::runtime_error("threshold scan found no sign change in the delta2 range");
    while ((hi - lo) > opt.rel_tol * hi) {
        const double mid = std::sqrt(lo * hi);
        if (crit(mid)) lo = mid;
        else hi = mid;
    }
    return std::sqrt(lo * hi);
}

} // namespace detail

// Largest delta2 at which the non-informative band has disappeared
// (all remaining local minima are the isolated signal-correlated ones).
inline double trivialization_threshold(double deltaP, int p,
                                       const ThresholdOptions& opt = {}) {
    auto crit = [&](double d2) {
        const auto morph = analyze_landscape(make_params(p, d2, deltaP), opt.gridN);
        return !morph.band_alive; // trivialized
    };
    return detail::threshold_bisect(crit, opt);
}

// Largest delta2 at which the support of Sigma >= 0 is disconnected
// (isolated informative points in addition to the band).
inline double disconnection_threshold(double deltaP, int p,
                                      const ThresholdOptions& opt = {}) {
    auto crit = [&](double d2) {
        const auto morph = analyze_landscape(make_params(p, d2, deltaP), opt.gridN);
        return morph.informative_pos.has_value() || morph.informative_neg.has_value();
    };
    return detail::threshold_bisect(crit, opt);
}

inline LandscapeThresholds landscape_thresholds(double deltaP, int p,
                                                const ThresholdOptions& opt = {}) {
    LandscapeThresholds th;
    th.p = p;
    th.deltaP = deltaP;
    th.delta2Triv = trivialization_threshold(deltaP, p, opt);
    th.delta2Disconnect = disconnection_threshold(deltaP, p, opt);
    const auto morph = analyze_landscape(make_params(p, th.delta2Triv * 1.001, deltaP), opt.gridN);
    th.degenerate_flagged = morph.degenerate;
    return th;
}

} // namespace smt::kacrice
