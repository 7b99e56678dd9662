#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "smt/model.hpp"
#include "smt/optimize.hpp"
#include "smt/params.hpp"

namespace smt::mlamp {

// ---- scalar state evolution -------------------------------------------------

inline double se_field(double m, const ModelParams& params) {
    return m / params.delta2 + std::pow(m, params.p - 1) / params.deltaP;
}

inline double se_gamma(const ModelParams& params) {
    return 1.0 / params.delta2 + 1.0 / params.deltaP;
}

// m^{t+1} = z / sqrt(z^2 + gamma), z = m/delta2 + m^{p-1}/deltaP
inline double se_step(double m, const ModelParams& params) {
    const double z = se_field(m, params);
    const double g = se_gamma(params);
    return z / std::sqrt(z * z + g);
}

inline double se_mse(double m) { return 2.0 * (1.0 - m); }

// d f_SE(z(m)) / dm
inline double se_map_derivative(double m, const ModelParams& params) {
    const double z = se_field(m, params);
    const double g = se_gamma(params);
    const double fp = g / std::pow(z * z + g, 1.5);
    const double zp = 1.0 / params.delta2 + (params.p - 1) * std::pow(m, params.p - 2) / params.deltaP;
    return fp * zp;
}

struct SETrajectory {
    std::vector<double> mSeq;
    std::vector<double> qSeq;    // empty at T = 0 (q = 1 identically)
    double temperature = 0.0;
    double fixedPoint = 0.0;
    bool converged = false;
    int iterations = 0;
};

inline SETrajectory se_run(const ModelParams& params, double m0, int maxIter = 100000,
                           double tol = 1e-12) {
    SETrajectory tr;
    double m = m0;
    tr.mSeq.push_back(m);
    for (int it = 0; it < maxIter; ++it) {
        const double mn = se_step(m, params);
        tr.mSeq.push_back(mn);
        ++tr.iterations;
        if (std::abs(mn - m) < tol) {
            tr.converged = true;
            m = mn;
            break;
        }
        m = mn;
    }
    tr.fixedPoint = m;
    return tr;
}

struct SEFixedPoint {
    double m = 0.0;
    bool stable = false;
    double derivative = 0.0;
};

// All fixed points of the SE map on (-1, 1), found on a grid with bisection
// refinement; stability from |d f_SE(z(m))/dm| at the root.
inline std::vector<SEFixedPoint> se_fixed_points(const ModelParams& params, int gridN = 10000) {
    auto g = [&](double m) { return se_step(m, params) - m; };
    std::vector<double> roots{0.0};
    const double lo = -1.0 + 1e-9, hi = 1.0 - 1e-9;
    double prev = lo, gprev = g(lo);
    for (int i = 1; i <= gridN; ++i) {
        const double m = lo + (hi - lo) * i / gridN;
        const double gm = g(m);
        if ((gprev > 0) != (gm > 0)) {
            const double r = bisect_root(g, prev, m);
            if (std::abs(r) > 1e-9) roots.push_back(r);
        }
        prev = m;
        gprev = gm;
    }
    std::vector<SEFixedPoint> out;
    for (double r : roots) {
        SEFixedPoint fp;
        fp.m = r;
        fp.derivative = se_map_derivative(r, params);
        fp.stable = std::abs(fp.derivative) < 1.0;
        out.push_back(fp);
    }
    return out;
}

// ---- finite-temperature state evolution (two order parameters) --------------

inline std::pair<double, double> finite_t_se_step(double m, double q, double T,
                                                  const ModelParams& params) {
    if (!(T > 0.0)) throw std::invalid_argument("finite_t_se_step: T must be > 0");
    const double z = (m / params.delta2 + std::pow(m, params.p - 1) / params.deltaP) / T;
    const double y = z * z + (q / params.delta2 + std::pow(q, params.p - 1) / params.deltaP) / (T * T);
    const double u = 1.0 + std::sqrt(1.0 + 4.0 * y);
    return {2.0 * z / u, 4.0 * y / (u * u)};
}

inline double finite_t_mse(double m, double q) { return 1.0 - 2.0 * m + q; }

inline SETrajectory finite_t_se_run(const ModelParams& params, double m0, double q0, double T,
                                    int maxIter = 100000, double tol = 1e-12) {
    SETrajectory tr;
    tr.temperature = T;
    double m = m0, q = q0;
    tr.mSeq.push_back(m);
    tr.qSeq.push_back(q);
    for (int it = 0; it < maxIter; ++it) {
        auto [mn, qn] = finite_t_se_step(m, q, T, params);
        tr.mSeq.push_back(mn);
        tr.qSeq.push_back(qn);
        ++tr.iterations;
        if (std::abs(mn - m) < tol && std::abs(qn - q) < tol) {
            tr.converged = true;
            m = mn; q = qn;
            break;
        }
        m = mn; q = qn;
    }
    tr.fixedPoint = m;
    return tr;
}

// ---- spinodals ---------------------------------------------------------------

// Stability boundary of the m = 0 fixed point; independent of p.
inline double algorithmic_spinodal(double deltaP) {
    return 0.5 * (-deltaP + std::sqrt(deltaP * deltaP + 4.0 * deltaP));
}

namespace detail {

// The informative fixed-point branch solved for x = 1/delta2 at given m:
// squaring sqrt((x + idp)/(1-m^2)) = x + m^{p-2} idp gives a quadratic whose
// physical root is
//   x(m) = ( a - 2 b + sqrt(a^2 + 4 a idp (1 - m^{p-2})) ) / 2,
// a = 1/(1-m^2), b = m^{p-2} idp. At m -> 0 this is the m=0 stability line.
struct FixedPointCurve {
    int p;
    double idp;

    double a(double m) const { return 1.0 / (1.0 - m * m); }

    double x(double m) const {
        const double A = a(m);
        const double mp2 = std::pow(m, p - 2);
        const double D = A * A + 4.0 * A * idp * (1.0 - mp2);
        return 0.5 * (A - 2.0 * mp2 * idp + std::sqrt(D));
    }

    double dx(double m) const {
        const double A = a(m);
        const double Ap = 2.0 * m * A * A;
        const double mp2 = std::pow(m, p - 2);
        const double mp3 = std::pow(m, p - 3);
        const double bp = (p - 2) * mp3 * idp;
        const double D = A * A + 4.0 * A * idp * (1.0 - mp2);
        const double Dp = 2.0 * A * Ap + 4.0 * idp * (Ap * (1.0 - mp2) - A * (p - 2) * mp3);
        return 0.5 * (Ap - 2.0 * bp + Dp / (2.0 * std::sqrt(D)));
    }
};

} // namespace detail

struct SpinodalPoint {
    bool exists = false;
    double delta2 = std::numeric_limits<double>::quiet_NaN();
    double mFold = std::numeric_limits<double>::quiet_NaN();
    double zFold = std::numeric_limits<double>::quiet_NaN();
    double residual = std::numeric_limits<double>::quiet_NaN();
};

// Dynamical spinodal: the fold of the informative fixed-point branch where
// 1/delta2 has its interior local minimum. Returns a no-spinodal result when
// the branch is monotone (beyond the tricritical point).
inline SpinodalPoint dynamical_spinodal(double deltaP, int p) {
    if (!(deltaP > 0.0)) throw std::invalid_argument("dynamical_spinodal: deltaP must be > 0");
    if (p < 3) throw std::invalid_argument("dynamical_spinodal: p must be >= 3");
    detail::FixedPointCurve curve{p, 1.0 / deltaP};

    // grid: geometric near zero plus linear up to 1
    std::vector<double> ms;
    for (int i = 0; i < 280; ++i) ms.push_back(1e-9 * std::pow(0.5 / 1e-9, i / 279.0));
    for (int i = 1; i <= 400; ++i) ms.push_back(0.5 + 0.5 * (1.0 - 2e-7) * i / 400.0);

    SpinodalPoint out;
    // locate the last sign change of dx from negative to positive
    double bracket_lo = 0.0, bracket_hi = 0.0;
    bool found = false;
    double prev_m = ms[0], prev_d = curve.dx(ms[0]);
    for (std::size_t i = 1; i < ms.size(); ++i) {
        const double d = curve.dx(ms[i]);
        if (prev_d < 0.0 && d >= 0.0) {
            bracket_lo = prev_m;
            bracket_hi = ms[i];
            found = true;
        }
        prev_m = ms[i];
        prev_d = d;
    }
    if (!found && p >= 5) {
        // near-tangent fold: refine around the grid minimum of dx
        std::size_t arg = 0;
        double dmin = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < ms.size(); ++i) {
            const double d = curve.dx(ms[i]);
            if (d < dmin) { dmin = d; arg = i; }
        }
        if (arg > 0 && arg + 1 < ms.size()) {
            auto r = golden_max([&](double m) { return -curve.dx(m); },
                                ms[arg - 1], ms[arg + 1], 1e-15);
            if (-r.second < 0.0) {
                bracket_lo = r.first;
                bracket_hi = ms[arg + 1];
                if (curve.dx(bracket_hi) < 0.0) return out; // should not happen
                found = true;
            }
        }
    }
    if (!found) return out;

    const double mf = bisect_root([&](double m) { return curve.dx(m); },
                                  bracket_lo, bracket_hi, 1e-15);
    out.exists = true;
    out.mFold = mf;
    const double x = curve.x(mf);
    out.delta2 = 1.0 / x;
    const double gamma = x + 1.0 / deltaP;
    out.zFold = mf * std::sqrt(gamma / (1.0 - mf * mf));
    // residual of the implicit spinodal condition (p-2) gamma f^{p-1} = z^3 deltaP
    const double f = out.zFold / std::sqrt(out.zFold * out.zFold + gamma);
    const double lhs = (p - 2) * gamma * std::pow(f, p - 1);
    const double rhs = out.zFold * out.zFold * out.zFold * deltaP;
    out.residual = std::abs(lhs - rhs) / std::max({std::abs(lhs), std::abs(rhs), 1e-300});
    return out;
}

struct TricriticalPoint {
    bool exists = false;
    double delta2 = std::numeric_limits<double>::quiet_NaN();
    double deltaP = std::numeric_limits<double>::quiet_NaN();
};

// Endpoint of the dynamical spinodal: for p = 4 the fold closes at m -> 0 on
// the m = 0 stability line (analytic); for p > 4 the two folds of the branch
// merge at interior m. No finite tricritical point exists for p = 3.
inline TricriticalPoint tricritical_point(int p) {
    TricriticalPoint out;
    if (p < 4) return out;
    if (p == 4) {
        out.exists = true;
        out.delta2 = 2.0 / 3.0;
        out.deltaP = 4.0 / 3.0;
        return out;
    }
    double lo = 0.01, hi = 3.0;
    if (!dynamical_spinodal(lo, p).exists || dynamical_spinodal(hi, p).exists)
        throw std::runtime_error("tricritical_point: bracket assumption failed");
    SpinodalPoint last = dynamical_spinodal(lo, p);
    while ((hi - lo) > 1e-5 * hi) {
        const double mid = std::sqrt(lo * hi);
        const auto sp = dynamical_spinodal(mid, p);
        if (sp.exists) { lo = mid; last = sp; }
        else hi = mid;
    }
    out.exists = true;
    out.deltaP = lo;
    out.delta2 = last.delta2;
    return out;
}

struct HybridProbe {
    bool hybrid = false;
    double mLow = 0.0;   // fixed point reached from uninformed init
    double mHigh = 0.0;  // fixed point reached from the solution
};

// Compare SE started uninformed against SE started at the solution; hybrid
// when both reach positive but distinct fixed points.
inline HybridProbe hybrid_probe(const ModelParams& params, double m0Low = 1e-8,
                                double gap = 1e-3) {
    HybridProbe pr;
    pr.mLow = se_run(params, m0Low).fixedPoint;
    pr.mHigh = se_run(params, 1.0).fixedPoint;
    pr.hybrid = pr.mLow > gap && pr.mHigh > gap && (pr.mHigh - pr.mLow) > gap;
    return pr;
}

inline std::vector<std::vector<HybridProbe>> hybrid_phase_region(
    int p, const std::vector<double>& deltaPGrid, const std::vector<double>& delta2Grid,
    double m0Low = 1e-8) {
    std::vector<std::vector<HybridProbe>> flags(deltaPGrid.size());
    for (std::size_t i = 0; i < deltaPGrid.size(); ++i) {
        flags[i].resize(delta2Grid.size());
        for (std::size_t j = 0; j < delta2Grid.size(); ++j)
            flags[i][j] = hybrid_probe(make_params(p, delta2Grid[j], deltaPGrid[i]), m0Low);
    }
    return flags;
}

struct SpinodalCurves {
    int p = 3;
    std::vector<double> deltaPs;
    std::vector<double> delta2Alg;
    std::vector<SpinodalPoint> delta2Dyn;
    std::vector<bool> hybridFlag;
    TricriticalPoint tricritical;
};

inline SpinodalCurves spinodal_curves(int p, const std::vector<double>& deltaPs) {
    SpinodalCurves sc;
    sc.p = p;
    sc.deltaPs = deltaPs;
    sc.tricritical = tricritical_point(p);
    for (double dp : deltaPs) {
        sc.delta2Alg.push_back(algorithmic_spinodal(dp));
        const auto dyn = dynamical_spinodal(dp, p);
        sc.delta2Dyn.push_back(dyn);
        bool hyb = false;
        if (p > 4 && dyn.exists) {
            // probe the window between the fold and the stability line
            const double d2probe = 0.5 * (dyn.delta2 + algorithmic_spinodal(dp));
            hyb = hybrid_probe(make_params(p, d2probe, dp)).hybrid;
        }
        sc.hybridFlag.push_back(hyb);
    }
    return sc;
}

// ---- finite-N ML-AMP ---------------------------------------------------------

struct AMPState {
    std::vector<double> xhat;
    std::vector<double> xhatPrev;
    std::vector<double> B;
    double sigmaHat = 1.0;
    int iter = 0;
};

inline AMPState amp_init(const model::SpikedInstance& inst, const std::vector<double>& x0) {
    model::check_dims(inst, x0);
    AMPState st;
    st.xhat = x0;
    // renormalize defensively to the sphere
    const double s = std::sqrt(static_cast<double>(inst.n) / model::norm2(x0));
    for (auto& v : st.xhat) v *= s;
    return st;
}

namespace detail {

inline double onsager(const AMPState& st, const ModelParams& params, int n, double T = 0.0) {
    if (st.iter == 0) return 0.0;
    double corr = 0.0;
    for (int i = 0; i < n; ++i) corr += st.xhat[i] * st.xhatPrev[i];
    corr /= n;
    const double t2 = (T > 0.0) ? T * T : 1.0;
    return st.sigmaHat / (params.delta2 * t2)
           + (params.p - 1) * st.sigmaHat * std::pow(corr, params.p - 2) / (params.deltaP * t2);
}

inline std::vector<double> amp_field(const AMPState& st, const model::SpikedInstance& inst,
                                     const ModelParams& params, double T) {
    const int n = inst.n;
    const double kappa = model::tensor_prefactor(n, params.p);
    const double tfac = (T > 0.0) ? T : 1.0;
    const double cp = kappa / (params.deltaP * tfac);
    const double c2 = 1.0 / (std::sqrt(static_cast<double>(n)) * params.delta2 * tfac);
    std::vector<double> B = model::tensor_field(inst, st.xhat);
    const std::vector<double> Y = model::matrix_field(inst, st.xhat);
    const double r = onsager(st, params, n, T);
    for (int i = 0; i < n; ++i) {
        B[i] = cp * B[i] + c2 * Y[i];
        if (st.iter > 0) B[i] -= r * st.xhatPrev[i];
    }
    return B;
}

} // namespace detail

// One ML-AMP sweep: field with Onsager correction, then projection to the
// sphere. sigmaHat is the scalar variance parameter 1/(||B||/sqrt(N)).
inline AMPState amp_step(AMPState st, const model::SpikedInstance& inst,
                         const ModelParams& params) {
    const int n = inst.n;
    st.B = detail::amp_field(st, inst, params, 0.0);
    const double nb = std::sqrt(model::norm2(st.B) / n);
    if (nb == 0.0) throw std::runtime_error("amp_step: degenerate zero field");
    st.xhatPrev = st.xhat;
    for (int i = 0; i < n; ++i) st.xhat[i] = st.B[i] / nb;
    st.sigmaHat = 1.0 / nb;
    ++st.iter;
    return st;
}

// Finite-temperature AMP sweep of the relaxed (non-spherical) iteration.
inline AMPState finite_t_amp_step(AMPState st, const model::SpikedInstance& inst,
                                  const ModelParams& params, double T) {
    if (!(T > 0.0)) throw std::invalid_argument("finite_t_amp_step: T must be > 0");
    const int n = inst.n;
    st.B = detail::amp_field(st, inst, params, T);
    const double nb2 = model::norm2(st.B) / n;
    const double u = 1.0 + std::sqrt(1.0 + 4.0 * nb2);
    st.xhatPrev = st.xhat;
    for (int i = 0; i < n; ++i) st.xhat[i] = 2.0 * st.B[i] / u;
    st.sigmaHat = 2.0 / u;
    ++st.iter;
    return st;
}

struct AMPRun {
    AMPState state;
    std::vector<double> overlaps;   // m^t against the planted signal
    std::vector<double> increments; // ||xhat^{t+1} - xhat^t|| / sqrt(N)
    bool converged = false;
    int iterations = 0;
};

inline AMPRun amp_run(const model::SpikedInstance& inst, const ModelParams& params,
                      const std::vector<double>& x0, int maxIter = 200, double tol = 1e-8,
                      double damping = 0.0) {
    AMPRun run;
    run.state = amp_init(inst, x0);
    const int n = inst.n;
    run.overlaps.push_back(model::overlap(run.state.xhat, inst.signal));
    for (int it = 0; it < maxIter; ++it) {
        std::vector<double> xold = run.state.xhat;
        run.state = amp_step(std::move(run.state), inst, params);
        if (damping > 0.0) {
            double nrm2 = 0.0;
            for (int i = 0; i < n; ++i) {
                run.state.xhat[i] = (1.0 - damping) * run.state.xhat[i] + damping * xold[i];
                nrm2 += run.state.xhat[i] * run.state.xhat[i];
            }
            const double s = std::sqrt(n / nrm2);
            for (auto& v : run.state.xhat) v *= s;
        }
        double d2 = 0.0;
        for (int i = 0; i < n; ++i) {
            const double d = run.state.xhat[i] - xold[i];
            d2 += d * d;
        }
        run.increments.push_back(std::sqrt(d2 / n));
        run.overlaps.push_back(model::overlap(run.state.xhat, inst.signal));
        ++run.iterations;
        if (run.increments.back() < tol) {
            run.converged = true;
            break;
        }
    }
    return run;
}

// || P_perp( -grad L(xhat) ) || / sqrt(N) with the radial direction projected
// out; vanishes at spherical stationary points.
inline double stationarity_residual(const std::vector<double>& x,
                                    const model::SpikedInstance& inst,
                                    const ModelParams& params) {
    const auto g = model::gradient(inst, x, params);
    const int n = inst.n;
    double xg = 0.0;
    for (int i = 0; i < n; ++i) xg += x[i] * g[i];
    const double lam = xg / n;
    double r2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = g[i] - lam * x[i];
        r2 += v * v;
    }
    return std::sqrt(r2 / n);
}

} // namespace smt::mlamp
