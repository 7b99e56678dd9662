#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "smt/optimize.hpp"
#include "smt/params.hpp"

namespace smt::gfse {

inline double ipow(double f, int k) {
    double r = 1.0;
    for (int i = 0; i < k; ++i) r *= f;
    return r;
}

// Q(f) = f^p/(p deltaP) + f^2/(2 delta2) and its first two derivatives.
struct QKernel {
    int p;
    double idp; // 1/deltaP
    double id2; // 1/delta2

    explicit QKernel(const ModelParams& params)
        : p(params.p), idp(params.inv_deltaP()), id2(params.inv_delta2()) {}

    double q(double f) const { return ipow(f, p) * idp / p + 0.5 * f * f * id2; }
    double dq(double f) const { return ipow(f, p - 1) * idp + f * id2; }
    double d2q(double f) const { return (p - 1) * ipow(f, p - 2) * idp + id2; }
};

struct GFOptions {
    double h0 = 0.01;       // initial step
    int gridSize = 2048;    // two-time grid size before decimation (even)
    double tMax = 1000.0;
    double hMax = 0.64;     // stop decimating beyond this step
    bool spikeCoupling = true; // test hook: false removes every m-coupling term
    double plateauRelTol = 1e-4;
    double zeroPlateauTol = 1e-7;
};

// Two-time state on the triangular grid. C and R are kept as full squares
// (C mirrored, R also stored transposed) so every memory integral runs over
// contiguous data.
struct GFState {
    int M = 0;
    double h = 0.0;
    int filled = 0;   // rows 0..filled are valid
    int decimations = 0;
    std::vector<double> C;   // C[i*M+j], symmetric
    std::vector<double> Rr;  // R[i*M+j], zero for j > i
    std::vector<double> Rc;  // Rc[j*M+i] = R[i][j]
    std::vector<double> m;
    std::vector<double> mu;

    double c(int i, int j) const { return C[static_cast<std::size_t>(i) * M + j]; }
    double r(int i, int j) const { return Rr[static_cast<std::size_t>(i) * M + j]; }
};

struct GFRunResult {
    ModelParams params;
    double m0 = 0.0;
    std::vector<double> times;  // native-resolution trajectory (pre-decimation)
    std::vector<double> mTraj;
    std::vector<double> muTraj;
    double plateau = 0.0;
    double tC = std::numeric_limits<double>::quiet_NaN();
    bool converged = false;
    bool diverged = false;
    double divergenceTime = 0.0;
    int decimations = 0;
    double hFinal = 0.0;
    double diagDrift = 0.0; // accumulated |d C(t,t)/dt| consistency defect
};

struct GFOutput {
    GFRunResult result;
    GFState state;
};

namespace detail {

inline double trapz(const double* f, int lo, int hi, double h) {
    if (hi <= lo) return 0.0;
    double s = 0.5 * (f[lo] + f[hi]);
    for (int i = lo + 1; i < hi; ++i) s += f[i];
    return s * h;
}

inline double trapz_prod(const double* a, const double* b, int lo, int hi, double h) {
    if (hi <= lo) return 0.0;
    double s = 0.5 * (a[lo] * b[lo] + a[hi] * b[hi]);
    for (int i = lo + 1; i < hi; ++i) s += a[i] * b[i];
    return s * h;
}

} // namespace detail

// Integrates the zero-temperature two-time equations
//   dC(t,t')/dt = -mu C + Q'(m(t)) m(t') + int_0^t R(t,s) Q''(C(t,s)) C(t',s)
//                 + int_0^t' R(t',s) Q'(C(t,s))
//   dR(t,t')/dt = -mu R + int_t'^t R(t,s) Q''(C(t,s)) R(s,t')
//   dm/dt       = -mu m + Q'(m) + int_0^t R(t,s) m(s) Q''(C(t,s))
// with mu(t) closed from C(t,t) = 1, by an Euler predictor / trapezoid
// corrector on a uniform grid; the grid is decimated (h doubled) when full.
inline GFOutput integrate(const ModelParams& params, double m0, const GFOptions& opts = {}) {
    params.validate();
    if (m0 < 0.0 || m0 >= 1.0) throw std::invalid_argument("integrate: need 0 <= m0 < 1");
    if (opts.gridSize < 8 || opts.gridSize % 2 != 0)
        throw std::invalid_argument("integrate: gridSize must be even and >= 8");

    const QKernel Q(params);
    const int M = opts.gridSize;
    const double spike = opts.spikeCoupling ? 1.0 : 0.0;

    GFOutput out;
    GFState& st = out.state;
    st.M = M;
    st.h = opts.h0;
    st.C.assign(static_cast<std::size_t>(M) * M, 0.0);
    st.Rr.assign(static_cast<std::size_t>(M) * M, 0.0);
    st.Rc.assign(static_cast<std::size_t>(M) * M, 0.0);
    st.m.assign(M, 0.0);
    st.mu.assign(M, 0.0);

    GFRunResult& res = out.result;
    res.params = params;
    res.m0 = m0;

    st.C[0] = 1.0;
    st.m[0] = m0;
    st.mu[0] = spike * Q.dq(m0) * m0;
    res.times.push_back(0.0);
    res.mTraj.push_back(m0);
    res.muTraj.push_back(st.mu[0]);

    std::vector<double> w1(M), w2(M), rhsC(M), rhsR(M), Cp(M + 1), Rp(M + 1),
        w1p(M + 1), w2p(M + 1);

    auto mu_of_row = [&](const double* crow, const double* rrow, double mval, int t,
                         double h) {
        // identical summation structure as the C-equation pieces so that the
        // equal-time derivative cancels to rounding
        double i1 = 0.0, i2 = 0.0;
        if (t > 0) {
            double s1 = 0.5 * (rrow[0] * Q.d2q(crow[0]) * crow[0]
                               + rrow[t] * Q.d2q(crow[t]) * crow[t]);
            double s2 = 0.5 * (Q.dq(crow[0]) * rrow[0] + Q.dq(crow[t]) * rrow[t]);
            for (int s = 1; s < t; ++s) {
                s1 += rrow[s] * Q.d2q(crow[s]) * crow[s];
                s2 += Q.dq(crow[s]) * rrow[s];
            }
            i1 = s1 * h;
            i2 = s2 * h;
        }
        return spike * Q.dq(mval) * mval + i1 + i2;
    };

    int cur = 0;
    const double tEps = 1e-12;
    while (cur * st.h < opts.tMax - tEps) {
        if (cur == M - 1) {
            if (2.0 * st.h > opts.hMax * (1.0 + 1e-9)) break; // grid exhausted
            const int Mh = M / 2;
            for (int i = 0; i < Mh; ++i)
                for (int j = 0; j < Mh; ++j) {
                    st.C[static_cast<std::size_t>(i) * M + j] =
                        st.C[static_cast<std::size_t>(2 * i) * M + 2 * j];
                    st.Rr[static_cast<std::size_t>(i) * M + j] =
                        st.Rr[static_cast<std::size_t>(2 * i) * M + 2 * j];
                    st.Rc[static_cast<std::size_t>(i) * M + j] =
                        st.Rc[static_cast<std::size_t>(2 * i) * M + 2 * j];
                }
            for (int i = 0; i < Mh; ++i) {
                st.m[i] = st.m[2 * i];
                st.mu[i] = st.mu[2 * i];
            }
            st.h *= 2.0;
            ++st.decimations;
            cur = Mh - 1;
            continue;
        }

        const int t = cur;
        const double h = st.h;
        const double* crow = &st.C[static_cast<std::size_t>(t) * M];
        const double* rrow = &st.Rr[static_cast<std::size_t>(t) * M];
        const double dqm = Q.dq(st.m[t]);
        const double mut = st.mu[t];

        for (int s = 0; s <= t; ++s) {
            w1[s] = rrow[s] * Q.d2q(crow[s]);
            w2[s] = Q.dq(crow[s]);
        }

        // stage 1: derivatives at row t
        for (int l = 0; l <= t; ++l) {
            const double* cl = &st.C[static_cast<std::size_t>(l) * M];
            const double* rl = &st.Rr[static_cast<std::size_t>(l) * M];
            const double* rcl = &st.Rc[static_cast<std::size_t>(l) * M];
            const double i1 = detail::trapz_prod(w1.data(), cl, 0, t, h);
            const double i2 = detail::trapz_prod(w2.data(), rl, 0, l, h);
            rhsC[l] = -mut * crow[l] + spike * st.m[l] * dqm + i1 + i2;
            rhsR[l] = -mut * rrow[l] + detail::trapz_prod(w1.data(), rcl, l, t, h);
        }
        double rhsM = -mut * st.m[t] + Q.dq(st.m[t]);
        {
            double s = 0.0;
            if (t > 0) {
                s = 0.5 * (w1[0] * st.m[0] + w1[t] * st.m[t]);
                for (int i = 1; i < t; ++i) s += w1[i] * st.m[i];
                s *= h;
            }
            rhsM += s;
        }
        rhsM *= spike; // m = 0 stays an exact fixed point when decoupled
        if (!opts.spikeCoupling) rhsM = 0.0;
        res.diagDrift += 2.0 * h * std::abs(rhsC[t]);

        // predictor row t+1
        for (int l = 0; l <= t; ++l) {
            Cp[l] = crow[l] + h * rhsC[l];
            Rp[l] = rrow[l] + h * rhsR[l];
        }
        Rp[t] = 1.0;      // first subdiagonal boundary value
        Cp[t + 1] = 1.0;
        Rp[t + 1] = 0.0;  // equal-time response convention
        double mp = st.m[t] + h * rhsM;
        const double mup = mu_of_row(Cp.data(), Rp.data(), mp, t + 1, h);

        // stage 2: derivatives at predicted row t+1
        for (int s = 0; s <= t + 1; ++s) {
            w1p[s] = Rp[s] * Q.d2q(Cp[s]);
            w2p[s] = Q.dq(Cp[s]);
        }
        const double dqmp = Q.dq(mp);
        double* crowN = &st.C[static_cast<std::size_t>(t + 1) * M];
        double* rrowN = &st.Rr[static_cast<std::size_t>(t + 1) * M];
        for (int l = 0; l <= t; ++l) {
            const double* cl = &st.C[static_cast<std::size_t>(l) * M];
            const double* rl = &st.Rr[static_cast<std::size_t>(l) * M];
            const double* rcl = &st.Rc[static_cast<std::size_t>(l) * M];
            // w1p[t+1] = 0, so the s = t+1 endpoint never reads row t+1 data
            const double i1 = detail::trapz_prod(w1p.data(), cl, 0, t, h)
                              + 0.5 * h * w1p[t] * cl[t]; // upgrade s=t to interior weight
            const double i2 = detail::trapz_prod(w2p.data(), rl, 0, l, h);
            const double dC2 = -mup * Cp[l] + spike * st.m[l] * dqmp + i1 + i2;
            double i3 = detail::trapz_prod(w1p.data(), rcl, l, t, h)
                        + 0.5 * h * w1p[t] * rcl[t];
            const double dR2 = -mup * Rp[l] + i3;
            crowN[l] = crow[l] + 0.5 * h * (rhsC[l] + dC2);
            rrowN[l] = rrow[l] + 0.5 * h * (rhsR[l] + dR2);
        }
        double rhsM2 = -mup * mp + Q.dq(mp);
        {
            double s = 0.0;
            if (t + 1 > 0) {
                s = 0.5 * w1p[0] * st.m[0];
                for (int i = 1; i <= t; ++i) s += w1p[i] * st.m[i];
                s *= h; // s = t+1 endpoint weight is 0 through w1p[t+1] = 0
            }
            rhsM2 += s;
        }
        if (!opts.spikeCoupling) rhsM2 = 0.0;
        st.m[t + 1] = st.m[t] + 0.5 * h * (rhsM + rhsM2);

        rrowN[t] = 1.0;
        rrowN[t + 1] = 0.0;
        crowN[t + 1] = 1.0;
        // mirrors
        for (int l = 0; l <= t + 1; ++l) {
            st.C[static_cast<std::size_t>(l) * M + (t + 1)] = crowN[l];
            st.Rc[static_cast<std::size_t>(l) * M + (t + 1)] = rrowN[l];
        }
        st.mu[t + 1] = mu_of_row(crowN, rrowN, st.m[t + 1], t + 1, h);

        ++cur;
        const double tNow = cur * st.h;
        res.times.push_back(tNow);
        res.mTraj.push_back(st.m[cur]);
        res.muTraj.push_back(st.mu[cur]);

        if (!std::isfinite(st.m[cur]) || !std::isfinite(st.mu[cur]) ||
            std::abs(crowN[0]) > 50.0) {
            res.diverged = true;
            res.divergenceTime = tNow;
            break;
        }
    }

    st.filled = cur;
    res.decimations = st.decimations;
    res.hFinal = st.h;

    // plateau detection: relative change of m over the last decade of time
    if (!res.diverged && !res.times.empty()) {
        const double tEnd = res.times.back();
        const double mEnd = res.mTraj.back();
        res.plateau = std::max(0.0, mEnd);
        if (std::abs(mEnd) < opts.zeroPlateauTol) {
            res.converged = true; // settled on the uninformative fixed point
            res.plateau = std::max(0.0, mEnd);
        } else {
            const double tRef = tEnd / 10.0;
            double mRef = res.mTraj.front();
            for (std::size_t i = 0; i < res.times.size(); ++i)
                if (res.times[i] >= tRef) { mRef = res.mTraj[i]; break; }
            res.converged = std::abs(mEnd - mRef) < opts.plateauRelTol * std::abs(mEnd);
        }
    }
    return out;
}

// First time m(t) reaches half of the final plateau, linearly interpolated.
inline double convergence_time(const GFRunResult& res) {
    if (!res.converged || !(res.plateau > 0.0))
        throw std::runtime_error("convergence_time: run did not converge to a positive plateau");
    const double target = 0.5 * res.plateau;
    for (std::size_t i = 0; i < res.times.size(); ++i) {
        if (res.mTraj[i] >= target) {
            if (i == 0) return res.times[0];
            const double t0 = res.times[i - 1], t1 = res.times[i];
            const double m0 = res.mTraj[i - 1], m1 = res.mTraj[i];
            if (m1 == m0) return t1;
            return t0 + (target - m0) / (m1 - m0) * (t1 - t0);
        }
    }
    throw std::runtime_error("convergence_time: trajectory never reached half plateau");
}

// ---- power-law fit of the convergence-time divergence ------------------------

struct PowerLawFit {
    double deltaP = 0.0;
    int p = 0;
    std::vector<std::pair<double, double>> samples; // (delta2, tC)
    double nu = 0.0;
    double delta2GF = 0.0;    // fitted critical point
    double amplitude = 0.0;
    double residual = 0.0;    // rms of log tC residuals
    double windowLo = 0.0;    // 1/delta2 range used
    double windowHi = 0.0;
    bool extrapolated = true; // critical point outside the sampled range
};

// Least squares of log tC = log A - nu log(1/delta2 - 1/delta2GF), linear in
// (log A, nu) at fixed critical point; the critical point is scanned
// geometrically and refined by golden section.
inline PowerLawFit fit_powerlaw(std::vector<std::pair<double, double>> samples) {
    if (samples.size() < 4)
        throw std::invalid_argument("fit_powerlaw: need at least 4 samples");
    std::vector<double> x, y;
    for (auto& [d2, tc] : samples) {
        if (!(d2 > 0.0) || !(tc > 0.0))
            throw std::invalid_argument("fit_powerlaw: invalid sample");
        x.push_back(1.0 / d2);
        y.push_back(std::log(tc));
    }
    // sort by x ascending
    std::vector<std::size_t> ord(x.size());
    for (std::size_t i = 0; i < ord.size(); ++i) ord[i] = i;
    std::sort(ord.begin(), ord.end(), [&](auto a, auto b) { return x[a] < x[b]; });
    std::vector<double> xs, ys;
    std::vector<std::pair<double, double>> ss;
    for (auto i : ord) {
        xs.push_back(x[i]);
        ys.push_back(y[i]);
        ss.push_back(samples[i]);
    }
    if (ys.front() <= ys.back())
        throw std::invalid_argument("fit_powerlaw: tC must increase toward the threshold");

    const double span = xs.back() - xs.front();
    if (!(span > 0.0)) throw std::invalid_argument("fit_powerlaw: degenerate delta2 range");

    auto sse_at = [&](double xc) {
        // linear regression of y on u = log(x - xc)
        double su = 0, sy = 0, suu = 0, suy = 0;
        const double n = static_cast<double>(xs.size());
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double u = std::log(xs[i] - xc);
            su += u; sy += ys[i]; suu += u * u; suy += u * ys[i];
        }
        const double det = n * suu - su * su;
        const double slope = (n * suy - su * sy) / det;
        const double icpt = (sy - slope * su) / n;
        double sse = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double r = ys[i] - (icpt + slope * std::log(xs[i] - xc));
            sse += r * r;
        }
        return std::tuple<double, double, double>(sse, slope, icpt);
    };

    // multistart on the critical point: offset below the smallest sampled x
    double best_off = span, best_sse = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 240; ++k) {
        const double off = 1e-4 * span * std::pow(3.0e4, k / 239.0);
        const double sse = std::get<0>(sse_at(xs.front() - off));
        if (sse < best_sse) { best_sse = sse; best_off = off; }
    }
    auto [lo_off, hi_off] = std::pair(best_off / 3.0, best_off * 3.0);
    auto r = golden_max([&](double loff) { return -std::get<0>(sse_at(xs.front() - std::exp(loff))); },
                        std::log(lo_off), std::log(hi_off), 1e-12);
    const double xc = xs.front() - std::exp(r.first);
    auto [sse, slope, icpt] = sse_at(xc);

    PowerLawFit fit;
    fit.samples = ss;
    fit.nu = -slope;
    fit.delta2GF = 1.0 / xc;
    fit.amplitude = std::exp(icpt);
    fit.residual = std::sqrt(sse / xs.size());
    fit.windowLo = xs.front();
    fit.windowHi = xs.back();
    fit.extrapolated = xc < xs.front();
    return fit;
}

// ---- initial-condition collapse ----------------------------------------------

struct CollapseSample {
    double m0 = 0.0;
    double delta2 = 0.0;
    double tC = 0.0;
};

struct CollapseResult {
    double a = 1.0;                      // tC scales as a^{-log10 m0}
    double dispersionBefore = 0.0;       // mean within-group std of log tC
    double dispersionAfter = 0.0;
    std::vector<CollapseSample> rescaled; // tC replaced by tC * a^(log10 m0 - log10 m0_ref)
    double m0Ref = 0.0;
};

// Fits the single scale factor a that collapses convergence times across
// initial conditions: tC(m0) ~ a^{-log10 m0} * F(delta2). Closed-form least
// squares on log tC within fixed-delta2 groups.
inline CollapseResult collapse_initial_conditions(const std::vector<CollapseSample>& runs) {
    std::map<double, std::vector<const CollapseSample*>> groups;
    for (const auto& r : runs) groups[r.delta2].push_back(&r);
    double sxx = 0.0, sxy = 0.0;
    for (auto& [d2, g] : groups) {
        if (g.size() < 2) continue;
        double ml = 0.0, my = 0.0;
        for (auto* r : g) {
            ml += std::log10(r->m0);
            my += std::log(r->tC);
        }
        ml /= g.size();
        my /= g.size();
        for (auto* r : g) {
            const double dl = std::log10(r->m0) - ml;
            const double dy = std::log(r->tC) - my;
            sxx += dl * dl;
            sxy += dl * dy;
        }
    }
    if (!(sxx > 0.0))
        throw std::invalid_argument("collapse_initial_conditions: need >= 2 distinct m0");
    const double loga = -sxy / sxx; // tC ~ a^{-log10 m0}
    CollapseResult out;
    out.a = std::exp(loga);

    double m0ref = 0.0;
    for (const auto& r : runs) m0ref = std::max(m0ref, r.m0);
    out.m0Ref = m0ref;
    auto disp = [&](bool rescaledFlag) {
        double acc = 0.0;
        int cnt = 0;
        for (auto& [d2, g] : groups) {
            if (g.size() < 2) continue;
            double mean = 0.0;
            std::vector<double> vals;
            for (auto* r : g) {
                double v = std::log(r->tC);
                if (rescaledFlag) v += (std::log10(r->m0) - std::log10(m0ref)) * loga;
                vals.push_back(v);
                mean += v;
            }
            mean /= vals.size();
            double var = 0.0;
            for (double v : vals) var += (v - mean) * (v - mean);
            acc += std::sqrt(var / vals.size());
            ++cnt;
        }
        return cnt ? acc / cnt : 0.0;
    };
    out.dispersionBefore = disp(false);
    out.dispersionAfter = disp(true);
    for (const auto& r : runs) {
        CollapseSample s = r;
        s.tC = r.tC * std::exp((std::log10(r.m0) - std::log10(m0ref)) * loga);
        out.rescaled.push_back(s);
    }
    return out;
}

} // namespace smt::gfse
