#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "smt/params.hpp"
#include "smt/rng.hpp"
#include "smt/tensor_index.hpp"

namespace smt::model {

// A finite-N sample of the spiked matrix-tensor observations.
// Y is kept as the full symmetric n x n matrix (diagonal never enters any
// sum), the tensor as the flat strictly-increasing-tuple array.
struct SpikedInstance {
    int n = 0;
    int p = 0;
    std::uint64_t seed = 0;
    std::vector<double> signal;  // ||signal||^2 = n
    std::vector<double> matrixY; // row-major n x n, symmetric
    SymmetricTensor tensorT;

    double y(int i, int j) const { return matrixY[static_cast<std::size_t>(i) * n + j]; }
};

inline double tensor_prefactor(int n, int p) {
    double fact = 1.0;
    for (int k = 2; k <= p - 1; ++k) fact *= k;
    return std::sqrt(fact) / std::pow(static_cast<double>(n), (p - 1) / 2.0);
}

inline double overlap(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s / static_cast<double>(a.size());
}

inline double norm2(const std::vector<double>& a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return s;
}

inline SpikedInstance sample_instance(const ModelParams& params, int n, std::uint64_t seed) {
    params.validate();
    if (n < params.p) throw std::invalid_argument("sample_instance: n < p");

    Rng rng(seed);
    SpikedInstance inst;
    inst.n = n;
    inst.p = params.p;
    inst.seed = seed;
    inst.signal = sphere_vector(n, rng);

    const double isq = 1.0 / std::sqrt(static_cast<double>(n));
    const double s2 = std::sqrt(params.delta2);
    inst.matrixY.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) {
        inst.matrixY[static_cast<std::size_t>(i) * n + i] = inst.signal[i] * inst.signal[i] * isq;
        for (int j = i + 1; j < n; ++j) {
            const double v = inst.signal[i] * inst.signal[j] * isq + s2 * rng.gaussian();
            inst.matrixY[static_cast<std::size_t>(i) * n + j] = v;
            inst.matrixY[static_cast<std::size_t>(j) * n + i] = v;
        }
    }

    const double kappa = tensor_prefactor(n, params.p);
    const double sp = std::sqrt(params.deltaP);
    inst.tensorT = SymmetricTensor(n, params.p);
    const double* x = inst.signal.data();
    double* t = inst.tensorT.data.data();
    if (params.p == 3) {
        std::uint64_t r = 0;
        for (int k = 2; k < n; ++k)
            for (int j = 1; j < k; ++j) {
                const double sjk = kappa * x[j] * x[k];
                for (int i = 0; i < j; ++i, ++r) t[r] = sjk * x[i] + sp * rng.gaussian();
            }
    } else {
        for_each_tuple(n, params.p, [&](const int* idx, std::uint64_t r) {
            double prod = kappa;
            for (int a = 0; a < params.p; ++a) prod *= x[idx[a]];
            t[r] = prod + sp * rng.gaussian();
        });
    }
    return inst;
}

inline void check_dims(const SpikedInstance& inst, const std::vector<double>& x) {
    if (static_cast<int>(x.size()) != inst.n)
        throw std::invalid_argument("configuration dimension mismatch");
}

inline double loss(const SpikedInstance& inst, const std::vector<double>& x,
                   const ModelParams& params) {
    check_dims(inst, x);
    const int n = inst.n, p = inst.p;
    const double isq = 1.0 / std::sqrt(static_cast<double>(n));
    const double kappa = tensor_prefactor(n, p);

    double acc2 = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double r = inst.y(i, j) - x[i] * x[j] * isq;
            acc2 += r * r;
        }

    double accp = 0.0;
    const double* t = inst.tensorT.data.data();
    if (p == 3) {
        std::uint64_t r = 0;
        for (int k = 2; k < n; ++k)
            for (int j = 1; j < k; ++j) {
                const double sjk = kappa * x[j] * x[k];
                for (int i = 0; i < j; ++i, ++r) {
                    const double d = t[r] - sjk * x[i];
                    accp += d * d;
                }
            }
    } else {
        for_each_tuple(n, p, [&](const int* idx, std::uint64_t r) {
            double prod = kappa;
            for (int a = 0; a < p; ++a) prod *= x[idx[a]];
            const double d = t[r] - prod;
            accp += d * d;
        });
    }
    return acc2 / (2.0 * params.delta2) + accp / (2.0 * params.deltaP);
}

// Unconstrained Euclidean gradient of the loss; spherical projection is the
// caller's business.
inline std::vector<double> gradient(const SpikedInstance& inst, const std::vector<double>& x,
                                    const ModelParams& params) {
    check_dims(inst, x);
    const int n = inst.n, p = inst.p;
    const double isq = 1.0 / std::sqrt(static_cast<double>(n));
    const double kappa = tensor_prefactor(n, p);
    std::vector<double> g(n, 0.0);

    const double c2 = 1.0 / (params.delta2 * std::sqrt(static_cast<double>(n)));
    for (int i = 0; i < n; ++i) {
        double gi = 0.0;
        const double* yi = &inst.matrixY[static_cast<std::size_t>(i) * n];
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            gi -= (yi[j] - x[i] * x[j] * isq) * x[j];
        }
        g[i] = gi * c2;
    }

    const double cp = kappa / params.deltaP;
    const double* t = inst.tensorT.data.data();
    if (p == 3) {
        std::uint64_t r = 0;
        for (int k = 2; k < n; ++k)
            for (int j = 1; j < k; ++j) {
                const double xjk = x[j] * x[k];
                const double sjk = kappa * xjk;
                double srx = 0.0;
                for (int i = 0; i < j; ++i, ++r) {
                    const double res = t[r] - sjk * x[i];
                    g[i] -= cp * res * xjk;
                    srx += res * x[i];
                }
                g[j] -= cp * srx * x[k];
                g[k] -= cp * srx * x[j];
            }
    } else {
        std::vector<double> pre(p + 1), suf(p + 1);
        for_each_tuple(n, p, [&](const int* idx, std::uint64_t r) {
            pre[0] = 1.0;
            for (int a = 0; a < p; ++a) pre[a + 1] = pre[a] * x[idx[a]];
            suf[p] = 1.0;
            for (int a = p - 1; a >= 0; --a) suf[a] = suf[a + 1] * x[idx[a]];
            const double res = t[r] - kappa * pre[p];
            for (int a = 0; a < p; ++a) g[idx[a]] -= cp * res * pre[a] * suf[a + 1];
        });
    }
    return g;
}

// B_i = sum over tuples containing i of T * prod of the other entries of x.
// No channel prefactors applied.
inline std::vector<double> tensor_field(const SpikedInstance& inst, const std::vector<double>& x) {
    check_dims(inst, x);
    const int n = inst.n, p = inst.p;
    std::vector<double> b(n, 0.0);
    const double* t = inst.tensorT.data.data();
    if (p == 3) {
        std::uint64_t r = 0;
        for (int k = 2; k < n; ++k)
            for (int j = 1; j < k; ++j) {
                const double xjk = x[j] * x[k];
                double stx = 0.0;
                for (int i = 0; i < j; ++i, ++r) {
                    b[i] += t[r] * xjk;
                    stx += t[r] * x[i];
                }
                b[j] += stx * x[k];
                b[k] += stx * x[j];
            }
    } else {
        std::vector<double> pre(p + 1), suf(p + 1);
        for_each_tuple(n, p, [&](const int* idx, std::uint64_t r) {
            pre[0] = 1.0;
            for (int a = 0; a < p; ++a) pre[a + 1] = pre[a] * x[idx[a]];
            suf[p] = 1.0;
            for (int a = p - 1; a >= 0; --a) suf[a] = suf[a + 1] * x[idx[a]];
            for (int a = 0; a < p; ++a) b[idx[a]] += t[r] * pre[a] * suf[a + 1];
        });
    }
    return b;
}

// (sum_{k != i} Y_ik x_k)_i
inline std::vector<double> matrix_field(const SpikedInstance& inst, const std::vector<double>& x) {
    check_dims(inst, x);
    const int n = inst.n;
    std::vector<double> b(n, 0.0);
    for (int i = 0; i < n; ++i) {
        const double* yi = &inst.matrixY[static_cast<std::size_t>(i) * n];
        double s = 0.0;
        for (int k = 0; k < n; ++k) s += yi[k] * x[k];
        b[i] = s - yi[i] * x[i];
    }
    return b;
}

// Configuration on the sphere with exact overlap m0 with the signal:
// x = m0 * x* + sqrt(1 - m0^2) * y_perp, ||x||^2 = n.
inline std::vector<double> init_with_overlap(const SpikedInstance& inst, double m0, Rng& rng) {
    const int n = inst.n;
    std::vector<double> y = sphere_vector(n, rng);
    const double a = overlap(y, inst.signal); // y.x*/n
    std::vector<double> x(n);
    double nrm2 = 0.0;
    for (int i = 0; i < n; ++i) {
        x[i] = y[i] - a * inst.signal[i];
        nrm2 += x[i] * x[i];
    }
    const double b = std::sqrt((1.0 - m0 * m0) * n / nrm2);
    for (int i = 0; i < n; ++i) x[i] = m0 * inst.signal[i] + b * x[i];
    return x;
}

struct FlowResult {
    std::vector<double> times;
    std::vector<double> overlaps;  // m(t) = x(t).x*/n
    std::vector<double> losses;
    bool diverged = false;
    double divergence_time = 0.0;
    std::vector<double> x_final;
};

// Spherical gradient flow dx/dt = -mu(t) x - grad L, mu = -x.grad/N, using
// classical RK4 with post-step renormalization to ||x||^2 = n.
inline FlowResult finite_n_gradient_flow(const SpikedInstance& inst, std::vector<double> x,
                                         const ModelParams& params, double dt, double t_max,
                                         int record_stride = 1) {
    check_dims(inst, x);
    if (!(dt > 0.0)) throw std::invalid_argument("finite_n_gradient_flow: dt must be > 0");
    const int n = inst.n;
    const double dn = static_cast<double>(n);

    auto rhs = [&](const std::vector<double>& xc) {
        std::vector<double> g = gradient(inst, xc, params);
        double xg = 0.0;
        for (int i = 0; i < n; ++i) xg += xc[i] * g[i];
        const double mu = -xg / dn;
        for (int i = 0; i < n; ++i) g[i] = -mu * xc[i] - g[i];
        return g;
    };

    FlowResult out;
    const int nsteps = static_cast<int>(std::ceil(t_max / dt));
    std::vector<double> k1, k2, k3, k4, xt(n);
    auto record = [&](double t) {
        out.times.push_back(t);
        out.overlaps.push_back(overlap(x, inst.signal));
        out.losses.push_back(loss(inst, x, params));
    };
    record(0.0);
    for (int s = 0; s < nsteps; ++s) {
        k1 = rhs(x);
        for (int i = 0; i < n; ++i) xt[i] = x[i] + 0.5 * dt * k1[i];
        k2 = rhs(xt);
        for (int i = 0; i < n; ++i) xt[i] = x[i] + 0.5 * dt * k2[i];
        k3 = rhs(xt);
        for (int i = 0; i < n; ++i) xt[i] = x[i] + dt * k3[i];
        k4 = rhs(xt);
        double nrm2 = 0.0;
        for (int i = 0; i < n; ++i) {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            nrm2 += x[i] * x[i];
        }
        if (!std::isfinite(nrm2) || nrm2 == 0.0) {
            out.diverged = true;
            out.divergence_time = (s + 1) * dt;
            break;
        }
        const double scale = std::sqrt(dn / nrm2);
        for (int i = 0; i < n; ++i) x[i] *= scale;
        if ((s + 1) % record_stride == 0 || s + 1 == nsteps) record((s + 1) * dt);
    }
    out.x_final = std::move(x);
    return out;
}

// ---- binary instance container -------------------------------------------
// layout: magic "SMTINST1" | u32 version | u32 p | u64 n | u64 seed |
//         f64 signal[n] | f64 Y[n*n] | f64 T[C(n,p)]   (all little-endian)

namespace detail {

inline bool host_little_endian() { return std::endian::native == std::endian::little; }

template <typename T>
void put(std::ofstream& os, T v) {
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    if (!host_little_endian())
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(buf[i], buf[sizeof(T) - 1 - i]);
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get(std::ifstream& is) {
    unsigned char buf[sizeof(T)];
    is.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!host_little_endian())
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(buf[i], buf[sizeof(T) - 1 - i]);
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}

} // namespace detail

inline constexpr char kInstanceMagic[8] = {'S', 'M', 'T', 'I', 'N', 'S', 'T', '1'};
inline constexpr std::uint32_t kInstanceVersion = 1;

inline void save_instance(const std::string& path, const SpikedInstance& inst) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_instance: cannot open " + path);
    os.write(kInstanceMagic, 8);
    detail::put<std::uint32_t>(os, kInstanceVersion);
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(inst.p));
    detail::put<std::uint64_t>(os, static_cast<std::uint64_t>(inst.n));
    detail::put<std::uint64_t>(os, inst.seed);
    for (double v : inst.signal) detail::put<double>(os, v);
    for (double v : inst.matrixY) detail::put<double>(os, v);
    for (double v : inst.tensorT.data) detail::put<double>(os, v);
    if (!os) throw std::runtime_error("save_instance: write failed for " + path);
}

inline SpikedInstance load_instance(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_instance: cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kInstanceMagic, 8) != 0)
        throw std::runtime_error("load_instance: bad magic in " + path);
    const auto version = detail::get<std::uint32_t>(is);
    if (version != kInstanceVersion)
        throw std::runtime_error("load_instance: unsupported version");
    SpikedInstance inst;
    inst.p = static_cast<int>(detail::get<std::uint32_t>(is));
    inst.n = static_cast<int>(detail::get<std::uint64_t>(is));
    inst.seed = detail::get<std::uint64_t>(is);
    if (inst.n < inst.p || inst.p < 3) throw std::runtime_error("load_instance: corrupt header");
    inst.signal.resize(inst.n);
    for (auto& v : inst.signal) v = detail::get<double>(is);
    inst.matrixY.resize(static_cast<std::size_t>(inst.n) * inst.n);
    for (auto& v : inst.matrixY) v = detail::get<double>(is);
    inst.tensorT = SymmetricTensor(inst.n, inst.p);
    for (auto& v : inst.tensorT.data) v = detail::get<double>(is);
    if (!is) throw std::runtime_error("load_instance: truncated file " + path);
    return inst;
}

} // namespace smt::model
