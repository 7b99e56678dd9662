#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "smt/model.hpp"
#include "smt/gfse.hpp"
#include "support/oracles.hpp"

using namespace smt;
using Catch::Approx;

namespace {

// test fixture: noise removed by hand so the planted configuration is an
// exact global minimum
model::SpikedInstance zero_noise_instance(const ModelParams& params, int n,
                                          std::uint64_t seed) {
    auto inst = model::sample_instance(params, n, seed);
    const double isq = 1.0 / std::sqrt(static_cast<double>(n));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            inst.matrixY[static_cast<std::size_t>(i) * n + j] =
                inst.signal[i] * inst.signal[j] * isq;
    const double kappa = model::tensor_prefactor(n, params.p);
    for_each_tuple(n, params.p, [&](const int* idx, std::uint64_t r) {
        double prod = kappa;
        for (int a = 0; a < params.p; ++a) prod *= inst.signal[idx[a]];
        inst.tensorT.data[r] = prod;
    });
    return inst;
}

double naive_loss_p3(const model::SpikedInstance& inst, const std::vector<double>& x,
                     const ModelParams& params) {
    const int n = inst.n;
    const double isq = 1.0 / std::sqrt(static_cast<double>(n));
    const double kappa = model::tensor_prefactor(n, 3);
    double l2 = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double r = inst.y(i, j) - x[i] * x[j] * isq;
            l2 += r * r;
        }
    double lp = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            for (int k = j + 1; k < n; ++k) {
                const double r = inst.tensorT.at({i, j, k}) - kappa * x[i] * x[j] * x[k];
                lp += r * r;
            }
    return l2 / (2.0 * params.delta2) + lp / (2.0 * params.deltaP);
}

} // namespace

TEST_CASE("sampling is deterministic under a fixed seed") {
    const auto params = make_params(3, 0.5, 4.0);
    const auto a = model::sample_instance(params, 50, 7);
    const auto b = model::sample_instance(params, 50, 7);
    REQUIRE(a.signal == b.signal);
    REQUIRE(a.matrixY == b.matrixY);
    REQUIRE(a.tensorT.data == b.tensorT.data);
    const auto c = model::sample_instance(params, 50, 8);
    REQUIRE(a.matrixY != c.matrixY);
}

TEST_CASE("vanishing matrix noise recovers the rank-one spike entrywise") {
    const auto params = make_params(3, 1e-30, 1.0);
    const int n = 40;
    const auto inst = model::sample_instance(params, n, 3);
    const double sq = std::sqrt(static_cast<double>(n));
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            REQUIRE(inst.y(i, j) * sq ==
                    Approx(inst.signal[i] * inst.signal[j]).margin(1e-10));
}

TEST_CASE("empirical matrix-noise variance matches delta2") {
    const double d2 = 0.7;
    const auto params = make_params(3, d2, 1.0);
    const int n = 120;
    const auto inst = model::sample_instance(params, n, 11);
    const double isq = 1.0 / std::sqrt(static_cast<double>(n));
    double ss = 0.0;
    std::size_t cnt = 0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double xi = inst.y(i, j) - inst.signal[i] * inst.signal[j] * isq;
            ss += xi * xi;
            ++cnt;
        }
    const double var = ss / cnt;
    REQUIRE(std::abs(var - d2) < 5.0 * d2 / std::sqrt(static_cast<double>(cnt)));
}

TEST_CASE("signal norm and sphere invariants") {
    const auto params = make_params(4, 0.5, 2.0);
    const auto inst = model::sample_instance(params, 64, 5);
    REQUIRE(model::norm2(inst.signal) == Approx(64.0).epsilon(1e-12));
    REQUIRE_THROWS_AS(model::sample_instance(params, 3, 1), std::invalid_argument);
}

TEST_CASE("loss vanishes at the planted signal of a noiseless instance") {
    const auto params = make_params(3, 0.5, 1.0);
    const auto inst = zero_noise_instance(params, 24, 9);
    REQUIRE(model::loss(inst, inst.signal, params) == Approx(0.0).margin(1e-18));
}

TEST_CASE("even p loss is symmetric under sign flip") {
    const auto params = make_params(4, 0.7, 2.0);
    const auto inst = model::sample_instance(params, 16, 2);
    Rng rng(77);
    auto x = sphere_vector(16, rng);
    auto xm = x;
    for (auto& v : xm) v = -v;
    REQUIRE(model::loss(inst, x, params) ==
            Approx(model::loss(inst, xm, params)).epsilon(1e-12));
}

TEST_CASE("loss agrees with the naive double-loop oracle at n=4, p=3") {
    const auto params = make_params(3, 0.3, 2.0);
    const auto inst = model::sample_instance(params, 4, 13);
    Rng rng(5);
    const auto x = sphere_vector(4, rng);
    REQUIRE(model::loss(inst, x, params) ==
            Approx(naive_loss_p3(inst, x, params)).epsilon(1e-13));
    // and at a larger n to exercise the fast path
    const auto inst2 = model::sample_instance(params, 14, 21);
    const auto x2 = sphere_vector(14, rng);
    REQUIRE(model::loss(inst2, x2, params) ==
            Approx(naive_loss_p3(inst2, x2, params)).epsilon(1e-12));
}

TEST_CASE("gradient matches central finite differences of the loss") {
    for (int p : {3, 4}) {
        const auto params = make_params(p, 0.6, 1.5);
        const auto inst = model::sample_instance(params, 18, 4 + p);
        Rng rng(100 + p);
        for (int probe = 0; probe < 10; ++probe) {
            auto x = sphere_vector(18, rng);
            const auto g = model::gradient(inst, x, params);
            const double h = 1e-5;
            double num = 0.0, den = 0.0;
            for (int i = 0; i < 18; ++i) {
                auto xp = x, xm = x;
                xp[i] += h;
                xm[i] -= h;
                const double fd =
                    (model::loss(inst, xp, params) - model::loss(inst, xm, params)) / (2 * h);
                num += (g[i] - fd) * (g[i] - fd);
                den += fd * fd;
            }
            REQUIRE(std::sqrt(num / den) < 1e-5);
        }
    }
}

TEST_CASE("projected gradient vanishes at the planted minimum") {
    const auto params = make_params(3, 0.5, 1.0);
    const auto inst = zero_noise_instance(params, 24, 9);
    const auto g = model::gradient(inst, inst.signal, params);
    double xg = 0.0;
    for (int i = 0; i < 24; ++i) xg += inst.signal[i] * g[i];
    xg /= 24.0;
    double tang = 0.0;
    for (int i = 0; i < 24; ++i) {
        const double v = g[i] - xg * inst.signal[i];
        tang += v * v;
    }
    REQUIRE(std::sqrt(tang) < 1e-12);
}

TEST_CASE("gradient is linear in the matrix observations") {
    const auto params = make_params(3, 0.5, 1.0);
    auto instA = model::sample_instance(params, 12, 31);
    auto instB = instA;
    Rng rng(900);
    for (int i = 0; i < 12; ++i)
        for (int j = i + 1; j < 12; ++j) {
            const double v = instB.y(i, j) + rng.gaussian();
            instB.matrixY[static_cast<std::size_t>(i) * 12 + j] = v;
            instB.matrixY[static_cast<std::size_t>(j) * 12 + i] = v;
        }
    const auto x = sphere_vector(12, rng);
    const auto gA = model::gradient(instA, x, params);
    const auto gB = model::gradient(instB, x, params);
    const double c = 1.0 / (params.delta2 * std::sqrt(12.0));
    for (int i = 0; i < 12; ++i) {
        double expect = 0.0;
        for (int j = 0; j < 12; ++j)
            if (j != i) expect -= (instA.y(i, j) - instB.y(i, j)) * x[j] * c;
        REQUIRE(gA[i] - gB[i] == Approx(expect).margin(1e-12));
    }
}

TEST_CASE("finite-N flow preserves the sphere and descends the loss") {
    const auto params = make_params(3, 0.5, 4.0);
    const auto inst = model::sample_instance(params, 48, 17);
    Rng rng(3);
    auto x0 = sphere_vector(48, rng);
    const auto res = model::finite_n_gradient_flow(inst, x0, params, 0.01, 5.0);
    REQUIRE_FALSE(res.diverged);
    REQUIRE(std::abs(model::norm2(res.x_final) / 48.0 - 1.0) < 1e-8);
    for (std::size_t i = 1; i < res.losses.size(); ++i)
        REQUIRE(res.losses[i] <= res.losses[i - 1] + 1e-8);
}

TEST_CASE("even-p flow from the mirrored start mirrors the overlap") {
    const auto params = make_params(4, 0.8, 2.0);
    const auto inst = model::sample_instance(params, 32, 23);
    Rng rng(8);
    auto x0 = model::init_with_overlap(inst, 0.2, rng);
    auto x0m = x0;
    for (auto& v : x0m) v = -v;
    const auto a = model::finite_n_gradient_flow(inst, x0, params, 0.02, 3.0);
    const auto b = model::finite_n_gradient_flow(inst, x0m, params, 0.02, 3.0);
    for (std::size_t i = 0; i < a.overlaps.size(); ++i)
        REQUIRE(a.overlaps[i] == Approx(-b.overlaps[i]).margin(1e-9));
}

TEST_CASE("init_with_overlap hits the requested overlap exactly") {
    const auto params = make_params(3, 0.5, 4.0);
    const auto inst = model::sample_instance(params, 64, 29);
    Rng rng(12);
    const auto x = model::init_with_overlap(inst, 0.05, rng);
    REQUIRE(model::overlap(x, inst.signal) == Approx(0.05).margin(1e-12));
    REQUIRE(model::norm2(x) == Approx(64.0).epsilon(1e-12));
}

TEST_CASE("instance container round-trips bit-exactly") {
    const auto params = make_params(3, 0.5, 4.0);
    const auto inst = model::sample_instance(params, 20, 41);
    const auto path = std::filesystem::temp_directory_path() / "smt_test_instance.bin";
    model::save_instance(path.string(), inst);
    const auto back = model::load_instance(path.string());
    REQUIRE(back.n == inst.n);
    REQUIRE(back.p == inst.p);
    REQUIRE(back.seed == inst.seed);
    REQUIRE(back.signal == inst.signal);
    REQUIRE(back.matrixY == inst.matrixY);
    REQUIRE(back.tensorT.data == inst.tensorT.data);
    std::filesystem::remove(path);
    REQUIRE_THROWS(model::load_instance("/nonexistent/nowhere.bin"));
}

TEST_CASE("tuple rank/unrank is a bijection in colex order") {
    int count = 0;
    std::uint64_t expect = 0;
    for_each_tuple(7, 3, [&](const int* idx, std::uint64_t r) {
        REQUIRE(r == expect);
        REQUIRE(tuple_rank({idx[0], idx[1], idx[2]}) == r);
        const auto back = tuple_unrank(r, 3, 7);
        REQUIRE(back[0] == idx[0]);
        REQUIRE(back[1] == idx[1]);
        REQUIRE(back[2] == idx[2]);
        ++count;
        ++expect;
    });
    REQUIRE(count == 35);
}

TEST_CASE("finite-N flow reaches the state-evolution plateau", "[slow]") {
    // cross-module oracle: the N->infty flow plateau from the two-time solver
    const auto params = make_params(3, 0.5, 4.0);
    gfse::GFOptions opt;
    opt.h0 = 0.02;
    opt.gridSize = 1024;
    opt.tMax = 30.0;
    const auto se = gfse::integrate(params, 0.05, opt);
    REQUIRE(se.result.converged);

    const int n = 320;
    const auto inst = model::sample_instance(params, n, 4242);
    Rng rng(99);
    const auto x0 = model::init_with_overlap(inst, 0.05, rng);
    const auto flow = model::finite_n_gradient_flow(inst, x0, params, 0.02, 30.0, 10);
    REQUIRE_FALSE(flow.diverged);
    REQUIRE(std::abs(flow.overlaps.back() - se.result.plateau) < 0.05);
}
