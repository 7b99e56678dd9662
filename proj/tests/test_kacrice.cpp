#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "smt/kacrice.hpp"
#include "support/oracles.hpp"

using namespace smt;
using Catch::Approx;

TEST_CASE("phi_shift branches agree and match the semicircle potential") {
    REQUIRE(kacrice::phi_shift(0.0) == 0.0);
    REQUIRE(kacrice::phi_shift(2.0) == Approx(1.0).margin(1e-14));
    REQUIRE(kacrice::phi_shift(2.0 - 1e-9) == Approx(kacrice::phi_shift(2.0 + 1e-9)).margin(1e-8));
    // evenness
    for (double t : {0.3, 1.7, 2.5, 4.0})
        REQUIRE(kacrice::phi_shift(t) == Approx(kacrice::phi_shift(-t)).margin(1e-15));
    // quadrature oracle outside the bulk
    for (double t : {2.2, 3.0, 5.0})
        REQUIRE(kacrice::phi_shift(t) == Approx(oracles::phi_from_semicircle(t)).margin(1e-8));
    // derivative continuity at the edge
    const double h = 1e-6;
    const double dl = (kacrice::phi_shift(2.0) - kacrice::phi_shift(2.0 - h)) / h;
    const double dr = (kacrice::phi_shift(2.0 + h) - kacrice::phi_shift(2.0)) / h;
    REQUIRE(dl == Approx(1.0).margin(1e-3));
    REQUIRE(dr == Approx(1.0).margin(1e-3));
}

TEST_CASE("rank_one_correction window, boundary and quadrature oracle") {
    REQUIRE(std::isinf(kacrice::rank_one_correction(0.5, 1.9)));
    REQUIRE(kacrice::rank_one_correction(0.5, 2.5) == 0.0);
    REQUIRE(kacrice::rank_one_correction(1.0, 3.0) == 0.0);
    REQUIRE(kacrice::rank_one_correction(-2.0, 2.5) == 0.0); // odd-p negative theta
    const double th = 2.0;
    const double w = th + 1.0 / th;
    REQUIRE(kacrice::rank_one_correction(th, w) == Approx(0.0).margin(1e-14));
    REQUIRE(kacrice::rank_one_correction(th, w + 0.5) == 0.0);
    // quadrature cross-check at t = 2
    const double closed = kacrice::rank_one_correction(th, 2.0);
    const double viaQuad = -0.25 * oracles::sqrt_integral(2.0, w) - 0.5 * th * (2.0 - w) +
                           0.125 * (4.0 - w * w);
    REQUIRE(closed == Approx(viaQuad).margin(1e-10));
    // nonnegative and continuous inside the window
    for (double t = 2.0; t < w; t += 0.01)
        REQUIRE(kacrice::rank_one_correction(th, t) >= -1e-14);
}

TEST_CASE("shift_params limits and hand-checked value") {
    const auto params = make_params(3, 1.0, 1.0);
    {
        const auto [t, th] = kacrice::shift_params(1.0, -0.3, -0.2, params);
        REQUIRE(th == Approx(0.0).margin(1e-15));
    }
    {
        const auto [t, th] = kacrice::shift_params(0.5, 0.0, 0.0, params);
        REQUIRE(t == Approx(0.0).margin(1e-15));
    }
    {
        const auto [t, th] = kacrice::shift_params(0.0, -1.0, 0.0, params);
        REQUIRE(t == Approx(2.0 / std::sqrt(3.0)).epsilon(1e-14));
    }
}

TEST_CASE("sigma_tilde is even in m for even p at fixed energies") {
    const auto params = make_params(4, 0.8, 3.0);
    for (double m : {0.1, 0.35, 0.7})
        REQUIRE(kacrice::sigma_tilde(m, -0.6, -0.4, params) ==
                Approx(kacrice::sigma_tilde(-m, -0.6, -0.4, params)).margin(1e-12));
}

TEST_CASE("vanishing matrix channel reduces to the pure spiked-tensor complexity") {
    const int p = 3;
    const double dp = 2.0;
    ModelParams params;
    params.p = p;
    params.delta2 = std::numeric_limits<double>::infinity();
    params.deltaP = dp;
    for (double m : {0.0, 0.2, 0.5, 0.8}) {
        const auto pt = kacrice::sigma_of_m(m, params);
        REQUIRE(pt.sigma == Approx(oracles::pure_tensor_sigma(m, p, dp)).margin(1e-6));
    }
}

TEST_CASE("closed-form inner maximization agrees with a 2D grid search at m=0") {
    const auto params = make_params(3, 2.0, 4.0);
    const auto pt = kacrice::sigma_of_m(0.0, params);
    double best = -1e300;
    // dense grid over the energy plane, then local refinement
    double be2 = 0, bep = 0;
    for (int i = 0; i < 400; ++i)
        for (int j = 0; j < 400; ++j) {
            const double e2 = -3.0 + 6.0 * i / 399.0;
            const double ep = -3.0 + 6.0 * j / 399.0;
            const double v = kacrice::sigma_tilde(0.0, e2, ep, params);
            if (v > best) { best = v; be2 = e2; bep = ep; }
        }
    for (double step = 6.0 / 399.0; step > 1e-9; step *= 0.5) {
        for (int di = -1; di <= 1; ++di)
            for (int dj = -1; dj <= 1; ++dj) {
                const double v = kacrice::sigma_tilde(0.0, be2 + di * step, bep + dj * step, params);
                if (v > best) { best = v; be2 += di * step; bep += dj * step; }
            }
    }
    REQUIRE(pt.sigma == Approx(best).margin(1e-6));
}

TEST_CASE("sigma_of_m equals an independent Nelder-Mead over the energy plane") {
    Rng rng(1234);
    int done = 0;
    while (done < 10) {
        const int p = (rng.uniform() < 0.5) ? 3 : 4;
        const double d2 = 0.3 + 1.7 * rng.uniform();
        const double dp = 0.5 + 4.0 * rng.uniform();
        const double m = -0.8 + 1.6 * rng.uniform();
        const auto params = make_params(p, d2, dp);
        const auto pt = kacrice::sigma_of_m(m, params);
        if (!std::isfinite(pt.sigma)) continue;
        auto f = [&](double e2, double ep) { return kacrice::sigma_tilde(m, e2, ep, params); };
        const auto r = oracles::nelder_mead_max(f, {pt.eps2Star - 0.08, pt.epsPStar + 0.05}, 0.2);
        REQUIRE(pt.sigma == Approx(r.second).margin(1e-8));
        ++done;
    }
}

TEST_CASE("maximizer stays at or above the bulk edge") {
    const auto params = make_params(3, 0.7, 4.0);
    for (double m : {-0.5, 0.0, 0.3, 0.9}) {
        const auto pt = kacrice::sigma_of_m(m, params);
        REQUIRE(pt.tStar >= 2.0 - 1e-12);
        REQUIRE(pt.sigma == Approx(kacrice::sigma_tilde(m, pt.eps2Star, pt.epsPStar, params))
                                .margin(1e-9));
    }
}

TEST_CASE("complexity diverges to -inf at the sphere poles") {
    const auto params = make_params(3, 0.7, 4.0);
    REQUIRE(kacrice::sigma_of_m(0.9999, params).sigma < -1.5);
    REQUIRE(kacrice::sigma_of_m(1.0, params).sigma == kacrice::kNegInf);
}

TEST_CASE("even-p curves are symmetric, odd-p band center shifts negative") {
    const auto p4 = make_params(4, 0.9, 4.0);
    const auto grid = kacrice::linspace(-0.9, 0.9, 181);
    const auto curve = kacrice::complexity_curve(p4, grid, 2);
    for (std::size_t i = 0; i < grid.size() / 2; ++i)
        REQUIRE(curve.points[i].sigma ==
                Approx(curve.points[grid.size() - 1 - i].sigma).margin(1e-9));

    const auto p3 = make_params(3, 0.64, 4.0);
    const auto morph = kacrice::analyze_landscape(p3, 1001);
    REQUIRE(morph.band_alive);
    REQUIRE(morph.band_max_m < 0.0);
}

TEST_CASE("band maximum location is stable under grid refinement") {
    const auto params = make_params(3, 0.64, 4.0);
    const auto a = kacrice::analyze_landscape(params, 1001);
    const auto b = kacrice::analyze_landscape(params, 2001);
    REQUIRE(std::abs(a.band_max_m - b.band_max_m) < 2.0 / 1000.0);
}

TEST_CASE("trivialization thresholds reproduce the published points") {
    kacrice::ThresholdOptions opt;
    opt.gridN = 1201;
    const double t4 = kacrice::trivialization_threshold(4.0, 3, opt);
    REQUIRE(1.0 / t4 == Approx(1.57).epsilon(0.02));
    const double t1 = kacrice::trivialization_threshold(1.0, 3, opt);
    REQUIRE(1.0 / t1 == Approx(2.57).epsilon(0.02));
}

TEST_CASE("trivialization approaches the spectral threshold for weak tensors") {
    kacrice::ThresholdOptions opt;
    opt.gridN = 1201;
    const double t = kacrice::trivialization_threshold(1e6, 3, opt);
    REQUIRE(std::abs(t - 1.0) < 1e-2);
}

TEST_CASE("disconnection threshold sits between the published delta2 brackets") {
    kacrice::ThresholdOptions opt;
    opt.gridN = 1201;
    const double d = kacrice::disconnection_threshold(4.0, 4, opt);
    REQUIRE(d < 2.0);
    REQUIRE(d > 2.0 / 3.0);
    // stability under grid refinement
    kacrice::ThresholdOptions fine = opt;
    fine.gridN = 2401;
    const double d2 = kacrice::disconnection_threshold(4.0, 4, fine);
    REQUIRE(std::abs(d - d2) < 1e-3);
}

TEST_CASE("disconnection happens before trivialization") {
    kacrice::ThresholdOptions opt;
    opt.gridN = 801;
    for (double dp : {0.8, 1.0, 2.0, 4.0, 6.0}) {
        const double tv = kacrice::trivialization_threshold(dp, 3, opt);
        const double dc = kacrice::disconnection_threshold(dp, 3, opt);
        REQUIRE(tv <= dc * (1.0 + 1e-6));
    }
}

TEST_CASE("landscape morphology reproduces the three published scenarios") {
    const double dp = 4.0;
    const auto a = kacrice::analyze_landscape(make_params(4, 2.0, dp));
    REQUIRE(a.kind == kacrice::LandscapeKind::BandOnly);
    REQUIRE(a.sigma_at_zero > 0.0);

    const auto b = kacrice::analyze_landscape(make_params(4, 2.0 / 3.0, dp));
    REQUIRE(b.kind == kacrice::LandscapeKind::BandPlusIsolated);
    REQUIRE(b.sigma_at_zero > 0.0);
    REQUIRE(b.informative_pos.has_value());

    const auto c = kacrice::analyze_landscape(make_params(4, 0.4, dp));
    REQUIRE(c.kind == kacrice::LandscapeKind::IsolatedOnly);
    REQUIRE(c.sigma_at_zero < 0.0);
    REQUIRE(c.informative_pos.has_value());
    REQUIRE(*c.informative_pos == Approx(0.7804).margin(2e-3));
}
