#pragma once

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "smt/gfse.hpp"
#include "smt/io.hpp"
#include "smt/kacrice.hpp"
#include "smt/mlamp.hpp"
#include "smt/model.hpp"
#include "smt/version.hpp"

namespace smt::cli {

using nlohmann::json;

// distinct nonzero exit codes
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;  // bad flags / unknown subcommand / malformed config
inline constexpr int kExitCompute = 3; // solver failure
inline constexpr int kExitIo = 4;      // unwritable output, file errors

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// schedule K independent jobs onto a worker pool; results land at their own
// index so reassembly is ordered by construction
inline void parallel_for(std::size_t count, unsigned threads,
                         const std::function<void(std::size_t)>& fn) {
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const unsigned n = std::min<std::size_t>(threads, count);
    std::vector<std::exception_ptr> errors(n);
    for (unsigned w = 0; w < n; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= count) break;
                    fn(i);
                }
            } catch (...) {
                errors[w] = std::current_exception();
                next.store(count);
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

struct OutputContext {
    std::filesystem::path dir;
    std::string subcommand;
    io::Config invocation;     // flat record of the effective options
    std::uint64_t seed = 0;
    std::vector<std::string> outputs;

    std::filesystem::path path(const std::string& name) const { return dir / name; }

    void ensure_writable() const {
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        const auto probe = dir / ".smt_write_probe";
        std::ofstream os(probe);
        if (!os) throw IoError("output directory not writable: " + dir.string());
        os.close();
        std::filesystem::remove(probe, ec);
    }

    void provenance(io::CsvWriter& w) const {
        w.comment("smt " + subcommand);
        w.comment("version: " + std::string(kVersion));
        for (const auto& [k, v] : invocation.values) w.comment(k + " = " + v);
        w.comment("seed: " + std::to_string(seed));
        w.comment("generated: " + io::iso_timestamp());
    }

    json summary_base() const {
        json j;
        j["schema"] = "smt-summary/1";
        j["subcommand"] = subcommand;
        j["version"] = kVersion;
        j["timestamp"] = io::iso_timestamp();
        j["seed"] = seed;
        json params = json::object();
        for (const auto& [k, v] : invocation.values) params[k] = v;
        j["params"] = params;
        j["outputs"] = outputs;
        j["results"] = json::object();
        return j;
    }

    void write_summary(json j) {
        j["outputs"] = outputs;
        const auto p = path(subcommand_file("summary", "json"));
        std::ofstream os(p);
        if (!os) throw IoError("cannot write " + p.string());
        os << j.dump(2) << "\n";
        outputs.push_back(p.filename().string());
    }

    std::string subcommand_file(const std::string& stem, const std::string& ext) const {
        std::string s = subcommand;
        for (auto& c : s)
            if (c == '-') c = '_';
        return s + "_" + stem + "." + ext;
    }
};

inline void write_plot_script(OutputContext& ctx, const std::string& csv,
                              const std::string& title,
                              const std::vector<std::string>& plotLines) {
    const auto p = ctx.path(ctx.subcommand_file("plot", "gp"));
    std::ofstream os(p);
    if (!os) throw IoError("cannot write " + p.string());
    os << "# gnuplot script generated by smt " << ctx.subcommand << "\n"
       << "set datafile separator ','\n"
       << "set key autotitle columnhead\n"
       << "set grid\n"
       << "set title '" << title << "'\n";
    for (const auto& l : plotLines) os << l << "\n";
    os << "pause -1 'press enter'\n";
    if (!os) throw IoError("write failed: " + p.string());
    ctx.outputs.push_back(p.filename().string());
}

// ---- phase diagram assembly ---------------------------------------------------

struct PhaseDiagram {
    int p = 3;
    std::vector<double> deltaPs;
    std::vector<double> delta2Triv;
    std::vector<double> delta2Disconnect;
    std::vector<double> delta2MLAMP;
    std::vector<double> delta2Dyn;  // NaN where no spinodal
    std::vector<double> delta2GF;   // NaN unless computed
    std::string version = kVersion;
    std::uint64_t seed = 0;
    std::string timestamp;
};

struct OrderingRow {
    double deltaP = 0.0;
    bool ok = true;
    std::string detail;
};

struct OrderingReport {
    std::vector<OrderingRow> rows;
    int comparisons = 0;
    bool all_ok = true;
};

// Checks the mutual position of the algorithmic lines against the landscape
// line: 1/delta2_mlamp <= 1/delta2_triv, and <= 1/delta2_gf when present.
inline OrderingReport validate_ordering(const PhaseDiagram& d) {
    OrderingReport rep;
    for (std::size_t i = 0; i < d.deltaPs.size(); ++i) {
        OrderingRow row;
        row.deltaP = d.deltaPs[i];
        std::ostringstream os;
        const double invAmp = 1.0 / d.delta2MLAMP[i];
        if (i < d.delta2Triv.size() && std::isfinite(d.delta2Triv[i])) {
            ++rep.comparisons;
            const double invTriv = 1.0 / d.delta2Triv[i];
            if (invAmp > invTriv * (1.0 + 1e-9)) {
                row.ok = false;
                os << "1/delta2_mlamp " << invAmp << " > 1/delta2_triv " << invTriv << "; ";
            }
        }
        if (i < d.delta2GF.size() && std::isfinite(d.delta2GF[i])) {
            ++rep.comparisons;
            const double invGF = 1.0 / d.delta2GF[i];
            if (invAmp > invGF * (1.0 + 1e-9)) {
                row.ok = false;
                os << "1/delta2_mlamp " << invAmp << " > 1/delta2_gf " << invGF << "; ";
            }
        }
        row.detail = os.str();
        rep.all_ok = rep.all_ok && row.ok;
        rep.rows.push_back(row);
    }
    return rep;
}

// ---- GF sweep helper (shared by gf-sweep, phase-diagram --with-gf) ------------

struct GFSweepRow {
    double delta2 = 0.0;
    double m0 = 0.0;
    double tC = std::numeric_limits<double>::quiet_NaN();
    double plateau = 0.0;
    bool converged = false;
};

struct GFSweepSettings {
    double h0 = 0.01;
    int grid = 2048;
    double tMax = 1000.0;
    double hMax = 0.64;
    double plateauFloor = 0.05; // minimum plateau for a row to enter the fit
};

inline GFSweepRow gf_point(const ModelParams& params, double m0, const GFSweepSettings& s) {
    gfse::GFOptions opt;
    opt.h0 = s.h0;
    opt.gridSize = s.grid;
    opt.tMax = s.tMax;
    opt.hMax = s.hMax;
    const auto out = gfse::integrate(params, m0, opt);
    GFSweepRow row;
    row.delta2 = params.delta2;
    row.m0 = m0;
    row.plateau = out.result.plateau;
    row.converged = out.result.converged;
    if (out.result.converged && out.result.plateau > s.plateauFloor)
        row.tC = gfse::convergence_time(out.result);
    return row;
}

inline std::vector<GFSweepRow> gf_sweep(int p, double deltaP,
                                        const std::vector<double>& delta2s,
                                        const std::vector<double>& m0s,
                                        const GFSweepSettings& s, unsigned threads) {
    std::vector<GFSweepRow> rows(delta2s.size() * m0s.size());
    parallel_for(rows.size(), threads, [&](std::size_t k) {
        const std::size_t i = k / m0s.size();
        const std::size_t j = k % m0s.size();
        rows[k] = gf_point(make_params(p, delta2s[i], deltaP), m0s[j], s);
    });
    return rows;
}

// fit over the reference family (largest m0); rows must have measured tC
inline std::optional<gfse::PowerLawFit> fit_sweep(const std::vector<GFSweepRow>& rows,
                                                  double m0Ref) {
    std::vector<std::pair<double, double>> samples;
    for (const auto& r : rows)
        if (r.m0 == m0Ref && std::isfinite(r.tC)) samples.emplace_back(r.delta2, r.tC);
    if (samples.size() < 4) return std::nullopt;
    try {
        return gfse::fit_powerlaw(samples);
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

// ---- subcommand context -------------------------------------------------------

struct CommonOpts {
    std::string outdir;
    unsigned threads = std::thread::hardware_concurrency();
    std::uint64_t seed = 42;
};

inline std::string default_outdir() {
    if (const char* env = std::getenv("SMT_OUTDIR")) return env;
    return ".";
}

int run_cli(const std::vector<std::string>& args);

inline int run_cli(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run_cli(args);
}

// ---- subcommand bodies ----------------------------------------------------------

namespace detail {

inline OutputContext make_ctx(const std::string& sub, const CommonOpts& common,
                              const io::Config& invocation) {
    OutputContext ctx;
    ctx.dir = common.outdir;
    ctx.subcommand = sub;
    ctx.invocation = invocation;
    ctx.seed = common.seed;
    ctx.ensure_writable();
    return ctx;
}

inline int cmd_complexity(const CommonOpts& common, int p, double delta2, double deltaP,
                          const std::string& mgrid) {
    io::Config inv;
    inv.set("p", std::to_string(p));
    inv.set("delta2", io::format_double(delta2));
    inv.set("deltap", io::format_double(deltaP));
    inv.set("mgrid", mgrid);
    auto ctx = make_ctx("complexity", common, inv);

    const auto params = make_params(p, delta2, deltaP);
    std::vector<double> grid;
    if (mgrid.empty()) {
        grid = kacrice::default_m_grid();
    } else {
        const auto r = io::parse_range(mgrid);
        for (double v : io::RangeSpec{-r.hi, r.hi, r.count, false}.values()) grid.push_back(v);
    }
    const auto curve = kacrice::complexity_curve(params, grid, common.threads);

    const auto csv = ctx.path("complexity_curve.csv");
    io::CsvWriter w(csv.string());
    ctx.provenance(w);
    w.header({"m", "sigma", "eps2", "epsP", "t", "theta"});
    for (std::size_t i = 0; i < curve.mGrid.size(); ++i) {
        const auto& pt = curve.points[i];
        w.row({pt.m, pt.sigma, pt.eps2Star, pt.epsPStar, pt.tStar, pt.theta});
    }
    ctx.outputs.push_back(csv.filename().string());

    const auto morph = kacrice::analyze_landscape(params);
    json j = ctx.summary_base();
    j["results"]["sigma_at_zero"] = morph.sigma_at_zero;
    j["results"]["band_alive"] = morph.band_alive;
    j["results"]["band_max_sigma"] = morph.band_max_sigma;
    j["results"]["kind"] = morph.kind == kacrice::LandscapeKind::BandOnly ? "band_only"
                           : morph.kind == kacrice::LandscapeKind::BandPlusIsolated
                               ? "band_plus_isolated"
                               : "isolated_only";
    if (morph.informative_pos) j["results"]["informative_max_m"] = *morph.informative_pos;
    write_plot_script(ctx, csv.filename().string(), "complexity Sigma(m)",
                      {"plot 'complexity_curve.csv' using 1:2 with lines lw 2, 0 lc 'gray'"});
    ctx.write_summary(j);
    return kExitOk;
}

inline int cmd_threshold(const CommonOpts& common, int p, const std::string& deltapSpec,
                         const std::string& kind) {
    io::Config inv;
    inv.set("p", std::to_string(p));
    inv.set("deltap", deltapSpec);
    inv.set("kind", kind);
    auto ctx = make_ctx("threshold", common, inv);

    const auto dps = io::parse_range(deltapSpec).values();
    const bool wantTriv = kind == "triv" || kind == "both";
    const bool wantDisc = kind == "disconnect" || kind == "both";
    if (!wantTriv && !wantDisc)
        throw CLI::ValidationError("--kind must be triv, disconnect or both");

    std::vector<double> triv(dps.size(), std::numeric_limits<double>::quiet_NaN());
    std::vector<double> disc(dps.size(), std::numeric_limits<double>::quiet_NaN());
    parallel_for(dps.size(), common.threads, [&](std::size_t i) {
        if (wantTriv) triv[i] = kacrice::trivialization_threshold(dps[i], p);
        if (wantDisc) disc[i] = kacrice::disconnection_threshold(dps[i], p);
    });

    const auto csv = ctx.path("thresholds.csv");
    io::CsvWriter w(csv.string());
    ctx.provenance(w);
    w.header({"deltaP", "delta2_triv", "delta2_disconnect"});
    for (std::size_t i = 0; i < dps.size(); ++i) w.row({dps[i], triv[i], disc[i]});
    ctx.outputs.push_back(csv.filename().string());

    json j = ctx.summary_base();
    if (dps.size() == 1) {
        if (wantTriv) j["results"]["delta2_triv"] = triv[0];
        if (wantDisc) j["results"]["delta2_disconnect"] = disc[0];
    }
    write_plot_script(ctx, csv.filename().string(), "landscape thresholds",
                      {"set logscale x",
                       "plot 'thresholds.csv' using 1:(1/$2) with linespoints, "
                       "'thresholds.csv' using 1:(1/$3) with linespoints"});
    ctx.write_summary(j);
    return kExitOk;
}

inline int cmd_gf(const CommonOpts& common, int p, double delta2, double deltaP, double m0,
                  double h0, double tmax, int grid, double hmax, const std::string& dump) {
    io::Config inv;
    inv.set("p", std::to_string(p));
    inv.set("delta2", io::format_double(delta2));
    inv.set("deltap", io::format_double(deltaP));
    inv.set("m0", io::format_double(m0));
    inv.set("h0", io::format_double(h0));
    inv.set("tmax", io::format_double(tmax));
    inv.set("grid", std::to_string(grid));
    auto ctx = make_ctx("gf", common, inv);

    gfse::GFOptions opt;
    opt.h0 = h0;
    opt.tMax = tmax;
    opt.gridSize = grid;
    opt.hMax = hmax;
    const auto out = gfse::integrate(make_params(p, delta2, deltaP), m0, opt);
    if (out.result.diverged)
        throw std::runtime_error("gf integrator blew up at t = " +
                                 io::format_double(out.result.divergenceTime));

    const auto csv = ctx.path("gf_trajectory.csv");
    io::CsvWriter w(csv.string());
    ctx.provenance(w);
    w.header({"t", "m", "mu"});
    for (std::size_t i = 0; i < out.result.times.size(); ++i)
        w.row({out.result.times[i], out.result.mTraj[i], out.result.muTraj[i]});
    ctx.outputs.push_back(csv.filename().string());

    if (!dump.empty()) {
        // two-time container: magic | version | M | filled | h | C rows | R rows | m | mu
        std::ofstream os(ctx.path(dump), std::ios::binary);
        if (!os) throw IoError("cannot write two-time dump");
        os.write("SMTGF2T1", 8);
        const auto& st = out.state;
        auto put64 = [&](std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); };
        auto putd = [&](double v) { os.write(reinterpret_cast<const char*>(&v), 8); };
        put64(1);
        put64(static_cast<std::uint64_t>(st.M));
        put64(static_cast<std::uint64_t>(st.filled));
        putd(st.h);
        for (int i = 0; i <= st.filled; ++i)
            for (int j = 0; j <= i; ++j) putd(st.c(i, j));
        for (int i = 0; i <= st.filled; ++i)
            for (int j = 0; j <= i; ++j) putd(st.r(i, j));
        for (int i = 0; i <= st.filled; ++i) putd(st.m[i]);
        for (int i = 0; i <= st.filled; ++i) putd(st.mu[i]);
        ctx.outputs.push_back(dump);
    }

    json j = ctx.summary_base();
    j["results"]["plateau"] = out.result.plateau;
    j["results"]["converged"] = out.result.converged;
    j["results"]["decimations"] = out.result.decimations;
    j["results"]["h_final"] = out.result.hFinal;
    if (out.result.converged && out.result.plateau > 0.01)
        j["results"]["t_c"] = gfse::convergence_time(out.result);
    write_plot_script(ctx, csv.filename().string(), "gradient-flow overlap",
                      {"set logscale x", "plot 'gf_trajectory.csv' using 1:2 with lines lw 2"});
    ctx.write_summary(j);
    return kExitOk;
}

inline int cmd_gf_sweep(const CommonOpts& common, int p, double deltaP,
                        const std::string& delta2Spec, const std::string& m0List, double h0,
                        double tmax, int grid, double hmax) {
    io::Config inv;
    inv.set("p", std::to_string(p));
    inv.set("deltap", io::format_double(deltaP));
    inv.set("delta2", delta2Spec);
    inv.set("m0", m0List);
    inv.set("h0", io::format_double(h0));
    inv.set("tmax", io::format_double(tmax));
    auto ctx = make_ctx("gf-sweep", common, inv);

    const auto d2s = io::parse_range(delta2Spec).values();
    std::vector<double> m0s;
    {
        std::stringstream ss(m0List);
        std::string tok;
        while (std::getline(ss, tok, ',')) m0s.push_back(std::stod(io::trim(tok)));
    }
    if (m0s.empty()) m0s.push_back(1e-10);

    GFSweepSettings set;
    set.h0 = h0;
    set.tMax = tmax;
    set.grid = grid;
    set.hMax = hmax;
    const auto rows = gf_sweep(p, deltaP, d2s, m0s, set, common.threads);

    const auto csv = ctx.path("gf_sweep.csv");
    io::CsvWriter w(csv.string());
    ctx.provenance(w);
    w.header({"delta2", "tC", "plateau", "converged", "m0"});
    for (const auto& r : rows)
        w.row({r.delta2, r.tC, r.plateau, r.converged ? 1.0 : 0.0, r.m0});
    ctx.outputs.push_back(csv.filename().string());

    json j = ctx.summary_base();
    const double m0Ref = *std::max_element(m0s.begin(), m0s.end());
    if (auto fit = fit_sweep(rows, m0Ref)) {
        j["results"]["fit"]["nu"] = fit->nu;
        j["results"]["fit"]["delta2_gf"] = fit->delta2GF;
        j["results"]["fit"]["inv_delta2_gf"] = 1.0 / fit->delta2GF;
        j["results"]["fit"]["amplitude"] = fit->amplitude;
        j["results"]["fit"]["residual"] = fit->residual;
        j["results"]["fit"]["window_inv_delta2"] = {fit->windowLo, fit->windowHi};
        j["results"]["fit"]["extrapolated"] = fit->extrapolated;
    }
    if (m0s.size() >= 2) {
        std::vector<gfse::CollapseSample> cs;
        for (const auto& r : rows)
            if (std::isfinite(r.tC)) cs.push_back({r.m0, r.delta2, r.tC});
        try {
            const auto col = gfse::collapse_initial_conditions(cs);
            j["results"]["collapse"]["a"] = col.a;
            j["results"]["collapse"]["log_base"] = 10;
            j["results"]["collapse"]["dispersion_before"] = col.dispersionBefore;
            j["results"]["collapse"]["dispersion_after"] = col.dispersionAfter;
        } catch (const std::exception& e) {
            j["results"]["collapse"]["error"] = e.what();
        }
    }
    write_plot_script(ctx, csv.filename().string(), "t_c vs 1/delta2",
                      {"set logscale y", "plot 'gf_sweep.csv' using (1/$1):2 with points pt 7"});
    ctx.write_summary(j);
    return kExitOk;
}

inline int cmd_amp_se(const CommonOpts& common, int p, double delta2, double deltaP, double m0,
                      double T, int maxiter, double tol) {
    io::Config inv;
    inv.set("p", std::to_string(p));
    inv.set("delta2", io::format_double(delta2));
    inv.set("deltap", io::format_double(deltaP));
    inv.set("m0", io::format_double(m0));
    inv.set("T", io::format_double(T));
    auto ctx = make_ctx("amp-se", common, inv);

    const auto params = make_params(p, delta2, deltaP);
    const auto csv = ctx.path("amp_se_trajectory.csv");
    io::CsvWriter w(csv.string());
    ctx.provenance(w);
    w.header({"t", "m", "q", "mse"});

    json j = ctx.summary_base();
    if (T > 0.0) {
        const auto tr = mlamp::finite_t_se_run(params, m0, 1.0, T, maxiter, tol);
        for (std::size_t i = 0; i < tr.mSeq.size(); ++i)
            w.row({static_cast<double>(i), tr.mSeq[i], tr.qSeq[i],
                   mlamp::finite_t_mse(tr.mSeq[i], tr.qSeq[i])});
        j["results"]["fixed_point_m"] = tr.fixedPoint;
        j["results"]["converged"] = tr.converged;
    } else {
        const auto tr = mlamp::se_run(params, m0, maxiter, tol);
        for (std::size_t i = 0; i < tr.mSeq.size(); ++i)
            w.row({static_cast<double>(i), tr.mSeq[i], 1.0, mlamp::se_mse(tr.mSeq[i])});
        j["results"]["fixed_point_m"] = tr.fixedPoint;
        j["results"]["mse"] = mlamp::se_mse(tr.fixedPoint);
        j["results"]["converged"] = tr.converged;
        json fps = json::array();
        for (const auto& fp : mlamp::se_fixed_points(params)) {
            json f;
            f["m"] = fp.m;
            f["stable"] = fp.stable;
            f["derivative"] = fp.derivative;
            fps.push_back(f);
        }
        j["results"]["fixed_points"] = fps;
    }
    ctx.outputs.push_back(csv.filename().string());
    write_plot_script(ctx, csv.filename().string(), "state evolution",
                      {"plot 'amp_se_trajectory.csv' using 1:2 with linespoints"});
    ctx.write_summary(j);
    return kExitOk;
}

inline int cmd_amp_run(const CommonOpts& common, int p, double delta2, double deltaP, int n,
                       std::uint64_t seed, double m0, int maxiter, double tol, double damping,
                       const std::string& saveInst, const std::string& loadInst) {
    io::Config inv;
    inv.set("p", std::to_string(p));
    inv.set("delta2", io::format_double(delta2));
    inv.set("deltap", io::format_double(deltaP));
    inv.set("n", std::to_string(n));
    inv.set("instance_seed", std::to_string(seed));
    inv.set("m0", io::format_double(m0));
    auto ctx = make_ctx("amp-run", common, inv);

    const auto params = make_params(p, delta2, deltaP);
    model::SpikedInstance inst;
    if (!loadInst.empty()) {
        inst = model::load_instance(loadInst);
        if (inst.p != p) throw std::runtime_error("loaded instance has p mismatch");
    } else {
        inst = model::sample_instance(params, n, seed);
    }
    if (!saveInst.empty()) {
        model::save_instance((ctx.dir / saveInst).string(), inst);
        ctx.outputs.push_back(saveInst);
    }

    Rng rng(seed + 1);
    std::vector<double> x0 = (m0 > 0.0) ? model::init_with_overlap(inst, m0, rng)
                                        : sphere_vector(inst.n, rng);
    const auto run = mlamp::amp_run(inst, params, x0, maxiter, tol, damping);

    const auto csv = ctx.path("amp_run.csv");
    io::CsvWriter w(csv.string());
    ctx.provenance(w);
    w.header({"t", "m", "residual"});
    for (std::size_t i = 0; i < run.overlaps.size(); ++i)
        w.row({static_cast<double>(i), run.overlaps[i],
               i == 0 ? std::numeric_limits<double>::quiet_NaN() : run.increments[i - 1]});
    ctx.outputs.push_back(csv.filename().string());

    json j = ctx.summary_base();
    j["results"]["converged"] = run.converged;
    j["results"]["iterations"] = run.iterations;
    j["results"]["final_m"] = run.overlaps.back();
    j["results"]["stationarity_residual"] =
        mlamp::stationarity_residual(run.state.xhat, inst, params);
    write_plot_script(ctx, csv.filename().string(), "finite-N ML-AMP",
                      {"plot 'amp_run.csv' using 1:2 with linespoints"});
    ctx.write_summary(j);
    return kExitOk;
}

inline int cmd_spinodal(const CommonOpts& common, int p, const std::string& deltapSpec) {
    io::Config inv;
    inv.set("p", std::to_string(p));
    inv.set("deltap", deltapSpec);
    auto ctx = make_ctx("spinodal", common, inv);

    const auto dps = io::parse_range(deltapSpec).values();
    const auto sc = mlamp::spinodal_curves(p, dps);

    const auto csv = ctx.path("spinodal_curves.csv");
    io::CsvWriter w(csv.string());
    ctx.provenance(w);
    w.header({"deltaP", "delta2_alg", "delta2_dyn", "hybrid_flag"});
    for (std::size_t i = 0; i < dps.size(); ++i)
        w.row({dps[i], sc.delta2Alg[i], sc.delta2Dyn[i].delta2,
               sc.hybridFlag[i] ? 1.0 : 0.0});
    ctx.outputs.push_back(csv.filename().string());

    json j = ctx.summary_base();
    if (sc.tricritical.exists) {
        j["results"]["tricritical"]["delta2"] = sc.tricritical.delta2;
        j["results"]["tricritical"]["deltaP"] = sc.tricritical.deltaP;
    } else {
        j["results"]["tricritical"] = nullptr;
    }
    write_plot_script(ctx, csv.filename().string(), "spinodals",
                      {"set logscale x",
                       "plot 'spinodal_curves.csv' using 1:(1/$2) with lines title 'algorithmic', "
                       "'spinodal_curves.csv' using 1:(1/$3) with lines title 'dynamical'"});
    ctx.write_summary(j);
    return kExitOk;
}

inline int cmd_phase_diagram(const CommonOpts& common, int p, const std::string& deltapSpec,
                             bool withGF, bool withDisconnect, const GFSweepSettings& gfs) {
    io::Config inv;
    inv.set("p", std::to_string(p));
    inv.set("deltap", deltapSpec);
    inv.set("with_gf", withGF ? "true" : "false");
    auto ctx = make_ctx("phase-diagram", common, inv);

    PhaseDiagram d;
    d.p = p;
    d.deltaPs = io::parse_range(deltapSpec).values();
    d.seed = common.seed;
    d.timestamp = io::iso_timestamp();
    const std::size_t K = d.deltaPs.size();
    d.delta2Triv.assign(K, std::numeric_limits<double>::quiet_NaN());
    d.delta2Disconnect.assign(K, std::numeric_limits<double>::quiet_NaN());
    d.delta2MLAMP.assign(K, 0.0);
    d.delta2Dyn.assign(K, std::numeric_limits<double>::quiet_NaN());
    d.delta2GF.assign(K, std::numeric_limits<double>::quiet_NaN());

    parallel_for(K, common.threads, [&](std::size_t i) {
        const double dp = d.deltaPs[i];
        d.delta2MLAMP[i] = mlamp::algorithmic_spinodal(dp);
        const auto dyn = mlamp::dynamical_spinodal(dp, p);
        if (dyn.exists) d.delta2Dyn[i] = dyn.delta2;
        d.delta2Triv[i] = kacrice::trivialization_threshold(dp, p);
        if (withDisconnect) d.delta2Disconnect[i] = kacrice::disconnection_threshold(dp, p);
    });

    if (withGF) {
        parallel_for(K, common.threads, [&](std::size_t i) {
            const double dp = d.deltaPs[i];
            // sample above the stability line where the flow still converges
            const double invAmp = 1.0 / d.delta2MLAMP[i];
            std::vector<double> d2s;
            for (int k = 0; k < 8; ++k) {
                const double inv = invAmp * (1.28 + (1.72 - 1.28) * k / 7.0);
                d2s.push_back(1.0 / inv);
            }
            const auto rows = gf_sweep(p, dp, d2s, {1e-10}, gfs, 1);
            if (auto fit = fit_sweep(rows, 1e-10)) d.delta2GF[i] = fit->delta2GF;
        });
    }

    const auto csv = ctx.path("phase_diagram.csv");
    io::CsvWriter w(csv.string());
    ctx.provenance(w);
    w.header({"deltaP", "delta2_triv", "delta2_disconnect", "delta2_mlamp", "delta2_dyn",
              "delta2_gf"});
    for (std::size_t i = 0; i < K; ++i)
        w.row({d.deltaPs[i], d.delta2Triv[i], d.delta2Disconnect[i], d.delta2MLAMP[i],
               d.delta2Dyn[i], d.delta2GF[i]});
    ctx.outputs.push_back(csv.filename().string());

    const auto rep = validate_ordering(d);
    json j = ctx.summary_base();
    j["results"]["ordering_ok"] = rep.all_ok;
    j["results"]["ordering_comparisons"] = rep.comparisons;
    json rows = json::array();
    for (const auto& r : rep.rows) {
        json rr;
        rr["deltaP"] = r.deltaP;
        rr["ok"] = r.ok;
        if (!r.detail.empty()) rr["detail"] = r.detail;
        rows.push_back(rr);
    }
    j["results"]["ordering_rows"] = rows;
    write_plot_script(
        ctx, csv.filename().string(), "phase diagram",
        {"set logscale x", "set xlabel 'deltaP'", "set ylabel '1/delta2'",
         "plot 'phase_diagram.csv' using 1:(1/$2) with lines title 'trivialization', "
         "'phase_diagram.csv' using 1:(1/$4) with lines title 'ML-AMP', "
         "'phase_diagram.csv' using 1:(1/$5) with lines title 'dynamical', "
         "'phase_diagram.csv' using 1:(1/$6) with points title 'GF'"});
    ctx.write_summary(j);
    return kExitOk;
}

} // namespace detail

inline int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"spiked matrix-tensor landscape and algorithm toolkit"};
    app.require_subcommand(1);
    app.set_config("--config", "", "flat key = value config with [subcommand] sections");
    app.allow_config_extras(false);

    CommonOpts common;
    common.outdir = default_outdir();
    app.add_option("--out", common.outdir, "output directory (default: $SMT_OUTDIR or .)")
        ->envname("SMT_OUTDIR");
    app.add_option("--threads", common.threads, "worker pool size");
    app.add_option("--seed", common.seed, "base RNG seed recorded in provenance");

    int p = 3;
    double delta2 = 0.5, deltaP = 1.0, m0 = 1e-10, h0 = 0.01, tmax = 1000.0, hmax = 0.64;
    double T = 0.0, tol = 1e-8, damping = 0.0;
    int grid = 2048, n = 500, maxiter = 200;
    std::uint64_t instSeed = 1;
    std::string mgrid, deltapSpec = "1", delta2Spec = "0.5", m0List = "1e-10";
    std::string kind = "both", dump, saveInst, loadInst;
    bool withGF = false, withDisconnect = true;

    auto* cComplexity = app.add_subcommand("complexity", "Sigma(m) curve");
    cComplexity->add_option("--p", p)->required();
    cComplexity->add_option("--delta2", delta2)->required();
    cComplexity->add_option("--deltap", deltaP)->required();
    cComplexity->add_option("--mgrid", mgrid, "0:maxm:count, symmetric grid spec");

    auto* cThreshold = app.add_subcommand("threshold", "trivialization / disconnection");
    cThreshold->add_option("--p", p)->required();
    cThreshold->add_option("--deltap", deltapSpec)->required();
    cThreshold->add_option("--kind", kind, "triv | disconnect | both");

    auto* cGf = app.add_subcommand("gf", "single gradient-flow state-evolution run");
    cGf->add_option("--p", p)->required();
    cGf->add_option("--delta2", delta2)->required();
    cGf->add_option("--deltap", deltaP)->required();
    cGf->add_option("--m0", m0);
    cGf->add_option("--h0", h0);
    cGf->add_option("--tmax", tmax);
    cGf->add_option("--grid", grid);
    cGf->add_option("--hmax", hmax);
    cGf->add_option("--dump-twotimes", dump, "binary two-time dump filename");

    auto* cGfSweep = app.add_subcommand("gf-sweep", "t_c vs delta2 sweep + power-law fit");
    cGfSweep->add_option("--p", p)->required();
    cGfSweep->add_option("--deltap", deltaP)->required();
    cGfSweep->add_option("--delta2", delta2Spec, "min:max:count[:log]")->required();
    cGfSweep->add_option("--m0", m0List, "comma-separated initial overlaps");
    cGfSweep->add_option("--h0", h0);
    cGfSweep->add_option("--tmax", tmax);
    cGfSweep->add_option("--grid", grid);
    cGfSweep->add_option("--hmax", hmax);

    auto* cAmpSe = app.add_subcommand("amp-se", "state evolution trajectory / fixed points");
    cAmpSe->add_option("--p", p)->required();
    cAmpSe->add_option("--delta2", delta2)->required();
    cAmpSe->add_option("--deltap", deltaP)->required();
    cAmpSe->add_option("--m0", m0);
    cAmpSe->add_option("--T", T, "temperature; 0 = maximum-likelihood limit");
    cAmpSe->add_option("--maxiter", maxiter);
    cAmpSe->add_option("--tol", tol);

    auto* cAmpRun = app.add_subcommand("amp-run", "finite-N ML-AMP on a sampled instance");
    cAmpRun->add_option("--p", p)->required();
    cAmpRun->add_option("--delta2", delta2)->required();
    cAmpRun->add_option("--deltap", deltaP)->required();
    cAmpRun->add_option("--n", n)->required();
    cAmpRun->add_option("--instance-seed", instSeed);
    cAmpRun->add_option("--m0", m0, "exact initial overlap; 0 = random init");
    cAmpRun->add_option("--maxiter", maxiter);
    cAmpRun->add_option("--tol", tol);
    cAmpRun->add_option("--damping", damping);
    cAmpRun->add_option("--save-instance", saveInst);
    cAmpRun->add_option("--load-instance", loadInst);

    auto* cSpinodal = app.add_subcommand("spinodal", "algorithmic / dynamical spinodals");
    cSpinodal->add_option("--p", p)->required();
    cSpinodal->add_option("--deltap", deltapSpec)->required();

    auto* cPhase = app.add_subcommand("phase-diagram", "assemble the phase boundaries");
    cPhase->add_option("--p", p)->required();
    cPhase->add_option("--deltap", deltapSpec)->required();
    cPhase->add_flag("--with-gf", withGF, "also extrapolate the gradient-flow line (slow)");
    cPhase->add_flag("!--no-disconnect", withDisconnect, "skip the disconnection line");
    cPhase->add_option("--tmax", tmax);
    cPhase->add_option("--grid", grid);

    try {
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (cComplexity->parsed())
            return detail::cmd_complexity(common, p, delta2, deltaP, mgrid);
        if (cThreshold->parsed()) return detail::cmd_threshold(common, p, deltapSpec, kind);
        if (cGf->parsed())
            return detail::cmd_gf(common, p, delta2, deltaP, m0, h0, tmax, grid, hmax, dump);
        if (cGfSweep->parsed())
            return detail::cmd_gf_sweep(common, p, deltaP, delta2Spec, m0List, h0, tmax, grid,
                                        hmax);
        if (cAmpSe->parsed())
            return detail::cmd_amp_se(common, p, delta2, deltaP, m0, T, maxiter, tol);
        if (cAmpRun->parsed())
            return detail::cmd_amp_run(common, p, delta2, deltaP, n, instSeed, m0, maxiter, tol,
                                       damping, saveInst, loadInst);
        if (cSpinodal->parsed()) return detail::cmd_spinodal(common, p, deltapSpec);
        if (cPhase->parsed()) {
            GFSweepSettings gfs;
            gfs.tMax = tmax;
            gfs.grid = grid;
            return detail::cmd_phase_diagram(common, p, deltapSpec, withGF, withDisconnect, gfs);
        }
        return kExitConfig;
    } catch (const IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return kExitIo;
    } catch (const CLI::Error& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "compute error: %s\n", e.what());
        return kExitCompute;
    }
}

} // namespace smt::cli
