// Acceptance suite: one PASS / FAIL / N/A line per criterion, exit status 1 on any FAIL.

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "ballns/app.hpp"
#include "ballns/diagnostics.hpp"
#include "ballns/io.hpp"
#include "ballns/korn.hpp"

using namespace ballns;
using std::numbers::pi;

namespace {

enum class Verdict { pass, fail, na };

struct Outcome {
    Verdict v;
    std::string detail;
};

Outcome check(bool ok, std::string detail) { return {ok ? Verdict::pass : Verdict::fail, std::move(detail)}; }

std::string g(double x) {
    char b[32];
    std::snprintf(b, sizeof b, "%.4g", x);
    return b;
}

int failures = 0;

void report(const std::string& id, const std::string& name, double target_s, const std::function<std::vector<Outcome>()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<Outcome> outs;
    try {
        outs = body();
    } catch (const std::exception& e) {
        outs = {{Verdict::fail, std::string("error: ") + e.what()}};
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (std::size_t i = 0; i < outs.size(); ++i) {
        const char* tag = outs[i].v == Verdict::pass ? "PASS" : outs[i].v == Verdict::fail ? "FAIL" : "N/A ";
        if (outs[i].v == Verdict::fail) ++failures;
        const std::string sub = outs.size() > 1 ? std::string(1, static_cast<char>('a' + i)) : "";
        std::printf("%s  %s%s %s: %s\n", tag, id.c_str(), sub.c_str(), name.c_str(), outs[i].detail.c_str());
    }
    std::printf("      runtime %.1f s (target %g s)\n", sec, target_s);
    std::fflush(stdout);
}

SimConfig base(int n) {
    SimConfig c;
    c.nr = c.ntheta = n;
    c.params.gamma = 2.0;
    c.params.mu = c.params.lambda = 1.0;
    c.params.omega_bar = 0.05;
    c.amplitude = 1e-3;
    return c;
}

double max_residual_ratio(const RunResult& r) {
    double res = 0.0, d = 0.0;
    for (const auto& w : r.rows) {
        res = std::max(res, w.residual);
        d = std::max(d, w.D0);
    }
    return res / d;
}

// Largest drift of L1, L2, L3 relative to |L3(0)|; L1 and L2 start at zero.
std::array<double, 3> momentum_drift(const RunResult& r) {
    std::array<double, 3> d{};
    const auto& f = r.rows.front();
    for (const auto& w : r.rows) {
        d[0] = std::max(d[0], std::abs(w.L1 - f.L1));
        d[1] = std::max(d[1], std::abs(w.L2 - f.L2));
        d[2] = std::max(d[2], std::abs(w.L3 - f.L3));
    }
    for (double& x : d) x /= std::abs(f.L3);
    return d;
}

std::string slurp(const std::string& p) {
    const auto b = read_file(p);
    return {b.begin(), b.end()};
}

double cubic(const Vec3& x) {
    return 1.0 + x[0] - 2.0 * x[2] + x[0] * x[1] + 0.5 * x[2] * x[2] + x[0] * x[0] * x[2] - 0.7 * x[1] * x[2] * x[2] +
           0.3 * x[0] * x[1] * x[2];
}

// Every monomial of degree <= 3 plus one mixed cubic.
std::vector<std::function<double(const Vec3&)>> test_polynomials() {
    std::vector<std::function<double(const Vec3&)>> out;
    for (int d = 0; d <= 3; ++d)
        for (int a = d; a >= 0; --a)
            for (int b = d - a; b >= 0; --b) {
                const int c = d - a - b;
                out.push_back([a, b, c](const Vec3& x) { return std::pow(x[0], a) * std::pow(x[1], b) * std::pow(x[2], c); });
            }
    out.push_back(cubic);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ballns acceptance suite"};
    std::vector<int> only;
    app.add_option("criteria", only, "criterion numbers to run (default: all)");
    CLI11_PARSE(app, argc, argv);
    const std::set<int> pick(only.begin(), only.end());
    auto want = [&](int i) { return pick.empty() || pick.count(i); };

    if (want(1))
        report("1", "steady fixed point", 60, [] {
            std::string d;
            bool ok = true;
            for (int n : {64, 32}) {
                SimConfig c = base(n);
                c.amplitude = 0.0;
                c.t_end = 1.0;
                c.output_every = 100;
                const RunResult r = run(c);
                double e = 0.0;
                for (const auto& w : r.rows) e = std::max(e, w.E0);
                ok = ok && e <= 1e-20;
                d += (d.empty() ? "" : ", ") + std::string("max E0 ") + g(e) + " at " + std::to_string(n) + "x" + std::to_string(n);
            }
            return std::vector{check(ok, d + " (bound 1e-20)")};
        });

    if (want(2) || want(3))
        report("2-3", "momentum conservation and energy identity", 600, [&] {
            std::vector<RunResult> rs;
            for (int n : {32, 64}) {
                SimConfig c = base(n);
                c.t_end = 2.0;
                c.output_every = 10;
                rs.push_back(run(c));
            }
            std::vector<Outcome> out;
            const auto d32 = momentum_drift(rs[0]), d64 = momentum_drift(rs[1]);
            const double worst = std::max({d64[0], d64[1], d64[2]});
            if (want(2)) {
                out.push_back(check(worst <= 1e-6, "relative drift of L1, L2, L3 at 64x64: " + g(d64[0]) + ", " + g(d64[1]) + ", " +
                                                       g(d64[2]) + " (bound 1e-6)"));
                // A drift at the round-off floor has no truncation part left to shrink under refinement.
                const double floor = 1e3 * std::numeric_limits<double>::epsilon();
                const double w32 = std::max({d32[0], d32[1], d32[2]});
                if (w32 <= floor && worst <= floor)
                    out.push_back({Verdict::na, "drift at round-off floor on both grids (32x32 " + g(w32) + ", 64x64 " + g(worst) +
                                                    ", floor " + g(floor) + "): the scheme conserves L exactly, so no halving ratio exists"});
                else
                    out.push_back(check(w32 >= 3.0 * worst, "drift ratio 32x32 / 64x64 = " + g(w32 / worst) + " (need >= 3)"));
            }
            if (want(3)) {
                const double a = max_residual_ratio(rs[0]), b = max_residual_ratio(rs[1]);
                out.push_back(check(a / b >= 3.0 && a / b <= 6.0, "max residual / max D0: 32x32 " + g(a) + ", 64x64 " + g(b) +
                                                                      ", ratio " + g(a / b) + " (need [3, 6])"));
            }
            return out;
        });

    if (want(4))
        report("4", "exponential decay", 600, [] {
            SimConfig c = base(64);
            c.t_end = 20.0;
            c.output_every = 100;
            const RunResult r = run(c);
            std::vector<double> t, e;
            for (const auto& w : r.rows) {
                t.push_back(w.t);
                e.push_back(w.E0);
            }
            const DecayFit f = fit_decay_rate(t, e, std::pair{10.0, 20.0});
            return std::vector{check(f.sigma > 0.0 && f.r_squared >= 0.99, "sigma " + g(f.sigma) + ", r^2 " + g(f.r_squared) + " over " +
                                                                          std::to_string(f.samples) + " samples in [10, 20]")};
        });

    if (want(5))
        report("5", "rigid degeneracy", 1, [] {
            const auto d = rigid_degeneracy_check(MeridianGrid(64, 64));
            bool ok = true;
            std::string s;
            for (int i = 0; i < 3; ++i) {
                ok = ok && d[i].strain <= 1e-12 * d[i].gradient && std::abs(d[i].gradient - 8 * pi / 3) <= 1e-3;
                s += "phi" + std::to_string(i + 1) + " E " + g(d[i].strain) + " grad " + std::to_string(d[i].gradient) + "; ";
            }
            return std::vector{check(ok, s + "8 pi / 3 = " + std::to_string(8 * pi / 3))};
        });

    if (want(6))
        report("6", "Poincare-Morrey constant", 60, [] {
            BasisSpec s;
            s.degree = 4;
            const ConstantEstimate a = estimate_pm_constant(s, MeridianGrid(32, 32));
            const ConstantEstimate b = estimate_pm_constant(s, MeridianGrid(64, 64));
            const double rel = std::abs(a.value - b.value) / std::min(a.value, b.value);
            const bool ok = std::isfinite(a.value) && std::isfinite(b.value) && a.value > 0 && rel <= 0.1;
            return std::vector{check(ok, "32x32 " + g(a.value) + ", 64x64 " + g(b.value) + ", relative gap " + g(rel) + " (dim " +
                                             std::to_string(b.dimension) + ", need <= 0.1)")};
        });

    if (want(7))
        report("7", "vacuum threshold", 1, [] {
            const double m = vacuum_threshold_mass(1.0, 2.0, MeridianGrid(64, 64));
            const double rel = std::abs(m - 2 * pi / 15) / (2 * pi / 15);
            return std::vector{check(rel <= 1e-6, "mass " + std::to_string(m) + ", relative error " + g(rel) + " (bound 1e-6)")};
        });

    if (want(8))
        report("8", "commutator identities", 1, [] {
            // e[n][0]: [phi1, N] p over all cells; e[n][1]: [phi1, phi2] p - phi3 p on r, theta at least 1/8 from the ends;
            // e[n][2]: the latter over all cells, for information.
            double e[2][3] = {};
            for (int n : {32, 64}) {
                const MeridianGrid gr(n, n);
                for (const auto& p : test_polynomials()) {
                    const HarmonicField f = sample_harmonic(gr, p, 3);
                    auto D = [&](const HarmonicField& x, FrameKind k) { return directional_derivative(x, k, gr); };
                    const HarmonicField c1 = D(D(f, FrameKind::N), FrameKind::Phi1) - D(D(f, FrameKind::Phi1), FrameKind::N);
                    const HarmonicField c2 =
                        D(D(f, FrameKind::Phi2), FrameKind::Phi1) - D(D(f, FrameKind::Phi1), FrameKind::Phi2) - D(f, FrameKind::Phi3);
                    double* row = e[n == 64];
                    row[0] = std::max(row[0], max_abs(c1));
                    row[1] = std::max(row[1], max_abs(c2, n / 8));
                    row[2] = std::max(row[2], max_abs(c2));
                }
            }
            const double h2 = 1.0 / (64.0 * 64.0);
            return std::vector{
                check(e[1][0] <= h2, "max |[phi1, N] p| over all cells: 32x32 " + g(e[0][0]) + ", 64x64 " + g(e[1][0]) + " (bound dr^2 = " +
                                         g(h2) + ")"),
                check(e[0][1] / e[1][1] >= 3.0 && e[1][1] <= 1e-1,
                      "max |[phi1, phi2] p - phi3 p| on r, theta in [1/8, 7/8] of range: 32x32 " + g(e[0][1]) + ", 64x64 " + g(e[1][1]) +
                          ", ratio " + g(e[0][1] / e[1][1]) + " (need >= 3); all cells " + g(e[0][2]) + ", " + g(e[1][2]))};
        });

    if (want(9))
        report("9", "Korn-type ledger", 60, [] {
            const MeridianGrid gr(64, 64);
            SteadyStateParams p;
            p.omega_bar = 0.05;
            const SteadyStateField st = make_steady_field(p, gr);
            std::vector<PerturbationState> pairs;
            double C = 0.0;
            for (std::uint64_t seed = 1; seed <= 20; ++seed) {
                pairs.push_back(make_initial_perturbation(1e-3, {seed % 2 ? "random" : "bump", 3}, st, gr, seed));
                const KornTypeLedger l = verify_korn_type(pairs.back().q, pairs.back().v, st, 1.0, gr);
                C = std::max(C, l.lhs / l.rhs);
            }
            int held = 0;
            for (const auto& s : pairs) held += verify_korn_type(s.q, s.v, st, C, gr).satisfied;
            PerturbationState bad = pairs.front();
            for (int j = 0; j < gr.nr(); ++j)
                for (int k = 0; k < gr.ntheta(); ++k) bad.v.ph(j, k) -= 1e-3 * gr.r(j) * gr.sin_theta(k);
            bool rejected = false;
            try {
                verify_korn_type(bad.q, bad.v, st, C, gr);
            } catch (const HypothesisError&) {
                rejected = true;
            }
            return std::vector{check(held == 20 && std::isfinite(C), std::to_string(held) + "/20 pairs satisfy lhs <= C rhs with empirical C = " + g(C)),
                               check(rejected, rejected ? "momentum-violating pair rejected" : "momentum-violating pair accepted")};
        });

    if (want(10))
        report("10", "determinism and restart", 60, [] {
            namespace fs = std::filesystem;
            const fs::path dir = fs::temp_directory_path() / ("ballns_acceptance_" + std::to_string(::getpid()));
            fs::remove_all(dir);
            fs::create_directories(dir);
            std::ostringstream out, err;
            SimulateArgs a;
            a.overrides = {"grid=64x64", "omega=0.05", "t_end=0.01", "output_every=5", "checkpoint_every=300"};
            a.out = (dir / "a").string();
            int rc = cmd_simulate(a, out, err);
            a.out = (dir / "b").string();
            rc = std::max(rc, cmd_simulate(a, out, err));
            bool same = rc == 0;
            std::size_t nfiles = 0;
            for (const auto& f : fs::directory_iterator(dir / "a")) {
                if (f.path().filename() == "manifest.json") continue;
                same = same && slurp(f.path().string()) == slurp((dir / "b" / f.path().filename()).string());
                ++nfiles;
            }
            const std::string full = slurp((dir / "a" / "diagnostics.csv").string());
            int restarts = 0, exact = 0;
            for (const auto& f : fs::directory_iterator(dir / "a")) {
                if (f.path().extension() != ".bin") continue;
                SimulateArgs r = a;
                r.restart = f.path().string();
                r.out = (dir / ("r" + std::to_string(restarts++))).string();
                if (cmd_simulate(r, out, err) != 0) continue;
                const std::string tail = slurp(r.out + "/diagnostics.csv").substr(csv_header().size() + 1);
                exact += !tail.empty() && full.size() > tail.size() && full.compare(full.size() - tail.size(), tail.size(), tail) == 0;
            }
            fs::remove_all(dir);
            return std::vector{check(same && nfiles >= 2, std::to_string(nfiles) + " output files byte-identical across two runs"),
                               check(restarts >= 2 && exact == restarts, std::to_string(exact) + "/" + std::to_string(restarts) +
                                                                             " restarts reproduce the remaining rows exactly")};
        });

    std::printf("%s: %d failing criteria\n", failures ? "FAILED" : "OK", failures);
    return failures ? 1 : 0;
}
