#include <doctest.h>

#include <cmath>
#include <numbers>

#include "ballns/diagnostics.hpp"
#include "ballns/dynamics.hpp"
#include "ballns/run.hpp"

using namespace ballns;
using std::numbers::pi;

namespace {

// rho_bar = 1 with u_bar = omega phi_3, independent of the centrifugal profile.
SteadyStateField unit_density(const MeridianGrid& g, double omega) {
    SteadyStateField f;
    f.rho_bar = sample(g, [](double, double) { return 1.0; });
    f.u_bar = VectorField(g);
    f.u_bar.ph = sample(g, [&](double r, double t) { return -omega * r * std::sin(t); });
    f.pressure_bar = f.rho_bar;
    return f;
}

double weighted(const MeridianGrid& g, double (*f)(double, double)) {
    double s = 0.0;
    for (int j = 0; j < g.nr(); ++j)
        for (int k = 0; k < g.ntheta(); ++k) s += g.weight(j, k) * f(g.r(j), g.theta(k));
    return s;
}

double s2(double r, double t) { return r * r * std::sin(t) * std::sin(t); }
double one(double, double) { return 1.0; }

std::vector<double> ticks(int n, double h) {
    std::vector<double> t(n);
    for (int i = 0; i < n; ++i) t[i] = i * h;
    return t;
}

}  // namespace

TEST_SUITE("diagnostics") {

TEST_CASE("conserved quantities of the base state") {
    const MeridianGrid g(32, 32);
    const ConservedQuantities c = conserved_quantities(PerturbationState(g), unit_density(g, 0.5), g);
    CHECK(c.L[2] == doctest::Approx(0.5 * weighted(g, s2)).epsilon(1e-13));
    CHECK(c.L[2] == doctest::Approx(0.5 * 8 * pi / 15).epsilon(2e-3));
    CHECK(c.L[0] == 0.0);
    CHECK(c.L[1] == 0.0);

    const ConservedQuantities z = conserved_quantities(PerturbationState(g), unit_density(g, 0.0), g);
    for (double L : z.L) CHECK(L == 0.0);
    CHECK(z.mass == doctest::Approx(weighted(g, one)).epsilon(1e-13));
    CHECK(z.mass == doctest::Approx(4 * pi / 3).epsilon(2e-3));
}

TEST_CASE("basic energy closed forms") {
    const MeridianGrid g(32, 32);
    SteadyStateParams p;
    const SteadyStateField st = unit_density(g, 0.0);
    const double eps = 1e-3;

    CHECK(basic_energy(PerturbationState(g), st, p, g).E0 == 0.0);
    CHECK(basic_energy(PerturbationState(g), st, p, g).D0 == 0.0);

    PerturbationState rot(g);
    rot.v.ph = sample(g, [&](double r, double t) { return -eps * r * std::sin(t); });
    const EnergyReport a = basic_energy(rot, st, p, g);
    CHECK(a.E0 == doctest::Approx(0.5 * eps * eps * weighted(g, s2)).epsilon(1e-13));
    CHECK(a.E0 == doctest::Approx(eps * eps * 4 * pi / 15).epsilon(2e-3));
    CHECK(std::abs(a.D0) <= 1e-12 * a.E0);

    PerturbationState dens(g);
    dens.q = sample(g, [&](double, double) { return eps; });
    const EnergyReport b = basic_energy(dens, st, p, g);
    CHECK(b.E0 == doctest::Approx(eps * eps * weighted(g, one)).epsilon(1e-13));
    CHECK(b.E0 == doctest::Approx(eps * eps * 4 * pi / 3).epsilon(2e-3));
    CHECK(b.D0 == 0.0);
}

TEST_CASE("linearized energy is quadratic") {
    const MeridianGrid g(16, 16);
    SteadyStateParams p;
    p.omega_bar = 0.05;
    const SteadyStateField st = make_steady_field(p, g);
    const PerturbationState s = make_initial_perturbation(1e-3, {}, st, g, 3);
    PerturbationState t = s;
    for (ScalarField* f : {&t.q, &t.v.r, &t.v.th, &t.v.ph})
        for (double& x : f->v) x *= 3.0;
    const EnergyReport a = basic_energy(s, st, p, g, Mode::Linearized), b = basic_energy(t, st, p, g, Mode::Linearized);
    CHECK(b.E0 == doctest::Approx(9.0 * a.E0).epsilon(1e-13));
    CHECK(b.D0 == doctest::Approx(9.0 * a.D0).epsilon(1e-13));
}

TEST_CASE("three point derivative") {
    // exact on quadratics
    auto f = [](double t) { return 2.0 - 3.0 * t + 0.7 * t * t; };
    auto df = [](double t) { return -3.0 + 1.4 * t; };
    const double h = 0.1, t0 = 1.3;
    for (int at = 0; at < 3; ++at)
        CHECK(three_point_derivative(f(t0), f(t0 + h), f(t0 + 2 * h), at, h) == doctest::Approx(df(t0 + at * h)).epsilon(1e-12));
    CHECK_THROWS_AS(three_point_derivative(0, 0, 0, 3, h), DiagnosticsError);
}

TEST_CASE("identity residual series") {
    const std::vector<double> t = ticks(6, 0.2), zero(6, 0.0);
    for (double r : energy_identity_residual(t, zero, zero, zero)) CHECK(r == 0.0);

    // E0 = e^{-t}, D0 = e^{-t}, rhs = 0 balances to the stencil error
    std::vector<double> e(6);
    for (int i = 0; i < 6; ++i) e[i] = std::exp(-t[i]);
    for (double r : energy_identity_residual(t, e, e, zero)) CHECK(std::abs(r) < 2e-2);

    std::vector<double> bent = t;
    bent[3] += 0.01;
    CHECK_THROWS_AS(energy_identity_residual(bent, zero, zero, zero), DiagnosticsError);
    CHECK_THROWS_AS(energy_identity_residual(ticks(2, 0.2), {0, 0}, {0, 0}, {0, 0}), DiagnosticsError);
}

TEST_CASE("linearized run balances the identity") {
    std::vector<double> res;
    for (int n : {16, 32}) {
        SimConfig c;
        c.nr = c.ntheta = n;
        c.params.omega_bar = 0.05;
        c.mode = Mode::Linearized;
        c.t_end = 0.1;
        c.output_every = 4 * n / 16;
        const RunResult r = run(c);
        double worst = 0.0, dmax = 0.0;
        for (const auto& row : r.rows) {
            worst = std::max(worst, row.residual);
            dmax = std::max(dmax, row.D0);
        }
        res.push_back(worst / dmax);
    }
    MESSAGE("linearized residuals " << res[0] << " " << res[1]);
    CHECK(res[0] < 0.1);
    CHECK(res[0] / res[1] >= 3.0);
    CHECK(res[0] / res[1] <= 6.0);
}

TEST_CASE("anisotropic norms") {
    const MeridianGrid g(32, 32);
    CHECK(anisotropic_norms(ScalarField(g), VectorField(g), g).grad_q == 0.0);

    const ScalarField r2 = sample(g, [](double r, double) { return r * r; });
    const AnisotropicNorms a = anisotropic_norms(r2, VectorField(g), g);
    CHECK(a.grad_T_q <= 1e-24);
    // x . grad r^2 = 2 r^2, so the norm is 4 int r^4 = 16 pi / 7
    CHECK(a.grad_N_q == doctest::Approx(16 * pi / 7).epsilon(2e-2));

    // support inside |x| < 1/2, where the cutoff is identically one
    const ScalarField bump = sample(g, [](double r, double t) {
        const double w = std::max(0.0, 0.16 - r * r);
        return w * w * w * (1.0 + 0.3 * r * std::cos(t));
    });
    const AnisotropicNorms b = anisotropic_norms(bump, VectorField(g), g);
    CHECK(b.grad_q > 0.0);
    CHECK(b.grad_psi_q == b.grad_q);
}

TEST_CASE("decay fit") {
    const std::vector<double> t = ticks(41, 0.5);
    std::vector<double> e(t.size()), h(t.size()), c(t.size(), 2.5), big(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        e[i] = std::exp(-0.5 * t[i]);
        h[i] = 1.0 / (1.0 + t[i]);
        big[i] = 1e6 * e[i];
    }
    const DecayFit a = fit_decay_rate(t, e);
    CHECK(a.sigma == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(a.r_squared == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(a.exponential);
    CHECK(a.t_start == 10.0);
    CHECK(a.samples == 21);
    CHECK(fit_decay_rate(t, big).sigma == doctest::Approx(a.sigma).epsilon(1e-12));

    const DecayFit b = fit_decay_rate(t, h, std::pair{0.0, 20.0});
    MESSAGE("algebraic decay r^2 " << b.r_squared);
    CHECK(b.r_squared < 0.99);
    CHECK_FALSE(b.exponential);

    const DecayFit k = fit_decay_rate(t, c);
    CHECK(k.sigma == 0.0);

    CHECK_THROWS_AS(fit_decay_rate(t, e, std::pair{19.0, 20.0}), DiagnosticsError);
    CHECK_THROWS_AS(fit_decay_rate({0, 1, 2}, {1, 1, 1}), DiagnosticsError);
    CHECK_THROWS_AS(fit_decay_rate(t, e, std::pair{5.0, 1.0}), DiagnosticsError);
}

}  // TEST_SUITE
