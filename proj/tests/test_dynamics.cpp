#include <doctest.h>

#include <cmath>
#include <numbers>

#include "ballns/diagnostics.hpp"
#include "ballns/dynamics.hpp"
#include "ballns/run.hpp"

using namespace ballns;

namespace {

SteadyStateParams rotating(double omega = 0.05) {
    SteadyStateParams p;
    p.omega_bar = omega;
    return p;
}

double l2(const ScalarField& f, const MeridianGrid& g) {
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) s += g.weights()[i] * f.v[i] * f.v[i];
    return std::sqrt(s);
}

double l2(const VectorField& f, const MeridianGrid& g) {
    return std::hypot(l2(f.r, g), l2(f.th, g), l2(f.ph, g));
}

double max_abs(const ScalarField& f) {
    double m = 0.0;
    for (double x : f.v) m = std::max(m, std::abs(x));
    return m;
}

double max_abs(const VectorField& f) { return std::max({max_abs(f.r), max_abs(f.th), max_abs(f.ph)}); }

ScalarField minus(const ScalarField& a, const ScalarField& b) {
    ScalarField c = a;
    for (std::size_t i = 0; i < c.v.size(); ++i) c.v[i] -= b.v[i];
    return c;
}

VectorField minus(const VectorField& a, const VectorField& b) {
    VectorField c = a;
    c.r = minus(a.r, b.r);
    c.th = minus(a.th, b.th);
    c.ph = minus(a.ph, b.ph);
    return c;
}

PerturbationState scaled(const PerturbationState& s, double c) {
    PerturbationState o = s;
    for (ScalarField* f : {&o.q, &o.v.r, &o.v.th, &o.v.ph})
        for (double& x : f->v) x *= c;
    return o;
}

double state_distance(const PerturbationState& a, const PerturbationState& b, const MeridianGrid& g) {
    return std::hypot(l2(minus(a.q, b.q), g), l2(minus(a.v, b.v), g));
}

// Smooth axisymmetric density perturbation with zero normal gradient at the wall.
ScalarField smooth_q(const MeridianGrid& g, double eps) {
    return sample(g, [&](double r, double t) {
        const double z = r * std::cos(t);
        return eps * (1.0 + 0.5 * z + 0.3 * r * r * (1.0 - 0.5 * r * r) * std::sin(t) * std::sin(t));
    });
}

}  // namespace

TEST_SUITE("dynamics") {

TEST_CASE("equilibrium") {
    const MeridianGrid g(16, 16);
    for (Mode m : {Mode::Nonlinear, Mode::Linearized}) {
        const Solver S(g, rotating(), m);
        const PerturbationState zero(g);
        const RHSBreakdown b = S.rhs(zero);
        for (const ScalarField* f : {&b.continuity_linear, &b.transport, &b.g1, &b.stabilization_q, &b.filter_q})
            CHECK(max_abs(*f) == 0.0);
        for (const VectorField* f : {&b.momentum_pressure, &b.momentum_viscous, &b.f2, &b.g2, &b.advection, &b.stabilization_v,
                                     &b.filter_v, &b.pressure_split_linear, &b.remainder_gradient})
            CHECK(max_abs(*f) == 0.0);
        PerturbationState s = zero;
        S.step(s, 1e-3);
        CHECK(s.q == zero.q);
        CHECK(s.v == zero.v);
        CHECK(s.t == 1e-3);
        const Solver::Ghosts gh = S.wall_ghosts(zero);
        for (const auto* v : {&gh.q, &gh.vr, &gh.vt, &gh.vp})
            for (double x : *v) CHECK(x == 0.0);
    }
}

TEST_CASE("breakdown sums to the tendency") {
    const MeridianGrid g(16, 16);
    const SteadyStateParams p = rotating();
    const PerturbationState s = make_initial_perturbation(1e-3, {}, make_steady_field(p, g), g, 5);
    for (bool filter : {true, false}) {
        SolverOptions o;
        o.filter = filter;
        const Solver S(g, p, Mode::Nonlinear, o);
        const RHSBreakdown b = S.rhs(s);
        ScalarField dq;
        VectorField dv;
        S.tendency(s, dq, dv);
        CHECK(max_abs(minus(b.total_q(), dq)) <= 1e-13 * max_abs(dq));
        CHECK(max_abs(minus(b.total_v(), dv)) <= 1e-13 * max_abs(dv));
        if (!filter) {
            CHECK(max_abs(b.filter_q) == 0.0);
            CHECK(max_abs(b.filter_v) == 0.0);
        }
    }
}

TEST_CASE("linearized and nonlinear tendencies differ at second order") {
    const MeridianGrid g(16, 16);
    const SteadyStateParams p = rotating();
    const PerturbationState base = make_initial_perturbation(1e-2, {}, make_steady_field(p, g), g, 2);
    const Solver nl(g, p, Mode::Nonlinear), lin(g, p, Mode::Linearized);
    auto gap = [&](double c) {
        const PerturbationState s = scaled(base, c);
        ScalarField aq, bq;
        VectorField av, bv;
        nl.tendency(s, aq, av);
        lin.tendency(s, bq, bv);
        return std::hypot(l2(minus(aq, bq), g), l2(minus(av, bv), g));
    };
    const double e1 = gap(1.0), e2 = gap(0.5), e3 = gap(0.25);
    CHECK(e1 > 0.0);
    CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.05));
    CHECK(e2 / e3 == doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("split and unsplit pressure agree to second order") {
    const SteadyStateParams p = rotating(0.3);
    std::vector<double> err;
    for (int n : {16, 32, 64}) {
        const MeridianGrid g(n, n);
        PerturbationState s(g);
        s.q = smooth_q(g, 1e-2);
        const RHSBreakdown b = Solver(g, p, Mode::Nonlinear).rhs(s);
        VectorField split = b.pressure_split_linear;
        for (std::size_t i = 0; i < g.size(); ++i) {
            split.r.v[i] += b.remainder_gradient.r.v[i];
            split.th.v[i] += b.remainder_gradient.th.v[i];
        }
        err.push_back(l2(minus(split, b.momentum_pressure), g) / l2(b.momentum_pressure, g));
    }
    CHECK(err[0] < 1e-2);
    CHECK(err[0] / err[1] > 3.0);
    CHECK(err[1] / err[2] > 3.0);
}

TEST_CASE("slip ghosts") {
    const MeridianGrid g(16, 16);
    const SteadyStateParams p = rotating();
    const Solver S(g, p, Mode::Nonlinear);
    const double rg = 1.0 + 0.5 * g.dr();

    SUBCASE("rigid rotation extends analytically") {
        PerturbationState s(g);
        s.v.ph = sample(g, [](double r, double t) { return 0.2 * r * std::sin(t); });
        const Solver::Ghosts gh = S.wall_ghosts(s);
        for (int k = 0; k < g.ntheta(); ++k) CHECK(gh.vp[k] == doctest::Approx(0.2 * rg * g.sin_theta(k)).epsilon(1e-13));
        CHECK(std::abs(S.boundary_work(s)) <= 1e-14);
    }

    SUBCASE("boundary work is negligible against dissipation") {
        for (std::uint64_t seed : {1, 2, 3}) {
            const PerturbationState s = make_initial_perturbation(1e-3, {}, S.steady(), g, seed);
            const double D0 = basic_energy(s, S.steady(), p, g).D0;
            REQUIRE(D0 > 0.0);
            CHECK(std::abs(S.boundary_work(s)) <= 1e-10 * D0);
            const Solver::Ghosts gh = S.wall_ghosts(s);
            for (int k = 0; k < g.ntheta(); ++k) {
                CHECK(gh.vr[k] == doctest::Approx(-s.v.r(g.nr() - 1, k)).epsilon(1e-14));
                CHECK(gh.q[k] == s.q(g.nr() - 1, k));
            }
        }
    }
}

TEST_CASE("stable time step") {
    SteadyStateParams p;
    p.mu = 1e-12;  // viscous bound far above the acoustic one
    p.lambda = 1e-12;
    const MeridianGrid g(16, 16);
    const Solver S(g, p, Mode::Nonlinear);
    // rho = 1, gamma = 2: c = sqrt(2)
    CHECK(S.stable_dt(PerturbationState(g), 0.4, 0.25) == doctest::Approx(0.4 * S.min_spacing() / std::sqrt(2.0)).epsilon(1e-14));

    const SteadyStateParams v;
    const double a = Solver(MeridianGrid(16, 16), v, Mode::Nonlinear).stable_dt(PerturbationState(MeridianGrid(16, 16)), 0.4, 0.25);
    const double b = Solver(MeridianGrid(32, 32), v, Mode::Nonlinear).stable_dt(PerturbationState(MeridianGrid(32, 32)), 0.4, 0.25);
    CHECK(b / a == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(a == doctest::Approx(0.25 * S.min_spacing() * S.min_spacing() / 3.0).epsilon(1e-12));
}

TEST_CASE("step is fourth order in time") {
    const MeridianGrid g(12, 12);
    const SteadyStateParams p = rotating();
    const Solver S(g, p, Mode::Nonlinear);
    const PerturbationState s0 = make_initial_perturbation(1e-3, {}, S.steady(), g, 4);
    const double dt = S.stable_dt(s0, 0.4, 0.25);
    const int n = 16;
    auto advance = [&](int refine) {
        PerturbationState s = s0;
        for (int i = 0; i < n * refine; ++i) S.step(s, dt / refine);
        return s;
    };
    const PerturbationState ref = advance(32);
    const double e1 = state_distance(advance(1), ref, g), e2 = state_distance(advance(2), ref, g),
                 e4 = state_distance(advance(4), ref, g);
    MESSAGE("time errors " << e1 << " " << e2 << " " << e4);
    CHECK(e1 / e2 > 12.0);
    CHECK(e2 / e4 > 12.0);
}

TEST_CASE("oversized step is detected") {
    const MeridianGrid g(16, 16);
    const Solver S(g, rotating(), Mode::Nonlinear);
    PerturbationState s = make_initial_perturbation(1e-3, {}, S.steady(), g, 1);
    const double dt = 50.0 * S.stable_dt(s, 0.4, 0.25);
    bool caught = false;
    try {
        for (int i = 0; i < 2000; ++i) S.step(s, dt);
    } catch (const BlowUpError&) {
        caught = true;
    } catch (const VacuumError&) {
        caught = true;
    }
    CHECK(caught);
}

TEST_CASE("initial perturbation") {
    const MeridianGrid g(24, 24);
    const SteadyStateParams p = rotating();
    const SteadyStateField st = make_steady_field(p, g);
    const ConservedQuantities ref = conserved_quantities(PerturbationState(g), st, g);
    double m0 = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) m0 += g.weights()[i] * st.rho_bar.v[i];

    const PerturbationState z = make_initial_perturbation(0.0, {}, st, g, 1);
    CHECK(max_abs(z.q) == 0.0);
    CHECK(max_abs(z.v) == 0.0);

    for (const char* kind : {"random", "bump"})
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            const PerturbationState s = make_initial_perturbation(1e-3, {kind, 3}, st, g, seed);
            const ConservedQuantities c = conserved_quantities(s, st, g);
            CHECK(std::abs(c.mass - ref.mass) <= 1e-12 * m0);
            for (int i = 0; i < 3; ++i) CHECK(std::abs(c.L[i] - ref.L[i]) <= 1e-10 * std::abs(ref.L[2]));
            CHECK(max_abs(s.q) > 0.0);
            CHECK(max_abs(s.v) > 0.0);
        }

    CHECK(make_initial_perturbation(1e-3, {}, st, g, 9) == make_initial_perturbation(1e-3, {}, st, g, 9));
    CHECK_FALSE(make_initial_perturbation(1e-3, {}, st, g, 9) == make_initial_perturbation(1e-3, {}, st, g, 10));
    CHECK_THROWS_AS(make_initial_perturbation(2.0, {}, st, g, 1), VacuumError);
}

TEST_CASE("filter projection keeps the constraints") {
    const MeridianGrid g(24, 24);
    const Solver S(g, rotating(), Mode::Nonlinear);
    const PerturbationState s0 = make_initial_perturbation(1e-3, {}, S.steady(), g, 6);
    PerturbationState s = s0;
    S.project_filter(s);
    CHECK_FALSE(s == s0);
    const ConservedQuantities a = conserved_quantities(s0, S.steady(), g), b = conserved_quantities(s, S.steady(), g);
    CHECK(std::abs(a.mass - b.mass) <= 1e-14 * a.mass);
    CHECK(std::abs(a.L[2] - b.L[2]) <= 1e-13 * std::abs(a.L[2]));
    PerturbationState twice = s;
    S.project_filter(twice);
    CHECK(state_distance(twice, s, g) <= 1e-14 * state_distance(s, PerturbationState(g), g));

    // run() starts from the projected state
    SimConfig c;
    c.nr = c.ntheta = 24;
    c.params = rotating();
    c.t_end = 0.0;
    c.seed = 6;
    CHECK(run(c).final_state == s);
}

TEST_CASE("configuration errors") {
    CHECK_THROWS_AS(parse_mode("implicit"), ParameterError);
    CHECK(parse_mode(to_string(Mode::Linearized)) == Mode::Linearized);
    auto bad = [](auto edit) {
        SimConfig c;
        edit(c);
        return c;
    };
    CHECK_NOTHROW(SimConfig{}.validate());
    CHECK_THROWS_AS(bad([](SimConfig& c) { c.nr = 3; }).validate(), ParameterError);
    CHECK_THROWS_AS(bad([](SimConfig& c) { c.t_end = -1; }).validate(), ParameterError);
    CHECK_THROWS_AS(bad([](SimConfig& c) { c.cfl_acoustic = 1.5; }).validate(), ParameterError);
    CHECK_THROWS_AS(bad([](SimConfig& c) { c.cfl_viscous = 0.0; }).validate(), ParameterError);
    CHECK_THROWS_AS(bad([](SimConfig& c) { c.output_every = 0; }).validate(), ParameterError);
    CHECK_THROWS_AS(bad([](SimConfig& c) { c.shape = "ring"; }).validate(), ParameterError);
    CHECK_THROWS_AS(bad([](SimConfig& c) { c.params.gamma = 1.0; }).validate(), ParameterError);
    const MeridianGrid g(16, 16), h(8, 8);
    const Solver S(g, rotating(), Mode::Nonlinear);
    PerturbationState wrong(h);
    CHECK_THROWS_AS(S.step(wrong, 1e-3), GridError);
}

TEST_CASE("stepping is deterministic") {
    const MeridianGrid g(16, 16);
    const Solver S(g, rotating(), Mode::Nonlinear);
    const PerturbationState s0 = make_initial_perturbation(1e-3, {}, S.steady(), g, 7);
    const double dt = S.stable_dt(s0, 0.4, 0.25);
    PerturbationState a = s0, b = s0;
    for (int i = 0; i < 50; ++i) S.step(a, dt);
    for (int i = 0; i < 50; ++i) S.step(b, dt);
    CHECK(a == b);
}

}  // TEST_SUITE
