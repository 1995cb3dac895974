#include <doctest.h>

#include <cmath>
#include <numbers>

#include "ballns/geometry.hpp"

using namespace ballns;
using std::numbers::pi;

namespace {

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

// Lie bracket by central differences of the frame fields themselves, independent of frame_matrix.
Vec3 bracket_fd(FrameKind a, FrameKind b, const Vec3& x) {
    const double h = 1e-4;
    auto dirderiv = [&](FrameKind along, FrameKind of) {
        const Vec3 d = evaluate_frame(along, x);
        Vec3 xp = x, xm = x;
        for (int i = 0; i < 3; ++i) {
            xp[i] += h * d[i];
            xm[i] -= h * d[i];
        }
        const Vec3 fp = evaluate_frame(of, xp), fm = evaluate_frame(of, xm);
        return Vec3{(fp[0] - fm[0]) / (2 * h), (fp[1] - fm[1]) / (2 * h), (fp[2] - fm[2]) / (2 * h)};
    };
    const Vec3 ab = dirderiv(a, b), ba = dirderiv(b, a);
    return {ab[0] - ba[0], ab[1] - ba[1], ab[2] - ba[2]};
}

double cubic(const Vec3& x) {
    return 1.0 + x[0] - 2.0 * x[2] + x[0] * x[1] + 0.5 * x[2] * x[2] + x[0] * x[0] * x[2] - 0.7 * x[1] * x[2] * x[2] + 0.3 * x[0] * x[1] * x[2];
}

}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("grid construction") {
    const MeridianGrid g = build_meridian_grid(4, 4);
    CHECK(g.size() == 16);
    for (int j = 0; j < 4; ++j)
        for (int k = 0; k < 4; ++k) {
            CHECK(g.weight(j, k) > 0.0);
            CHECK(g.r(j) > 0.0);
            CHECK(g.r(j) < 1.0);
            CHECK(g.theta(k) > 0.0);
            CHECK(g.theta(k) < pi);
        }
    CHECK_THROWS_AS(build_meridian_grid(3, 8), GridError);
    CHECK_THROWS_WITH(build_meridian_grid(3, 8), "grid too coarse");
    CHECK_THROWS_AS(build_meridian_grid(8, 3), GridError);
}

TEST_CASE("weights follow the cell measure") {
    const MeridianGrid g(8, 6);
    for (int j = 0; j < 8; ++j)
        for (int k = 0; k < 6; ++k)
            CHECK(g.weight(j, k) == doctest::Approx(2 * pi * g.r(j) * g.r(j) * std::sin(g.theta(k)) * g.dr() * g.dtheta()).epsilon(1e-14));
}

TEST_CASE("volume and second moment") {
    const MeridianGrid g(64, 64);
    const double vol = integrate(ScalarField(g, 1.0), g);
    CHECK(std::abs(vol - 4 * pi / 3) / (4 * pi / 3) < 1e-3);
    CHECK(integrate(ScalarField(g, 0.0), g) == 0.0);
    // int (x1^2 + x2^2) = 8 pi / 15, second order under refinement
    double err[2];
    for (int n : {32, 64}) {
        const MeridianGrid h(n, n);
        const ScalarField f = sample(h, [](double r, double t) { return r * r * std::sin(t) * std::sin(t); });
        err[n == 64] = std::abs(integrate(f, h) - 8 * pi / 15);
    }
    CHECK(err[1] < 1e-3);
    CHECK(err[0] / err[1] == doctest::Approx(4.0).epsilon(0.1));
}

TEST_CASE("integrate rejects shape mismatch") {
    const MeridianGrid g(8, 8), h(8, 10);
    CHECK_THROWS_AS(integrate(ScalarField(h, 1.0), g), GridError);
}

TEST_CASE("frame values and tangency") {
    const Vec3 a = evaluate_frame(FrameKind::Phi1, {0, 0, 1});
    CHECK(a == Vec3{0, 1, 0});
    const Vec3 n = evaluate_frame(FrameKind::N, {0.3, 0, 0.4});
    CHECK(n == Vec3{0.3, 0, 0.4});
    const Vec3 x{0.2, -0.7, 0.35};
    CHECK(evaluate_frame(FrameKind::Phi3, x) == Vec3{x[1], -x[0], 0});
    for (FrameKind k : {FrameKind::Phi1, FrameKind::Phi2, FrameKind::Phi3}) CHECK(dot(evaluate_frame(k, x), x) == 0.0);
}

TEST_CASE("cutoff profile") {
    CHECK(cutoff_psi({0.4, 0, 0}) == 1.0);
    CHECK(cutoff_psi({0, 0.8, 0}) == 0.0);
    const double v = cutoff_psi_radial(0.625);
    CHECK(v > 0.0);
    CHECK(v < 1.0);
    double maxslope = 0.0;
    for (int i = 0; i <= 2000; ++i) {
        const double r = 0.5 + 0.25 * i / 2000.0, h = 1e-6;
        const double fd = (cutoff_psi_radial(r + h) - cutoff_psi_radial(r - h)) / (2 * h);
        CHECK(std::abs(fd - cutoff_psi_slope(r)) < 1e-5);
        CHECK(cutoff_psi_radial(r + 1e-4) <= cutoff_psi_radial(r));
        maxslope = std::max(maxslope, std::abs(fd));
    }
    CHECK(maxslope <= 8.0);
}

TEST_CASE("directional derivatives of r^2 and constants") {
    const MeridianGrid g(32, 32);
    const ScalarField r2 = sample(g, [](double r, double) { return r * r; });
    CHECK(max_abs(directional_derivative(r2, FrameKind::Phi3, g)) == 0.0);
    const HarmonicField dn = directional_derivative(r2, FrameKind::N, g);
    for (int j = 0; j < g.nr(); ++j)
        for (int k = 0; k < g.ntheta(); ++k) CHECK(dn.c[0](j, k) == doctest::Approx(2 * g.r(j) * g.r(j)).epsilon(1e-12));
    const ScalarField c(g, 3.5);
    for (FrameKind k : {FrameKind::Phi1, FrameKind::Phi2, FrameKind::Phi3, FrameKind::N})
        CHECK(max_abs(directional_derivative(c, k, g)) < 1e-12);
}

TEST_CASE("commutator fields match the Lie bracket") {
    const FrameKind all[4] = {FrameKind::Phi1, FrameKind::Phi2, FrameKind::Phi3, FrameKind::N};
    const Vec3 pts[3] = {{0.3, -0.2, 0.5}, {-0.6, 0.1, 0.2}, {0.05, 0.7, -0.4}};
    for (FrameKind a : all)
        for (FrameKind b : all)
            for (const Vec3& x : pts) {
                const Vec3 c = commutator_field(a, b)(x), o = bracket_fd(a, b, x);
                for (int i = 0; i < 3; ++i) CHECK(c[i] == doctest::Approx(o[i]).epsilon(1e-8));
            }
    CHECK(commutator_field(FrameKind::Phi1, FrameKind::N).is_zero());
    CHECK(commutator_field(FrameKind::N, FrameKind::N).is_zero());
    const Vec3 x{0.3, -0.2, 0.5};
    const Vec3 c12 = commutator_field(FrameKind::Phi1, FrameKind::Phi2)(x);
    CHECK(c12 == evaluate_frame(FrameKind::Phi3, x));
}

TEST_CASE("harmonic sampling is exact for low trig degree") {
    const MeridianGrid g(8, 8);
    const HarmonicField h = sample_harmonic(g, cubic, 3);
    for (int j = 0; j < 8; ++j)
        for (int k = 0; k < 8; ++k)
            for (double ph : {0.1, 1.3, 4.0}) CHECK(h.value(j, k, ph) == doctest::Approx(cubic(spherical_to_cartesian(g.r(j), g.theta(k), ph))).epsilon(1e-12));
}

TEST_CASE("discrete commutators converge at second order") {
    double e1[2], e2[2];
    for (int n : {32, 64}) {
        const MeridianGrid g(n, n);
        const HarmonicField f = sample_harmonic(g, cubic, 3);
        auto D = [&](const HarmonicField& x, FrameKind k) { return directional_derivative(x, k, g); };
        const HarmonicField c1 = D(D(f, FrameKind::N), FrameKind::Phi1) - D(D(f, FrameKind::Phi1), FrameKind::N);
        const HarmonicField c2 = D(D(f, FrameKind::Phi2), FrameKind::Phi1) - D(D(f, FrameKind::Phi1), FrameKind::Phi2) - D(f, FrameKind::Phi3);
        const int margin = n / 8;
        e1[n == 64] = max_abs(c1, margin);
        e2[n == 64] = max_abs(c2, margin);
    }
    // r d_r and the polar stencils act on different axes, so [phi_1, N] vanishes to round-off
    MESSAGE("[phi1,N] max " << e1[0] << " " << e1[1] << ", [phi1,phi2]-phi3 max " << e2[0] << " " << e2[1]);
    CHECK(e1[0] < 1e-10);
    CHECK(e1[1] < 1e-10);
    CHECK(e2[1] < 1e-2);
    CHECK(e2[0] / e2[1] > 3.0);
}

TEST_CASE("tangential derivatives integrate to zero") {
    double e[2];
    for (int n : {32, 64}) {
        const MeridianGrid g(n, n);
        const ScalarField f = sample(g, [](double r, double t) { return std::exp(r * std::cos(t)) * (1 + r * r * std::sin(t) * std::sin(t)); });
        e[n == 64] = std::abs(integrate(directional_derivative(f, FrameKind::Phi1, g), g)) +
                     std::abs(integrate(directional_derivative(f, FrameKind::Phi3, g), g));
    }
    CHECK(e[1] <= e[0] / 3.0 + 1e-14);
}

TEST_CASE("rigid projection") {
    const MeridianGrid g(24, 24);
    const RingQuadrature rq(g, 8);
    const RigidProjection p3 = project_rigid(sample_frame(rq, FrameKind::Phi3), rq);
    CHECK(p3.b[0] == doctest::Approx(0.0));
    CHECK(p3.b[2] == doctest::Approx(1.0).epsilon(1e-12));
    const RigidProjection z = project_rigid(sample_vector(rq, [](const Vec3&) { return Vec3{}; }), rq);
    CHECK(z.b == Vec3{0, 0, 0});
    const auto v12 = sample_vector(rq, [](const Vec3& x) {
        const Vec3 a = evaluate_frame(FrameKind::Phi1, x), b = evaluate_frame(FrameKind::Phi2, x);
        return Vec3{a[0] + b[0], a[1] + b[1], a[2] + b[2]};
    });
    const RigidProjection p12 = project_rigid(v12, rq);
    CHECK(p12.b[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p12.b[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(p12.b[2]) < 1e-12);
    // Gram diagonal 8 pi / 15 to quadrature accuracy, off-diagonal zero
    for (int i = 0; i < 3; ++i) {
        CHECK(std::abs(p12.gram[i][i] - 8 * pi / 15) / (8 * pi / 15) < 1e-2);
        for (int j = 0; j < 3; ++j)
            if (i != j) CHECK(std::abs(p12.gram[i][j]) < 1e-12);
    }
    // residual orthogonal to each phi_i; idempotence on the reconstruction
    const auto gen = sample_vector(rq, [](const Vec3& x) { return Vec3{x[1] * x[2] + 0.3, x[0] - x[2] * x[2], x[0] * x[1] + x[1]}; });
    const RigidProjection pg = project_rigid(gen, rq);
    const auto res = rigid_residual(gen, pg, rq);
    for (FrameKind k : {FrameKind::Phi1, FrameKind::Phi2, FrameKind::Phi3}) CHECK(std::abs(integrate_dot(res, sample_frame(rq, k), rq)) < 1e-12);
    const RigidProjection again = project_rigid(rigid_reconstruction(pg.b, rq), rq);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(again.b[i] - pg.b[i]) < 1e-10);
    // a rigid motion has zero mean
    const auto rec = rigid_reconstruction(pg.b, rq);
    for (int c = 0; c < 3; ++c) {
        double m = 0.0;
        for (std::size_t i = 0; i < rq.size(); ++i) m += rq.weights[i] * rec.v[i][c];
        CHECK(std::abs(m) < 1e-12);
    }
}

TEST_CASE("axisymmetric rigid projection") {
    const MeridianGrid g(32, 32);
    VectorField v(g);
    for (int j = 0; j < 32; ++j)
        for (int k = 0; k < 32; ++k) v.ph(j, k) = -2.5 * g.r(j) * g.sin_theta(k);  // 2.5 phi_3
    const auto p = project_rigid(v, g);
    CHECK(p.b[2] == doctest::Approx(2.5).epsilon(1e-12));
    double res = 0.0;
    for (double x : p.residual.ph.v) res = std::max(res, std::abs(x));
    CHECK(res < 1e-12);
    // lifted and full 3x3 projection agree
    const RingQuadrature rq(g, 4);
    const RigidProjection full = project_rigid(lift(v, rq), rq);
    CHECK(full.b[2] == doctest::Approx(2.5).epsilon(1e-12));
}

}
