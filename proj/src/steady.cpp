#include "ballns/steady.hpp"

#include <cmath>
#include <functional>
#include <string>

namespace ballns {

void SteadyStateParams::validate() const {
    if (!(gamma > 1.0)) throw ParameterError("gamma must exceed 1");
    if (!(mu > 0.0)) throw ParameterError("mu must be positive");
    if (!(lambda > 0.0)) throw ParameterError("lambda must be positive");
    if (!(omega_bar >= 0.0)) throw ParameterError("omega_bar must be non-negative");
    if (!(rho_center > 0.0)) throw ParameterError("rho_center must be positive");
}

namespace {

double profile(double s, double rho0, double omega, double gamma) {
    const double base = std::pow(rho0, gamma - 1.0) + (gamma - 1.0) / (2.0 * gamma) * omega * omega * s * s;
    return std::pow(base, 1.0 / (gamma - 1.0));
}

// Integral over the ball of f(s), s = r sin(theta), using the grid cells as panels.
double ball_integral(const MeridianGrid& g, const std::function<double(double)>& f) {
    static constexpr double x[4] = {-0.8611363115940526, -0.3399810435848563, 0.3399810435848563, 0.8611363115940526};
    static constexpr double w[4] = {0.3478548451374538, 0.6521451548625461, 0.6521451548625461, 0.3478548451374538};
    const double hr = 0.5 * g.dr(), ht = 0.5 * g.dtheta();
    double total = 0.0;
    for (int j = 0; j < g.nr(); ++j)
        for (int k = 0; k < g.ntheta(); ++k) {
            double cell = 0.0;
            for (int a = 0; a < 4; ++a) {
                const double r = g.r(j) + hr * x[a];
                for (int b = 0; b < 4; ++b) {
                    const double t = g.theta(k) + ht * x[b];
                    const double st = std::sin(t);
                    cell += w[a] * w[b] * r * r * st * f(r * st);
                }
            }
            total += cell * hr * ht;
        }
    return 2.0 * std::numbers::pi * total;
}

}  // namespace

double steady_density(double s, const SteadyStateParams& p) { return profile(s, p.rho_center, p.omega_bar, p.gamma); }

Vec3 steady_velocity(const Vec3& x, const SteadyStateParams& p) { return {p.omega_bar * x[1], -p.omega_bar * x[0], 0.0}; }

SteadyStateField make_steady_field(const SteadyStateParams& p, const MeridianGrid& g) {
    p.validate();
    SteadyStateField f;
    f.rho_bar = sample(g, [&](double r, double t) { return steady_density(r * std::sin(t), p); });
    f.u_bar = VectorField(g);
    f.u_bar.ph = sample(g, [&](double r, double t) { return -p.omega_bar * r * std::sin(t); });
    f.pressure_bar = f.rho_bar;
    for (auto& v : f.pressure_bar.v) v = std::pow(v, p.gamma);
    return f;
}

double total_mass(const SteadyStateParams& p, const MeridianGrid& g) {
    return ball_integral(g, [&](double s) { return steady_density(s, p); });
}

double vacuum_threshold_mass(double omega_bar, double gamma, const MeridianGrid& g) {
    if (!(omega_bar >= 0.0)) throw ParameterError("omega_bar must be non-negative");
    if (!(gamma > 1.0)) throw ParameterError("gamma must exceed 1");
    if (omega_bar == 0.0) return 0.0;
    return ball_integral(g, [&](double s) { return profile(s, 0.0, omega_bar, gamma); });
}

double solve_center_density(double mass, double omega_bar, double gamma, const MeridianGrid& g) {
    const double threshold = vacuum_threshold_mass(omega_bar, gamma, g);
    if (!(mass > threshold))
        throw VacuumError("vacuum regime: mass " + std::to_string(mass) + " <= threshold " + std::to_string(threshold));
    SteadyStateParams p;
    p.gamma = gamma;
    p.omega_bar = omega_bar;
    auto m = [&](double rho0) {
        p.rho_center = rho0;
        return total_mass(p, g);
    };
    double lo = 1e-12, hi = 1.0;
    while (m(hi) < mass) {
        lo = hi;
        hi *= 2.0;
    }
    const double tol = 1e-10 * mass;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double mm = m(mid);
        if (std::abs(mm - mass) <= tol) return mid;
        (mm < mass ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------- FD operators

namespace {

template <class F>
ScalarField map2(const MeridianGrid& g, F&& f) {
    ScalarField o(g);
    for (int j = 0; j < g.nr(); ++j)
        for (int k = 0; k < g.ntheta(); ++k) o(j, k) = f(j, k, g.r(j), g.sin_theta(k), g.cos_theta(k));
    return o;
}

// (1/r^n) d_r(r^n f)
ScalarField radial_flux_div(const ScalarField& f, int n, const MeridianGrid& g) {
    ScalarField rf = map2(g, [&](int j, int k, double r, double, double) { return std::pow(r, n) * f(j, k); });
    ScalarField d = d_dr(rf, g);
    return map2(g, [&](int j, int k, double r, double, double) { return d(j, k) / std::pow(r, n); });
}

// (1/(r sin^n)) d_theta(sin^n f)
ScalarField polar_flux_div(const ScalarField& f, int n, const MeridianGrid& g) {
    ScalarField sf = map2(g, [&](int j, int k, double, double st, double) { return std::pow(st, n) * f(j, k); });
    ScalarField d = d_dtheta(sf, g);
    return map2(g, [&](int j, int k, double r, double st, double) { return d(j, k) / (r * std::pow(st, n)); });
}

}  // namespace

ScalarField divergence_fd(const VectorField& u, const MeridianGrid& g) {
    ScalarField a = radial_flux_div(u.r, 2, g), b = polar_flux_div(u.th, 1, g);
    for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
    return a;
}

VectorField advect_fd(const VectorField& a, const VectorField& b, const MeridianGrid& g) {
    VectorField o(g);
    const ScalarField brr = d_dr(b.r, g), btr = d_dr(b.th, g), bpr = d_dr(b.ph, g);
    const ScalarField brt = d_dtheta(b.r, g), btt = d_dtheta(b.th, g), bpt = d_dtheta(b.ph, g);
    for (int j = 0; j < g.nr(); ++j)
        for (int k = 0; k < g.ntheta(); ++k) {
            const double r = g.r(j), cot = g.cos_theta(k) / g.sin_theta(k);
            const double ar = a.r(j, k), at = a.th(j, k), ap = a.ph(j, k);
            o.r(j, k) = ar * brr(j, k) + at / r * brt(j, k) - (at * b.th(j, k) + ap * b.ph(j, k)) / r;
            o.th(j, k) = ar * btr(j, k) + at / r * btt(j, k) + at * b.r(j, k) / r - ap * b.ph(j, k) * cot / r;
            o.ph(j, k) = ar * bpr(j, k) + at / r * bpt(j, k) + ap * b.r(j, k) / r + ap * b.th(j, k) * cot / r;
        }
    return o;
}

VectorField viscous_divergence_fd(const VectorField& u, double mu, double lambda, const MeridianGrid& g) {
    const ScalarField div = divergence_fd(u, g);
    const ScalarField urr = d_dr(u.r, g), urt = d_dtheta(u.r, g), utt = d_dtheta(u.th, g);
    const ScalarField ut_r = map2(g, [&](int j, int k, double r, double, double) { return u.th(j, k) / r; });
    const ScalarField up_r = map2(g, [&](int j, int k, double r, double, double) { return u.ph(j, k) / r; });
    const ScalarField up_s = map2(g, [&](int j, int k, double, double st, double) { return u.ph(j, k) / st; });
    const ScalarField d_ut_r = d_dr(ut_r, g), d_up_r = d_dr(up_r, g), d_up_s = d_dtheta(up_s, g);

    ScalarField srr(g), stt(g), spp(g), srt(g), srp(g), stp(g);
    for (int j = 0; j < g.nr(); ++j)
        for (int k = 0; k < g.ntheta(); ++k) {
            const double r = g.r(j), st = g.sin_theta(k), cot = g.cos_theta(k) / st;
            srr(j, k) = 2.0 * mu * urr(j, k) + lambda * div(j, k);
            stt(j, k) = 2.0 * mu * (utt(j, k) + u.r(j, k)) / r + lambda * div(j, k);
            spp(j, k) = 2.0 * mu * (u.r(j, k) + u.th(j, k) * cot) / r + lambda * div(j, k);
            srt(j, k) = mu * (r * d_ut_r(j, k) + urt(j, k) / r);
            srp(j, k) = mu * r * d_up_r(j, k);
            stp(j, k) = mu * st / r * d_up_s(j, k);
        }
    VectorField o(g);
    const ScalarField a1 = radial_flux_div(srr, 2, g), a2 = polar_flux_div(srt, 1, g);
    const ScalarField b1 = radial_flux_div(srt, 3, g), b2 = polar_flux_div(stt, 1, g);
    const ScalarField c1 = radial_flux_div(srp, 3, g), c2 = polar_flux_div(stp, 2, g);
    for (int j = 0; j < g.nr(); ++j)
        for (int k = 0; k < g.ntheta(); ++k) {
            const double r = g.r(j), cot = g.cos_theta(k) / g.sin_theta(k);
            o.r(j, k) = a1(j, k) + a2(j, k) - (stt(j, k) + spp(j, k)) / r;
            o.th(j, k) = b1(j, k) + b2(j, k) - cot * spp(j, k) / r;
            o.ph(j, k) = c1(j, k) + c2(j, k);
        }
    return o;
}

SteadyResidual steady_residual(const SteadyStateField& f, const SteadyStateParams& p, const MeridianGrid& g) {
    if (!f.rho_bar.matches(g) || !f.u_bar.matches(g)) throw GridError("shape mismatch");
    VectorField m = f.u_bar;
    for (std::size_t i = 0; i < m.r.v.size(); ++i) {
        m.r.v[i] *= f.rho_bar.v[i];
        m.th.v[i] *= f.rho_bar.v[i];
        m.ph.v[i] *= f.rho_bar.v[i];
    }
    const ScalarField cont = divergence_fd(m, g);

    ScalarField P = f.rho_bar;
    for (auto& v : P.v) v = std::pow(v, p.gamma);
    const ScalarField Pr = d_dr(P, g), Pt = d_dtheta(P, g);
    const VectorField adv = advect_fd(f.u_bar, f.u_bar, g);
    const VectorField visc = viscous_divergence_fd(f.u_bar, p.mu, p.lambda, g);

    ScalarField mom2(g);
    for (int j = 0; j < g.nr(); ++j)
        for (int k = 0; k < g.ntheta(); ++k) {
            const double rho = f.rho_bar(j, k);
            const double er = rho * adv.r(j, k) + Pr(j, k) - visc.r(j, k);
            const double et = rho * adv.th(j, k) + Pt(j, k) / g.r(j) - visc.th(j, k);
            const double ep = rho * adv.ph(j, k) - visc.ph(j, k);
            mom2(j, k) = er * er + et * et + ep * ep;
        }
    SteadyResidual res;
    res.continuity = std::sqrt(inner(cont, cont, g));
    res.momentum = std::sqrt(integrate(mom2, g));
    return res;
}

}  // namespace ballns
