#include "ballns/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "ballns/korn.hpp"

namespace ballns {

namespace {

double rho_weight(const SteadyStateField& st, const ScalarField& q, std::size_t i, Mode mode) {
    return mode == Mode::Nonlinear ? st.rho_bar.v[i] + q.v[i] : st.rho_bar.v[i];
}

ScalarField pow_field(const ScalarField& f, double e) {
    ScalarField o = f;
    for (double& x : o.v) x = std::pow(x, e);
    return o;
}

VectorField combine(const VectorField& a, double ca, const VectorField& b, double cb) {
    VectorField o = a;
    for (std::size_t i = 0; i < o.r.v.size(); ++i) {
        o.r.v[i] = ca * a.r.v[i] + cb * b.r.v[i];
        o.th.v[i] = ca * a.th.v[i] + cb * b.th.v[i];
        o.ph.v[i] = ca * a.ph.v[i] + cb * b.ph.v[i];
    }
    return o;
}

// Pointwise squared Frobenius norm of the Cartesian gradient and of the radial derivative.
void vector_gradient_density(const VectorField& V, const MeridianGrid& g, ScalarField& full, ScalarField& radial) {
    const ScalarField rr = d_dr(V.r, g), tr = d_dr(V.th, g), pr = d_dr(V.ph, g);
    const ScalarField rt = d_dtheta(V.r, g), tt = d_dtheta(V.th, g), pt = d_dtheta(V.ph, g);
    full = ScalarField(g);
    radial = ScalarField(g);
    for (int j = 0; j < g.nr(); ++j)
        for (int k = 0; k < g.ntheta(); ++k) {
            const double r = g.r(j), cot = g.cos_theta(k) / g.sin_theta(k);
            const double vr = V.r(j, k), vt = V.th(j, k), vp = V.ph(j, k);
            const double G[9] = {rr(j, k),           tr(j, k),           pr(j, k),
                                 (rt(j, k) - vt) / r, (tt(j, k) + vr) / r, pt(j, k) / r,
                                 -vp / r,            -vp * cot / r,      (vr + vt * cot) / r};
            double acc = 0.0;
            for (double x : G) acc += x * x;
            full(j, k) = acc;
            radial(j, k) = G[0] * G[0] + G[1] * G[1] + G[2] * G[2];
        }
}

void scalar_gradient_density(const ScalarField& f, const MeridianGrid& g, ScalarField& full, ScalarField& radial) {
    const ScalarField fr = d_dr(f, g), ft = d_dtheta(f, g);
    full = ScalarField(g);
    radial = ScalarField(g);
    for (int j = 0; j < g.nr(); ++j)
        for (int k = 0; k < g.ntheta(); ++k) {
            const double a = fr(j, k), b = ft(j, k) / g.r(j);
            full(j, k) = a * a + b * b;
            radial(j, k) = a * a;
        }
}

}  // namespace

ConservedQuantities conserved_quantities(const ScalarField& q, const VectorField& v, const SteadyStateField& steady,
                                         const MeridianGrid& g) {
    if (!q.matches(g) || !v.matches(g) || !steady.rho_bar.matches(g)) throw GridError("shape mismatch");
    ConservedQuantities c;
    double m = 0.0, l3 = 0.0;
    for (int j = 0; j < g.nr(); ++j)
        for (int k = 0; k < g.ntheta(); ++k) {
            const std::size_t i = g.idx(j, k);
            const double w = g.weight(j, k), rho = steady.rho_bar.v[i] + q.v[i];
            m += w * rho;
            l3 += w * rho * (steady.u_bar.ph.v[i] + v.ph.v[i]) * (-g.r(j) * g.sin_theta(k));
        }
    c.mass = m;
    c.L = {0.0, 0.0, l3};
    return c;
}

ConservedQuantities conserved_quantities(const PerturbationState& s, const SteadyStateField& steady, const MeridianGrid& g) {
    ConservedQuantities c = conserved_quantities(s.q, s.v, steady, g);
    c.t = s.t;
    return c;
}

EnergyReport basic_energy(const PerturbationState& s, const SteadyStateField& steady, const SteadyStateParams& p,
                          const MeridianGrid& g, Mode mode) {
    if (!s.q.matches(g) || !s.v.matches(g)) throw GridError("shape mismatch");
    EnergyReport e;
    e.t = s.t;
    double kin = 0.0, pot = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double w = g.weights()[i];
        const double v2 = s.v.r.v[i] * s.v.r.v[i] + s.v.th.v[i] * s.v.th.v[i] + s.v.ph.v[i] * s.v.ph.v[i];
        kin += w * rho_weight(steady, s.q, i, mode) * v2;
        pot += w * std::pow(steady.rho_bar.v[i], p.gamma - 2.0) * s.q.v[i] * s.q.v[i];
    }
    e.E0 = 0.5 * kin + 0.5 * p.gamma * pot;
    const ScalarField div = divergence_fd(s.v, g);
    e.D0 = 0.5 * p.mu * symmetric_gradient_energy(s.v, g) + p.lambda * inner(div, div, g);
    return e;
}

double energy_rate(const PerturbationState& s, const ScalarField& dq, const VectorField& dv, const SteadyStateField& steady,
                   const SteadyStateParams& p, const MeridianGrid& g, Mode mode) {
    double acc = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double w = g.weights()[i];
        const double vdv = s.v.r.v[i] * dv.r.v[i] + s.v.th.v[i] * dv.th.v[i] + s.v.ph.v[i] * dv.ph.v[i];
        double term = rho_weight(steady, s.q, i, mode) * vdv + p.gamma * std::pow(steady.rho_bar.v[i], p.gamma - 2.0) * s.q.v[i] * dq.v[i];
        if (mode == Mode::Nonlinear) {
            const double v2 = s.v.r.v[i] * s.v.r.v[i] + s.v.th.v[i] * s.v.th.v[i] + s.v.ph.v[i] * s.v.ph.v[i];
            term += 0.5 * dq.v[i] * v2;
        }
        acc += w * term;
    }
    return acc;
}

IdentityTerms identity_terms(const PerturbationState& s, const ScalarField& dq_dt, const SteadyStateField& steady,
                             const SteadyStateParams& p, const MeridianGrid& g, Mode mode) {
    if (!s.q.matches(g) || !s.v.matches(g) || !dq_dt.matches(g)) throw GridError("shape mismatch");
    const bool nl = mode == Mode::Nonlinear;
    const double gm = p.gamma;
    const ScalarField& q = s.q;
    const VectorField& v = s.v;
    const VectorField& ub = steady.u_bar;
    const ScalarField b = pow_field(steady.rho_bar, gm - 2.0);
    const ScalarField br = d_dr(b, g), bt = d_dtheta(b, g);

    const VectorField w = nl ? combine(v, 1.0, ub, 1.0) : ub;  // transporting velocity
    const ScalarField divw = divergence_fd(w, g);
    const ScalarField divv = divergence_fd(v, g);

    VectorField rv = v;
    for (std::size_t i = 0; i < g.size(); ++i) {
        rv.r.v[i] *= steady.rho_bar.v[i];
        rv.th.v[i] *= steady.rho_bar.v[i];
        rv.ph.v[i] *= steady.rho_bar.v[i];
    }
    const ScalarField divrv = divergence_fd(rv, g);

    const VectorField a_uv = advect_fd(ub, v, g), a_vu = advect_fd(v, ub, g);
    const VectorField a_vv = advect_fd(v, v, g);

    // R = rho^gamma - rho_bar^gamma - gamma rho_bar^(gamma-1) q
    ScalarField R(g);
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double rb = steady.rho_bar.v[i];
        R.v[i] = std::pow(rb, gm) * std::expm1(gm * std::log1p(q.v[i] / rb)) - gm * std::pow(rb, gm - 1.0) * q.v[i];
    }
    const ScalarField Rr = d_dr(R, g), Rt = d_dtheta(R, g);

    ScalarField t1(g), t2(g), t3(g), t4(g), t5(g);
    for (int j = 0; j < g.nr(); ++j)
        for (int k = 0; k < g.ntheta(); ++k) {
            const std::size_t i = g.idx(j, k);
            const double r = g.r(j), q2 = q.v[i] * q.v[i];
            t1.v[i] = 0.5 * gm * q2 * (w.r.v[i] * br.v[i] + w.th.v[i] * bt.v[i] / r);
            t2.v[i] = 0.5 * gm * b.v[i] * q2 * divw.v[i];
            const double rb = steady.rho_bar.v[i];
            double fr = -rb * (a_uv.r.v[i] + a_vu.r.v[i]);
            double ft = -rb * (a_uv.th.v[i] + a_vu.th.v[i]);
            double fp = -rb * (a_uv.ph.v[i] + a_vu.ph.v[i]);
            if (nl) {
                t3.v[i] = -gm * b.v[i] * q2 * divv.v[i];
                const double v2 = v.r.v[i] * v.r.v[i] + v.th.v[i] * v.th.v[i] + v.ph.v[i] * v.ph.v[i];
                t4.v[i] = 0.5 * (dq_dt.v[i] + divrv.v[i]) * v2;
                fr += -Rr.v[i] - q.v[i] * (a_uv.r.v[i] + a_vu.r.v[i] + a_vv.r.v[i]);
                ft += -Rt.v[i] / r - q.v[i] * (a_uv.th.v[i] + a_vu.th.v[i] + a_vv.th.v[i]);
                fp += -q.v[i] * (a_uv.ph.v[i] + a_vu.ph.v[i] + a_vv.ph.v[i]);
            }
            t5.v[i] = fr * v.r.v[i] + ft * v.th.v[i] + fp * v.ph.v[i];
        }
    IdentityTerms T;
    T.transport = integrate(t1, g);
    T.compressibility = integrate(t2, g);
    T.g1 = integrate(t3, g);
    T.weight = integrate(t4, g);
    T.forcing = integrate(t5, g);
    return T;
}

std::vector<double> energy_identity_residual(const std::vector<double>& t, const std::vector<double>& E0,
                                             const std::vector<double>& D0, const std::vector<double>& rhs) {
    const std::size_t n = t.size();
    if (E0.size() != n || D0.size() != n || rhs.size() != n) throw DiagnosticsError("series length mismatch");
    if (n < 3) throw DiagnosticsError("insufficient samples: need at least 3 snapshots");
    const double h = (t[n - 1] - t[0]) / static_cast<double>(n - 1);
    for (std::size_t i = 1; i < n; ++i)
        if (std::abs((t[i] - t[i - 1]) - h) > 1e-9 * std::max(1.0, std::abs(h)))
            throw DiagnosticsError("non-uniform snapshot spacing");
    std::vector<double> res(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = std::clamp<std::size_t>(i, 1, n - 2);
        res[i] = three_point_derivative(E0[c - 1], E0[c], E0[c + 1], static_cast<int>(i) - static_cast<int>(c) + 1, h) + D0[i] -
                 rhs[i];
    }
    return res;
}

double three_point_derivative(double e0, double e1, double e2, int at, double h) {
    switch (at) {
    case 0: return (-3.0 * e0 + 4.0 * e1 - e2) / (2.0 * h);
    case 1: return (e2 - e0) / (2.0 * h);
    case 2: return (3.0 * e2 - 4.0 * e1 + e0) / (2.0 * h);
    default: throw DiagnosticsError("stencil position must be 0, 1 or 2");
    }
}

AnisotropicNorms anisotropic_norms(const ScalarField& q, const VectorField& v, const MeridianGrid& g) {
    if (!q.matches(g) || !v.matches(g)) throw GridError("shape mismatch");
    AnisotropicNorms n;
    // sum_i (phi_i . a)^2 = |x cross a|^2 = r^2 (|a|^2 - a_r^2), (x . grad)^2 = r^2 a_r^2
    ScalarField full, radial;
    auto split = [&](double& T, double& Nn, double& G) {
        ScalarField ft(g), fn(g);
        for (int j = 0; j < g.nr(); ++j)
            for (int k = 0; k < g.ntheta(); ++k) {
                const double r2 = g.r(j) * g.r(j);
                ft(j, k) = r2 * (full(j, k) - radial(j, k));
                fn(j, k) = r2 * radial(j, k);
            }
        T = integrate(ft, g);
        Nn = integrate(fn, g);
        G = integrate(full, g);
    };
    scalar_gradient_density(q, g, full, radial);
    split(n.grad_T_q, n.grad_N_q, n.grad_q);
    vector_gradient_density(v, g, full, radial);
    split(n.grad_T_v, n.grad_N_v, n.grad_v);

    ScalarField pq = q;
    VectorField pv = v;
    for (int j = 0; j < g.nr(); ++j) {
        const double psi = cutoff_psi_radial(g.r(j));
        for (int k = 0; k < g.ntheta(); ++k) {
            pq(j, k) *= psi;
            pv.r(j, k) *= psi;
            pv.th(j, k) *= psi;
            pv.ph(j, k) *= psi;
        }
    }
    scalar_gradient_density(pq, g, full, radial);
    n.grad_psi_q = integrate(full, g);
    vector_gradient_density(pv, g, full, radial);
    n.grad_psi_v = integrate(full, g);

    auto ratio = [](double a, double b) { return b > 0.0 ? a / b : 0.0; };
    n.C = std::max(ratio(n.grad_q, n.grad_psi_q + n.grad_T_q + n.grad_N_q), ratio(n.grad_v, n.grad_psi_v + n.grad_T_v + n.grad_N_v));
    return n;
}

AnisotropicNorms anisotropic_norms(const PerturbationState& s, const MeridianGrid& g) { return anisotropic_norms(s.q, s.v, g); }

DecayFit fit_decay_rate(const std::vector<double>& t, const std::vector<double>& E0, std::optional<std::pair<double, double>> window) {
    if (t.size() != E0.size()) throw DiagnosticsError("series length mismatch");
    if (t.empty()) throw DiagnosticsError("insufficient samples");
    DecayFit f;
    if (window) {
        f.t_start = window->first;
        f.t_end = window->second;
        if (!(f.t_start <= f.t_end)) throw DiagnosticsError("empty fit window");
    } else {
        f.t_start = 0.5 * (t.front() + t.back());
        f.t_end = t.back();
    }
    std::vector<double> x, y;
    for (std::size_t i = 0; i < t.size(); ++i)
        if (t[i] >= f.t_start - 1e-12 && t[i] <= f.t_end + 1e-12 && E0[i] > 1e-30 && std::isfinite(E0[i])) {
            x.push_back(t[i]);
            y.push_back(std::log(E0[i]));
        }
    f.samples = static_cast<int>(x.size());
    if (f.samples < 4) throw DiagnosticsError("insufficient samples: " + std::to_string(f.samples) + " usable points in window");
    const double n = f.samples;
    double mx = 0.0, my = 0.0;
    for (int i = 0; i < f.samples; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (int i = 0; i < f.samples; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (!(sxx > 0.0)) throw DiagnosticsError("degenerate fit window");
    const double slope = sxy / sxx;
    f.sigma = -slope;
    // a flat series is fitted exactly by a constant
    const double scale = std::max(1.0, std::abs(my));
    f.r_squared = syy <= 1e-28 * scale * scale * n ? 1.0 : std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0);
    if (syy <= 1e-28 * scale * scale * n) f.sigma = 0.0;
    f.exponential = f.r_squared >= 0.99;
    return f;
}

}  // namespace ballns
