#include "ballns/geometry.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace ballns {

std::string to_string(FrameKind k) {
    switch (k) {
        case FrameKind::Phi1: return "phi1";
        case FrameKind::Phi2: return "phi2";
        case FrameKind::Phi3: return "phi3";
        case FrameKind::N: return "N";
    }
    return "?";
}

Vec3 evaluate_frame(FrameKind kind, const Vec3& x) {
    switch (kind) {
        case FrameKind::Phi1: return {0.0, x[2], -x[1]};
        case FrameKind::Phi2: return {-x[2], 0.0, x[0]};
        case FrameKind::Phi3: return {x[1], -x[0], 0.0};
        case FrameKind::N: return x;
    }
    return {};
}

Vec3 LinearField::operator()(const Vec3& x) const {
    Vec3 y{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) y[i] += A[i][j] * x[j];
    return y;
}

bool LinearField::is_zero(double tol) const {
    for (auto& row : A)
        for (double a : row)
            if (std::abs(a) > tol) return false;
    return true;
}

LinearField frame_matrix(FrameKind kind) {
    LinearField f;
    for (int j = 0; j < 3; ++j) {
        Vec3 e{};
        e[j] = 1.0;
        Vec3 col = evaluate_frame(kind, e);
        for (int i = 0; i < 3; ++i) f.A[i][j] = col[i];
    }
    return f;
}

LinearField commutator_field(FrameKind alpha, FrameKind beta) {
    // (X_a . grad) X_b = B A x for linear X_a = A x, X_b = B x.
    const auto A = frame_matrix(alpha).A;
    const auto B = frame_matrix(beta).A;
    LinearField out;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double ba = 0.0, ab = 0.0;
            for (int l = 0; l < 3; ++l) {
                ba += B[i][l] * A[l][j];
                ab += A[i][l] * B[l][j];
            }
            out.A[i][j] = ba - ab;
        }
    return out;
}

double cutoff_psi_radial(double r) {
    if (r <= 0.5) return 1.0;
    if (r >= 0.75) return 0.0;
    const double t = (r - 0.5) / 0.25;
    return 1.0 - t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
}

double cutoff_psi_slope(double r) {
    if (r <= 0.5 || r >= 0.75) return 0.0;
    const double t = (r - 0.5) / 0.25;
    return -120.0 * t * t * (1.0 - t) * (1.0 - t);
}

double cutoff_psi(const Vec3& x) { return cutoff_psi_radial(std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])); }

Vec3 spherical_to_cartesian(double r, double theta, double phi) {
    const double st = std::sin(theta);
    return {r * st * std::cos(phi), r * st * std::sin(phi), r * std::cos(theta)};
}

// ---------------------------------------------------------------- harmonic fields

HarmonicField::HarmonicField(const MeridianGrid& g, int mmax) : nr(g.nr()), nt(g.ntheta()) {
    c.assign(mmax + 1, ScalarField(g));
    s.assign(mmax + 1, ScalarField(g));
}

HarmonicField::HarmonicField(const ScalarField& f) : nr(f.nr), nt(f.nt) {
    c.push_back(f);
    ScalarField z = f;
    std::fill(z.v.begin(), z.v.end(), 0.0);
    s.push_back(z);
}

void HarmonicField::ensure_modes(const MeridianGrid& g, int m) {
    while (mmax() < m) {
        c.emplace_back(g);
        s.emplace_back(g);
    }
}

double HarmonicField::value(int j, int k, double phi) const {
    double v = c[0](j, k);
    for (int m = 1; m <= mmax(); ++m) v += c[m](j, k) * std::cos(m * phi) + s[m](j, k) * std::sin(m * phi);
    return v;
}

HarmonicField sample_harmonic(const MeridianGrid& g, const std::function<double(const Vec3&)>& f, int mmax) {
    HarmonicField h(g, mmax);
    const int np = 2 * mmax + 2;
    std::vector<double> vals(np);
    for (int j = 0; j < g.nr(); ++j)
        for (int k = 0; k < g.ntheta(); ++k) {
            for (int l = 0; l < np; ++l) vals[l] = f(spherical_to_cartesian(g.r(j), g.theta(k), 2.0 * std::numbers::pi * l / np));
            for (int m = 0; m <= mmax; ++m) {
                double a = 0.0, b = 0.0;
                for (int l = 0; l < np; ++l) {
                    const double ph = 2.0 * std::numbers::pi * l / np;
                    a += vals[l] * std::cos(m * ph);
                    b += vals[l] * std::sin(m * ph);
                }
                h.c[m](j, k) = (m == 0 ? 1.0 : 2.0) * a / np;
                h.s[m](j, k) = m == 0 ? 0.0 : 2.0 * b / np;
            }
        }
    return h;
}

// The end stencils carry the same leading error h^2 f''' / 6 as the central one, so the error stays smooth
// up to the ends and composed derivatives remain second order.
void diff_line(const double* f, double* out, int n, std::ptrdiff_t stride, double h) {
    const double inv = 1.0 / (2.0 * h);
    const std::ptrdiff_t e = (n - 1) * stride;
    out[0] = (-4.0 * f[0] + 7.0 * f[stride] - 4.0 * f[2 * stride] + f[3 * stride]) * inv;
    for (int i = 1; i < n - 1; ++i) out[i * stride] = (f[(i + 1) * stride] - f[(i - 1) * stride]) * inv;
    out[e] = (4.0 * f[e] - 7.0 * f[e - stride] + 4.0 * f[e - 2 * stride] - f[e - 3 * stride]) * inv;
}

ScalarField d_dr(const ScalarField& f, const MeridianGrid& g) {
    ScalarField out(g);
    for (int k = 0; k < g.ntheta(); ++k) diff_line(f.v.data() + k, out.v.data() + k, g.nr(), g.ntheta(), g.dr());
    return out;
}

ScalarField d_dtheta(const ScalarField& f, const MeridianGrid& g) {
    ScalarField out(g);
    for (int j = 0; j < g.nr(); ++j) {
        const auto o = g.idx(j, 0);
        diff_line(f.v.data() + o, out.v.data() + o, g.ntheta(), 1, g.dtheta());
    }
    return out;
}

namespace {

void axpy(ScalarField& y, double a, const ScalarField& x) {
    for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] += a * x.v[i];
}

// Accumulate a * F(r,theta) * cos(k phi) or sin(k phi) with signed k.
void add_cos(HarmonicField& h, const MeridianGrid& g, int k, double a, const ScalarField& f) {
    k = std::abs(k);
    h.ensure_modes(g, k);
    axpy(h.c[k], a, f);
}

void add_sin(HarmonicField& h, const MeridianGrid& g, int k, double a, const ScalarField& f) {
    if (k == 0) return;
    if (k < 0) {
        k = -k;
        a = -a;
    }
    h.ensure_modes(g, k);
    axpy(h.s[k], a, f);
}

HarmonicField times_sin(const HarmonicField& f, const MeridianGrid& g) {
    HarmonicField out(g, f.mmax() + 1);
    for (int m = 0; m <= f.mmax(); ++m) {
        add_sin(out, g, m + 1, 0.5, f.c[m]);
        add_sin(out, g, m - 1, -0.5, f.c[m]);
        if (m > 0) {
            add_cos(out, g, m - 1, 0.5, f.s[m]);
            add_cos(out, g, m + 1, -0.5, f.s[m]);
        }
    }
    return out;
}

HarmonicField times_cos(const HarmonicField& f, const MeridianGrid& g) {
    HarmonicField out(g, f.mmax() + 1);
    for (int m = 0; m <= f.mmax(); ++m) {
        add_cos(out, g, m + 1, 0.5, f.c[m]);
        add_cos(out, g, m - 1, 0.5, f.c[m]);
        if (m > 0) {
            add_sin(out, g, m + 1, 0.5, f.s[m]);
            add_sin(out, g, m - 1, 0.5, f.s[m]);
        }
    }
    return out;
}

HarmonicField map_coeffs(const HarmonicField& f, const std::function<ScalarField(const ScalarField&)>& op) {
    HarmonicField out = f;
    for (int m = 0; m <= f.mmax(); ++m) {
        out.c[m] = op(f.c[m]);
        out.s[m] = op(f.s[m]);
    }
    return out;
}

HarmonicField d_dphi(const HarmonicField& f) {
    HarmonicField out = f;
    for (int m = 0; m <= f.mmax(); ++m)
        for (std::size_t i = 0; i < f.c[m].v.size(); ++i) {
            out.c[m].v[i] = m * f.s[m].v[i];
            out.s[m].v[i] = -m * f.c[m].v[i];
        }
    return out;
}

HarmonicField scale_by(const HarmonicField& f, const ScalarField& a) {
    HarmonicField out = f;
    for (int m = 0; m <= f.mmax(); ++m)
        for (std::size_t i = 0; i < a.v.size(); ++i) {
            out.c[m].v[i] *= a.v[i];
            out.s[m].v[i] *= a.v[i];
        }
    return out;
}

HarmonicField add(const HarmonicField& a, const HarmonicField& b, double sb, const MeridianGrid& g) {
    HarmonicField out = a;
    out.ensure_modes(g, b.mmax());
    for (int m = 0; m <= b.mmax(); ++m) {
        axpy(out.c[m], sb, b.c[m]);
        axpy(out.s[m], sb, b.s[m]);
    }
    return out;
}

}  // namespace

HarmonicField directional_derivative(const HarmonicField& f, FrameKind kind, const MeridianGrid& g) {
    switch (kind) {
        case FrameKind::N: {
            const ScalarField r = sample(g, [](double r, double) { return r; });
            return scale_by(map_coeffs(f, [&](const ScalarField& x) { return d_dr(x, g); }), r);
        }
        case FrameKind::Phi3: {
            HarmonicField d = d_dphi(f);
            for (int m = 0; m <= d.mmax(); ++m) {
                for (auto& x : d.c[m].v) x = -x;
                for (auto& x : d.s[m].v) x = -x;
            }
            return d;
        }
        case FrameKind::Phi1:
        case FrameKind::Phi2: {
            const ScalarField cot = sample(g, [](double, double t) { return std::cos(t) / std::sin(t); });
            HarmonicField ft = map_coeffs(f, [&](const ScalarField& x) { return d_dtheta(x, g); });
            HarmonicField fp = scale_by(d_dphi(f), cot);
            if (kind == FrameKind::Phi1)  // sin(phi) d_theta + cot(theta) cos(phi) d_phi
                return add(times_sin(ft, g), times_cos(fp, g), 1.0, g);
            // -cos(phi) d_theta + cot(theta) sin(phi) d_phi
            return add(times_sin(fp, g), times_cos(ft, g), -1.0, g);
        }
    }
    return f;
}

HarmonicField directional_derivative(const ScalarField& f, FrameKind kind, const MeridianGrid& g) {
    return directional_derivative(HarmonicField(f), kind, g);
}

HarmonicField operator-(const HarmonicField& a, const HarmonicField& b) {
    HarmonicField out = a;
    while (out.mmax() < b.mmax()) {
        ScalarField z = b.c[0];
        std::fill(z.v.begin(), z.v.end(), 0.0);
        out.c.push_back(z);
        out.s.push_back(z);
    }
    for (int m = 0; m <= b.mmax(); ++m) {
        axpy(out.c[m], -1.0, b.c[m]);
        axpy(out.s[m], -1.0, b.s[m]);
    }
    return out;
}

double max_abs(const HarmonicField& f, int margin) {
    double mx = 0.0;
    for (int m = 0; m <= f.mmax(); ++m)
        for (int j = margin; j < f.nr - margin; ++j)
            for (int k = margin; k < f.nt - margin; ++k)
                mx = std::max({mx, std::abs(f.c[m](j, k)) + std::abs(f.s[m](j, k))});
    return mx;
}

double integrate(const HarmonicField& f, const MeridianGrid& g) { return integrate(f.c[0], g); }

double norm2(const HarmonicField& f, const MeridianGrid& g) {
    double s = inner(f.c[0], f.c[0], g);
    for (int m = 1; m <= f.mmax(); ++m) s += 0.5 * (inner(f.c[m], f.c[m], g) + inner(f.s[m], f.s[m], g));
    return s;
}

// ---------------------------------------------------------------- ring quadrature

RingQuadrature::RingQuadrature(const MeridianGrid& g, int nphi_) : grid(g), nphi(nphi_) {
    if (nphi < 1) throw GridError("nphi must be positive");
    points.reserve(g.size() * nphi);
    weights.reserve(g.size() * nphi);
    for (int j = 0; j < g.nr(); ++j)
        for (int k = 0; k < g.ntheta(); ++k)
            for (int l = 0; l < nphi; ++l) {
                points.push_back(spherical_to_cartesian(g.r(j), g.theta(k), 2.0 * std::numbers::pi * l / nphi));
                weights.push_back(g.weight(j, k) / nphi);
            }
}

SampledVectorField sample_vector(const RingQuadrature& rq, const std::function<Vec3(const Vec3&)>& f) {
    SampledVectorField out;
    out.v.reserve(rq.size());
    for (const auto& x : rq.points) out.v.push_back(f(x));
    return out;
}

SampledVectorField sample_frame(const RingQuadrature& rq, FrameKind kind) {
    return sample_vector(rq, [kind](const Vec3& x) { return evaluate_frame(kind, x); });
}

SampledVectorField lift(const VectorField& v, const RingQuadrature& rq) {
    const auto& g = rq.grid;
    if (!v.matches(g)) throw GridError("shape mismatch");
    SampledVectorField out;
    out.v.reserve(rq.size());
    for (int j = 0; j < g.nr(); ++j)
        for (int k = 0; k < g.ntheta(); ++k) {
            const double st = g.sin_theta(k), ct = g.cos_theta(k);
            const double ur = v.r(j, k), ut = v.th(j, k), up = v.ph(j, k);
            for (int l = 0; l < rq.nphi; ++l) {
                const double ph = 2.0 * std::numbers::pi * l / rq.nphi;
                const double sp = std::sin(ph), cp = std::cos(ph);
                out.v.push_back({ur * st * cp + ut * ct * cp - up * sp, ur * st * sp + ut * ct * sp + up * cp, ur * ct - ut * st});
            }
        }
    return out;
}

double integrate_dot(const SampledVectorField& a, const SampledVectorField& b, const RingQuadrature& rq) {
    double s = 0.0;
    for (std::size_t i = 0; i < rq.size(); ++i)
        s += rq.weights[i] * (a.v[i][0] * b.v[i][0] + a.v[i][1] * b.v[i][1] + a.v[i][2] * b.v[i][2]);
    return s;
}

RigidProjection project_rigid(const SampledVectorField& V, const RingQuadrature& rq) {
    if (V.v.size() != rq.size()) throw GridError("shape mismatch");
    RigidProjection p;
    const FrameKind kinds[3] = {FrameKind::Phi1, FrameKind::Phi2, FrameKind::Phi3};
    Eigen::Matrix3d G;
    Eigen::Vector3d m;
    G.setZero();
    m.setZero();
    for (std::size_t n = 0; n < rq.size(); ++n) {
        Vec3 f[3];
        for (int i = 0; i < 3; ++i) f[i] = evaluate_frame(kinds[i], rq.points[n]);
        const double w = rq.weights[n];
        for (int i = 0; i < 3; ++i) {
            m(i) += w * (V.v[n][0] * f[i][0] + V.v[n][1] * f[i][1] + V.v[n][2] * f[i][2]);
            for (int j = 0; j < 3; ++j) G(i, j) += w * (f[i][0] * f[j][0] + f[i][1] * f[j][1] + f[i][2] * f[j][2]);
        }
    }
    Eigen::LDLT<Eigen::Matrix3d> ldlt(G);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || std::abs(G.determinant()) < 1e-300)
        throw std::logic_error("singular rigid-motion Gram matrix");
    const Eigen::Vector3d b = ldlt.solve(m);
    for (int i = 0; i < 3; ++i) {
        p.b[i] = b(i);
        p.moments[i] = m(i);
        for (int j = 0; j < 3; ++j) p.gram[i][j] = G(i, j);
    }
    return p;
}

SampledVectorField rigid_reconstruction(const Vec3& b, const RingQuadrature& rq) {
    return sample_vector(rq, [&b](const Vec3& x) {
        const Vec3 p1 = evaluate_frame(FrameKind::Phi1, x), p2 = evaluate_frame(FrameKind::Phi2, x), p3 = evaluate_frame(FrameKind::Phi3, x);
        return Vec3{b[0] * p1[0] + b[1] * p2[0] + b[2] * p3[0], b[0] * p1[1] + b[1] * p2[1] + b[2] * p3[1],
                    b[0] * p1[2] + b[1] * p2[2] + b[2] * p3[2]};
    });
}

SampledVectorField rigid_residual(const SampledVectorField& V, const RigidProjection& p, const RingQuadrature& rq) {
    SampledVectorField r = rigid_reconstruction(p.b, rq);
    for (std::size_t i = 0; i < r.v.size(); ++i)
        for (int c = 0; c < 3; ++c) r.v[i][c] = V.v[i][c] - r.v[i][c];
    return r;
}

AxisymmetricRigidProjection project_rigid(const VectorField& V, const MeridianGrid& g) {
    if (!V.matches(g)) throw GridError("shape mismatch");
    // phi_3 = -r sin(theta) e_phi; phi_1, phi_2 are azimuthal mode 1 and integrate to zero against mode 0.
    const ScalarField p3 = sample(g, [](double r, double t) { return -r * std::sin(t); });
    const double gram = inner(p3, p3, g);
    if (!(gram > 0.0)) throw std::logic_error("singular rigid-motion Gram matrix");
    AxisymmetricRigidProjection out;
    out.b = {0.0, 0.0, inner(V.ph, p3, g) / gram};
    out.residual = V;
    for (std::size_t i = 0; i < p3.v.size(); ++i) out.residual.ph.v[i] -= out.b[2] * p3.v[i];
    return out;
}

}  // namespace ballns
