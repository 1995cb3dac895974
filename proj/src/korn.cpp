#include "ballns/korn.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ballns/diagnostics.hpp"

namespace ballns {

// ---------------------------------------------------------------- grid-field forms

namespace {

struct Derivs {
    ScalarField rr, rt, tr, tt, pr, pt;
};

Derivs derivs(const VectorField& V, const MeridianGrid& g) {
    return {d_dr(V.r, g), d_dtheta(V.r, g), d_dr(V.th, g), d_dtheta(V.th, g), d_dr(V.ph, g), d_dtheta(V.ph, g)};
}

}  // namespace

double symmetric_gradient_energy(const VectorField& V, const MeridianGrid& g) {
    if (!V.matches(g)) throw GridError("shape mismatch");
    // Swirl strains in quotient form so rigid rotation is strain-free on the grid; the r-theta
    // strain stays expanded, since u_theta / r is singular at the origin when v(0) != 0.
    ScalarField up_r(g), up_s(g);
    for (int j = 0; j < g.nr(); ++j)
        for (int k = 0; k < g.ntheta(); ++k) {
            up_r(j, k) = V.ph(j, k) / g.r(j);
            up_s(j, k) = V.ph(j, k) / g.sin_theta(k);
        }
    const ScalarField urr = d_dr(V.r, g), urt = d_dtheta(V.r, g), utt = d_dtheta(V.th, g);
    const ScalarField a = d_dr(V.th, g), b = d_dr(up_r, g), c = d_dtheta(up_s, g);
    ScalarField e2(g);
    for (int j = 0; j < g.nr(); ++j)
        for (int k = 0; k < g.ntheta(); ++k) {
            const double r = g.r(j), st = g.sin_theta(k), cot = g.cos_theta(k) / st;
            const double err = urr(j, k);
            const double ett = (utt(j, k) + V.r(j, k)) / r;
            const double epp = (V.r(j, k) + V.th(j, k) * cot) / r;
            const double ert = 0.5 * (a(j, k) + (urt(j, k) - V.th(j, k)) / r);
            const double erp = 0.5 * r * b(j, k);
            const double etp = 0.5 * st / r * c(j, k);
            e2(j, k) = 4.0 * (err * err + ett * ett + epp * epp + 2.0 * (ert * ert + erp * erp + etp * etp));
        }
    return integrate(e2, g);
}

double gradient_norm2(const VectorField& V, const MeridianGrid& g) {
    if (!V.matches(g)) throw GridError("shape mismatch");
    const Derivs d = derivs(V, g);
    ScalarField s(g);
    for (int j = 0; j < g.nr(); ++j)
        for (int k = 0; k < g.ntheta(); ++k) {
            const double r = g.r(j), cot = g.cos_theta(k) / g.sin_theta(k);
            const double vr = V.r(j, k), vt = V.th(j, k), vp = V.ph(j, k);
            const double G[9] = {d.rr(j, k),           d.tr(j, k),           d.pr(j, k),
                                 (d.rt(j, k) - vt) / r, (d.tt(j, k) + vr) / r, d.pt(j, k) / r,
                                 -vp / r,              -vp * cot / r,        (vr + vt * cot) / r};
            double acc = 0.0;
            for (double x : G) acc += x * x;
            s(j, k) = acc;
        }
    return integrate(s, g);
}

// ---------------------------------------------------------------- trial families

namespace {

struct Monomial {
    int a, b, c;
    int degree() const { return a + b + c; }
};

std::vector<Monomial> monomials(int lo, int hi) {
    std::vector<Monomial> out;
    for (int d = lo; d <= hi; ++d)
        for (int a = d; a >= 0; --a)
            for (int b = d - a; b >= 0; --b) out.push_back({a, b, d - a - b});
    return out;
}

double ipow(double x, int n) {
    double r = 1.0;
    for (int i = 0; i < n; ++i) r *= x;
    return r;
}

// Value, gradient and Hessian of a monomial.
void eval_monomial(const Monomial& m, const Vec3& x, double& f, Vec3& grad, Mat3& hess) {
    const int e[3] = {m.a, m.b, m.c};
    double p[3][3];  // p[i][d] = x_i^(e_i - d) * falling factorial
    for (int i = 0; i < 3; ++i)
        for (int d = 0; d < 3; ++d) {
            if (e[i] < d) {
                p[i][d] = 0.0;
                continue;
            }
            double ff = 1.0;
            for (int t = 0; t < d; ++t) ff *= e[i] - t;
            p[i][d] = ff * ipow(x[i], e[i] - d);
        }
    f = p[0][0] * p[1][0] * p[2][0];
    for (int i = 0; i < 3; ++i) {
        int d[3] = {0, 0, 0};
        d[i] = 1;
        grad[i] = p[0][d[0]] * p[1][d[1]] * p[2][d[2]];
        for (int l = 0; l < 3; ++l) {
            int dd[3] = {0, 0, 0};
            dd[i] += 1;
            dd[l] += 1;
            hess[i][l] = p[0][dd[0]] * p[1][dd[1]] * p[2][dd[2]];
        }
    }
}

std::string mono_name(const Monomial& m) {
    return "x^" + std::to_string(m.a) + "y^" + std::to_string(m.b) + "z^" + std::to_string(m.c);
}

}  // namespace

TrialField frame_trial(FrameKind k) {
    const LinearField L = frame_matrix(k);
    return {to_string(k), [L](const Vec3& x, Vec3& v, Mat3& J) {
                v = L(x);
                J = L.A;
            }};
}

std::vector<TrialField> build_trial_family(const BasisSpec& spec) {
    std::vector<TrialField> out;
    std::set<FrameKind> seen;
    for (FrameKind k : spec.frames)
        if (!seen.insert(k).second) throw KornError("degenerate Gram: duplicate basis member " + to_string(k));

    if (spec.polynomial && !spec.tangent) {
        if (spec.degree < 0) throw KornError("degree must be non-negative");
        for (const Monomial& m : monomials(0, spec.degree))
            for (int i = 0; i < 3; ++i)
                out.push_back({mono_name(m) + "e" + std::to_string(i + 1), [m, i](const Vec3& x, Vec3& v, Mat3& J) {
                                   double f;
                                   Vec3 gr;
                                   Mat3 H;
                                   eval_monomial(m, x, f, gr, H);
                                   v = {0.0, 0.0, 0.0};
                                   J = {};
                                   v[i] = f;
                                   J[i] = gr;
                               }});
        // Frame fields are linear, hence already in the span once degree >= 1.
        if (spec.degree < 1)
            for (FrameKind k : spec.frames) out.push_back(frame_trial(k));
    } else if (spec.polynomial && spec.tangent) {
        if (spec.degree < 1) throw KornError("tangent family needs degree >= 1");
        // x cross grad h, h of degree 1..d+1 (contains the rigid rotations)
        for (const Monomial& m : monomials(1, spec.degree + 1))
            out.push_back({"xgrad(" + mono_name(m) + ")", [m](const Vec3& x, Vec3& v, Mat3& J) {
                               double f;
                               Vec3 g;
                               Mat3 H;
                               eval_monomial(m, x, f, g, H);
                               v = {x[1] * g[2] - x[2] * g[1], x[2] * g[0] - x[0] * g[2], x[0] * g[1] - x[1] * g[0]};
                               // V_i = eps_ijk x_j g_k
                               static constexpr int eps[3][2][2] = {{{1, 2}, {2, 1}}, {{2, 0}, {0, 2}}, {{0, 1}, {1, 0}}};
                               for (int i = 0; i < 3; ++i) {
                                   const int j1 = eps[i][0][0], k1 = eps[i][0][1];
                                   for (int l = 0; l < 3; ++l)
                                       J[i][l] = (j1 == l ? g[k1] : 0.0) + x[j1] * H[k1][l] - (k1 == l ? g[j1] : 0.0) - x[k1] * H[j1][l];
                               }
                           }});
        // boundary bubbles (1 - |x|^2) p e_i, p of degree <= d-2
        for (const Monomial& m : monomials(0, spec.degree - 2))
            for (int i = 0; i < 3; ++i)
                out.push_back({"bubble(" + mono_name(m) + ")e" + std::to_string(i + 1), [m, i](const Vec3& x, Vec3& v, Mat3& J) {
                                   double f;
                                   Vec3 g;
                                   Mat3 H;
                                   eval_monomial(m, x, f, g, H);
                                   const double b = 1.0 - (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
                                   v = {0.0, 0.0, 0.0};
                                   J = {};
                                   v[i] = b * f;
                                   for (int l = 0; l < 3; ++l) J[i][l] = -2.0 * x[l] * f + b * g[l];
                               }});
    } else {
        for (FrameKind k : spec.frames) {
            if (spec.tangent && k == FrameKind::N) continue;
            out.push_back(frame_trial(k));
        }
    }
    if (out.empty()) throw KornError("empty admissible family");
    return out;
}

int quadrature_nphi(int degree) { return 2 * std::max(degree, 1) + 2; }

GramForms assemble_forms(const std::vector<TrialField>& family, const RingQuadrature& rq) {
    const int nf = static_cast<int>(family.size());
    GramForms F;
    F.grad = Eigen::MatrixXd::Zero(nf, nf);
    F.sym = Eigen::MatrixXd::Zero(nf, nf);
    F.mass = Eigen::MatrixXd::Zero(nf, nf);
    F.rigid = Eigen::MatrixXd::Zero(nf, 3);

    const std::size_t chunk = 1024;
    Eigen::MatrixXd Pv, Pg, Ps, Pr;
    for (std::size_t start = 0; start < rq.size(); start += chunk) {
        const std::size_t n = std::min(chunk, rq.size() - start);
        Pv.resize(3 * n, nf);
        Pg.resize(9 * n, nf);
        Ps.resize(6 * n, nf);
        Pr.resize(3 * n, 3);
        for (std::size_t p = 0; p < n; ++p) {
            const Vec3& x = rq.points[start + p];
            const double sw = std::sqrt(rq.weights[start + p]);
            for (int a = 0; a < nf; ++a) {
                Vec3 v;
                Mat3 J;
                family[a].eval(x, v, J);
                for (int i = 0; i < 3; ++i) Pv(3 * p + i, a) = sw * v[i];
                for (int i = 0; i < 3; ++i)
                    for (int l = 0; l < 3; ++l) Pg(9 * p + 3 * i + l, a) = sw * J[i][l];
                // |S|^2 with S = J + J^T: diagonal entries 2J_ii, off-diagonals counted twice
                int c = 0;
                for (int i = 0; i < 3; ++i)
                    for (int l = i; l < 3; ++l) {
                        const double s = J[i][l] + J[l][i];
                        Ps(6 * p + c++, a) = sw * s * (i == l ? 1.0 : std::numbers::sqrt2);
                    }
            }
            for (int i = 0; i < 3; ++i) {
                const FrameKind k = i == 0 ? FrameKind::Phi1 : (i == 1 ? FrameKind::Phi2 : FrameKind::Phi3);
                const Vec3 f = evaluate_frame(k, x);
                for (int c = 0; c < 3; ++c) Pr(3 * p + c, i) = sw * f[c];
            }
        }
        F.grad.noalias() += Pg.transpose() * Pg;
        F.sym.noalias() += Ps.transpose() * Ps;
        F.mass.noalias() += Pv.transpose() * Pv;
        F.rigid.noalias() += Pv.transpose() * Pr;
    }
    return F;
}

namespace {

struct Reduced {
    Eigen::MatrixXd T;  // columns: mass-orthonormal combinations of the family
};

Reduced mass_orthonormal(const Eigen::MatrixXd& M) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
    const Eigen::VectorXd& lam = es.eigenvalues();
    const double top = lam.maxCoeff();
    if (!(top > 0.0)) throw KornError("degenerate Gram: zero mass matrix");
    std::vector<int> keep;
    for (int i = 0; i < lam.size(); ++i)
        if (lam(i) > 1e-12 * top) keep.push_back(i);
    Reduced r;
    r.T.resize(M.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c) r.T.col(c) = es.eigenvectors().col(keep[c]) / std::sqrt(lam(keep[c]));
    return r;
}

GramForms forms_for(const BasisSpec& spec, const MeridianGrid& g) {
    const auto fam = build_trial_family(spec);
    RingQuadrature rq(g, quadrature_nphi(spec.polynomial ? spec.degree : 1));
    return assemble_forms(fam, rq);
}

}  // namespace

std::array<PairEnergy, 3> rigid_degeneracy_check(const MeridianGrid& g) {
    std::vector<TrialField> fam{frame_trial(FrameKind::Phi1), frame_trial(FrameKind::Phi2), frame_trial(FrameKind::Phi3)};
    RingQuadrature rq(g, quadrature_nphi(1));
    const GramForms F = assemble_forms(fam, rq);
    std::array<PairEnergy, 3> out{};
    for (int i = 0; i < 3; ++i) out[i] = {F.sym(i, i), F.grad(i, i)};
    return out;
}

ConstantEstimate estimate_korn01_constant(const BasisSpec& spec, const MeridianGrid& g) {
    const GramForms F = forms_for(spec, g);
    const Reduced R = mass_orthonormal(F.mass);
    const Eigen::MatrixXd A = R.T.transpose() * F.grad * R.T;
    Eigen::MatrixXd B = R.T.transpose() * F.sym * R.T;
    B.diagonal().array() += 1.0;
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(A, B);
    return {es.eigenvalues().maxCoeff(), static_cast<int>(R.T.cols()), 0};
}

ConstantEstimate estimate_pm_constant(const BasisSpec& spec_in, const MeridianGrid& g) {
    BasisSpec spec = spec_in;
    spec.tangent = true;
    const GramForms F = forms_for(spec, g);
    const Reduced R = mass_orthonormal(F.mass);
    const int n = static_cast<int>(R.T.cols());

    // ||V - P_S V||^2 = ||V||^2 - c^T G_S^{-1} c with c_i = <V, phi_i>
    RingQuadrature rq(g, quadrature_nphi(1));
    const GramForms S = assemble_forms({frame_trial(FrameKind::Phi1), frame_trial(FrameKind::Phi2), frame_trial(FrameKind::Phi3)}, rq);
    const Eigen::MatrixXd C = R.T.transpose() * F.rigid;
    const Eigen::MatrixXd Nm = Eigen::MatrixXd::Identity(n, n) - C * S.mass.ldlt().solve(C.transpose());
    const Eigen::MatrixXd E = R.T.transpose() * F.sym * R.T;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(E);
    std::vector<int> keep;
    for (int i = 0; i < n; ++i)
        if (es.eigenvalues()(i) >= 1e-10) keep.push_back(i);
    if (keep.empty()) throw KornError("empty admissible family");
    Eigen::MatrixXd Z(n, static_cast<Eigen::Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c) Z.col(c) = es.eigenvectors().col(keep[c]) / std::sqrt(es.eigenvalues()(keep[c]));
    const Eigen::MatrixXd Q = Z.transpose() * Nm * Z;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eq(Q);
    return {eq.eigenvalues().maxCoeff(), n, n - static_cast<int>(keep.size())};
}

ConstantEstimate estimate_poincare_constant(const BasisSpec& spec_in, const MeridianGrid& g) {
    BasisSpec spec = spec_in;
    spec.tangent = true;
    const GramForms F = forms_for(spec, g);
    const Reduced R = mass_orthonormal(F.mass);
    const Eigen::MatrixXd A = R.T.transpose() * F.grad * R.T;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    const double lo = es.eigenvalues().minCoeff();
    if (!(lo > 0.0)) throw KornError("gradient form singular on tangent family");
    return {1.0 / lo, static_cast<int>(R.T.cols()), 0};
}

KornReport korn_report(const MeridianGrid& g, int degree) {
    if (degree < 1) throw KornError("degree must be at least 1");
    KornReport rep;
    rep.nr = g.nr();
    rep.ntheta = g.ntheta();
    rep.degree = degree;
    BasisSpec spec;
    spec.degree = degree;
    rep.korn01 = estimate_korn01_constant(spec, g);
    rep.pm = estimate_pm_constant(spec, g);
    rep.poincare = estimate_poincare_constant(spec, g);
    rep.degeneracy = rigid_degeneracy_check(g);
    return rep;
}

// ---------------------------------------------------------------- Korn-type ledger

KornTypeLedger verify_korn_type(const ScalarField& q, const VectorField& v, const SteadyStateField& steady, double C,
                                const MeridianGrid& g, double tolerance) {
    if (!q.matches(g) || !v.matches(g)) throw GridError("shape mismatch");
    const ConservedQuantities now = conserved_quantities(q, v, steady, g);
    ScalarField zq(g);
    const ConservedQuantities ref = conserved_quantities(zq, VectorField(g), steady, g);

    // scale: integral of rho |u| |phi_3|
    double scale = 0.0;
    for (int j = 0; j < g.nr(); ++j)
        for (int k = 0; k < g.ntheta(); ++k) {
            const double rho = steady.rho_bar(j, k) + std::abs(q(j, k));
            const double ur = v.r(j, k), ut = v.th(j, k), up = steady.u_bar.ph(j, k) + v.ph(j, k);
            scale += g.weight(j, k) * rho * std::sqrt(ur * ur + ut * ut + up * up) * g.r(j) * g.sin_theta(k);
        }
    scale = std::max(scale, std::abs(ref.L[2]));
    KornTypeLedger led;
    led.C = C;
    double defect = 0.0;
    for (int i = 0; i < 3; ++i) defect = std::max(defect, std::abs(now.L[i] - ref.L[i]));
    led.momentum_defect = scale > 0.0 ? defect / scale : 0.0;
    if (led.momentum_defect > tolerance)
        throw HypothesisError("hypothesis not met: angular momentum defect " + std::to_string(led.momentum_defect));

    led.lhs = gradient_norm2(v, g);
    led.strain = symmetric_gradient_energy(v, g);  // S(ubar) = 0, so E(u) = E(v)
    ScalarField a(g), b(g);
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double ub = steady.u_bar.ph.v[i];
        const double q2 = q.v[i] * q.v[i];
        a.v[i] = ub * ub * q2;
        b.v[i] = q2 * (v.r.v[i] * v.r.v[i] + v.th.v[i] * v.th.v[i] + v.ph.v[i] * v.ph.v[i]);
    }
    led.rotation_term = integrate(a, g);
    led.cross_term = integrate(b, g);
    led.rhs = led.strain + led.rotation_term + led.cross_term;
    led.satisfied = led.lhs <= C * led.rhs;
    return led;
}

}  // namespace ballns
