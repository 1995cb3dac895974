#include "ballns/dynamics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <set>

namespace ballns {

std::string to_string(Mode m) { return m == Mode::Nonlinear ? "nonlinear" : "linearized"; }

Mode parse_mode(const std::string& s) {
    if (s == "nonlinear") return Mode::Nonlinear;
    if (s == "linearized" || s == "linear") return Mode::Linearized;
    throw ParameterError("unknown mode '" + s + "'");
}

ScalarField RHSBreakdown::total_q() const {
    ScalarField t = continuity_linear;
    for (std::size_t i = 0; i < t.v.size(); ++i)
        t.v[i] += transport.v[i] + g1.v[i] + stabilization_q.v[i] + filter_q.v[i];
    return t;
}

VectorField RHSBreakdown::total_v() const {
    VectorField t = momentum_pressure;
    auto add = [](ScalarField& a, const ScalarField& b) {
        for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
    };
    for (const VectorField* p : {&momentum_viscous, &f2, &g2, &advection, &stabilization_v, &filter_v}) {
        add(t.r, p->r);
        add(t.th, p->th);
        add(t.ph, p->ph);
    }
    return t;
}

namespace {

// Per-part output pointers; several may alias the same array to sum in place.
struct Targets {
    double* q_cont = nullptr;
    double* q_trans = nullptr;
    double* q_g1 = nullptr;
    double* q_stab = nullptr;
    double* press[3]{};
    double* visc[3]{};
    double* f2[3]{};
    double* g2[3]{};
    double* adv[3]{};
    double* stab[3]{};
    double* split[3]{};
    double* rem[3]{};
};

// Weighted orthogonal projection onto span(B), stored as f <- U (W f) or, when the span is more than half
// of the ring, as f <- f - U (W f) over the complement. U is nt x m; W is stored transposed (nt x m) so both are
// walked along contiguous columns.
struct Projection {
    int m = 0;
    bool complement = false;
    Eigen::MatrixXd U, W;
};

struct Ring {
    int j = 0;
    Projection q, t;  // scalar-like (q, u_r) and sin-like (u_theta, J)
};

// Columns of X (nt x cols, column stride ld; cols <= 2) are projected in place.
void apply_projection(const Projection& P, double* f, int nt, int cols, std::size_t ld, double* tmp) {
    double* __restrict x0 = f;
    double* __restrict x1 = cols == 2 ? f + ld : f;
    const int m = P.m;
    if (m == 0) {
        if (!P.complement) {
            std::fill(x0, x0 + nt, 0.0);
            std::fill(x1, x1 + nt, 0.0);
        }
        return;
    }
    const double* W = P.W.data();  // row i of W is contiguous
    const double* U = P.U.data();  // column i of U is contiguous
    double* __restrict y0 = tmp;
    double* __restrict y1 = tmp + m;
    for (int i = 0; i < m; ++i) {
        const double* __restrict w = W + static_cast<std::size_t>(i) * nt;
        double s0 = 0.0, s1 = 0.0;
#pragma omp simd reduction(+ : s0, s1)
        for (int k = 0; k < nt; ++k) {
            s0 += w[k] * x0[k];
            s1 += w[k] * x1[k];
        }
        y0[i] = P.complement ? -s0 : s0;
        y1[i] = P.complement ? -s1 : s1;
    }
    if (!P.complement) {
        std::fill(x0, x0 + nt, 0.0);
        std::fill(x1, x1 + nt, 0.0);
    }
    for (int i = 0; i < m; ++i) {
        const double* __restrict u = U + static_cast<std::size_t>(i) * nt;
        const double b0 = y0[i], b1 = y1[i];
        if (cols == 2)
            for (int k = 0; k < nt; ++k) {
                x0[k] += u[k] * b0;
                x1[k] += u[k] * b1;
            }
        else
            for (int k = 0; k < nt; ++k) x0[k] += u[k] * b0;
    }
}

Projection build_projection(const Eigen::MatrixXd& B, const Eigen::VectorXd& w) {
    const int nt = static_cast<int>(B.rows()), m = static_cast<int>(B.cols());
    const Eigen::VectorXd sw = w.array().sqrt();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(sw.asDiagonal() * B);
    const Eigen::MatrixXd Q = qr.householderQ();
    Projection P;
    P.complement = 2 * m > nt;
    const int first = P.complement ? m : 0;
    P.m = P.complement ? nt - m : m;
    const Eigen::MatrixXd Qs = Q.middleCols(first, P.m);
    P.U = sw.cwiseInverse().asDiagonal() * Qs;
    P.W = sw.asDiagonal() * Qs;
    return P;
}

}  // namespace

struct Solver::Impl {
    MeridianGrid g;
    SteadyStateParams p;
    Mode mode;
    SolverOptions opt;
    SteadyStateField st;

    int nr, nt, NP;
    std::size_t N, NPAD;
    double dr, dth;
    bool gamma2;

    std::vector<double> rP, sinP;
    std::vector<double> rbP, PbP, c2bP, rg2P;
    std::vector<double> rb, ub, mb, sC, cot, gPr, gPt, invV;
    std::vector<double> Ar, At;
    double idr, idth;
    std::vector<double> irP, isinP, sinF, isinF, irb, isC;
    std::vector<double> fcL, fcR, ftL, ftR, ftLs, ftRs;  // face area over cell volume

    std::vector<Ring> rings;
    std::vector<int> capv;  // retained polar degree per ring (nt - 1 when unfiltered)

    mutable std::vector<double> qP, vrP, vtP, vpP, PiP, PlP;
    mutable std::vector<double> d_vr_r, d_vr_t, d_vt_t, divr, divt, rdvt, divv;
    mutable std::vector<double> ptmp;
    std::vector<double> mbP, sP;
    mutable std::vector<double> fr_rr, fr_rt, fr_rp, fr_m, fr_T, ft_rt, ft_tt, ft_tp, ft_m, ft_T;

    Impl(const MeridianGrid& g_, const SteadyStateParams& p_, Mode m, SolverOptions o)
        : g(g_), p(p_), mode(m), opt(o), st(make_steady_field(p_, g_)) {
        nr = g.nr();
        nt = g.ntheta();
        NP = nt + 2;
        N = g.size();
        NPAD = static_cast<std::size_t>(nr + 2) * NP;
        dr = g.dr();
        dth = g.dtheta();
        gamma2 = p.gamma == 2.0;

        rP.resize(nr + 2);
        sinP.resize(nt + 2);
        for (int j = -1; j <= nr; ++j) rP[j + 1] = (j + 0.5) * dr;  // signed through the origin
        for (int k = -1; k <= nt; ++k) sinP[k + 1] = std::sin((k + 0.5) * dth);

        rbP.resize(NPAD);
        PbP.resize(NPAD);
        c2bP.resize(NPAD);
        rg2P.resize(NPAD);
        for (int j = -1; j <= nr; ++j)
            for (int k = -1; k <= nt; ++k) {
                const double s = rP[j + 1] * sinP[k + 1];
                const double rho = steady_density(std::abs(s), p);
                const std::size_t i = pidx(j, k);
                rbP[i] = rho;
                PbP[i] = std::pow(rho, p.gamma);
                c2bP[i] = p.gamma * std::pow(rho, p.gamma - 1.0);
                rg2P[i] = std::pow(rho, p.gamma - 2.0);
            }

        rb.resize(N);
        ub.resize(N);
        mb.resize(N);
        sC.resize(N);
        cot.resize(N);
        gPr.resize(N);
        gPt.resize(N);
        invV.resize(N);
        for (int j = 0; j < nr; ++j)
            for (int k = 0; k < nt; ++k) {
                const std::size_t c = g.idx(j, k), q = pidx(j, k);
                const double r = g.r(j), sn = g.sin_theta(k);
                rb[c] = rbP[q];
                ub[c] = st.u_bar.ph.v[c];
                sC[c] = r * sn;
                mb[c] = sC[c] * ub[c];
                cot[c] = g.cos_theta(k) / sn;
                gPr[c] = (PbP[q + NP] - PbP[q - NP]) / (2.0 * dr) / rb[c];
                gPt[c] = (PbP[q + 1] - PbP[q - 1]) / (2.0 * r * dth) / rb[c];
                invV[c] = 1.0 / (r * r * sn * dr * dth);
            }
        Ar.assign(static_cast<std::size_t>(nr + 1) * nt, 0.0);
        for (int j = 0; j <= nr; ++j)
            for (int k = 0; k < nt; ++k) Ar[static_cast<std::size_t>(j) * nt + k] = j * dr * j * dr * g.sin_theta(k) * dth;
        At.assign(static_cast<std::size_t>(nr) * (nt + 1), 0.0);
        for (int j = 0; j < nr; ++j)
            for (int k = 0; k <= nt; ++k) At[static_cast<std::size_t>(j) * (nt + 1) + k] = g.r(j) * std::sin(k * dth) * dr;

        idr = 1.0 / dr;
        idth = 1.0 / dth;
        irP.resize(nr + 2);
        isinP.resize(nt + 2);
        for (int j = 0; j < nr + 2; ++j) irP[j] = 1.0 / rP[j];
        for (int k = 0; k < nt + 2; ++k) isinP[k] = 1.0 / sinP[k];
        sinF.resize(nt + 1);
        isinF.assign(nt + 1, 0.0);
        for (int k = 0; k <= nt; ++k) sinF[k] = std::sin(k * dth);
        for (int k = 1; k < nt; ++k) isinF[k] = 1.0 / sinF[k];
        irb.resize(N);
        isC.resize(N);
        for (std::size_t c = 0; c < N; ++c) {
            irb[c] = 1.0 / rb[c];
            isC[c] = 1.0 / sC[c];
        }
        fcL.assign(nr + 1, 0.0);
        fcR.assign(nr + 1, 0.0);
        for (int j = 1; j <= nr; ++j) {
            const double rf = j * dr;
            fcL[j] = rf * rf / (rP[j] * rP[j] * dr);
            fcR[j] = rf * rf / (rP[j + 1] * rP[j + 1] * dr);
        }
        ftL.assign(nt + 1, 0.0);
        ftR.assign(nt + 1, 0.0);
        ftLs.assign(nt + 1, 0.0);
        ftRs.assign(nt + 1, 0.0);
        for (int k = 1; k < nt; ++k) {
            ftL[k] = sinF[k] / (sinP[k] * dth);
            ftR[k] = sinF[k] / (sinP[k + 1] * dth);
            ftLs[k] = ftL[k] * sinF[k] / sinP[k];
            ftRs[k] = ftR[k] * sinF[k] / sinP[k + 1];
        }
        for (auto* v : {&qP, &vrP, &vtP, &vpP, &PiP, &PlP}) v->assign(NPAD, 0.0);
        mbP.assign(NPAD, 0.0);
        sP.assign(NPAD, 0.0);
        for (int j = 0; j < nr; ++j)
            for (int k = 0; k < nt; ++k) {
                mbP[pidx(j, k)] = mb[g.idx(j, k)];
                sP[pidx(j, k)] = sC[g.idx(j, k)];
            }
        for (auto* v : {&fr_rr, &fr_rt, &fr_rp, &fr_m, &fr_T}) v->assign(static_cast<std::size_t>(nr + 1) * nt, 0.0);
        for (auto* v : {&ft_rt, &ft_tt, &ft_tp, &ft_m, &ft_T}) v->assign(static_cast<std::size_t>(nr) * (nt + 1), 0.0);
        for (auto* v : {&d_vr_r, &d_vr_t, &d_vt_t, &divr, &divt, &rdvt, &divv}) v->assign(N, 0.0);
        build_filter();
        ptmp.assign(2 * static_cast<std::size_t>(nt), 0.0);
    }

    std::size_t pidx(int j, int k) const { return static_cast<std::size_t>(j + 1) * NP + (k + 1); }

    void build_filter() {
        capv.assign(nr, nt - 1);
        if (!opt.filter) return;
        for (int j = 0; j < nr; ++j) {
            const int base = j == 0 ? 1 : static_cast<int>(std::floor(opt.filter_factor * (j + 0.5)));
            const int lq = std::max(2, base), lv = std::max(1, base);
            if (lq + 1 >= nt) break;
            capv[j] = lv;
            Ring R;
            R.j = j;
            const int mq = lq + 1, mt = lv;
            Eigen::VectorXd w(nt);
            Eigen::MatrixXd Bq(nt, mq), Bt(nt, mt);
            for (int k = 0; k < nt; ++k) {
                const double x = g.cos_theta(k), s = g.sin_theta(k);
                w(k) = s;
                // Legendre P_l and derivatives P_l' by recurrence
                std::vector<double> P(lq + 2), dP(lq + 2);
                P[0] = 1.0;
                P[1] = x;
                dP[0] = 0.0;
                dP[1] = 1.0;
                for (int l = 1; l <= lq; ++l) {
                    P[l + 1] = ((2 * l + 1) * x * P[l] - l * P[l - 1]) / (l + 1);
                    dP[l + 1] = dP[l - 1] + (2 * l + 1) * P[l];
                }
                for (int l = 0; l < mq; ++l) Bq(k, l) = P[l];
                for (int l = 1; l <= mt; ++l) Bt(k, l - 1) = s * dP[l];
            }
            R.q = build_projection(Bq, w);
            R.t = build_projection(Bt, w);
            rings.push_back(std::move(R));
        }
    }

    void filter_fields(double* q, double* vr, double* vt, double* vp) const {
        // contiguous field blocks (as in the stepper) are filtered two columns at a time
        const bool packed = q && vr == q + N && vt == vr + N && vp == vt + N;
        for (const Ring& R : rings) {
            const std::size_t o = static_cast<std::size_t>(R.j) * nt;
            if (packed) {
                apply_projection(R.q, q + o, nt, 2, N, ptmp.data());
                apply_projection(R.t, vt + o, nt, 2, N, ptmp.data());
                continue;
            }
            if (q) apply_projection(R.q, q + o, nt, 1, nt, ptmp.data());
            if (vr) apply_projection(R.q, vr + o, nt, 1, nt, ptmp.data());
            if (vt) apply_projection(R.t, vt + o, nt, 1, nt, ptmp.data());
            if (vp) apply_projection(R.t, vp + o, nt, 1, nt, ptmp.data());
        }
    }

    // Copy interior values and populate the ghost ring (origin mirror, pole mirror, slip wall).
    void fill(const double* q, const double* vr, const double* vt, const double* vp) const {
        for (int j = 0; j < nr; ++j) {
            const std::size_t c = static_cast<std::size_t>(j) * nt, pp = pidx(j, 0);
            std::copy(q + c, q + c + nt, qP.begin() + pp);
            std::copy(vr + c, vr + c + nt, vrP.begin() + pp);
            std::copy(vt + c, vt + c + nt, vtP.begin() + pp);
            std::copy(vp + c, vp + c + nt, vpP.begin() + pp);
            // poles: scalar and u_r even, u_theta and u_phi odd
            const std::size_t n0 = pidx(j, -1), s0 = pidx(j, nt);
            qP[n0] = q[c];
            vrP[n0] = vr[c];
            vtP[n0] = -vt[c];
            vpP[n0] = -vp[c];
            qP[s0] = q[c + nt - 1];
            vrP[s0] = vr[c + nt - 1];
            vtP[s0] = -vt[c + nt - 1];
            vpP[s0] = -vp[c + nt - 1];
        }
        const double rg = rP[nr + 1], ri = rP[nr];
        for (int k = 0; k < nt; ++k) {
            // origin: mirror through x = 0 onto theta -> pi - theta
            const std::size_t o = pidx(-1, k), m = static_cast<std::size_t>(nt - 1 - k);
            qP[o] = q[m];
            vrP[o] = -vr[m];
            vtP[o] = vt[m];
            vpP[o] = -vp[m];
            // wall: u_r odd, u_theta / r and u_phi / r even, q zero normal gradient
            const std::size_t w = pidx(nr, k), c = static_cast<std::size_t>(nr - 1) * nt + k;
            qP[w] = q[c];
            vrP[w] = -vr[c];
            vtP[w] = vt[c] * rg / ri;
            vpP[w] = vp[c] * rg / ri;
        }
    }

    void pressure_fields(bool need_nl, bool need_lin) const {
        auto each = [&](auto&& f) {
            for (int j = -1; j <= nr; ++j)
                for (int k = (j < 0 || j == nr) ? 0 : -1; k <= ((j < 0 || j == nr) ? nt - 1 : nt); ++k) f(pidx(j, k));
        };
        if (need_nl) {
            if (gamma2)
                each([&](std::size_t i) { PiP[i] = qP[i] * (2.0 * rbP[i] + qP[i]); });
            else
                each([&](std::size_t i) { PiP[i] = PbP[i] * std::expm1(p.gamma * std::log1p(qP[i] / rbP[i])); });
        }
        if (need_lin) each([&](std::size_t i) { PlP[i] = c2bP[i] * qP[i]; });
    }

    void check_density(const double* q) const {
        for (int j = 0; j < nr; ++j)
            for (int k = 0; k < nt; ++k) {
                const std::size_t c = static_cast<std::size_t>(j) * nt + k;
                const double rho = rb[c] + q[c];
                if (!std::isfinite(q[c])) throw BlowUpError("non-finite density at cell (" + std::to_string(j) + "," + std::to_string(k) + ")");
                if (!(rho > 0.0))
                    throw VacuumError("vacuum breach at cell (" + std::to_string(j) + "," + std::to_string(k) + ")");
            }
    }

    void derivatives() const {
        const double hdr = 0.5 * idr, hdth = 0.5 * idth;
        const double* __restrict ar = vrP.data();
        const double* __restrict at = vtP.data();
        for (int j = 0; j < nr; ++j) {
            const double ir = irP[j + 1], ct = hdth * ir;
            for (int k = 0; k < nt; ++k) {
                const std::size_t c = static_cast<std::size_t>(j) * nt + k, i = pidx(j, k);
                d_vr_r[c] = (ar[i + NP] - ar[i - NP]) * hdr;
                d_vr_t[c] = (ar[i + 1] - ar[i - 1]) * ct;
                d_vt_t[c] = (at[i + 1] - at[i - 1]) * ct;
                rdvt[c] = (at[i + NP] - at[i - NP]) * hdr - at[i] * ir;
                divr[c] = d_vr_r[c] + 2.0 * ar[i] * ir;
                divt[c] = (sinP[k + 2] * at[i + 1] - sinP[k] * at[i - 1]) * ct * isinP[k + 1];
            }
        }
    }

    template <bool NL, bool BD>
    void kernel(const double* q, const double* vr, const double* vt, const double* vp, const Targets& T, bool cross) const {
        if constexpr (NL) check_density(q);
        fill(q, vr, vt, vp);
        pressure_fields(NL || cross, !NL || cross);
        const double mu = p.mu, lam = p.lambda, beta = opt.stabilization;
        const double hdr = 0.5 * idr, hdth = 0.5 * idth;
        const double* __restrict qp = qP.data();
        const double* __restrict ar = vrP.data();
        const double* __restrict at = vtP.data();
        const double* __restrict ap = vpP.data();

        derivatives();
        if constexpr (BD) std::fill(divv.begin(), divv.end(), 0.0);

        // radial faces; face j sits between cells j-1 and j, j = 0 has zero area.
        // Coefficients already include the face area over the cell volume.
        for (int j = 1; j <= nr; ++j) {
            const double rf = j * dr;
            const bool wall = j == nr;
            const double irL = irP[j], irR = irP[j + 1];
            const double cl = fcL[j], cr = fcR[j], irf = 1.0 / rf;
            const double clr = cl * rf * irL, crr = cr * rf * irR;
            for (int k = 0; k < nt; ++k) {
                const std::size_t pL = pidx(j - 1, k), pR = pidx(j, k);
                const std::size_t iL = static_cast<std::size_t>(j - 1) * nt + k, iR = iL + nt;
                const double Srr = 2.0 * mu * (ar[pR] - ar[pL]) * idr +
                                   lam * ((ar[pR] - ar[pL]) * idr + (ar[pL] + ar[pR]) * irf + (wall ? divt[iL] : 0.5 * (divt[iL] + divt[iR])));
                T.visc[0][iL] += cl * Srr;
                if (wall) continue;  // u_r = 0 and zero tangential stress on the sphere
                T.visc[0][iR] -= cr * Srr;

                const double Srt = mu * (rf * (at[pR] * irR - at[pL] * irL) * idr + 0.5 * (d_vr_t[iL] + d_vr_t[iR]));
                const double Srp = mu * rf * (ap[pR] * irR - ap[pL] * irL) * idr;
                T.visc[1][iL] += clr * Srt;
                T.visc[1][iR] -= crr * Srt;
                T.visc[2][iL] += clr * Srp;
                T.visc[2][iR] -= crr * Srp;

                const double vf = 0.5 * (ar[pL] + ar[pR]);
                const double Fb = 0.5 * (rbP[pL] + rbP[pR]) * vf;
                const double Fc = 0.25 * beta * dr * (qp[pR + NP] - 3.0 * (qp[pR] - qp[pL]) - qp[pL - NP]);
                const double dmb = mb[iR] - mb[iL];
                const double dmv = sC[iR] * ap[pR] - sC[iL] * ap[pL];
                const double hL = 0.5 * cl * isC[iL], hR = 0.5 * cr * isC[iR];
                T.q_cont[iL] -= cl * Fb;
                T.q_cont[iR] += cr * Fb;
                T.q_stab[iL] -= cl * Fc;
                T.q_stab[iR] += cr * Fc;
                T.f2[2][iL] -= hL * Fb * dmb;
                T.f2[2][iR] -= hR * Fb * dmb;
                if constexpr (NL) {
                    const double Fq = 0.5 * (qp[pL] + qp[pR]) * vf;
                    T.q_trans[iL] -= cl * Fq;
                    T.q_trans[iR] += cr * Fq;
                    if constexpr (BD) {
                        divv[iL] += cl * vf;
                        divv[iR] -= cr * vf;
                    }
                    T.adv[2][iL] -= hL * Fb * dmv;
                    T.adv[2][iR] -= hR * Fb * dmv;
                    T.g2[2][iL] -= hL * Fq * (dmb + dmv);
                    T.g2[2][iR] -= hR * Fq * (dmb + dmv);
                    T.stab[2][iL] -= hL * Fc * (dmb + dmv);
                    T.stab[2][iR] -= hR * Fc * (dmb + dmv);
                } else {
                    T.stab[2][iL] -= hL * Fc * dmb;
                    T.stab[2][iR] -= hR * Fc * dmb;
                }
            }
        }

        // polar faces; k = 0 and k = nt lie on the axis and have zero area
        for (int j = 0; j < nr; ++j) {
            const double r = rP[j + 1], ir = irP[j + 1], irt = ir * idth;
            for (int k = 1; k < nt; ++k) {
                const double sf = sinF[k], sL = sinP[k], sR = sinP[k + 1];
                const double aL = ftL[k] * ir, aR = ftR[k] * ir;
                const std::size_t pL = pidx(j, k - 1), pR = pL + 1;
                const std::size_t iL = static_cast<std::size_t>(j) * nt + k - 1, iR = iL + 1;
                const double Stt = 2.0 * mu * ((at[pR] - at[pL]) * irt + 0.5 * (ar[pL] + ar[pR]) * ir) +
                                   lam * (0.5 * (divr[iL] + divr[iR]) + (sR * at[pR] - sL * at[pL]) * irt * isinF[k]);
                const double Srt = mu * (0.5 * (rdvt[iL] + rdvt[iR]) + (ar[pR] - ar[pL]) * irt);
                const double Stp = mu * sf * irt * (ap[pR] * isinP[k + 1] - ap[pL] * isinP[k]);
                T.visc[0][iL] += aL * Srt;
                T.visc[0][iR] -= aR * Srt;
                T.visc[1][iL] += aL * Stt;
                T.visc[1][iR] -= aR * Stt;
                T.visc[2][iL] += ftLs[k] * ir * Stp;
                T.visc[2][iR] -= ftRs[k] * ir * Stp;

                const double vf = 0.5 * (at[pL] + at[pR]);
                const double Fb = 0.5 * (rbP[pL] + rbP[pR]) * vf;
                const double Fc = 0.25 * beta * r * dth * (qp[pR + 1] - 3.0 * (qp[pR] - qp[pL]) - qp[pL - 1]);
                const double dmb = mb[iR] - mb[iL];
                const double dmv = sC[iR] * ap[pR] - sC[iL] * ap[pL];
                const double hL = 0.5 * aL * isC[iL], hR = 0.5 * aR * isC[iR];
                T.q_cont[iL] -= aL * Fb;
                T.q_cont[iR] += aR * Fb;
                T.q_stab[iL] -= aL * Fc;
                T.q_stab[iR] += aR * Fc;
                T.f2[2][iL] -= hL * Fb * dmb;
                T.f2[2][iR] -= hR * Fb * dmb;
                if constexpr (NL) {
                    const double Fq = 0.5 * (qp[pL] + qp[pR]) * vf;
                    T.q_trans[iL] -= aL * Fq;
                    T.q_trans[iR] += aR * Fq;
                    if constexpr (BD) {
                        divv[iL] += aL * vf;
                        divv[iR] -= aR * vf;
                    }
                    T.adv[2][iL] -= hL * Fb * dmv;
                    T.adv[2][iR] -= hR * Fb * dmv;
                    T.g2[2][iL] -= hL * Fq * (dmb + dmv);
                    T.g2[2][iR] -= hR * Fq * (dmb + dmv);
                    T.stab[2][iL] -= hL * Fc * (dmb + dmv);
                    T.stab[2][iR] -= hR * Fc * (dmb + dmv);
                } else {
                    T.stab[2][iL] -= hL * Fc * dmb;
                    T.stab[2][iR] -= hR * Fc * dmb;
                }
            }
        }

        // cell-centred terms, then division by the density
        const double* Pi = NL ? PiP.data() : PlP.data();
        for (int j = 0; j < nr; ++j) {
            const double ir = irP[j + 1], irt = hdth * ir;
            for (int k = 0; k < nt; ++k) {
                const std::size_t c = static_cast<std::size_t>(j) * nt + k, i = pidx(j, k);
                const double vr_ = ar[i], vt_ = at[i], vp_ = ap[i], q_ = qp[i];
                const double ct = cot[c];
                const double divc = divr[c] + divt[c];
                const double Stt = 2.0 * mu * (d_vt_t[c] + vr_ * ir) + lam * divc;
                const double Spp = 2.0 * mu * (vr_ + vt_ * ct) * ir + lam * divc;
                const double hr = -(Stt + Spp) * ir, ht = -ct * Spp * ir;
                const double pr = -((Pi[i + NP] - Pi[i - NP]) * hdr - q_ * gPr[c]);
                const double pt = -((Pi[i + 1] - Pi[i - 1]) * irt - q_ * gPt[c]);
                const double cor = 2.0 * ub[c] * vp_ * ir;  // -(B(ubar,v) + B(v,ubar)), radial part
                const double fr = rb[c] * cor, ft = rb[c] * cor * ct;
                double Br = 0.0, Bt = 0.0;
                if constexpr (NL) {
                    Br = vr_ * d_vr_r[c] + vt_ * d_vr_t[c] - (vt_ * vt_ + vp_ * vp_) * ir;
                    Bt = vr_ * (rdvt[c] + vt_ * ir) + vt_ * d_vt_t[c] + (vt_ * vr_ - vp_ * vp_ * ct) * ir;
                }
                const double irho = NL ? 1.0 / (rb[c] + q_) : irb[c];
                if constexpr (BD) {
                    T.visc[0][c] = (T.visc[0][c] + hr) * irho;
                    T.visc[1][c] = (T.visc[1][c] + ht) * irho;
                    T.visc[2][c] *= irho;
                    T.press[0][c] = pr * irho;
                    T.press[1][c] = pt * irho;
                    T.f2[0][c] = fr * irho;
                    T.f2[1][c] = ft * irho;
                    T.f2[2][c] *= irho;
                    T.stab[2][c] *= irho;
                    if constexpr (NL) {
                        T.adv[0][c] = -rb[c] * Br * irho;
                        T.adv[1][c] = -rb[c] * Bt * irho;
                        T.adv[2][c] *= irho;
                        T.g2[0][c] = q_ * (cor - Br) * irho;
                        T.g2[1][c] = q_ * (cor * ct - Bt) * irho;
                        T.g2[2][c] *= irho;
                        const double Dv = divv[c];
                        T.q_g1[c] = -q_ * Dv;
                        T.q_trans[c] += q_ * Dv;
                    }
                } else {
                    // all parts alias the totals
                    double sr = hr + pr + fr, st_ = ht + pt + ft;
                    if constexpr (NL) {
                        sr += -rb[c] * Br + q_ * (cor - Br);
                        st_ += -rb[c] * Bt + q_ * (cor * ct - Bt);
                    }
                    T.visc[0][c] = (T.visc[0][c] + sr) * irho;
                    T.visc[1][c] = (T.visc[1][c] + st_) * irho;
                    T.visc[2][c] *= irho;
                }
                if (cross) {
                    // gamma rho_bar grad(rho_bar^(gamma-2) q) and grad R
                    const double a0 = rg2P[i + NP] * qp[i + NP], a1 = rg2P[i - NP] * qp[i - NP];
                    const double b0 = rg2P[i + 1] * qp[i + 1], b1 = rg2P[i - 1] * qp[i - 1];
                    T.split[0][c] = -p.gamma * rb[c] * (a0 - a1) * hdr * irho;
                    T.split[1][c] = -p.gamma * rb[c] * (b0 - b1) * irt * irho;
                    T.rem[0][c] = -((PiP[i + NP] - PlP[i + NP]) - (PiP[i - NP] - PlP[i - NP])) * hdr * irho;
                    T.rem[1][c] = -((PiP[i + 1] - PlP[i + 1]) - (PiP[i - 1] - PlP[i - 1])) * irt * irho;
                }
            }
        }
    }

    // Gather form of the same discretization for time stepping: face fluxes first, then one pass per cell.
    template <bool NL>
    void kernel_fast(const double* q, const double* vr, const double* vt, const double* vp, double* __restrict dq, double* __restrict dvr,
                     double* __restrict dvt, double* __restrict dvp) const {
        if constexpr (NL) check_density(q);
        fill(q, vr, vt, vp);
        pressure_fields(NL, !NL);
        derivatives();
        const double mu = p.mu, lam = p.lambda, beta = opt.stabilization;
        const double* __restrict qp = qP.data();
        const double* __restrict ar = vrP.data();
        const double* __restrict at = vtP.data();
        const double* __restrict ap = vpP.data();
        const double* __restrict rbp = rbP.data();
        const double* __restrict mbp = mbP.data();
        const double* __restrict sp = sP.data();
        double* __restrict Rrr = fr_rr.data();
        double* __restrict Rrt = fr_rt.data();
        double* __restrict Rrp = fr_rp.data();
        double* __restrict Rm = fr_m.data();
        double* __restrict RT = fr_T.data();
        double* __restrict Trt = ft_rt.data();
        double* __restrict Ttt = ft_tt.data();
        double* __restrict Ttp = ft_tp.data();
        double* __restrict Tm = ft_m.data();
        double* __restrict TT = ft_T.data();
        const double* __restrict Dvt = divt.data();
        const double* __restrict Dvr = divr.data();
        const double* __restrict Wt = d_vr_t.data();
        const double* __restrict Rd = rdvt.data();
        const double* __restrict sinp = sinP.data();
        const double* __restrict isinp = isinP.data();
        const double* __restrict sinf = sinF.data();
        const double* __restrict isinf = isinF.data();
        const double* __restrict tL = ftL.data();
        const double* __restrict tR = ftR.data();
        const double* __restrict tLs = ftLs.data();
        const double* __restrict tRs = ftRs.data();
        const double* __restrict Dvtt = d_vt_t.data();
        const double* __restrict Dvrr = d_vr_r.data();
        const double* __restrict cotp = cot.data();
        const double* __restrict gpr = gPr.data();
        const double* __restrict gpt = gPt.data();
        const double* __restrict ubp = ub.data();
        const double* __restrict rbc = rb.data();
        const double* __restrict irbc = irb.data();
        const double* __restrict isc = isC.data();
        const int nt = this->nt, nr = this->nr;
        const std::ptrdiff_t NP = this->NP;
        const double dr = this->dr, dth = this->dth, idr = this->idr, idth = this->idth;
        const double hdr = 0.5 * idr, hdth = 0.5 * idth;

        // radial faces j = 1..nr (j = 0 has zero area and stays zero)
        for (int j = 1; j <= nr; ++j) {
            const double rf = j * dr;
            const double irL = irP[j], irR = irP[j + 1], irf = 1.0 / rf;
            const std::size_t fo = static_cast<std::size_t>(j) * nt;
            const std::size_t pL0 = pidx(j - 1, 0), pR0 = pidx(j, 0);
            const double* __restrict aL = ar + pL0;
            const double* __restrict aR = ar + pR0;
            const double* __restrict tL_ = at + pL0;
            const double* __restrict tR_ = at + pR0;
            const double* __restrict pL_ = ap + pL0;
            const double* __restrict pR_ = ap + pR0;
            const double* __restrict qL = qp + pL0;
            const double* __restrict qR = qp + pR0;
            const double* __restrict qLL = qp + pL0 - NP;
            const double* __restrict qRR = qp + pR0 + NP;
            const double* __restrict bL = rbp + pL0;
            const double* __restrict bR = rbp + pR0;
            const double* __restrict mL = mbp + pL0;
            const double* __restrict mR = mbp + pR0;
            const double* __restrict sL = sp + pL0;
            const double* __restrict sR = sp + pR0;
            const double* __restrict DL = Dvt + (j - 1) * nt;
            const double* __restrict WL = Wt + (j - 1) * nt;
            double* __restrict orr = Rrr + fo;
            double* __restrict ort = Rrt + fo;
            double* __restrict orp = Rrp + fo;
            double* __restrict om = Rm + fo;
            double* __restrict oT = RT + fo;
            if (j == nr) {
#pragma GCC ivdep
                for (int k = 0; k < nt; ++k) {
                    orr[k] = 2.0 * mu * (aR[k] - aL[k]) * idr + lam * ((aR[k] - aL[k]) * idr + (aL[k] + aR[k]) * irf + DL[k]);
                    ort[k] = orp[k] = om[k] = oT[k] = 0.0;
                }
                continue;
            }
            const double* __restrict DR = DL + nt;
            const double* __restrict WR = WL + nt;
#pragma GCC ivdep
            for (int k = 0; k < nt; ++k) {
                orr[k] = 2.0 * mu * (aR[k] - aL[k]) * idr + lam * ((aR[k] - aL[k]) * idr + (aL[k] + aR[k]) * irf + 0.5 * (DL[k] + DR[k]));
                ort[k] = rf * mu * (rf * (tR_[k] * irR - tL_[k] * irL) * idr + 0.5 * (WL[k] + WR[k]));
                orp[k] = rf * rf * mu * (pR_[k] * irR - pL_[k] * irL) * idr;
                const double vf = 0.5 * (aL[k] + aR[k]);
                const double Fc = 0.25 * beta * dr * (qRR[k] - 3.0 * (qR[k] - qL[k]) - qLL[k]);
                double F = 0.5 * (bL[k] + bR[k]) * vf + Fc;
                double dm = mR[k] - mL[k];
                if constexpr (NL) {
                    F += 0.5 * (qL[k] + qR[k]) * vf;
                    dm += sR[k] * pR_[k] - sL[k] * pL_[k];
                }
                om[k] = F;
                oT[k] = F * dm;
            }
        }
        // polar faces k = 1..nt-1 (axis faces have zero area and stay zero)
        for (int j = 0; j < nr; ++j) {
            const double r = rP[j + 1], ir = irP[j + 1], irt = ir * idth;
            const std::size_t fo = static_cast<std::size_t>(j) * (nt + 1) + 1;
            const std::size_t co = static_cast<std::size_t>(j) * nt;
            const std::size_t p0 = pidx(j, 0);
            // index m = k - 1 runs over faces between cells m and m + 1
            const double* __restrict aL = ar + p0;
            const double* __restrict aR = aL + 1;
            const double* __restrict tL_ = at + p0;
            const double* __restrict tR_ = tL_ + 1;
            const double* __restrict pL_ = ap + p0;
            const double* __restrict pR_ = pL_ + 1;
            const double* __restrict qL = qp + p0;
            const double* __restrict qR = qL + 1;
            const double* __restrict qLL = qL - 1;
            const double* __restrict qRR = qL + 2;
            const double* __restrict bL = rbp + p0;
            const double* __restrict bR = bL + 1;
            const double* __restrict mL = mbp + p0;
            const double* __restrict mR = mL + 1;
            const double* __restrict sL = sp + p0;
            const double* __restrict sR = sL + 1;
            const double* __restrict DL = Dvr + co;
            const double* __restrict DR = DL + 1;
            const double* __restrict RL = Rd + co;
            const double* __restrict RR = RL + 1;
            const double* __restrict snL = sinp + 1;
            const double* __restrict snR = sinp + 2;
            const double* __restrict isL = isinp + 1;
            const double* __restrict isR = isinp + 2;
            const double* __restrict sf = sinf + 1;
            const double* __restrict isf = isinf + 1;
            double* __restrict ott = Ttt + fo;
            double* __restrict ort = Trt + fo;
            double* __restrict otp = Ttp + fo;
            double* __restrict om = Tm + fo;
            double* __restrict oT = TT + fo;
            const double cF = 0.25 * beta * r * dth;
#pragma GCC ivdep
            for (int m = 0; m < nt - 1; ++m) {
                ott[m] = 2.0 * mu * ((tR_[m] - tL_[m]) * irt + 0.5 * (aL[m] + aR[m]) * ir) +
                         lam * (0.5 * (DL[m] + DR[m]) + (snR[m] * tR_[m] - snL[m] * tL_[m]) * irt * isf[m]);
                ort[m] = mu * (0.5 * (RL[m] + RR[m]) + (aR[m] - aL[m]) * irt);
                otp[m] = mu * sf[m] * irt * (pR_[m] * isR[m] - pL_[m] * isL[m]);
                const double vf = 0.5 * (tL_[m] + tR_[m]);
                const double Fc = cF * (qRR[m] - 3.0 * (qR[m] - qL[m]) - qLL[m]);
                double F = 0.5 * (bL[m] + bR[m]) * vf + Fc;
                double dm = mR[m] - mL[m];
                if constexpr (NL) {
                    F += 0.5 * (qL[m] + qR[m]) * vf;
                    dm += sR[m] * pR_[m] - sL[m] * pL_[m];
                }
                om[m] = F;
                oT[m] = F * dm;
            }
        }

        const double* Pi = NL ? PiP.data() : PlP.data();
        for (int j = 0; j < nr; ++j) {
            const double ir = irP[j + 1], irt = hdth * ir;
            const double cu = fcL[j + 1], cd = fcR[j];
            const std::size_t fu = static_cast<std::size_t>(j + 1) * nt, fd = static_cast<std::size_t>(j) * nt;
            const std::size_t ft = static_cast<std::size_t>(j) * (nt + 1);
            const std::size_t co = static_cast<std::size_t>(j) * nt;
            const std::size_t p0 = pidx(j, 0);
            for (int k = 0; k < nt; ++k) {
                const std::size_t c = co + k, i = p0 + k;
                const double aU = tL[k + 1] * ir, aD = tR[k] * ir;
                const double vr_ = ar[i], vt_ = at[i], vp_ = ap[i], q_ = qp[i];
                const double ct = cotp[c];
                const double divc = Dvr[c] + Dvt[c];
                const double Stt = 2.0 * mu * (Dvtt[c] + vr_ * ir) + lam * divc;
                const double Spp = 2.0 * mu * (vr_ + vt_ * ct) * ir + lam * divc;

                const double mass = -(cu * Rm[fu + k] - cd * Rm[fd + k]) - (aU * Tm[ft + k + 1] - aD * Tm[ft + k]);
                double sr = cu * Rrr[fu + k] - cd * Rrr[fd + k] + aU * Trt[ft + k + 1] - aD * Trt[ft + k] - (Stt + Spp) * ir;
                double st_ = (cu * Rrt[fu + k] - cd * Rrt[fd + k]) * ir + aU * Ttt[ft + k + 1] - aD * Ttt[ft + k] - ct * Spp * ir;
                double sp_ = (cu * Rrp[fu + k] - cd * Rrp[fd + k]) * ir + ir * (tLs[k + 1] * Ttp[ft + k + 1] - tRs[k] * Ttp[ft + k]);
                sp_ -= 0.5 * isc[c] * (cu * RT[fu + k] + cd * RT[fd + k] + aU * TT[ft + k + 1] + aD * TT[ft + k]);

                sr -= (Pi[i + NP] - Pi[i - NP]) * hdr - q_ * gpr[c];
                st_ -= (Pi[i + 1] - Pi[i - 1]) * irt - q_ * gpt[c];
                const double cor = 2.0 * ubp[c] * vp_ * ir;
                double wgt = rbc[c];
                if constexpr (NL) {
                    const double Br = vr_ * Dvrr[c] + vt_ * Wt[c] - (vt_ * vt_ + vp_ * vp_) * ir;
                    const double Bt = vr_ * (Rd[c] + vt_ * ir) + vt_ * Dvtt[c] + (vt_ * vr_ - vp_ * vp_ * ct) * ir;
                    wgt += q_;
                    sr += wgt * (cor - Br);
                    st_ += wgt * (cor * ct - Bt);
                } else {
                    sr += wgt * cor;
                    st_ += wgt * cor * ct;
                }
                const double irho = NL ? 1.0 / wgt : irbc[c];
                dq[c] = mass;
                dvr[c] = sr * irho;
                dvt[c] = st_ * irho;
                dvp[c] = sp_ * irho;
            }
        }
    }

    void evaluate(const double* q, const double* vr, const double* vt, const double* vp, const Targets& T, bool breakdown,
                  bool cross) const {
        (void)breakdown;
        if (mode == Mode::Nonlinear)
            kernel<true, true>(q, vr, vt, vp, T, cross);
        else
            kernel<false, true>(q, vr, vt, vp, T, cross);
    }

    void fast_tendency(const double* q, const double* vr, const double* vt, const double* vp, double* dq, double* dvr, double* dvt,
                       double* dvp) const {
        if (mode == Mode::Nonlinear)
            kernel_fast<true>(q, vr, vt, vp, dq, dvr, dvt, dvp);
        else
            kernel_fast<false>(q, vr, vt, vp, dq, dvr, dvt, dvp);
    }

    // Filtered tendency in conservative variables (q, u_r, u_theta, J = rho u_phi perturbation).
    void conservative_tendency(const double* q, const double* vr, const double* vt, const double* vp, double* dq, double* dvr,
                               double* dvt, double* dJ) const {
        fast_tendency(q, vr, vt, vp, dq, dvr, dvt, dJ);
        if (mode == Mode::Nonlinear)
            for (std::size_t c = 0; c < N; ++c) dJ[c] = (rb[c] + q[c]) * dJ[c] + vp[c] * dq[c];
        else
            for (std::size_t c = 0; c < N; ++c) dJ[c] = rb[c] * dJ[c];
        filter_fields(dq, dvr, dvt, dJ);
    }
};

Solver::Solver(const MeridianGrid& g, const SteadyStateParams& p, Mode mode, SolverOptions opts)
    : impl_(std::make_unique<Impl>(g, p, mode, opts)) {}
Solver::~Solver() = default;
Solver::Solver(Solver&&) noexcept = default;
Solver& Solver::operator=(Solver&&) noexcept = default;

const MeridianGrid& Solver::grid() const { return impl_->g; }
const SteadyStateParams& Solver::params() const { return impl_->p; }
const SteadyStateField& Solver::steady() const { return impl_->st; }
Mode Solver::mode() const { return impl_->mode; }

namespace {
void require(const PerturbationState& s, const MeridianGrid& g) {
    if (!s.q.matches(g) || !s.v.matches(g)) throw GridError("shape mismatch");
}
}  // namespace

void Solver::tendency(const PerturbationState& s, ScalarField& dq, VectorField& dv) const {
    const auto& I = *impl_;
    require(s, I.g);
    dq = ScalarField(I.g);
    dv = VectorField(I.g);
    std::vector<double> J(I.N);
    I.conservative_tendency(s.q.v.data(), s.v.r.v.data(), s.v.th.v.data(), s.v.ph.v.data(), dq.v.data(), dv.r.v.data(), dv.th.v.data(),
                            J.data());
    for (std::size_t c = 0; c < I.N; ++c) {
        const double rho = I.mode == Mode::Nonlinear ? I.rb[c] + s.q.v[c] : I.rb[c];
        dv.ph.v[c] = I.mode == Mode::Nonlinear ? (J[c] - s.v.ph.v[c] * dq.v[c]) / rho : J[c] / rho;
    }
}

RHSBreakdown Solver::rhs(const PerturbationState& s) const {
    const auto& I = *impl_;
    require(s, I.g);
    const MeridianGrid& g = I.g;
    RHSBreakdown b;
    for (ScalarField* f : {&b.continuity_linear, &b.transport, &b.g1, &b.stabilization_q, &b.filter_q}) *f = ScalarField(g);
    for (VectorField* f : {&b.momentum_pressure, &b.momentum_viscous, &b.f2, &b.g2, &b.advection, &b.stabilization_v, &b.filter_v,
                           &b.pressure_split_linear, &b.remainder_gradient})
        *f = VectorField(g);
    ScalarField zero(g);  // azimuthal pressure / split components stay zero
    Targets T;
    T.q_cont = b.continuity_linear.v.data();
    T.q_trans = b.transport.v.data();
    T.q_g1 = b.g1.v.data();
    T.q_stab = b.stabilization_q.v.data();
    auto comps = [](VectorField& f, double* out[3]) {
        out[0] = f.r.v.data();
        out[1] = f.th.v.data();
        out[2] = f.ph.v.data();
    };
    comps(b.momentum_pressure, T.press);
    comps(b.momentum_viscous, T.visc);
    comps(b.f2, T.f2);
    comps(b.g2, T.g2);
    comps(b.advection, T.adv);
    comps(b.stabilization_v, T.stab);
    comps(b.pressure_split_linear, T.split);
    comps(b.remainder_gradient, T.rem);
    T.press[2] = nullptr;
    T.split[2] = nullptr;
    T.rem[2] = nullptr;
    I.evaluate(s.q.v.data(), s.v.r.v.data(), s.v.th.v.data(), s.v.ph.v.data(), T, true, true);

    // filter correction: filtered total minus raw total
    if (!I.opt.filter) return b;
    ScalarField dq;
    VectorField dv;
    tendency(s, dq, dv);
    const ScalarField rq = b.total_q();
    const VectorField rv = b.total_v();
    for (std::size_t c = 0; c < I.N; ++c) {
        b.filter_q.v[c] = dq.v[c] - rq.v[c];
        b.filter_v.r.v[c] = dv.r.v[c] - rv.r.v[c];
        b.filter_v.th.v[c] = dv.th.v[c] - rv.th.v[c];
        b.filter_v.ph.v[c] = dv.ph.v[c] - rv.ph.v[c];
    }
    return b;
}

Solver::Ghosts Solver::wall_ghosts(const PerturbationState& s) const {
    const auto& I = *impl_;
    require(s, I.g);
    I.fill(s.q.v.data(), s.v.r.v.data(), s.v.th.v.data(), s.v.ph.v.data());
    Ghosts gh;
    for (int k = 0; k < I.nt; ++k) {
        const std::size_t w = I.pidx(I.nr, k);
        gh.q.push_back(I.qP[w]);
        gh.vr.push_back(I.vrP[w]);
        gh.vt.push_back(I.vtP[w]);
        gh.vp.push_back(I.vpP[w]);
    }
    return gh;
}

double Solver::boundary_work(const PerturbationState& s) const {
    const auto& I = *impl_;
    const Ghosts gh = wall_ghosts(s);
    const int j = I.nr - 1;
    const double ri = I.rP[I.nr], rg = I.rP[I.nr + 1], mu = I.p.mu, lam = I.p.lambda;
    double work = 0.0;
    for (int k = 0; k < I.nt; ++k) {
        const std::size_t c = I.g.idx(j, k);
        const double vr = s.v.r.v[c], vt = s.v.th.v[c], vp = s.v.ph.v[c];
        // face values and face stresses from the ghost closure
        const double vrf = 0.5 * (vr + gh.vr[k]), vtf = 0.5 * (vt + gh.vt[k]), vpf = 0.5 * (vp + gh.vp[k]);
        const std::size_t i = I.pidx(j, k);
        const double divt = (I.sinP[k + 2] * I.vtP[i + 1] - I.sinP[k] * I.vtP[i - 1]) / (2.0 * I.dth * ri * I.sinP[k + 1]);
        const double Srr = 2.0 * mu * (gh.vr[k] - vr) / I.dr + lam * ((rg * rg * gh.vr[k] - ri * ri * vr) / I.dr + divt);
        const double Srt = mu * (gh.vt[k] / rg - vt / ri) / I.dr;
        const double Srp = mu * (gh.vp[k] / rg - vp / ri) / I.dr;
        work += 2.0 * std::numbers::pi * I.Ar[static_cast<std::size_t>(I.nr) * I.nt + k] * (vrf * Srr + vtf * Srt + vpf * Srp);
    }
    return work;
}

double Solver::min_spacing() const {
    const auto& I = *impl_;
    double h = I.dr;
    for (int j = 0; j < I.nr; ++j) {
        double ang = I.g.r(j) * I.dth;
        if (I.capv[j] < I.nt - 1)
            // the innermost filtered ring is about 23 nu / dr^2 stiff; width 1.2 r_0 keeps RK4 inside its region at cfl 0.25
            ang = j == 0 ? 1.2 * I.g.r(0) : I.g.r(j) * std::numbers::pi / (I.capv[j] + 1);
        h = std::min(h, ang);
    }
    return h;
}

double Solver::stable_dt(const PerturbationState& s, double cfl_acoustic, double cfl_viscous) const {
    const auto& I = *impl_;
    require(s, I.g);
    double umax = 0.0, cmax = 0.0, rmin = INFINITY;
    for (std::size_t c = 0; c < I.N; ++c) {
        const double rho = I.rb[c] + s.q.v[c];
        if (!(rho > 0.0)) throw VacuumError("vacuum breach in stable_dt");
        const double up = I.ub[c] + s.v.ph.v[c];
        umax = std::max(umax, std::sqrt(s.v.r.v[c] * s.v.r.v[c] + s.v.th.v[c] * s.v.th.v[c] + up * up));
        cmax = std::max(cmax, std::sqrt(I.p.gamma * std::pow(rho, I.p.gamma - 1.0)));
        rmin = std::min(rmin, rho);
    }
    const double h = min_spacing();
    const double dta = cfl_acoustic * h / (umax + cmax);
    const double nu = 2.0 * I.p.mu + I.p.lambda;
    const double dtv = nu > 0.0 ? cfl_viscous * h * h * rmin / nu : INFINITY;
    return std::min(dta, dtv);
}

void Solver::project_filter(PerturbationState& s) const {
    const auto& I = *impl_;
    require(s, I.g);
    std::vector<double> J(I.N);
    for (std::size_t c = 0; c < I.N; ++c) J[c] = (I.mode == Mode::Nonlinear ? I.rb[c] + s.q.v[c] : I.rb[c]) * s.v.ph.v[c];
    I.filter_fields(s.q.v.data(), s.v.r.v.data(), s.v.th.v.data(), J.data());
    for (std::size_t c = 0; c < I.N; ++c) s.v.ph.v[c] = J[c] / (I.mode == Mode::Nonlinear ? I.rb[c] + s.q.v[c] : I.rb[c]);
}

void Solver::step(PerturbationState& s, double dt) const {
    const auto& I = *impl_;
    require(s, I.g);
    const std::size_t N = I.N;
    const bool nl = I.mode == Mode::Nonlinear;
    // y = (q, u_r, u_theta, J)
    thread_local std::vector<double> y0, y, k, acc, vp;
    y0.resize(4 * N);
    y.resize(4 * N);
    k.resize(4 * N);
    acc.resize(4 * N);
    vp.resize(N);
    std::copy(s.q.v.begin(), s.q.v.end(), y0.begin());
    std::copy(s.v.r.v.begin(), s.v.r.v.end(), y0.begin() + N);
    std::copy(s.v.th.v.begin(), s.v.th.v.end(), y0.begin() + 2 * N);
    for (std::size_t c = 0; c < N; ++c) y0[3 * N + c] = (nl ? I.rb[c] + s.q.v[c] : I.rb[c]) * s.v.ph.v[c];

    auto stage = [&](const std::vector<double>& yy) {
        for (std::size_t c = 0; c < N; ++c) vp[c] = yy[3 * N + c] / (nl ? I.rb[c] + yy[c] : I.rb[c]);
        I.conservative_tendency(yy.data(), yy.data() + N, yy.data() + 2 * N, vp.data(), k.data(), k.data() + N, k.data() + 2 * N,
                                k.data() + 3 * N);
    };
    static constexpr double a[3] = {0.5, 0.5, 1.0};
    static constexpr double b[4] = {1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0};
    stage(y0);
    for (std::size_t i = 0; i < 4 * N; ++i) acc[i] = b[0] * k[i];
    for (int st = 0; st < 3; ++st) {
        for (std::size_t i = 0; i < 4 * N; ++i) y[i] = y0[i] + a[st] * dt * k[i];
        stage(y);
        for (std::size_t i = 0; i < 4 * N; ++i) acc[i] += b[st + 1] * k[i];
    }
    double rbmin = INFINITY;
    for (std::size_t c = 0; c < N; ++c) rbmin = std::min(rbmin, I.rb[c]);
    for (std::size_t i = 0; i < 4 * N; ++i) {
        y[i] = y0[i] + dt * acc[i];
        if (!std::isfinite(y[i])) throw BlowUpError("blow-up: non-finite value");
    }
    for (std::size_t c = 0; c < N; ++c) {
        if (std::abs(y[c]) > 10.0 * rbmin) throw BlowUpError("blow-up: |q| exceeds 10 min rho_bar");
        if (nl && !(I.rb[c] + y[c] > 0.0)) throw VacuumError("vacuum breach at cell (" + std::to_string(c / I.nt) + "," + std::to_string(c % I.nt) + ")");
    }
    std::copy(y.begin(), y.begin() + N, s.q.v.begin());
    std::copy(y.begin() + N, y.begin() + 2 * N, s.v.r.v.begin());
    std::copy(y.begin() + 2 * N, y.begin() + 3 * N, s.v.th.v.begin());
    for (std::size_t c = 0; c < N; ++c) s.v.ph.v[c] = y[3 * N + c] / (nl ? I.rb[c] + y[c] : I.rb[c]);
    s.t += dt;
}

// ---------------------------------------------------------------- initial data

void SimConfig::validate() const {
    params.validate();
    if (nr < 4 || ntheta < 4) throw ParameterError("grid too coarse");
    if (!(t_end >= 0.0)) throw ParameterError("t_end must be non-negative");
    if (!(cfl_acoustic > 0.0 && cfl_acoustic < 1.0)) throw ParameterError("cfl_acoustic must lie in (0,1)");
    if (!(cfl_viscous > 0.0 && cfl_viscous < 1.0)) throw ParameterError("cfl_viscous must lie in (0,1)");
    if (output_every < 1) throw ParameterError("output_every must be positive");
    if (checkpoint_every < 0) throw ParameterError("checkpoint_every must be non-negative");
    if (!(amplitude >= 0.0)) throw ParameterError("amplitude must be non-negative");
    if (shape != "random" && shape != "bump") throw ParameterError("unknown shape '" + shape + "'");
    if (modes < 1) throw ParameterError("modes must be positive");
    if (!(dt >= 0.0)) throw ParameterError("dt must be non-negative");
}

PerturbationState make_initial_perturbation(double amplitude, const ShapeSpec& shape, const SteadyStateField& steady,
                                            const MeridianGrid& g, std::uint64_t seed) {
    if (!steady.rho_bar.matches(g)) throw GridError("shape mismatch");
    double rbmin = INFINITY;
    for (double v : steady.rho_bar.v) rbmin = std::min(rbmin, v);
    if (amplitude >= rbmin) throw VacuumError("amplitude too large: vacuum would appear");
    PerturbationState s(g);
    if (amplitude == 0.0) return s;

    // Smooth fields built from polynomials in (rho2 = |x|^2, z): q = sum a z^b rho2^c,
    // u_m = (1 - |x|^2)^2 grad h, u_phi = s (1 - |x|^2)^2 w(rho2, z).
    // The squared factor makes v and its radial derivative vanish at the wall, so the
    // data also satisfy the stress-free condition and carry no initial boundary layer.
    const int M = std::max(1, shape.modes);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    auto coeffs = [&](int n) {
        std::vector<double> c(n);
        for (auto& x : c) x = U(rng);
        return c;
    };
    const int nc = M * M;
    std::vector<double> aq, ah, aw;
    if (shape.kind == "bump") {
        aq.assign(nc, 0.0);
        ah.assign(nc, 0.0);
        aw.assign(nc, 0.0);
    } else {
        aq = coeffs(nc);
        ah = coeffs(nc);
        aw = coeffs(nc);
    }
    auto poly = [&](const std::vector<double>& a, double rho2, double z, double& f, double& fr2, double& fz) {
        f = fr2 = fz = 0.0;
        for (int b = 0; b < M; ++b)
            for (int c = 0; c < M; ++c) {
                const double co = a[b * M + c];
                const double zb = std::pow(z, b), rc = std::pow(rho2, c);
                f += co * zb * rc;
                if (b > 0) fz += co * b * std::pow(z, b - 1) * rc;
                if (c > 0) fr2 += co * c * zb * std::pow(rho2, c - 1);
            }
    };
    for (int j = 0; j < g.nr(); ++j)
        for (int k = 0; k < g.ntheta(); ++k) {
            const double r = g.r(j), st = g.sin_theta(k), ct = g.cos_theta(k);
            const double z = r * ct, rho2 = r * r;
            double fq, hq1, hq2, h, hr2, hz, w, w1, w2;
            if (shape.kind == "bump") {
                // a single smooth off-centre bump in q, swirl and meridional circulation
                const double d2 = (r * st - 0.35) * (r * st - 0.35) + (z - 0.2) * (z - 0.2);
                fq = std::exp(-d2 / 0.04);
                h = std::exp(-d2 / 0.06);
                const double dh = -h / 0.06;  // d h / d(d2)
                // grad h in Cartesian meridian components (s, z)
                const double hs = dh * 2.0 * (r * st - 0.35), hzz = dh * 2.0 * (z - 0.2);
                const double gr = hs * st + hzz * ct, gt = hs * ct - hzz * st;
                s.q(j, k) = fq;
                const double b2 = (1.0 - rho2) * (1.0 - rho2);
                s.v.r(j, k) = b2 * gr;
                s.v.th(j, k) = b2 * gt;
                s.v.ph(j, k) = b2 * r * st * fq;
                continue;
            }
            poly(aq, rho2, z, fq, hq1, hq2);
            poly(ah, rho2, z, h, hr2, hz);
            poly(aw, rho2, z, w, w1, w2);
            // grad h = hr2 * 2x + hz e_z; spherical components
            const double gr = 2.0 * r * hr2 + hz * ct, gt = -hz * st;
            const double b2 = (1.0 - rho2) * (1.0 - rho2);
            s.q(j, k) = fq;
            s.v.r(j, k) = b2 * gr;
            s.v.th(j, k) = b2 * gt;
            s.v.ph(j, k) = b2 * r * st * w;
        }
    auto scale_to = [&](std::vector<double>& v, double amp) {
        double mx = 0.0;
        for (double x : v) mx = std::max(mx, std::abs(x));
        if (mx > 0.0)
            for (double& x : v) x *= amp / mx;
    };
    // zero added mass first, then normalise so max |q| = amplitude
    const double vol = integrate(ScalarField(g, 1.0), g);
    double mq = integrate(s.q, g) / vol;
    for (double& x : s.q.v) x -= mq;
    scale_to(s.q.v, amplitude);
    double vmax = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i)
        vmax = std::max({vmax, std::abs(s.v.r.v[i]), std::abs(s.v.th.v[i]), std::abs(s.v.ph.v[i])});
    if (vmax > 0.0)
        for (auto* f : {&s.v.r, &s.v.th, &s.v.ph})
            for (double& x : f->v) x *= amplitude / vmax;

    // rigid correction: int (rho_bar + q)(u_bar + v) . phi_3 = int rho_bar u_bar . phi_3;
    // phi_1, phi_2 moments vanish identically for axisymmetric fields.
    double num = 0.0, den = 0.0;
    for (int j = 0; j < g.nr(); ++j)
        for (int k = 0; k < g.ntheta(); ++k) {
            const std::size_t i = g.idx(j, k);
            const double p3 = -g.r(j) * g.sin_theta(k);
            const double rho = steady.rho_bar.v[i] + s.q.v[i];
            num += g.weight(j, k) * (s.q.v[i] * steady.u_bar.ph.v[i] + rho * s.v.ph.v[i]) * p3;
            den += g.weight(j, k) * rho * p3 * p3;
        }
    const double cR = -num / den;
    for (int j = 0; j < g.nr(); ++j)
        for (int k = 0; k < g.ntheta(); ++k) s.v.ph(j, k) += cR * (-g.r(j) * g.sin_theta(k));
    for (std::size_t i = 0; i < g.size(); ++i)
        if (!(steady.rho_bar.v[i] + s.q.v[i] > 0.0)) throw VacuumError("amplitude too large: vacuum would appear");
    return s;
}

}  // namespace ballns
