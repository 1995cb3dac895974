#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "ballns/grid.hpp"

namespace ballns {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;

enum class FrameKind { Phi1, Phi2, Phi3, N };

std::string to_string(FrameKind k);

// phi_i(x) = x cross e_i, N(x) = x.
Vec3 evaluate_frame(FrameKind kind, const Vec3& x);

// Frame fields (and their commutators) are linear: X(x) = A x.
struct LinearField {
    Mat3 A{};
    Vec3 operator()(const Vec3& x) const;
    bool is_zero(double tol = 0.0) const;
};

LinearField frame_matrix(FrameKind kind);

// Vector field with [X_alpha . grad, X_beta . grad] f = X . grad f.
LinearField commutator_field(FrameKind alpha, FrameKind beta);

// Radial cutoff: 1 on |x| <= 1/2, 0 on |x| >= 3/4, quintic smoothstep between.
double cutoff_psi(const Vec3& x);
double cutoff_psi_radial(double r);
double cutoff_psi_slope(double r);  // d psi / dr

Vec3 spherical_to_cartesian(double r, double theta, double phi);

// Scalar function carried as an azimuthal Fourier series on the meridian grid:
//   f(r, theta, phi) = c_0 + sum_{m>=1} c_m cos(m phi) + s_m sin(m phi).
// Frame derivatives phi_1, phi_2 shift the azimuthal mode by one.
struct HarmonicField {
    int nr = 0, nt = 0;
    std::vector<ScalarField> c;  // c[m], m = 0..mmax
    std::vector<ScalarField> s;  // s[m], s[0] is unused (kept zero)

    HarmonicField() = default;
    HarmonicField(const MeridianGrid& g, int mmax);
    explicit HarmonicField(const ScalarField& axisymmetric);

    int mmax() const { return static_cast<int>(c.size()) - 1; }
    void ensure_modes(const MeridianGrid& g, int mmax);
    double value(int j, int k, double phi) const;
};

// Fourier-decompose a Cartesian scalar function on each ring (exact for trig degree <= mmax).
HarmonicField sample_harmonic(const MeridianGrid& g, const std::function<double(const Vec3&)>& f, int mmax);

HarmonicField directional_derivative(const HarmonicField& f, FrameKind kind, const MeridianGrid& g);
HarmonicField directional_derivative(const ScalarField& f, FrameKind kind, const MeridianGrid& g);
HarmonicField operator-(const HarmonicField& a, const HarmonicField& b);
double max_abs(const HarmonicField& f, int margin = 0);
double integrate(const HarmonicField& f, const MeridianGrid& g);
double norm2(const HarmonicField& f, const MeridianGrid& g);  // integral of f^2

// One-dimensional stencils on a cell-centred line, one-sided second order at the ends.
void diff_line(const double* f, double* out, int n, std::ptrdiff_t stride, double h);
ScalarField d_dr(const ScalarField& f, const MeridianGrid& g);
ScalarField d_dtheta(const ScalarField& f, const MeridianGrid& g);

// Cartesian vector samples on ring quadrature points (r_j, theta_k, phi_l), phi_l = 2 pi l / nphi.
struct RingQuadrature {
    MeridianGrid grid;
    int nphi;
    std::vector<Vec3> points;     // cell-major, phi fastest
    std::vector<double> weights;  // w_jk / nphi

    RingQuadrature(const MeridianGrid& g, int nphi);
    std::size_t size() const { return points.size(); }
};

struct SampledVectorField {
    std::vector<Vec3> v;
};

SampledVectorField sample_vector(const RingQuadrature& rq, const std::function<Vec3(const Vec3&)>& f);
SampledVectorField sample_frame(const RingQuadrature& rq, FrameKind kind);

// Lift an axisymmetric spherical-component field onto ring points.
SampledVectorField lift(const VectorField& v, const RingQuadrature& rq);

struct RigidProjection {
    Vec3 b{};          // coefficients on (phi_1, phi_2, phi_3)
    Mat3 gram{};       // integral phi_i . phi_j
    Vec3 moments{};    // integral V . phi_j
};

// L2 projection onto span{phi_1, phi_2, phi_3}.
RigidProjection project_rigid(const SampledVectorField& V, const RingQuadrature& rq);
SampledVectorField rigid_reconstruction(const Vec3& b, const RingQuadrature& rq);
SampledVectorField rigid_residual(const SampledVectorField& V, const RigidProjection& p, const RingQuadrature& rq);

// Axisymmetric fields: only phi_3 couples; returns b and the residual field.
struct AxisymmetricRigidProjection {
    Vec3 b{};
    VectorField residual;
};
AxisymmetricRigidProjection project_rigid(const VectorField& V, const MeridianGrid& g);

double integrate_dot(const SampledVectorField& a, const SampledVectorField& b, const RingQuadrature& rq);

}  // namespace ballns
