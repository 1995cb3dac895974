#pragma once

#include <Eigen/Dense>
#include <array>
#include <functional>
#include <string>
#include <vector>

#include "ballns/geometry.hpp"
#include "ballns/steady.hpp"

namespace ballns {

struct KornError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct HypothesisError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Strain energy and gradient norm of an axisymmetric spherical-component field.
double symmetric_gradient_energy(const VectorField& V, const MeridianGrid& g);
double gradient_norm2(const VectorField& V, const MeridianGrid& g);

// Analytic Cartesian trial field with its Jacobian J[i][l] = d V_i / d x_l.
struct TrialField {
    std::string name;
    std::function<void(const Vec3& x, Vec3& v, Mat3& J)> eval;
};

struct BasisSpec {
    int degree = 4;
    bool polynomial = true;  // monomial fields x^a y^b z^c e_i, or tangent constructions if tangent
    bool tangent = false;    // x cross grad h and (1 - |x|^2) p e_i
    std::vector<FrameKind> frames{FrameKind::Phi1, FrameKind::Phi2, FrameKind::Phi3, FrameKind::N};
};

std::vector<TrialField> build_trial_family(const BasisSpec& spec);
TrialField frame_trial(FrameKind k);

struct GramForms {
    Eigen::MatrixXd grad;  // int grad V_a : grad V_b
    Eigen::MatrixXd sym;   // int (grad V_a + grad V_a^T) : (grad V_b + grad V_b^T)
    Eigen::MatrixXd mass;  // int V_a . V_b
    Eigen::MatrixXd rigid; // int V_a . phi_i, columns i = 1..3
};

GramForms assemble_forms(const std::vector<TrialField>& family, const RingQuadrature& rq);
int quadrature_nphi(int degree);

struct PairEnergy {
    double strain = 0.0;     // E(phi_i)
    double gradient = 0.0;   // ||grad phi_i||^2
};

std::array<PairEnergy, 3> rigid_degeneracy_check(const MeridianGrid& g);

struct ConstantEstimate {
    double value = 0.0;
    int dimension = 0;  // trial-space dimension after removing dependent members
    int excluded = 0;   // kernel directions dropped (PM only)
};

ConstantEstimate estimate_korn01_constant(const BasisSpec& spec, const MeridianGrid& g);
ConstantEstimate estimate_pm_constant(const BasisSpec& spec, const MeridianGrid& g);
ConstantEstimate estimate_poincare_constant(const BasisSpec& spec, const MeridianGrid& g);

struct KornReport {
    int nr = 0, ntheta = 0, degree = 0;
    ConstantEstimate korn01, pm, poincare;
    std::array<PairEnergy, 3> degeneracy{};
};

KornReport korn_report(const MeridianGrid& g, int degree);

struct KornTypeLedger {
    double lhs = 0.0;           // int |grad(u - ubar)|^2
    double strain = 0.0;        // int |grad u + grad u^T|^2
    double rotation_term = 0.0; // int |ubar|^2 q^2
    double cross_term = 0.0;    // int q^2 |u - ubar|^2
    double rhs = 0.0;
    double C = 0.0;
    double momentum_defect = 0.0;
    bool satisfied = false;
};

// Throws HypothesisError when the angular-momentum constraint fails beyond tolerance.
KornTypeLedger verify_korn_type(const ScalarField& q, const VectorField& v, const SteadyStateField& steady, double C,
                                const MeridianGrid& g, double tolerance = 1e-8);

}  // namespace ballns
