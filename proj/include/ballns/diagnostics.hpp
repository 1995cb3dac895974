#pragma once

#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ballns/dynamics.hpp"
#include "ballns/geometry.hpp"
#include "ballns/steady.hpp"

namespace ballns {

struct DiagnosticsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConservedQuantities {
    double t = 0.0;
    double mass = 0.0;
    Vec3 L{};  // integral rho u . phi_i
};

// Mode-0 fields have vanishing phi_1, phi_2 moments; L_1 = L_2 = 0 exactly.
ConservedQuantities conserved_quantities(const ScalarField& q, const VectorField& v, const SteadyStateField& steady,
                                         const MeridianGrid& g);
ConservedQuantities conserved_quantities(const PerturbationState& s, const SteadyStateField& steady, const MeridianGrid& g);

struct EnergyReport {
    double t = 0.0;
    double E0 = 0.0;
    double D0 = 0.0;
    double identity_residual = 0.0;
};

// In linearized mode the kinetic weight is rho_bar instead of rho_bar + q.
EnergyReport basic_energy(const PerturbationState& s, const SteadyStateField& steady, const SteadyStateParams& p,
                          const MeridianGrid& g, Mode mode = Mode::Nonlinear);

// Right-hand side integrals of the basic energy identity, one entry per term.
struct IdentityTerms {
    double transport = 0.0;        // (gamma/2) int q^2 (v + ubar) . grad rho_bar^(gamma-2)
    double compressibility = 0.0;  // (gamma/2) int rho_bar^(gamma-2) q^2 div(v + ubar)
    double g1 = 0.0;               // gamma int rho_bar^(gamma-2) q G1
    double weight = 0.0;           // (1/2) int (dq/dt + div(rho_bar v)) |v|^2
    double forcing = 0.0;          // int (F2 + G2) . v
    double total() const { return transport + compressibility + g1 + weight + forcing; }
};

IdentityTerms identity_terms(const PerturbationState& s, const ScalarField& dq_dt, const SteadyStateField& steady,
                             const SteadyStateParams& p, const MeridianGrid& g, Mode mode = Mode::Nonlinear);

// dE0/dt by central differences (second-order one-sided at the ends) plus D0 minus the identity right side.
std::vector<double> energy_identity_residual(const std::vector<double>& t, const std::vector<double>& E0,
                                             const std::vector<double>& D0, const std::vector<double>& rhs);

// Derivative of equally spaced samples (e0, e1, e2) at sample `at` (0, 1 or 2), second order.
double three_point_derivative(double e0, double e1, double e2, int at, double h);

// Semi-discrete dE0/dt from instantaneous tendencies.
double energy_rate(const PerturbationState& s, const ScalarField& dq, const VectorField& dv, const SteadyStateField& steady,
                   const SteadyStateParams& p, const MeridianGrid& g, Mode mode = Mode::Nonlinear);

struct AnisotropicNorms {
    double grad_T_q = 0.0, grad_N_q = 0.0, grad_T_v = 0.0, grad_N_v = 0.0;
    double grad_psi_q = 0.0, grad_psi_v = 0.0;
    double grad_q = 0.0, grad_v = 0.0;
    double C = 0.0;  // smallest constant in |grad f|^2 <= C (|grad(psi f)|^2 + |grad_T f|^2 + |grad_N f|^2) over q and v
};

// Squared L2 norms; grad_T collects phi_1, phi_2, phi_3 derivatives, grad_N = x . grad.
AnisotropicNorms anisotropic_norms(const ScalarField& q, const VectorField& v, const MeridianGrid& g);
AnisotropicNorms anisotropic_norms(const PerturbationState& s, const MeridianGrid& g);

struct DecayFit {
    double sigma = 0.0;
    double r_squared = 0.0;
    double t_start = 0.0, t_end = 0.0;
    int samples = 0;
    bool exponential = false;  // r_squared >= 0.99
};

// Least squares on log E0; the default window is the second half of the series.
DecayFit fit_decay_rate(const std::vector<double>& t, const std::vector<double>& E0,
                        std::optional<std::pair<double, double>> window = std::nullopt);

}  // namespace ballns
