#pragma once

#include <stdexcept>

#include "ballns/geometry.hpp"
#include "ballns/grid.hpp"

namespace ballns {

struct ParameterError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct VacuumError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SteadyStateParams {
    double gamma = 2.0;
    double mu = 1.0;
    double lambda = 1.0;
    double omega_bar = 0.0;
    double rho_center = 1.0;

    void validate() const;
    bool operator==(const SteadyStateParams&) const = default;
};

struct SteadyStateField {
    ScalarField rho_bar;
    VectorField u_bar;
    ScalarField pressure_bar;
};

// s is the cylindrical radius sqrt(x1^2 + x2^2).
double steady_density(double s, const SteadyStateParams& p);
Vec3 steady_velocity(const Vec3& x, const SteadyStateParams& p);
SteadyStateField make_steady_field(const SteadyStateParams& p, const MeridianGrid& g);

// Ball integrals of functions of s, cell by cell with 4x4 Gauss points.
double total_mass(const SteadyStateParams& p, const MeridianGrid& g);
double vacuum_threshold_mass(double omega_bar, double gamma, const MeridianGrid& g);
double solve_center_density(double mass, double omega_bar, double gamma, const MeridianGrid& g);

struct SteadyResidual {
    double continuity = 0.0;
    double momentum = 0.0;
};

SteadyResidual steady_residual(const SteadyStateField& f, const SteadyStateParams& p, const MeridianGrid& g);

// Finite-difference operators on axisymmetric fields (one-sided closure at the grid edges).
VectorField advect_fd(const VectorField& a, const VectorField& b, const MeridianGrid& g);  // (a.grad) b
VectorField viscous_divergence_fd(const VectorField& u, double mu, double lambda, const MeridianGrid& g);
ScalarField divergence_fd(const VectorField& u, const MeridianGrid& g);

}  // namespace ballns
