#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ballns/grid.hpp"
#include "ballns/steady.hpp"

namespace ballns {

enum class Mode { Nonlinear, Linearized };

std::string to_string(Mode m);
Mode parse_mode(const std::string& s);

struct BlowUpError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PerturbationState {
    double t = 0.0;
    ScalarField q;  // rho - rho_bar
    VectorField v;  // u - u_bar, spherical components

    PerturbationState() = default;
    explicit PerturbationState(const MeridianGrid& g) : q(g), v(g) {}
    bool operator==(const PerturbationState&) const = default;
};

// Term-by-term tendency. Summed parts give (dq/dt, dv/dt).
struct RHSBreakdown {
    ScalarField continuity_linear;  // -div(rho_bar v)
    ScalarField transport;          // -(v + u_bar).grad q (nonlinear only)
    ScalarField g1;                 // -q div v
    VectorField momentum_pressure;  // -(grad P - (rho/rho_bar) grad P_bar) / rho, unsplit
    VectorField momentum_viscous;   // div S(v) / rho
    VectorField f2;                 // (-rho_bar u_bar.grad v - rho_bar v.grad u_bar) / rho
    VectorField g2;                 // -q (u_bar.grad v + v.grad u_bar + v.grad v) / rho
    VectorField advection;          // -rho_bar v.grad v / rho
    ScalarField stabilization_q;    // odd-even mass-flux correction
    VectorField stabilization_v;    // its angular-momentum counterpart
    ScalarField filter_q;           // polar-cap filter correction near the origin
    VectorField filter_v;

    // Cross-checks, not part of the sum.
    VectorField pressure_split_linear;  // -gamma rho_bar grad(rho_bar^(gamma-2) q) / rho
    VectorField remainder_gradient;     // -grad R / rho

    ScalarField total_q() const;
    VectorField total_v() const;
};

struct SolverOptions {
    double filter_factor = 3.0;        // ring j >= 1 keeps polar degrees l <= filter_factor (j + 1/2); ring 0 keeps l <= 1 (l <= 2 for q, u_r)
    double stabilization = 1.0;        // odd-even damping rate for q
    bool filter = true;
    bool operator==(const SolverOptions&) const = default;
};

// Precomputed metric and steady data for one grid and parameter set.
class Solver {
public:
    Solver(const MeridianGrid& g, const SteadyStateParams& p, Mode mode, SolverOptions opts = {});
    ~Solver();
    Solver(Solver&&) noexcept;
    Solver& operator=(Solver&&) noexcept;

    const MeridianGrid& grid() const;
    const SteadyStateParams& params() const;
    const SteadyStateField& steady() const;
    Mode mode() const;

    RHSBreakdown rhs(const PerturbationState& s) const;
    void tendency(const PerturbationState& s, ScalarField& dq, VectorField& dv) const;
    // Wall ghost values (j = nr) and boundary work integral_Gamma v.S(v)n.
    struct Ghosts {
        std::vector<double> q, vr, vt, vp;  // per theta index
    };
    Ghosts wall_ghosts(const PerturbationState& s) const;
    double boundary_work(const PerturbationState& s) const;

    double stable_dt(const PerturbationState& s, double cfl_acoustic, double cfl_viscous) const;
    double min_spacing() const;
    void project_filter(PerturbationState& s) const;
    void step(PerturbationState& s, double dt) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

struct SimConfig {
    SteadyStateParams params;
    int nr = 64, ntheta = 64;
    double t_end = 1.0;
    double cfl_acoustic = 0.4;
    double cfl_viscous = 0.25;
    Mode mode = Mode::Nonlinear;
    int output_every = 10;       // steps between diagnostic rows
    int checkpoint_every = 0;    // steps between checkpoints (0: none)
    std::uint64_t seed = 1;
    double amplitude = 1e-3;
    std::string shape = "random";  // random | bump
    int modes = 3;                 // radial/polar modes of the random generator
    double dt = 0.0;               // 0: derive from stable_dt
    SolverOptions solver;

    void validate() const;
};

struct ShapeSpec {
    std::string kind = "random";
    int modes = 3;
};

PerturbationState make_initial_perturbation(double amplitude, const ShapeSpec& shape, const SteadyStateField& steady,
                                            const MeridianGrid& g, std::uint64_t seed);

}  // namespace ballns
