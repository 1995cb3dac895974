#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "ballns/dynamics.hpp"
#include "ballns/steady.hpp"

namespace ballns {

// One CSV row: t, mass, L1, L2, L3, E0, D0, residual.
struct DiagnosticRow {
    double t = 0.0, mass = 0.0, L1 = 0.0, L2 = 0.0, L3 = 0.0, E0 = 0.0, D0 = 0.0, residual = 0.0;
    bool operator==(const DiagnosticRow&) const = default;
};

// Diagnostics of one output tick before its residual is known; rhs is the identity right side.
struct Sample {
    double t = 0.0, mass = 0.0;
    std::array<double, 3> L{};
    double E0 = 0.0, D0 = 0.0, rhs = 0.0;
    double rate = 0.0;  // semi-discrete dE0/dt, used when a run has a single tick
    bool operator==(const Sample&) const = default;
};

// Everything needed to continue a run bit for bit.
struct Checkpoint {
    int nr = 0, ntheta = 0;
    Mode mode = Mode::Nonlinear;
    SteadyStateParams params;
    SolverOptions solver;
    int output_every = 1;
    std::int64_t step = 0, nsteps = 0;
    std::int64_t samples = 0;     // output ticks processed so far
    double dt = 0.0;
    std::vector<Sample> recent;   // the last three samples (fewer at the start)
    PerturbationState state;
};

struct RunCallbacks {
    std::function<void(const DiagnosticRow&)> on_row;
    std::function<void(const Checkpoint&)> on_checkpoint;
};

struct RunResult {
    std::vector<DiagnosticRow> rows;
    PerturbationState final_state;
    std::int64_t steps = 0;
    double dt = 0.0;
};

// Fixed step dt = t_end / nsteps with nsteps a multiple of output_every, so output ticks are equally spaced.
struct StepPlan {
    double dt = 0.0;
    std::int64_t nsteps = 0;
};
StepPlan plan_steps(const SimConfig& cfg, const Solver& solver, const PerturbationState& s0);

// Rows are emitted one tick late: the residual at a tick needs the energy at the next one.
RunResult run(const SimConfig& cfg, const RunCallbacks& cb = {}, const Checkpoint* restart = nullptr);

}  // namespace ballns
