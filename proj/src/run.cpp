#include "ballns/run.hpp"

#include <cmath>

#include "ballns/diagnostics.hpp"

namespace ballns {

namespace {

Sample take_sample(const Solver& solver, const PerturbationState& s, ScalarField& dq, VectorField& dv) {
    const auto& g = solver.grid();
    const auto& st = solver.steady();
    const auto& p = solver.params();
    ConservedQuantities c = conserved_quantities(s, st, g);
    EnergyReport e = basic_energy(s, st, p, g, solver.mode());
    solver.tendency(s, dq, dv);
    Sample out;
    out.t = s.t;
    out.mass = c.mass;
    out.L = c.L;
    out.E0 = e.E0;
    out.D0 = e.D0;
    out.rhs = identity_terms(s, dq, st, p, g, solver.mode()).total();
    out.rate = energy_rate(s, dq, dv, st, p, g, solver.mode());
    return out;
}

DiagnosticRow make_row(const Sample& s, double dE) {
    return {s.t, s.mass, s.L[0], s.L[1], s.L[2], s.E0, s.D0, std::abs(dE + s.D0 - s.rhs)};
}

}  // namespace

StepPlan plan_steps(const SimConfig& cfg, const Solver& solver, const PerturbationState& s0) {
    if (cfg.t_end == 0.0) return {0.0, 0};
    const double dt0 = cfg.dt > 0.0 ? cfg.dt : solver.stable_dt(s0, cfg.cfl_acoustic, cfg.cfl_viscous);
    auto n = static_cast<std::int64_t>(std::ceil(cfg.t_end / dt0 * (1.0 - 1e-12)));
    n = std::max<std::int64_t>(n, 1);
    n = (n + cfg.output_every - 1) / cfg.output_every * cfg.output_every;
    return {cfg.t_end / static_cast<double>(n), n};
}

RunResult run(const SimConfig& cfg, const RunCallbacks& cb, const Checkpoint* restart) {
    cfg.validate();
    MeridianGrid g(cfg.nr, cfg.ntheta);
    Solver solver(g, cfg.params, cfg.mode, cfg.solver);

    PerturbationState s;
    StepPlan plan;
    std::int64_t step = 0, samples = 0;
    std::vector<Sample> recent;
    if (restart) {
        const Checkpoint& c = *restart;
        if (c.nr != cfg.nr || c.ntheta != cfg.ntheta || c.mode != cfg.mode || !(c.params == cfg.params) ||
            !(c.solver == cfg.solver) || c.output_every != cfg.output_every)
            throw ParameterError("checkpoint does not match the configuration");
        if (!c.state.q.matches(g) || !c.state.v.matches(g) || c.step < 0 || c.step > c.nsteps || c.recent.size() > 3)
            throw ParameterError("inconsistent checkpoint");
        s = c.state;
        plan = {c.dt, c.nsteps};
        step = c.step;
        samples = c.samples;
        recent = c.recent;
    } else {
        s = make_initial_perturbation(cfg.amplitude, {cfg.shape, cfg.modes}, solver.steady(), g, cfg.seed);
        // Components above the polar cap never see a tendency, so they would stay frozen.
        if (cfg.solver.filter) solver.project_filter(s);
        plan = plan_steps(cfg, solver, s);
    }

    RunResult res;
    res.dt = plan.dt;
    auto emit = [&](const DiagnosticRow& r) {
        res.rows.push_back(r);
        if (cb.on_row) cb.on_row(r);
    };
    const double h = plan.dt * cfg.output_every;
    ScalarField dq(g);
    VectorField dv(g);

    // Tick m arrives: row m-1 becomes central; tick 2 also releases the forward row 0.
    auto tick = [&] {
        recent.push_back(take_sample(solver, s, dq, dv));
        if (recent.size() > 3) recent.erase(recent.begin());
        const std::int64_t m = samples++;
        if (m == 2) emit(make_row(recent[0], three_point_derivative(recent[0].E0, recent[1].E0, recent[2].E0, 0, h)));
        if (m >= 2) emit(make_row(recent[1], three_point_derivative(recent[0].E0, recent[1].E0, recent[2].E0, 1, h)));
    };

    if (samples == 0) tick();
    while (step < plan.nsteps) {
        solver.step(s, plan.dt);
        ++step;
        s.t = static_cast<double>(step) * plan.dt;
        if (step % cfg.output_every == 0) tick();
        if (cb.on_checkpoint && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0)
            cb.on_checkpoint(Checkpoint{cfg.nr, cfg.ntheta, cfg.mode, cfg.params, cfg.solver, cfg.output_every,
                                        step, plan.nsteps, samples, plan.dt, recent, s});
    }

    const auto n = recent.size();
    if (samples >= 3) {
        emit(make_row(recent[2], three_point_derivative(recent[0].E0, recent[1].E0, recent[2].E0, 2, h)));
    } else if (samples == 2) {
        const double d = (recent[1].E0 - recent[0].E0) / h;
        emit(make_row(recent[0], d));
        emit(make_row(recent[1], d));
    } else if (n == 1) {
        emit(make_row(recent[0], recent[0].rate));
    }

    res.final_state = std::move(s);
    res.steps = step;
    return res;
}

}  // namespace ballns
