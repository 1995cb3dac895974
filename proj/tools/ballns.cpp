#include <CLI11.hpp>
#include <iostream>

#include "ballns/app.hpp"

int main(int argc, char** argv) {
    using namespace ballns;
    CLI::App app{"Axisymmetric rotating compressible flow in the unit ball"};
    app.require_subcommand(1);

    SteadyArgs st;
    double mass = 0.0, rho0 = 0.0;
    auto* steady = app.add_subcommand("steady", "report the uniformly rotating steady state");
    steady->add_option("--gamma", st.gamma, "adiabatic exponent")->capture_default_str();
    steady->add_option("--omega", st.omega, "rotation rate")->capture_default_str();
    steady->add_option("--mu", st.mu, "shear viscosity")->capture_default_str();
    steady->add_option("--lambda", st.lambda, "bulk viscosity")->capture_default_str();
    auto* om = steady->add_option("--mass", mass, "total mass");
    auto* orc = steady->add_option("--rho-center", rho0, "central density");
    om->excludes(orc);
    steady->add_option("--grid", st.grid, "NRxNT")->capture_default_str();
    steady->add_flag("--json", st.json, "machine-readable output");

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "evolve a perturbation and write diagnostics");
    simulate->add_option("config", sim.config, "key = value config file");
    simulate->add_option("--set", sim.overrides, "override key=value (repeatable)");
    simulate->add_option("--out", sim.out, "output directory")->capture_default_str();
    simulate->add_option("--restart", sim.restart, "continue from a checkpoint");

    KornArgs kr;
    auto* korn = app.add_subcommand("korn", "estimate Korn-type constants");
    korn->add_option("--grid", kr.grids, "NRxNT (repeat for a stability table)")->capture_default_str();
    korn->add_option("--degree", kr.degree, "trial polynomial degree")->capture_default_str();
    korn->add_flag("--json", kr.json, "machine-readable output");

    DiagnoseArgs dg;
    std::vector<double> window;
    auto* diag = app.add_subcommand("diagnose", "decay fit and drift table of a diagnostics CSV");
    diag->add_option("--csv", dg.csv, "diagnostics CSV")->required();
    diag->add_option("--window", window, "fit window T0 T1")->expected(2);
    diag->add_flag("--json", dg.json, "machine-readable output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? exit_ok : exit_config;
    }

    if (steady->parsed()) {
        if (*om) st.mass = mass;
        if (*orc) st.rho_center = rho0;
        return cmd_steady(st, std::cout, std::cerr);
    }
    if (simulate->parsed()) return cmd_simulate(sim, std::cout, std::cerr);
    if (korn->parsed()) return cmd_korn(kr, std::cout, std::cerr);
    if (window.size() == 2) dg.window = std::make_pair(window[0], window[1]);
    return cmd_diagnose(dg, std::cout, std::cerr);
}
