#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace ballns {

// Process exit codes.
enum Exit : int { exit_ok = 0, exit_config = 2, exit_vacuum = 3, exit_blowup = 4, exit_io = 5 };

// Runs body, printing any escaping error to err and mapping it to an exit code.
int guarded(const std::function<void()>& body, std::ostream& err);

struct SteadyArgs {
    double gamma = 2.0, mu = 1.0, lambda = 1.0, omega = 0.0;
    std::optional<double> mass, rho_center;
    std::string grid = "64x64";
    bool json = false;
};

struct SimulateArgs {
    std::string config;
    std::vector<std::string> overrides;  // key=value
    std::string out = "run";
    std::string restart;                 // checkpoint path, empty for a fresh run
};

struct KornArgs {
    std::vector<std::string> grids{"32x32"};
    int degree = 4;
    bool json = false;
};

struct DiagnoseArgs {
    std::string csv;
    std::optional<std::pair<double, double>> window;
    bool json = false;
};

int cmd_steady(const SteadyArgs& a, std::ostream& out, std::ostream& err);
int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err);
int cmd_korn(const KornArgs& a, std::ostream& out, std::ostream& err);
int cmd_diagnose(const DiagnoseArgs& a, std::ostream& out, std::ostream& err);

}  // namespace ballns
