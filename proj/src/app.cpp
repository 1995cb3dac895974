#include "ballns/app.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "ballns/io.hpp"
#include "ballns/korn.hpp"

namespace ballns {

namespace {

using json = nlohmann::ordered_json;

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string fmt(double x) { return format_double(x); }

json config_json(const ConfigFile& c) {
    json j = json::object();
    std::istringstream in(format_config(c));
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find(" = ");
        if (eq != std::string::npos) j[line.substr(0, eq)] = line.substr(eq + 3);
    }
    return j;
}

int guarded_message(const std::function<void()>& body, std::ostream& err, std::string& message) {
    auto fail = [&](int code, const char* kind, const std::exception& e) {
        message = e.what();
        err << "error (" << kind << "): " << e.what() << "\n";
        return code;
    };
    try {
        body();
        return exit_ok;
    } catch (const ConfigError& e) {
        return fail(exit_config, "config", e);
    } catch (const ParameterError& e) {
        return fail(exit_config, "config", e);
    } catch (const GridError& e) {
        return fail(exit_config, "config", e);
    } catch (const KornError& e) {
        return fail(exit_config, "config", e);
    } catch (const VacuumError& e) {
        return fail(exit_vacuum, "vacuum", e);
    } catch (const BlowUpError& e) {
        return fail(exit_blowup, "blow-up", e);
    } catch (const IOError& e) {
        return fail(exit_io, "io", e);
    } catch (const DiagnosticsError& e) {
        return fail(exit_io, "data", e);
    } catch (const std::exception& e) {
        return fail(1, "internal", e);
    }
}

}  // namespace

int guarded(const std::function<void()>& body, std::ostream& err) {
    std::string m;
    return guarded_message(body, err, m);
}

// ---------------------------------------------------------------- steady

int cmd_steady(const SteadyArgs& a, std::ostream& out, std::ostream& err) {
    return guarded([&] {
        if (a.mass && a.rho_center) throw ConfigError("give either --mass or --rho-center, not both");
        const auto [nr, nt] = parse_grid(a.grid);
        if (nr < 4 || nt < 4) throw ConfigError("grid too coarse");
        const MeridianGrid g(nr, nt);
        SteadyStateParams p;
        p.gamma = a.gamma;
        p.mu = a.mu;
        p.lambda = a.lambda;
        p.omega_bar = a.omega;
        if (a.rho_center) p.rho_center = *a.rho_center;
        p.validate();
        const double threshold = vacuum_threshold_mass(p.omega_bar, p.gamma, g);
        if (a.mass) p.rho_center = solve_center_density(*a.mass, p.omega_bar, p.gamma, g);
        const double mass = total_mass(p, g);
        const SteadyStateField f = make_steady_field(p, g);
        const SteadyResidual res = steady_residual(f, p, g);
        const double rmin = steady_density(0.0, p), rmax = steady_density(1.0, p);
        if (a.json) {
            json j;
            j["gamma"] = p.gamma;
            j["mu"] = p.mu;
            j["lambda"] = p.lambda;
            j["omega_bar"] = p.omega_bar;
            j["grid"] = {nr, nt};
            j["rho_center"] = p.rho_center;
            j["mass"] = mass;
            j["density_min"] = rmin;
            j["density_max"] = rmax;
            j["vacuum_threshold_mass"] = threshold;
            j["residual_continuity"] = res.continuity;
            j["residual_momentum"] = res.momentum;
            out << j.dump(2) << "\n";
            return;
        }
        out << "gamma                  " << fmt(p.gamma) << "\n"
            << "omega_bar              " << fmt(p.omega_bar) << "\n"
            << "grid                   " << nr << "x" << nt << "\n"
            << "rho_center             " << fmt(p.rho_center) << "\n"
            << "mass                   " << fmt(mass) << "\n"
            << "density_min            " << fmt(rmin) << "\n"
            << "density_max            " << fmt(rmax) << "\n"
            << "vacuum_threshold_mass  " << fmt(threshold) << "\n"
            << "residual_continuity    " << fmt(res.continuity) << "\n"
            << "residual_momentum      " << fmt(res.momentum) << "\n";
    }, err);
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err) {
    namespace fs = std::filesystem;
    const auto clock0 = std::chrono::steady_clock::now();
    json man;
    man["version"] = version_string;
    man["started"] = utc_now();
    man["config_file"] = a.config;
    std::vector<std::string> files;
    std::string last_checkpoint, message;
    const std::string csv_path = (fs::path(a.out) / "diagnostics.csv").string();
    std::ofstream csv;

    int code = guarded_message([&] {
        ConfigFile cf = a.config.empty() ? ConfigFile{} : load_config(a.config);
        for (const auto& o : a.overrides) apply_override(cf, o);
        man["config"] = config_json(cf);
        const SimConfig cfg = resolve(cf);
        man["grid"] = {{"nr", cfg.nr}, {"ntheta", cfg.ntheta}};
        man["rho_center"] = cfg.params.rho_center;
        std::optional<Checkpoint> ck;
        if (!a.restart.empty()) {
            ck = read_checkpoint(a.restart);
            man["restart"] = a.restart;
        }
        std::error_code ec;
        fs::create_directories(a.out, ec);
        if (ec) throw IOError("cannot create '" + a.out + "': " + ec.message());
        csv.open(csv_path, std::ios::trunc);
        if (!csv) throw IOError("cannot write '" + csv_path + "'");
        files.push_back(csv_path);
        csv << csv_header() << "\n";

        RunCallbacks cb;
        cb.on_row = [&](const DiagnosticRow& r) {
            csv << format_row(r) << "\n";
            if (!csv) throw IOError("write failed on '" + csv_path + "'");
        };
        cb.on_checkpoint = [&](const Checkpoint& c) {
            char name[48];
            std::snprintf(name, sizeof name, "checkpoint_%010lld.bin", static_cast<long long>(c.step));
            const std::string path = (fs::path(a.out) / name).string();
            csv.flush();
            write_checkpoint(path, c);
            files.push_back(path);
            last_checkpoint = path;
        };
        const RunResult res = run(cfg, cb, ck ? &*ck : nullptr);
        csv.close();
        if (!csv) throw IOError("write failed on '" + csv_path + "'");
        man["steps"] = res.steps;
        man["dt"] = res.dt;
        man["rows"] = res.rows.size();
        out << "completed " << res.steps << " steps at dt = " << fmt(res.dt) << ", " << res.rows.size() << " rows -> "
            << csv_path << "\n";
    }, err, message);
    if (csv.is_open()) csv.close();
    if (code != exit_ok && !last_checkpoint.empty()) err << "last checkpoint: " << last_checkpoint << "\n";

    man["finished"] = utc_now();
    man["wall_clock_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock0).count();
    man["status"] = code == exit_ok ? "ok" : "failed";
    man["exit_code"] = code;
    if (!message.empty()) man["message"] = message;
    man["last_checkpoint"] = last_checkpoint;
    json inv = json::array();
    for (const auto& f : files) {
        std::error_code ec;
        if (!fs::exists(f, ec)) continue;
        const FileEntry e = describe_file(f);
        inv.push_back({{"path", e.path}, {"bytes", e.bytes}, {"sha256", e.sha256}});
    }
    man["files"] = inv;
    const int mcode = guarded([&] {
        std::error_code ec;
        fs::create_directories(a.out, ec);
        const std::string s = man.dump(2) + "\n";
        write_file((fs::path(a.out) / "manifest.json").string(),
                   std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
    }, err);
    return code != exit_ok ? code : mcode;
}

// ---------------------------------------------------------------- korn

int cmd_korn(const KornArgs& a, std::ostream& out, std::ostream& err) {
    return guarded([&] {
        if (a.degree < 1) throw ConfigError("degree must be at least 1");
        if (a.grids.empty()) throw ConfigError("no grid given");
        std::vector<KornReport> reps;
        for (const auto& s : a.grids) {
            const auto [nr, nt] = parse_grid(s);
            if (nr < 4 || nt < 4) throw ConfigError("grid too coarse");
            reps.push_back(korn_report(MeridianGrid(nr, nt), a.degree));
        }
        if (a.json) {
            json arr = json::array();
            for (const auto& r : reps) {
                json j;
                j["grid"] = {r.nr, r.ntheta};
                j["degree"] = r.degree;
                auto c = [](const ConstantEstimate& e) {
                    return json{{"value", e.value}, {"dimension", e.dimension}, {"excluded", e.excluded}};
                };
                j["korn01"] = c(r.korn01);
                j["poincare_morrey"] = c(r.pm);
                j["poincare"] = c(r.poincare);
                json d = json::array();
                for (const auto& p : r.degeneracy) d.push_back({{"strain", p.strain}, {"gradient", p.gradient}});
                j["rigid_degeneracy"] = d;
                arr.push_back(j);
            }
            out << arr.dump(2) << "\n";
            return;
        }
        for (const auto& r : reps) {
            out << "grid " << r.nr << "x" << r.ntheta << ", degree " << r.degree << "\n"
                << "  korn01           " << fmt(r.korn01.value) << "  (dim " << r.korn01.dimension << ")\n"
                << "  poincare_morrey  " << fmt(r.pm.value) << "  (dim " << r.pm.dimension << ", excluded " << r.pm.excluded
                << ")\n"
                << "  poincare         " << fmt(r.poincare.value) << "  (dim " << r.poincare.dimension << ")\n";
            for (int i = 0; i < 3; ++i)
                out << "  phi_" << i + 1 << "  strain " << fmt(r.degeneracy[i].strain) << "  gradient "
                    << fmt(r.degeneracy[i].gradient) << "\n";
        }
        if (reps.size() > 1) {
            out << "stability (relative change from the previous grid)\n";
            for (std::size_t i = 1; i < reps.size(); ++i) {
                auto rel = [](double x, double y) { return std::abs(y - x) / std::max(std::abs(x), 1e-300); };
                out << "  " << reps[i].nr << "x" << reps[i].ntheta << "  korn01 " << fmt(rel(reps[i - 1].korn01.value, reps[i].korn01.value))
                    << "  poincare_morrey " << fmt(rel(reps[i - 1].pm.value, reps[i].pm.value)) << "  poincare "
                    << fmt(rel(reps[i - 1].poincare.value, reps[i].poincare.value)) << "\n";
            }
        }
    }, err);
}

// ---------------------------------------------------------------- diagnose

int cmd_diagnose(const DiagnoseArgs& a, std::ostream& out, std::ostream& err) {
    return guarded([&] {
        const DiagnoseReport r = diagnose(read_csv(a.csv), a.window);
        if (a.json) {
            json j;
            j["rows"] = r.rows;
            j["sigma"] = r.fit.sigma;
            j["r_squared"] = r.fit.r_squared;
            j["exponential"] = r.fit.exponential;
            j["window"] = {r.fit.t_start, r.fit.t_end};
            j["fit_samples"] = r.fit.samples;
            j["max_residual"] = r.max_residual;
            json d = json::object();
            for (const auto& x : r.drifts) {
                json e{{"initial", x.initial}, {"max_abs", x.max_abs}};
                e["relative"] = x.relative ? json(*x.relative) : json(nullptr);
                d[x.name] = e;
            }
            j["drift"] = d;
            out << j.dump(2) << "\n";
            return;
        }
        out << format_report(r);
    }, err);
}

}  // namespace ballns
