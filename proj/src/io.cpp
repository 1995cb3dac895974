#include "ballns/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ballns {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
    double x = 0.0;
    const auto* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, x);
    if (ec != std::errc() || p != end) throw ConfigError("'" + key + "': not a number: '" + v + "'");
    return x;
}

long long to_int(const std::string& key, const std::string& v) {
    long long x = 0;
    const auto* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, x);
    if (ec != std::errc() || p != end) throw ConfigError("'" + key + "': not an integer: '" + v + "'");
    return x;
}

int to_int32(const std::string& key, const std::string& v) {
    const long long x = to_int(key, v);
    if (x < -2147483647LL || x > 2147483647LL) throw ConfigError("'" + key + "': out of range");
    return static_cast<int>(x);
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "on" || v == "1") return true;
    if (v == "false" || v == "off" || v == "0") return false;
    throw ConfigError("'" + key + "': expected true or false, got '" + v + "'");
}

// ---------------------------------------------------------------- binary helpers

constexpr char magic[8] = {'B', 'A', 'L', 'L', 'N', 'S', 'C', 'K'};
constexpr std::uint32_t format_version = 1;

class Writer {
public:
    std::vector<std::uint8_t> out;
    template <class T>
    void put(T v) {
        static_assert(std::is_trivially_copyable_v<T>);
        std::uint8_t b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
        out.insert(out.end(), b, b + sizeof(T));
    }
    void put_array(const std::vector<double>& a) {
        for (double x : a) put(x);
    }
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
    template <class T>
    T get() {
        if (pos_ + sizeof(T) > b_.size()) throw IOError("checkpoint truncated");
        std::uint8_t t[sizeof(T)];
        std::memcpy(t, b_.data() + pos_, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) std::reverse(t, t + sizeof(T));
        pos_ += sizeof(T);
        T v;
        std::memcpy(&v, t, sizeof(T));
        return v;
    }
    void get_array(std::vector<double>& a) {
        for (double& x : a) x = get<double>();
    }
    std::span<const std::uint8_t> take(std::size_t n) {
        if (pos_ + n > b_.size()) throw IOError("checkpoint truncated");
        auto s = b_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == b_.size(); }

private:
    std::span<const std::uint8_t> b_;
    std::size_t pos_ = 0;
};

}  // namespace

// ---------------------------------------------------------------- config

void apply_setting(ConfigFile& c, const std::string& key, const std::string& value) {
    SimConfig& s = c.cfg;
    const std::string& v = value;
    if (key == "gamma") s.params.gamma = to_double(key, v);
    else if (key == "mu") s.params.mu = to_double(key, v);
    else if (key == "lambda") s.params.lambda = to_double(key, v);
    else if (key == "omega" || key == "omega_bar") s.params.omega_bar = to_double(key, v);
    else if (key == "rho_center") {
        s.params.rho_center = to_double(key, v);
        c.mass.reset();
    } else if (key == "mass") c.mass = to_double(key, v);
    else if (key == "grid") std::tie(s.nr, s.ntheta) = parse_grid(v);
    else if (key == "nr") s.nr = to_int32(key, v);
    else if (key == "ntheta") s.ntheta = to_int32(key, v);
    else if (key == "t_end") s.t_end = to_double(key, v);
    else if (key == "cfl_acoustic") s.cfl_acoustic = to_double(key, v);
    else if (key == "cfl_viscous") s.cfl_viscous = to_double(key, v);
    else if (key == "mode") {
        try {
            s.mode = parse_mode(v);
        } catch (const std::exception& e) {
            throw ConfigError(e.what());
        }
    } else if (key == "output_every") s.output_every = to_int32(key, v);
    else if (key == "checkpoint_every") s.checkpoint_every = to_int32(key, v);
    else if (key == "seed") {
        const long long x = to_int(key, v);
        if (x < 0) throw ConfigError("'seed' must be non-negative");
        s.seed = static_cast<std::uint64_t>(x);
    } else if (key == "amplitude") s.amplitude = to_double(key, v);
    else if (key == "shape") s.shape = v;
    else if (key == "modes") s.modes = to_int32(key, v);
    else if (key == "dt") s.dt = to_double(key, v);
    else if (key == "filter") s.solver.filter = to_bool(key, v);
    else if (key == "filter_factor") s.solver.filter_factor = to_double(key, v);
    else if (key == "stabilization") s.solver.stabilization = to_double(key, v);
    else throw ConfigError("unknown key '" + key + "'");
}

ConfigFile parse_config(const std::string& text) {
    ConfigFile c;
    std::istringstream in(text);
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(n) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) throw ConfigError("line " + std::to_string(n) + ": expected key = value");
        try {
            apply_setting(c, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError("line " + std::to_string(n) + ": " + e.what());
        }
    }
    return c;
}

ConfigFile load_config(const std::string& path) {
    const auto b = read_file(path);
    return parse_config(std::string(b.begin(), b.end()));
}

void apply_override(ConfigFile& c, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override must be key=value, got '" + assignment + "'");
    apply_setting(c, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::string format_config(const ConfigFile& c) {
    const SimConfig& s = c.cfg;
    std::ostringstream o;
    o << "gamma = " << format_double(s.params.gamma) << "\n"
      << "mu = " << format_double(s.params.mu) << "\n"
      << "lambda = " << format_double(s.params.lambda) << "\n"
      << "omega = " << format_double(s.params.omega_bar) << "\n";
    if (c.mass) o << "mass = " << format_double(*c.mass) << "\n";
    else o << "rho_center = " << format_double(s.params.rho_center) << "\n";
    o << "grid = " << s.nr << "x" << s.ntheta << "\n"
      << "t_end = " << format_double(s.t_end) << "\n"
      << "cfl_acoustic = " << format_double(s.cfl_acoustic) << "\n"
      << "cfl_viscous = " << format_double(s.cfl_viscous) << "\n"
      << "mode = " << to_string(s.mode) << "\n"
      << "output_every = " << s.output_every << "\n"
      << "checkpoint_every = " << s.checkpoint_every << "\n"
      << "seed = " << s.seed << "\n"
      << "amplitude = " << format_double(s.amplitude) << "\n"
      << "shape = " << s.shape << "\n"
      << "modes = " << s.modes << "\n"
      << "dt = " << format_double(s.dt) << "\n"
      << "filter = " << (s.solver.filter ? "true" : "false") << "\n"
      << "filter_factor = " << format_double(s.solver.filter_factor) << "\n"
      << "stabilization = " << format_double(s.solver.stabilization) << "\n";
    return o.str();
}

SimConfig resolve(const ConfigFile& c) {
    SimConfig s = c.cfg;
    try {
        s.params.validate();
        if (c.mass) {
            if (s.nr < 4 || s.ntheta < 4) throw ParameterError("grid too coarse");
            s.params.rho_center = solve_center_density(*c.mass, s.params.omega_bar, s.params.gamma, MeridianGrid(s.nr, s.ntheta));
        }
        s.validate();
    } catch (const ParameterError& e) {
        throw ConfigError(e.what());
    } catch (const GridError& e) {
        throw ConfigError(e.what());
    }
    return s;
}

std::pair<int, int> parse_grid(const std::string& v) {
    const auto x = v.find('x');
    if (x == std::string::npos) throw ConfigError("grid must look like NRxNT, got '" + v + "'");
    return {to_int32("grid", v.substr(0, x)), to_int32("grid", v.substr(x + 1))};
}

std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

// ---------------------------------------------------------------- checkpoint

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
    const std::size_t n = static_cast<std::size_t>(c.nr) * c.ntheta;
    for (const auto* f : {&c.state.q, &c.state.v.r, &c.state.v.th, &c.state.v.ph})
        if (f->nr != c.nr || f->nt != c.ntheta || f->v.size() != n) throw IOError("checkpoint state does not match its grid");
    Writer w;
    for (char ch : magic) w.put(ch);
    w.put(format_version);
    w.put<std::int32_t>(c.nr);
    w.put<std::int32_t>(c.ntheta);
    w.put<std::int32_t>(c.mode == Mode::Nonlinear ? 0 : 1);
    w.put<std::int32_t>(c.output_every);
    w.put(c.params.gamma);
    w.put(c.params.mu);
    w.put(c.params.lambda);
    w.put(c.params.omega_bar);
    w.put(c.params.rho_center);
    w.put(c.solver.filter_factor);
    w.put(c.solver.stabilization);
    w.put<std::uint8_t>(c.solver.filter ? 1 : 0);
    w.put<std::int64_t>(c.step);
    w.put<std::int64_t>(c.nsteps);
    w.put<std::int64_t>(c.samples);
    w.put(c.dt);
    w.put(c.state.t);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.recent.size()));
    for (const Sample& s : c.recent) {
        for (double x : {s.t, s.mass, s.L[0], s.L[1], s.L[2], s.E0, s.D0, s.rhs, s.rate}) w.put(x);
    }
    w.put_array(c.state.q.v);
    w.put_array(c.state.v.r.v);
    w.put_array(c.state.v.th.v);
    w.put_array(c.state.v.ph.v);
    return std::move(w.out);
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    const auto m = r.take(sizeof magic);
    if (!std::equal(m.begin(), m.end(), reinterpret_cast<const std::uint8_t*>(magic))) throw IOError("not a checkpoint file");
    if (r.get<std::uint32_t>() != format_version) throw IOError("unsupported checkpoint version");
    Checkpoint c;
    c.nr = r.get<std::int32_t>();
    c.ntheta = r.get<std::int32_t>();
    const auto mode = r.get<std::int32_t>();
    if (mode != 0 && mode != 1) throw IOError("bad mode in checkpoint");
    c.mode = mode == 0 ? Mode::Nonlinear : Mode::Linearized;
    c.output_every = r.get<std::int32_t>();
    c.params.gamma = r.get<double>();
    c.params.mu = r.get<double>();
    c.params.lambda = r.get<double>();
    c.params.omega_bar = r.get<double>();
    c.params.rho_center = r.get<double>();
    c.solver.filter_factor = r.get<double>();
    c.solver.stabilization = r.get<double>();
    c.solver.filter = r.get<std::uint8_t>() != 0;
    c.step = r.get<std::int64_t>();
    c.nsteps = r.get<std::int64_t>();
    c.samples = r.get<std::int64_t>();
    c.dt = r.get<double>();
    const double t = r.get<double>();
    const auto nrec = r.get<std::uint32_t>();
    if (nrec > 3) throw IOError("bad sample count in checkpoint");
    c.recent.resize(nrec);
    for (Sample& s : c.recent) {
        for (double* x : {&s.t, &s.mass, &s.L[0], &s.L[1], &s.L[2], &s.E0, &s.D0, &s.rhs, &s.rate}) *x = r.get<double>();
    }
    if (c.nr < 1 || c.ntheta < 1 || c.nr > 1 << 16 || c.ntheta > 1 << 16) throw IOError("bad grid in checkpoint");
    const MeridianGrid g(c.nr, c.ntheta);
    c.state = PerturbationState(g);
    c.state.t = t;
    r.get_array(c.state.q.v);
    r.get_array(c.state.v.r.v);
    r.get_array(c.state.v.th.v);
    r.get_array(c.state.v.ph.v);
    if (!r.done()) throw IOError("trailing bytes in checkpoint");
    return c;
}

void write_checkpoint(const std::string& path, const Checkpoint& c) { write_file(path, encode_checkpoint(c)); }

Checkpoint read_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }

// ---------------------------------------------------------------- CSV

std::string csv_header() { return "t,mass,L1,L2,L3,E0,D0,residual"; }

std::string format_row(const DiagnosticRow& r) {
    std::string s;
    for (double x : {r.t, r.mass, r.L1, r.L2, r.L3, r.E0, r.D0, r.residual}) {
        if (!s.empty()) s += ',';
        s += format_double(x);
    }
    return s;
}

std::vector<DiagnosticRow> parse_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || trim(line) != csv_header()) throw IOError("malformed CSV: expected header '" + csv_header() + "'");
    std::vector<DiagnosticRow> rows;
    int n = 1;
    while (std::getline(in, line)) {
        ++n;
        line = trim(line);
        if (line.empty()) continue;
        double v[8];
        std::size_t pos = 0;
        for (int i = 0; i < 8; ++i) {
            const auto next = line.find(',', pos);
            if ((i < 7) != (next != std::string::npos)) throw IOError("malformed CSV: line " + std::to_string(n) + " needs 8 fields");
            const std::string f = trim(line.substr(pos, next == std::string::npos ? std::string::npos : next - pos));
            const char* end = f.data() + f.size();
            auto [p, ec] = std::from_chars(f.data(), end, v[i]);
            if (ec != std::errc() || p != end) throw IOError("malformed CSV: line " + std::to_string(n) + ": bad number '" + f + "'");
            pos = next + 1;
        }
        rows.push_back({v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]});
    }
    return rows;
}

std::vector<DiagnosticRow> read_csv(const std::string& path) {
    const auto b = read_file(path);
    return parse_csv(std::string(b.begin(), b.end()));
}

// ---------------------------------------------------------------- files

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IOError("cannot open '" + path + "'");
    std::vector<std::uint8_t> b((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (f.bad()) throw IOError("read failed on '" + path + "'");
    return b;
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IOError("cannot write '" + path + "'");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IOError("write failed on '" + path + "'");
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) throw IOError("sha256 failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string s;
    for (unsigned i = 0; i < len; ++i) {
        s += hex[md[i] >> 4];
        s += hex[md[i] & 15];
    }
    return s;
}

FileEntry describe_file(const std::string& path) {
    const auto b = read_file(path);
    return {path, b.size(), sha256_hex(b)};
}

// ---------------------------------------------------------------- diagnose

DiagnoseReport diagnose(const std::vector<DiagnosticRow>& rows, std::optional<std::pair<double, double>> window) {
    if (rows.size() < 4) throw DiagnosticsError("insufficient samples: " + std::to_string(rows.size()) + " rows");
    DiagnoseReport r;
    r.rows = rows.size();
    std::vector<double> t, e;
    for (const auto& w : rows) {
        t.push_back(w.t);
        e.push_back(w.E0);
    }
    r.fit = fit_decay_rate(t, e, window);
    const char* names[4] = {"mass", "L1", "L2", "L3"};
    for (int i = 0; i < 4; ++i) {
        auto col = [&](const DiagnosticRow& w) { return i == 0 ? w.mass : i == 1 ? w.L1 : i == 2 ? w.L2 : w.L3; };
        Drift d;
        d.name = names[i];
        d.initial = col(rows.front());
        for (const auto& w : rows) d.max_abs = std::max(d.max_abs, std::abs(col(w) - d.initial));
        if (d.initial != 0.0) d.relative = d.max_abs / std::abs(d.initial);
        r.drifts.push_back(d);
    }
    double dmax = 0.0, rmax = 0.0;
    for (const auto& w : rows) {
        dmax = std::max(dmax, w.D0);
        rmax = std::max(rmax, w.residual);
    }
    r.max_residual = dmax > 0.0 ? rmax / dmax : rmax;
    return r;
}

std::string format_report(const DiagnoseReport& r) {
    std::ostringstream o;
    o << "rows        " << r.rows << "\n"
      << "window      [" << format_double(r.fit.t_start) << ", " << format_double(r.fit.t_end) << "] (" << r.fit.samples
      << " samples)\n"
      << "sigma       " << format_double(r.fit.sigma) << "\n"
      << "r_squared   " << format_double(r.fit.r_squared) << "\n"
      << "exponential " << (r.fit.exponential ? "yes" : "no") << "\n"
      << "residual    " << format_double(r.max_residual) << " (max, relative to max D0)\n"
      << "drift       initial                   max_abs                   relative\n";
    for (const auto& d : r.drifts) {
        char line[160];
        std::snprintf(line, sizeof line, "%-11s %-25s %-25s %s\n", d.name.c_str(), format_double(d.initial).c_str(),
                      format_double(d.max_abs).c_str(), d.relative ? format_double(*d.relative).c_str() : "n/a");
        o << line;
    }
    return o.str();
}

}  // namespace ballns
