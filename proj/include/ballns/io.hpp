#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ballns/diagnostics.hpp"
#include "ballns/run.hpp"

namespace ballns {

inline constexpr const char* version_string = "0.1.0";

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IOError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A config as written: a mass target stays unresolved until resolve().
struct ConfigFile {
    SimConfig cfg;
    std::optional<double> mass;
};

// Line-oriented `key = value` text with # comments.
ConfigFile parse_config(const std::string& text);
ConfigFile load_config(const std::string& path);
void apply_setting(ConfigFile& c, const std::string& key, const std::string& value);
void apply_override(ConfigFile& c, const std::string& assignment);  // "key=value"
std::string format_config(const ConfigFile& c);
// Turns a mass target into rho_center (VacuumError below the threshold) and validates.
SimConfig resolve(const ConfigFile& c);

std::string format_double(double x);  // 17 significant digits
std::pair<int, int> parse_grid(const std::string& spec);  // "NRxNT"

// Little-endian container: magic, version, header, recent samples, then q, u_r, u_theta, u_phi.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void write_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint read_checkpoint(const std::string& path);

std::string csv_header();
std::string format_row(const DiagnosticRow& r);
std::vector<DiagnosticRow> parse_csv(const std::string& text);
std::vector<DiagnosticRow> read_csv(const std::string& path);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::span<const std::uint8_t> bytes);

struct FileEntry {
    std::string path;
    std::uint64_t bytes = 0;
    std::string sha256;
};
FileEntry describe_file(const std::string& path);

struct Drift {
    std::string name;
    double initial = 0.0;
    double max_abs = 0.0;
    std::optional<double> relative;  // empty when the initial value is zero
};

struct DiagnoseReport {
    std::size_t rows = 0;
    DecayFit fit;
    std::vector<Drift> drifts;     // mass, L1, L2, L3
    double max_residual = 0.0;     // normalized by max D0
};

// Throws DiagnosticsError with "insufficient samples" when the fit has too few points.
DiagnoseReport diagnose(const std::vector<DiagnosticRow>& rows,
                        std::optional<std::pair<double, double>> window = std::nullopt);
std::string format_report(const DiagnoseReport& r);

}  // namespace ballns
