#pragma once

#include "hypocoercivity.hpp"
#include "limit_lab.hpp"
#include "uq.hpp"
#include "vpb_solver.hpp"

#include <json.hpp>

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace vpb {

/// Unreadable config, unwritable output, path collision.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::string format_double(double x)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// FNV-1a 64-bit, hex.
inline std::string fnv1a64(std::string_view bytes)
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Every setting any subcommand reads. Serialized as flat `key = value` lines.
struct LabConfig {
    double epsilon = 0.5;
    std::vector<double> eps_list{0.2, 0.1, 0.05, 0.025};
    int dim = 1, modes = 8, degree = 6;
    double dt = 0.0; // 0: min(1e-3, eps^2/4)
    double T = 0.5;
    double z = 0.0, eta = 0.0;
    bool pure_relaxation = false, nonlinear = true;
    std::string initial = "well_prepared";
    double amplitude = 0.002;
    std::uint64_t seed = 1;
    int snapshot_every = 0;
    int nodes = 9;
    double s_max = 1.0;
    int s_points = 20;
    int regularity = 2, ell = 0;

    bool operator==(const LabConfig&) const = default;
};

namespace detail {

inline double parse_double(const std::string& key, const std::string& v)
{
    double x = 0.0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || p != v.data() + v.size()) throw ValidationError(key, "expected a number, got '" + v + "'");
    return x;
}

template <class I>
I parse_int(const std::string& key, const std::string& v)
{
    I x = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || p != v.data() + v.size()) throw ValidationError(key, "expected an integer, got '" + v + "'");
    return x;
}

inline bool parse_bool(const std::string& key, const std::string& v)
{
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ValidationError(key, "expected true or false, got '" + v + "'");
}

inline std::vector<double> parse_list(const std::string& key, const std::string& v)
{
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        out.push_back(parse_double(key, item));
    }
    if (out.empty()) throw ValidationError(key, "empty list");
    return out;
}

inline std::string trim(std::string s)
{
    s.erase(0, s.find_first_not_of(" \t\r"));
    s.erase(s.find_last_not_of(" \t\r") + 1);
    return s;
}

struct Field {
    const char* key;
    std::function<std::string(const LabConfig&)> get;
    std::function<void(LabConfig&, const std::string&)> set;
};

inline const std::vector<Field>& schema()
{
    auto dbl = [](const char* k, double LabConfig::*m) {
        return Field{k, [m](const LabConfig& c) { return format_double(c.*m); }, [k, m](LabConfig& c, const std::string& v) { c.*m = parse_double(k, v); }};
    };
    auto in = [](const char* k, int LabConfig::*m) {
        return Field{k, [m](const LabConfig& c) { return std::to_string(c.*m); }, [k, m](LabConfig& c, const std::string& v) { c.*m = parse_int<int>(k, v); }};
    };
    auto bl = [](const char* k, bool LabConfig::*m) {
        return Field{k, [m](const LabConfig& c) { return std::string(c.*m ? "true" : "false"); },
                     [k, m](LabConfig& c, const std::string& v) { c.*m = parse_bool(k, v); }};
    };
    static const std::vector<Field> s{
        dbl("epsilon", &LabConfig::epsilon),
        Field{"eps_list",
              [](const LabConfig& c) {
                  std::string r;
                  for (std::size_t i = 0; i < c.eps_list.size(); ++i) r += (i ? "," : "") + format_double(c.eps_list[i]);
                  return r;
              },
              [](LabConfig& c, const std::string& v) { c.eps_list = parse_list("eps_list", v); }},
        in("dim", &LabConfig::dim),
        in("modes", &LabConfig::modes),
        in("degree", &LabConfig::degree),
        dbl("dt", &LabConfig::dt),
        dbl("T", &LabConfig::T),
        dbl("z", &LabConfig::z),
        dbl("eta", &LabConfig::eta),
        bl("pure_relaxation", &LabConfig::pure_relaxation),
        bl("nonlinear", &LabConfig::nonlinear),
        Field{"initial", [](const LabConfig& c) { return c.initial; }, [](LabConfig& c, const std::string& v) { c.initial = v; }},
        dbl("amplitude", &LabConfig::amplitude),
        Field{"seed", [](const LabConfig& c) { return std::to_string(c.seed); },
              [](LabConfig& c, const std::string& v) { c.seed = parse_int<std::uint64_t>("seed", v); }},
        in("snapshot_every", &LabConfig::snapshot_every),
        in("nodes", &LabConfig::nodes),
        dbl("s_max", &LabConfig::s_max),
        in("s_points", &LabConfig::s_points),
        in("regularity", &LabConfig::regularity),
        in("ell", &LabConfig::ell),
    };
    return s;
}

} // namespace detail

/// Sets one key; unknown keys are validation errors.
inline void set_key(LabConfig& c, const std::string& key, const std::string& value)
{
    for (const auto& f : detail::schema())
        if (key == f.key) {
            f.set(c, value);
            return;
        }
    throw ValidationError(key, "unknown configuration key");
}

/// Applies `key = value` lines on top of c. '#' starts a comment; duplicate keys are rejected.
inline LabConfig parse_config(const std::string& text, LabConfig c = {})
{
    std::istringstream in(text);
    std::string line;
    std::set<std::string> seen;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        line = detail::trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw ValidationError("config", "line " + std::to_string(lineno) + ": expected key = value");
        std::string key = detail::trim(line.substr(0, eq)), value = detail::trim(line.substr(eq + 1));
        if (!seen.insert(key).second) throw ValidationError(key, "duplicate key at line " + std::to_string(lineno));
        set_key(c, key, value);
    }
    return c;
}

inline std::string serialize_config(const LabConfig& c)
{
    std::string out;
    for (const auto& f : detail::schema()) out += std::string(f.key) + " = " + f.get(c) + "\n";
    return out;
}

inline LabConfig read_config_file(const std::string& path, LabConfig base = {})
{
    std::ifstream f(path);
    if (!f) throw IoError("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str(), base);
}

/// smoke: seconds-scale runs; full: the reference experiment sizes.
inline LabConfig profile_defaults(const std::string& profile)
{
    LabConfig c;
    if (profile == "smoke") {
        c.modes = 4;
        c.degree = 4;
        c.T = 0.2;
        c.eps_list = {0.2, 0.1};
        c.nodes = 5;
        c.s_points = 8;
    } else if (profile == "full") {
        c.T = 4.0;
        c.dt = 1e-3;
    } else {
        throw ValidationError("profile", "must be smoke or full");
    }
    return c;
}

inline SimulationConfig to_simulation(const LabConfig& c)
{
    SimulationConfig s;
    s.epsilon = c.epsilon;
    s.dim = c.dim;
    s.modes = c.modes;
    s.degree = c.degree;
    s.dt = c.dt;
    s.T = c.T;
    s.z = c.z;
    s.eta = c.eta;
    s.pure_relaxation = c.pure_relaxation;
    s.nonlinear = c.nonlinear;
    s.initial = c.initial;
    s.amplitude = c.amplitude;
    s.seed = c.seed;
    s.snapshot_every = c.snapshot_every;
    validate(s);
    if (c.initial != "well_prepared" && c.initial != "kinetic_perturbed" && c.initial != "random")
        throw ValidationError("initial", "must be well_prepared, kinetic_perturbed or random");
    return s;
}

inline ExperimentPlan to_plan(const LabConfig& c)
{
    ExperimentPlan p;
    p.dim = c.dim;
    p.modes = c.modes;
    p.degree = c.degree;
    p.dt = c.dt > 0.0 ? c.dt : 1e-3;
    p.T = c.T;
    p.amplitude = c.amplitude;
    p.epsilons = c.eps_list;
    p.regularity = c.regularity;
    p.ell = c.ell;
    p.seed = c.seed;
    p.nonlinear = c.nonlinear;
    if (c.initial == "kinetic_perturbed") p.kind = InitialKind::kinetic_perturbed;
    p.snapshot_every = c.snapshot_every > 0 ? c.snapshot_every : p.snapshot_every;
    p.validate();
    return p;
}

inline UqConfig to_uq(const LabConfig& c)
{
    UqConfig u;
    u.dim = c.dim;
    u.modes = c.modes;
    u.degree = c.degree;
    u.epsilon = c.epsilon;
    u.dt = c.dt > 0.0 ? c.dt : 4e-3;
    u.T = c.T;
    u.amplitude = c.amplitude;
    u.eta = c.eta;
    u.regularity = std::max(1, c.regularity - 1);
    u.seed = c.seed;
    u.nonlinear = c.nonlinear;
    if (c.snapshot_every > 0) u.snapshot_every = c.snapshot_every;
    u.validate();
    if (c.nodes < 1) throw ValidationError("nodes", "must be >= 1");
    return u;
}

/// CSV with a header row; doubles in 17 significant digits.
class CsvTable {
public:
    using Cell = std::variant<double, long long, std::string>;

    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    void add(std::vector<Cell> row)
    {
        if (row.size() != header_.size()) throw std::invalid_argument("csv row has " + std::to_string(row.size()) + " cells, header has " + std::to_string(header_.size()));
        rows_.push_back(std::move(row));
    }

    const std::vector<std::string>& header() const { return header_; }
    std::size_t rows() const { return rows_.size(); }

    std::string str() const
    {
        std::string out;
        for (std::size_t i = 0; i < header_.size(); ++i) out += (i ? "," : "") + header_[i];
        out += "\n";
        for (const auto& r : rows_) {
            for (std::size_t i = 0; i < r.size(); ++i) {
                if (i) out += ",";
                if (auto d = std::get_if<double>(&r[i]))
                    out += format_double(*d);
                else if (auto n = std::get_if<long long>(&r[i]))
                    out += std::to_string(*n);
                else
                    out += std::get<std::string>(r[i]);
            }
            out += "\n";
        }
        return out;
    }

private:
    std::vector<std::string> header_;
    std::vector<std::vector<Cell>> rows_;
};

/// Schema of the branch table.
inline CsvTable branch_table(double eps, const BranchScan& scan)
{
    CsvTable t({"epsilon", "s", "j", "re_lambda", "im_lambda", "fit_c_re", "fit_c_im", "residual"});
    if (scan.branches.empty()) return t;
    for (std::size_t k = 0; k < scan.branches[0].s.size(); ++k)
        for (const auto& b : scan.branches)
            t.add({eps, b.s[k], (long long)b.j, b.lambda[k].real(), b.lambda[k].imag(), b.fit_c.real(), b.fit_c.imag(), b.residual});
    return t;
}

/// Schema of the limit-sweep table.
inline CsvTable limit_table(const std::vector<SweepRow>& rows)
{
    CsvTable t({"epsilon", "ell", "time_avg_err", "integrated_err", "perp_budget", "decay_rate"});
    for (const auto& r : rows) t.add({r.epsilon, (long long)r.ell, r.err.time_avg_err, r.err.integrated_err, r.perp_budget, r.err.decay_rate});
    return t;
}

/// Coefficient dump: modes in lexicographic order, Hermite flat index ascending, re/im interleaved.
inline CsvTable state_table(const ModeGrid& grid, const KineticState& s)
{
    CsvTable t({"n1", "n2", "k", "re", "im"});
    for (std::size_t j = 0; j < grid.size(); ++j)
        for (Eigen::Index k = 0; k < s.g.rows(); ++k)
            t.add({(long long)grid.mode(j)[0], (long long)grid.mode(j)[1], (long long)k, s.g(k, Eigen::Index(j)).real(), s.g(k, Eigen::Index(j)).imag()});
    return t;
}

inline nlohmann::json ledger_json(const EnergyLedger& l)
{
    nlohmann::json j;
    j["a2"] = l.a2;
    j["a3"] = l.a3;
    j["a4"] = l.a4;
    j["a5"] = l.a5;
    j["C_u"] = l.C_u;
    j["C_delta"] = l.C_delta;
    j["C_delta1"] = l.C_delta1;
    j["C_delta2"] = l.C_delta2;
    j["delta"] = l.delta;
    j["epsilon"] = l.epsilon;
    j["lambda"] = {l.lambda1, l.lambda2, l.lambda3, l.lambda4};
    j["a6"] = l.a6;
    j["lambda_tilde"] = {l.lt1, l.lt2};
    j["lambda5"] = l.lambda5;
    j["lambda6"] = l.lambda6;
    j["lambda7"] = l.lambda7;
    j["c_l"] = l.c_l;
    j["c_u"] = l.c_u;
    j["c_d"] = l.c_d;
    j["c_e"] = l.c_e;
    j["c_f"] = l.c_f;
    return j;
}

/// Owns one output directory for one run: refuses to reuse a directory holding a manifest
/// (unless overwrite), refuses to write the same file twice, and records checksums.
class OutputDir {
public:
    OutputDir(std::filesystem::path dir, bool overwrite) : dir_(std::move(dir))
    {
        if (std::filesystem::exists(dir_ / "manifest.json") && !overwrite)
            throw IoError("output path collision: '" + (dir_ / "manifest.json").string() + "' exists (use --overwrite)");
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (ec) throw IoError("cannot create output directory '" + dir_.string() + "': " + ec.message());
    }

    void write(const std::string& name, const std::string& content)
    {
        if (name == "manifest.json" || !files_.insert(name).second) throw IoError("output path collision: '" + name + "' written twice");
        std::ofstream f(dir_ / name, std::ios::binary);
        if (!f) throw IoError("cannot write '" + (dir_ / name).string() + "'");
        f << content;
        if (!f) throw IoError("write failed for '" + (dir_ / name).string() + "'");
        index_.push_back({{"name", name}, {"bytes", content.size()}, {"fnv1a64", fnv1a64(content)}});
    }

    /// Writes manifest.json: the supplied fields plus the file index.
    void finish(nlohmann::json manifest)
    {
        manifest["files"] = index_;
        std::ofstream f(dir_ / "manifest.json");
        if (!f) throw IoError("cannot write manifest in '" + dir_.string() + "'");
        f << manifest.dump(2) << "\n";
    }

    const std::filesystem::path& path() const { return dir_; }

private:
    std::filesystem::path dir_;
    std::set<std::string> files_;
    nlohmann::json index_ = nlohmann::json::array();
};

} // namespace vpb
