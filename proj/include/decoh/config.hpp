#pragma once

// Config-driven experiment runner: INI-style parsing, per-kind runners that
// write CSV tables, and a deterministic manifest.json.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "decoh/asymptotics.hpp"
#include "decoh/classical.hpp"
#include "decoh/coherence.hpp"
#include "decoh/noise.hpp"
#include "decoh/phase_grid.hpp"
#include "decoh/propagator.hpp"
#include "decoh/states.hpp"

namespace decoh {

inline constexpr const char* kToolVersion = "0.1.0";

enum class ExperimentKind { validate, index_series, evolve, asymptotics, relaxation, classical };

inline const char* to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::validate: return "validate";
        case ExperimentKind::index_series: return "index_series";
        case ExperimentKind::evolve: return "evolve";
        case ExperimentKind::asymptotics: return "asymptotics";
        case ExperimentKind::relaxation: return "relaxation";
        case ExperimentKind::classical: return "classical";
    }
    return "?";
}

inline std::optional<ExperimentKind> parse_kind(const std::string& s) {
    if (s == "validate") return ExperimentKind::validate;
    if (s == "index_series" || s == "index") return ExperimentKind::index_series;
    if (s == "evolve") return ExperimentKind::evolve;
    if (s == "asymptotics") return ExperimentKind::asymptotics;
    if (s == "relaxation") return ExperimentKind::relaxation;
    if (s == "classical") return ExperimentKind::classical;
    return std::nullopt;
}

struct StateSpec {
    std::string family = "ground";
    GaussianMoments moments = ground_state(1);
    std::optional<GaussianKernelParams1D> params_1d;  // kept for kernel-side checks
};

struct ExperimentConfig {
    std::optional<ExperimentKind> kind;
    NoiseSpec noise = NoiseSpec::zero(1);
    std::string noise_source = "inline";
    StateSpec state;
    std::vector<double> times;
    GridOptions grid;
    int sample_points = 0;  // emitted evolve grids; 0 selects 128 (d=1) or 32 (d=2)
    int density_points = 0;  // classical histograms; 0 selects 64 (d=1) or 16 (d=2)
    double density_sigmas = 6.0;
    size_t mc_n = 100000;
    int mc_steps = 256;
    std::uint64_t seed = 1;
    int threads = 1;
    std::string out_dir = "out";
    std::string source;  // config path, if any

    int dim() const { return noise.dim; }
};

namespace detail {

struct IniEntry {
    std::string value;
    int line = 0;
};

using IniSection = std::map<std::string, IniEntry>;
using IniDoc = std::map<std::string, IniSection>;

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline const std::map<std::string, std::set<std::string>>& known_keys() {
    static const std::map<std::string, std::set<std::string>> keys = {
        {"experiment", {"kind"}},
        {"noise", {"file", "dim", "A", "atoms", "momentum_atoms", "position_atoms", "density_file", "density_kind"}},
        {"state", {"family", "A", "B", "C", "D", "E", "F", "sigma", "mean", "file"}},
        {"times", {"t"}},
        {"grid", {"points", "half_width", "max_doublings", "boundary_tol", "sample_points", "density_points",
                  "density_sigmas"}},
        {"mc", {"n", "steps", "seed", "threads"}},
        {"output", {"dir"}},
    };
    return keys;
}

inline IniDoc parse_ini(const std::string& text) {
    IniDoc doc;
    std::istringstream is(text);
    std::string raw;
    std::string section;
    int lineno = 0;
    while (std::getline(is, raw)) {
        ++lineno;
        const std::string line = trim(raw);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        const std::string at = "line " + std::to_string(lineno) + ": ";
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(at + "unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (!known_keys().count(section)) throw ConfigError(at + "unknown section [" + section + "]");
            if (doc.count(section)) throw ConfigError(at + "duplicate section [" + section + "]");
            doc[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(at + "expected key = value");
        if (section.empty()) throw ConfigError(at + "key outside of a section");
        const std::string key = trim(line.substr(0, eq));
        if (!known_keys().at(section).count(key)) {
            throw ConfigError(at + "unknown key '" + key + "' in [" + section + "]");
        }
        if (doc[section].count(key)) throw ConfigError(at + "duplicate key '" + key + "' in [" + section + "]");
        doc[section][key] = {trim(line.substr(eq + 1)), lineno};
    }
    return doc;
}

// Reader over one section that prefixes every error with line and field.
struct FieldReader {
    const IniSection* sec = nullptr;
    std::string name;

    bool has(const std::string& key) const { return sec && sec->count(key); }

    std::string where(const std::string& key) const {
        const int line = has(key) ? sec->at(key).line : 0;
        return (line ? "line " + std::to_string(line) + ": " : std::string()) + "[" + name + "] " + key + ": ";
    }

    [[noreturn]] void fail(const std::string& key, const std::string& msg) const { throw ConfigError(where(key) + msg); }

    const std::string& raw(const std::string& key) const { return sec->at(key).value; }

    template <class F>
    auto guarded(const std::string& key, F&& f) const {
        try {
            return f(raw(key));
        } catch (const ConfigError& e) {
            fail(key, e.what());
        }
    }

    double number(const std::string& key) const {
        return guarded(key, [&](const std::string& s) {
            const auto v = parse_numbers(s);
            if (v.size() != 1) throw ConfigError("expected one number");
            return v[0];
        });
    }

    long long integer(const std::string& key) const {
        const std::string& s = raw(key);
        long long v = 0;
        const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
        if (r.ec != std::errc() || r.ptr != s.data() + s.size()) fail(key, "expected an integer, got '" + s + "'");
        return v;
    }

    std::vector<double> numbers(const std::string& key) const {
        return guarded(key, [&](const std::string& s) { return parse_numbers(s); });
    }

    PhaseMat matrix(const std::string& key, int n) const {
        return guarded(key, [&](const std::string& s) { return parse_matrix(s, n); });
    }

    PhaseVec vector(const std::string& key, int n) const {
        return guarded(key, [&](const std::string& s) { return parse_vector(s, n); });
    }

    // Rows separated by ';', each with `width` numbers.
    std::vector<std::vector<double>> rows(const std::string& key, size_t width) const {
        std::vector<std::vector<double>> out;
        std::istringstream is(raw(key));
        std::string row;
        int i = 0;
        while (std::getline(is, row, ';')) {
            std::vector<double> v;
            try {
                v = parse_numbers(row);
            } catch (const ConfigError& e) {
                fail(key, "row " + std::to_string(i) + ": " + e.what());
            }
            if (v.size() != width) {
                fail(key, "row " + std::to_string(i) + " must have " + std::to_string(width) + " entries");
            }
            out.push_back(v);
            ++i;
        }
        if (out.empty()) fail(key, "no rows");
        return out;
    }
};

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw ConfigError("cannot open file '" + p.string() + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& rel) {
    const std::filesystem::path p(rel);
    return p.is_absolute() || base.empty() ? p : base / p;
}

inline std::vector<std::vector<double>> read_rows(const std::filesystem::path& p) {
    std::istringstream is(read_file(p));
    std::vector<std::vector<double>> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#' || std::isalpha(static_cast<unsigned char>(line[0]))) continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        try {
            rows.push_back(parse_numbers(line));
        } catch (const ConfigError& e) {
            throw ConfigError(p.string() + " line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return rows;
}

inline std::vector<JumpAtom> atoms_from_rows(const std::vector<std::vector<double>>& rows) {
    std::vector<JumpAtom> out;
    for (const auto& r : rows) {
        PhaseVec p(static_cast<int>(r.size()) - 1);
        for (size_t i = 0; i + 1 < r.size(); ++i) p[static_cast<int>(i)] = r[i];
        out.push_back({p, r.back()});
    }
    return out;
}

inline NoiseSpec parse_noise(const IniSection* sec, const std::filesystem::path& base, std::string& source) {
    FieldReader f{sec, "noise"};
    if (f.has("file")) {
        for (const auto& [k, v] : *sec) {
            if (k != "file") f.fail(k, "cannot be combined with file");
        }
        const auto path = resolve(base, f.raw("file"));
        std::string text;
        try {
            text = read_file(path);
        } catch (const ConfigError& e) {
            f.fail("file", e.what());
        }
        IniDoc doc;
        try {
            doc = parse_ini(text);
        } catch (const ConfigError& e) {
            throw ConfigError(path.string() + ": " + e.what());
        }
        if (!doc.count("noise")) throw ConfigError(path.string() + ": missing [noise] section");
        source = path.string();
        std::string nested;
        try {
            return parse_noise(&doc.at("noise"), path.parent_path(), nested);
        } catch (const ConfigError& e) {
            throw ConfigError(path.string() + ": " + e.what());
        }
    }
    source = "inline";
    const int d = f.has("dim") ? static_cast<int>(f.integer("dim")) : 1;
    if (d < 1 || d > kMaxDim) f.fail("dim", "must lie in 1..3");
    const PhaseMat a = f.has("A") ? f.matrix("A", 2 * d) : PhaseMat(PhaseMat::Zero(2 * d, 2 * d));
    const int nj = static_cast<int>(f.has("atoms")) + static_cast<int>(f.has("momentum_atoms")) +
                   static_cast<int>(f.has("position_atoms")) + static_cast<int>(f.has("density_file"));
    if (nj > 1) throw ConfigError("[noise]: give at most one of atoms, momentum_atoms, position_atoms, density_file");
    JumpMeasure jump = JumpMeasure::empty(2 * d);
    auto build = [&](const std::string& key, auto&& fn) {
        try {
            jump = fn();
        } catch (const ValidationError& e) {
            f.fail(key, e.what());
        }
    };
    if (f.has("atoms")) {
        build("atoms", [&] { return JumpMeasure::atoms(2 * d, atoms_from_rows(f.rows("atoms", 2 * d + 1))); });
    } else if (f.has("momentum_atoms")) {
        build("momentum_atoms",
              [&] { return JumpMeasure::momentum_only(d, atoms_from_rows(f.rows("momentum_atoms", d + 1))); });
    } else if (f.has("position_atoms")) {
        build("position_atoms",
              [&] { return JumpMeasure::position_only(d, atoms_from_rows(f.rows("position_atoms", d + 1))); });
    } else if (f.has("density_file")) {
        const std::string kind = f.has("density_kind") ? f.raw("density_kind") : "full";
        std::vector<std::vector<double>> rows;
        try {
            rows = read_rows(resolve(base, f.raw("density_file")));
        } catch (const ConfigError& e) {
            f.fail("density_file", e.what());
        }
        build("density_file", [&] {
            const DensitySamples s = DensitySamples::from_rows(rows);
            if (kind == "full") return JumpMeasure::grid_density(s);
            if (kind == "momentum") return JumpMeasure::momentum_density(d, s);
            if (kind == "position") return JumpMeasure::position_density(d, s);
            f.fail("density_kind", "expected full, momentum or position");
        });
    } else if (f.has("density_kind")) {
        f.fail("density_kind", "needs density_file");
    }
    try {
        return NoiseSpec::make(d, a, jump);
    } catch (const ValidationError& e) {
        f.fail(f.has("A") ? "A" : "dim", e.what());
    }
}

inline StateSpec parse_state(const IniSection* sec, int d, const std::filesystem::path& base) {
    FieldReader f{sec, "state"};
    StateSpec s;
    s.family = f.has("family") ? f.raw("family") : "ground";
    auto reject_others = [&](const std::set<std::string>& allowed) {
        if (!sec) return;
        for (const auto& [k, v] : *sec) {
            if (k != "family" && !allowed.count(k)) f.fail(k, "not used by family " + s.family);
        }
    };
    if (s.family == "ground") {
        reject_others({});
        s.moments = ground_state(d);
    } else if (s.family == "gaussian1d") {
        reject_others({"A", "B", "C", "D", "E", "F"});
        if (d != 1) f.fail("family", "gaussian1d needs dim = 1");
        GaussianKernelParams1D g;
        g.A = f.has("A") ? f.number("A") : g.A;
        g.B = f.has("B") ? f.number("B") : g.B;
        g.C = f.has("C") ? f.number("C") : g.C;
        g.D = f.has("D") ? f.number("D") : g.D;
        g.E = f.has("E") ? f.number("E") : g.E;
        g.F = f.has("F") ? f.number("F") : g.E * g.E / (4.0 * g.C);
        const auto bad = validate(g);
        if (!bad.empty()) f.fail("family", "invalid gaussian1d parameters: " + bad.front());
        s.params_1d = g;
        s.moments = moments(g);
    } else if (s.family == "moments") {
        reject_others({"sigma", "mean"});
        if (!f.has("sigma")) f.fail("sigma", "required for family moments");
        s.moments.sigma = f.matrix("sigma", 2 * d);
        s.moments.mean = f.has("mean") ? f.vector("mean", 2 * d) : PhaseVec(PhaseVec::Zero(2 * d));
        if (!is_spd(s.moments.sigma)) f.fail("sigma", "must be symmetric positive definite");
    } else if (s.family == "file") {
        reject_others({"file"});
        if (!f.has("file")) f.fail("file", "required for family file");
        std::string text;
        try {
            text = read_file(resolve(base, f.raw("file")));
            const auto kv = parse_key_values(text);
            if (kv.count("family") && kv.at("family") == "gaussian1d") {
                const GaussianKernelParams1D g = deserialize_1d(text);
                require_valid(validate(g));
                if (d != 1) throw ConfigError("gaussian1d state needs dim = 1");
                s.params_1d = g;
                s.moments = moments(g);
            } else {
                const GaussianKernelParamsND g = deserialize_nd(text);
                require_valid(validate(g));
                if (g.dim != d) throw ConfigError("state dim differs from noise dim");
                s.moments = moments(g);
            }
        } catch (const Error& e) {
            f.fail("file", e.what());
        } catch (const std::exception& e) {
            f.fail("file", std::string("malformed state file: ") + e.what());
        }
    } else {
        f.fail("family", "expected ground, gaussian1d, moments or file");
    }
    return s;
}

}  // namespace detail

// Parses INI-style text: [section] headers, key = value lines, '#' comments.
// `base` resolves relative file references.
inline ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base = {}) {
    const detail::IniDoc doc = detail::parse_ini(text);
    auto section = [&](const char* name) -> const detail::IniSection* {
        return doc.count(name) ? &doc.at(name) : nullptr;
    };
    ExperimentConfig cfg;
    {
        detail::FieldReader f{section("experiment"), "experiment"};
        if (f.has("kind")) {
            cfg.kind = parse_kind(f.raw("kind"));
            if (!cfg.kind) f.fail("kind", "expected validate, index_series, evolve, asymptotics, relaxation or classical");
        }
    }
    cfg.noise = detail::parse_noise(section("noise"), base, cfg.noise_source);
    cfg.state = detail::parse_state(section("state"), cfg.noise.dim, base);
    {
        detail::FieldReader f{section("times"), "times"};
        if (f.has("t")) {
            cfg.times = f.numbers("t");
            if (cfg.times.empty()) f.fail("t", "empty time list");
            for (size_t i = 0; i < cfg.times.size(); ++i) {
                if (!(cfg.times[i] >= 0.0)) f.fail("t", "times must be nonnegative");
                if (i && !(cfg.times[i] > cfg.times[i - 1])) f.fail("t", "times must be strictly increasing");
            }
        }
    }
    {
        detail::FieldReader f{section("grid"), "grid"};
        if (f.has("points")) {
            cfg.grid.points_per_axis = static_cast<int>(f.integer("points"));
            if (cfg.grid.points_per_axis < 16 || !is_power_of_two(cfg.grid.points_per_axis)) {
                f.fail("points", "must be a power of two >= 16");
            }
        }
        if (f.has("half_width")) {
            cfg.grid.half_width = f.number("half_width");
            if (!(cfg.grid.half_width > 0.0)) f.fail("half_width", "must be positive");
        }
        if (f.has("max_doublings")) {
            cfg.grid.max_doublings = static_cast<int>(f.integer("max_doublings"));
            if (cfg.grid.max_doublings < 0) f.fail("max_doublings", "must be >= 0");
        }
        if (f.has("boundary_tol")) {
            cfg.grid.boundary_tol = f.number("boundary_tol");
            if (!(cfg.grid.boundary_tol > 0.0)) f.fail("boundary_tol", "must be positive");
        }
        for (auto [key, dst] : {std::pair{"sample_points", &cfg.sample_points}, std::pair{"density_points", &cfg.density_points}}) {
            if (f.has(key)) {
                *dst = static_cast<int>(f.integer(key));
                if (*dst < 8 || !is_power_of_two(*dst)) f.fail(key, "must be a power of two >= 8");
            }
        }
        if (f.has("density_sigmas")) {
            cfg.density_sigmas = f.number("density_sigmas");
            if (!(cfg.density_sigmas > 0.0)) f.fail("density_sigmas", "must be positive");
        }
    }
    {
        detail::FieldReader f{section("mc"), "mc"};
        if (f.has("n")) {
            const long long n = f.integer("n");
            if (n < 1000) f.fail("n", "must be >= 1000");
            cfg.mc_n = static_cast<size_t>(n);
        }
        if (f.has("steps")) {
            cfg.mc_steps = static_cast<int>(f.integer("steps"));
            if (cfg.mc_steps < 64 || !is_power_of_two(cfg.mc_steps)) f.fail("steps", "must be a power of two >= 64");
        }
        if (f.has("seed")) {
            const long long s = f.integer("seed");
            if (s < 0) f.fail("seed", "must be >= 0");
            cfg.seed = static_cast<std::uint64_t>(s);
        }
        if (f.has("threads")) {
            cfg.threads = static_cast<int>(f.integer("threads"));
            if (cfg.threads < 1) f.fail("threads", "must be >= 1");
        }
    }
    {
        detail::FieldReader f{section("output"), "output"};
        if (f.has("dir")) cfg.out_dir = f.raw("dir");
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    ExperimentConfig cfg = parse_config(detail::read_file(path), path.parent_path());
    cfg.source = path.string();
    return cfg;
}

// Kind-specific requirements on an otherwise parsed config.
inline void check_for_kind(const ExperimentConfig& cfg, ExperimentKind kind) {
    const int d = cfg.dim();
    const bool needs_times = kind != ExperimentKind::validate;
    if (needs_times && cfg.times.empty()) throw ConfigError("[times] t: required for " + std::string(to_string(kind)));
    const bool positive = kind == ExperimentKind::asymptotics || kind == ExperimentKind::relaxation ||
                          kind == ExperimentKind::classical;
    if (positive && !cfg.times.empty() && !(cfg.times.front() > 0.0)) {
        throw ConfigError("[times] t: " + std::string(to_string(kind)) + " needs times > 0");
    }
    if (kind == ExperimentKind::asymptotics && cfg.times.size() < 4) {
        throw ConfigError("[times] t: asymptotics needs at least 4 times for the fit");
    }
    if (kind != ExperimentKind::validate && kind != ExperimentKind::evolve && d > 2) {
        throw ConfigError("[noise] dim: grid-based experiments support d <= 2");
    }
    if (kind == ExperimentKind::evolve && d > 2) throw ConfigError("[noise] dim: emitted grids support d <= 2");
}

struct RunResult {
    int status = 0;  // 0 ok, 2 numerical-check failure
    std::vector<std::string> outputs;
    nlohmann::json summary = nlohmann::json::object();
};

namespace detail {

inline void csv_header(std::ostream& os, const std::string& kind, int d) {
    os << "# kind=" << kind << "\n# dim=" << d << "\n# convention=" << kWeylConvention << "\n# " << kMeasureConvention
       << "\n# block_pairing=" << kBlockConvention << "\n# units=hbar=1, H_free=|K|^2\n";
    os << std::setprecision(17);
}

inline nlohmann::json to_json(const PhaseMat& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < m.rows(); ++i) {
        nlohmann::json r = nlohmann::json::array();
        for (int j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
        rows.push_back(r);
    }
    return rows;
}

inline nlohmann::json to_json(const PhaseVec& v) {
    nlohmann::json r = nlohmann::json::array();
    for (int i = 0; i < v.size(); ++i) r.push_back(v[i]);
    return r;
}

inline std::string flag_text(const std::string& what) {
    std::string s = what;
    std::replace(s.begin(), s.end(), ',', ';');
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

class Writer {
public:
    Writer(const std::filesystem::path& dir, RunResult& r) : dir_(dir), result_(r) {}

    std::ofstream open(const std::string& name) {
        std::ofstream os(dir_ / name);
        if (!os) throw ConfigError("cannot write '" + (dir_ / name).string() + "'");
        result_.outputs.push_back(name);
        return os;
    }

private:
    std::filesystem::path dir_;
    RunResult& result_;
};

inline int emitted_points(int configured, int d, int d1, int d2) {
    if (configured > 0) return configured;
    return d == 1 ? d1 : d2;
}

struct Check {
    std::string suite;
    std::string name;
    double value;
    double threshold;
    bool pass;
};

inline void run_validate(const ExperimentConfig& cfg, Writer& w, RunResult& res) {
    const int d = cfg.dim();
    const NoiseSpec& n = cfg.noise;
    const CharFn phi0 = gaussian_charfn(cfg.state.moments);
    std::vector<Check> checks;
    auto check_le = [&](const std::string& suite, const std::string& name, double value, double thr) {
        checks.push_back({suite, name, value, thr, value <= thr});
    };
    auto check_ge = [&](const std::string& suite, const std::string& name, double value, double thr) {
        checks.push_back({suite, name, value, thr, value >= thr});
    };
    auto guard = [&](const std::string& suite, const std::string& name, auto&& fn) {
        try {
            fn();
        } catch (const Error& e) {
            checks.push_back({suite, name + " [" + flag_text(e.what()) + "]", std::nan(""), 0.0, false});
        }
    };
    const auto panel = test_panel(phi0.envelope(), d);

    check_le("state", "|phi(0) - 1|", std::abs(phi0(PhaseVec::Zero(2 * d)) - 1.0), 1e-12);
    double herm = 0.0;
    for (const auto& z : panel) herm = std::max(herm, std::abs(phi0(-z) - std::conj(phi0(z))));
    check_le("state", "hermitian symmetry", herm, 1e-12);
    if (d <= 2) {
        guard("state", "hs norm vs closed form", [&] {
            const double hs = hs_norm(phi0, cfg.grid);
            const double closed = closed_form_index(cfg.state.moments).hs_norm;
            check_le("state", "hs norm vs closed form", std::abs(hs - closed) / closed, 1e-6);
        });
    }
    if (d == 1) {
        guard("state", "isometry (kernel side)", [&] {
            const GaussianKernelParamsND pk = position_params(cfg.state.moments);
            const PhaseMat& s = cfg.state.moments.sigma;
            const double su = std::sqrt(spd_inverse(s, "Sigma")(0, 0));
            const double sy = std::sqrt(s(1, 1));
            const double L = std::abs(pk.m_x[0]) + 8.0 * (sy + 0.5 * su);
            const KernelFn k = KernelFn::sample(L, 1024, [&](double a, double b) {
                return kernel_value(pk, PhaseVec::Constant(1, a), PhaseVec::Constant(1, b));
            });
            const double hs = hs_norm(phi0, cfg.grid);
            check_le("state", "isometry (kernel side)", std::abs(k.hs_norm() - hs) / hs, 1e-6);
            check_le("state", "kernel trace", std::abs(k.trace() - 1.0), 1e-6);
        });
        if (cfg.state.params_1d) {
            check_ge("state", "gaussian1d parameter constraints", validate(*cfg.state.params_1d).empty() ? 1.0 : 0.0, 1.0);
        }
    }
    if (d <= 2) {
        guard("index", "numeric vs closed form", [&] {
            const IndexReport num = coherence_index(phi0, cfg.grid);
            const IndexReport cf = closed_form_index(cfg.state.moments);
            double worst = 0.0;
            for (auto [a, b] : {std::pair{num.C_X, cf.C_X}, std::pair{num.D_X, cf.D_X}, std::pair{num.C_K, cf.C_K},
                                std::pair{num.D_K, cf.D_K}}) {
                worst = std::max(worst, std::abs(a - b) / b);
            }
            check_le("index", "numeric vs closed form", worst, 1e-6);
            check_ge("index", "C_X D_K", num.cx_dk(), 0.5 - 1e-9);
            check_ge("index", "C_K D_X", num.ck_dx(), 0.5 - 1e-9);
        });
    }
    guard("noise", "generator residual", [&] {
        check_le("noise", "generator residual h=1e-4", generator_residual(phi0, n, 1e-4).max_residual, 1e-3);
    });
    double lmax = -std::numeric_limits<double>::infinity();
    for (const auto& z : panel) lmax = std::max(lmax, levy_exponent(n, z));
    check_le("noise", "max levy exponent on panel", lmax + 0.0, 0.0);
    if (!n.jump.is_empty()) {
        QuadratureOptions gl;
        gl.method = JumpIntegration::gauss_legendre;
        const double t = cfg.times.empty() ? 1.0 : std::max(cfg.times.back(), 1e-3);
        guard("noise", "jump integral exact vs gauss-legendre", [&] {
            double worst = 0.0;
            for (const auto& z : panel) {
                const double a = integrated_jump_exponent(n.jump, z, t);
                const double b = integrated_jump_exponent(n.jump, z, t, gl);
                worst = std::max(worst, std::abs(a - b) / std::max(1.0, std::abs(a)));
            }
            check_le("noise", "jump integral exact vs gauss-legendre", worst, 1e-8);
        });
        guard("noise", "quadratic bounds eps=0.1", [&] {
            check_ge("noise", "quadratic bounds delta eps=0.1", check_quadratic_bounds(n.jump, 0.1), 1e-12);
        });
    }
    for (double t : cfg.times) {
        const std::string tag = "t=" + nlohmann::json(t).dump();
        guard("evolution", tag, [&] {
            const CharFn phit = evolve(phi0, n, t);
            check_le("evolution", tag + " |phi(0) - 1|", std::abs(phit(PhaseVec::Zero(2 * d)) - 1.0), 1e-12);
            double excess = 0.0;
            double hs = 0.0;
            for (const auto& z : test_panel(phit.envelope(), d)) {
                excess = std::max(excess, std::abs(phit(z)) - std::abs(phi0(shear(z, t))));
                hs = std::max(hs, std::abs(phit(-z) - std::conj(phit(z))));
            }
            check_le("evolution", tag + " contraction excess", excess, 1e-12);
            check_le("evolution", tag + " hermitian symmetry", hs, 1e-12);
            if (d <= 2) {
                const auto [a, b] = uncertainty_products(phit, cfg.grid);
                check_ge("evolution", tag + " C_X D_K", a, 0.5 - 1e-9);
                check_ge("evolution", tag + " C_K D_X", b, 0.5 - 1e-9);
            }
        });
    }
    auto os = w.open("validation.csv");
    csv_header(os, "validation", d);
    os << "suite,check,value,threshold,pass\n";
    int failed = 0;
    for (const auto& c : checks) {
        os << c.suite << "," << c.name << "," << std::setprecision(17) << c.value << "," << std::setprecision(6)
           << c.threshold << "," << (c.pass ? "pass" : "FAIL") << "\n";
        failed += c.pass ? 0 : 1;
    }
    res.summary["checks"] = checks.size();
    res.summary["failed"] = failed;
    res.status = failed ? 2 : 0;
}

inline void run_index(const ExperimentConfig& cfg, Writer& w, RunResult& res) {
    const int d = cfg.dim();
    const CharFn phi0 = gaussian_charfn(cfg.state.moments);
    auto os = w.open("index.csv");
    csv_header(os, "index_series", d);
    os << "t,C_X,D_X,S_X,C_K,D_K,S_K,CxDk,CkDx,flag\n";
    std::vector<std::pair<double, double>> sx;
    int flagged = 0;
    for (double t : cfg.times) {
        try {
            const IndexReport r = coherence_index(evolve(phi0, cfg.noise, t), cfg.grid);
            os << t << "," << r.C_X << "," << r.D_X << "," << r.S_X << "," << r.C_K << "," << r.D_K << "," << r.S_K
               << "," << r.cx_dk() << "," << r.ck_dx() << ",\n";
            if (t > 0.0) sx.emplace_back(t, r.S_X);
        } catch (const Error& e) {
            os << t << ",,,,,,,,," << flag_text(e.what()) << "\n";
            ++flagged;
        }
    }
    res.summary["flagged_rows"] = flagged;
    if (sx.size() >= 4) {
        const PowerLawFit fit = powerlaw_fit(sx);
        res.summary["fit_S_X"] = {{"power", fit.power}, {"coefficient", fit.coefficient}, {"window", fit.window},
                                  {"max_relative_residual", fit.residual}};
    }
    res.status = flagged ? 2 : 0;
}

inline void run_evolve(const ExperimentConfig& cfg, Writer& w, RunResult& res) {
    const int d = cfg.dim();
    const CharFn phi0 = gaussian_charfn(cfg.state.moments);
    const int np = emitted_points(cfg.sample_points, d, 128, 32);
    nlohmann::json grids = nlohmann::json::array();
    for (size_t i = 0; i < cfg.times.size(); ++i) {
        const double t = cfg.times[i];
        const CharFn phit = evolve(phi0, cfg.noise, t);
        const PhaseGrid g = bounding_grid(*phit.envelope(), np, 8.0);
        std::ostringstream name;
        name << "evolve_" << std::setw(3) << std::setfill('0') << i << ".csv";
        auto os = w.open(name.str());
        os << "# t=" << std::setprecision(17) << t << "\n";
        write_charfn_csv(os, sample(phit, g));
        grids.push_back({{"t", t}, {"file", name.str()}, {"half_width", g.half_width}, {"count", g.count}});
    }
    res.summary["grids"] = grids;
}

inline void run_asymptotics(const ExperimentConfig& cfg, Writer& w, RunResult& res) {
    const int d = cfg.dim();
    const CharFn phi0 = gaussian_charfn(cfg.state.moments);
    const AsymptoticPrediction pred = classify_and_predict(cfg.noise, phi0, cfg.grid);
    auto os = w.open("asymptotics.csv");
    csv_header(os, "asymptotics", d);
    os << "# regime=" << to_string(pred.regime) << "\n# hypothesis_holds=" << (pred.hypothesis_holds ? 1 : 0) << "\n";
    os << "t,S_X,S_K,prediction,ratio,flag\n";
    std::vector<std::pair<double, double>> sx;
    int flagged = 0;
    for (double t : cfg.times) {
        try {
            const IndexReport r = coherence_index(evolve(phi0, cfg.noise, t), cfg.grid);
            os << t << "," << r.S_X << "," << r.S_K << "," << pred.at(t) << "," << r.S_X / pred.at(t) << ",\n";
            sx.emplace_back(t, r.S_X);
        } catch (const Error& e) {
            os << t << ",,," << pred.at(t) << ",," << flag_text(e.what()) << "\n";
            ++flagged;
        }
    }
    auto fos = w.open("asymptotics_fit.csv");
    csv_header(fos, "asymptotics_fit", d);
    fos << "quantity,predicted,fitted\n";
    res.summary["regime"] = to_string(pred.regime);
    res.summary["hypothesis_holds"] = pred.hypothesis_holds;
    res.summary["predicted"] = {{"power", pred.power}, {"coefficient", pred.coefficient},
                                {"error_order", pred.error_order}};
    res.summary["flagged_rows"] = flagged;
    if (sx.size() >= 4) {
        const PowerLawFit fit = powerlaw_fit(sx);
        fos << "power," << pred.power << "," << fit.power << "\n";
        fos << "coefficient," << pred.coefficient << "," << fit.coefficient << "\n";
        res.summary["fitted"] = {{"power", fit.power}, {"coefficient", fit.coefficient}, {"window", fit.window}};
    } else {
        fos << "power," << pred.power << ",\ncoefficient," << pred.coefficient << ",\n";
    }
    res.status = flagged ? 2 : 0;
}

inline void run_relaxation(const ExperimentConfig& cfg, Writer& w, RunResult& res) {
    const int d = cfg.dim();
    const CharFn phi0 = gaussian_charfn(cfg.state.moments);
    auto os = w.open("relaxation.csv");
    csv_header(os, "relaxation", d);
    os << "# distance=||Gamma_t(rho) - rho~_t||_2 / ||rho~_t||_2\n";
    os << "t,distance,flag\n";
    std::vector<double> dist;
    int flagged = 0;
    for (double t : cfg.times) {
        try {
            const double r = relaxation_distance(evolve(phi0, cfg.noise, t), cfg.noise, t, cfg.grid);
            os << t << "," << r << ",\n";
            dist.push_back(r);
        } catch (const Error& e) {
            os << t << ",," << flag_text(e.what()) << "\n";
            ++flagged;
        }
    }
    bool decreasing = flagged == 0;
    for (size_t i = 1; i < dist.size(); ++i) decreasing = decreasing && dist[i] < dist[i - 1];
    res.summary["strictly_decreasing"] = decreasing;
    res.summary["flagged_rows"] = flagged;
    res.status = flagged ? 2 : 0;
}

}  // namespace detail

// One classical-limit time point: MC panel, histogram and Wigner function.
struct ClassicalPoint {
    double t = 0.0;
    std::vector<PhaseVec> panel;
    std::vector<Estimate> empirical;
    std::vector<double> exact;
    double max_z = 0.0;
    PhaseDensity density;
    WignerFn wigner;
    double distance = 0.0;
};

inline ClassicalPoint classical_point(const NoiseSpec& n, const GaussianMoments& initial, double t, size_t paths,
                                      int steps, std::uint64_t seed, int threads, int density_points,
                                      double density_sigmas) {
    const int d = n.dim;
    SamplerOptions opt;
    opt.threads = threads;
    const PathEnsemble ens = sample_paths(n, t, paths, steps, seed, opt);
    const CharFn phit = evolve(gaussian_charfn(initial), n, t);
    ClassicalPoint cp;
    cp.t = t;
    cp.panel = test_panel(phit.envelope(), d);
    for (const auto& z : cp.panel) {
        const Estimate e = empirical_charfn(ens, z);
        const double exact = std::exp(integrated_exponent(n, z, t));
        cp.empirical.push_back(e);
        cp.exact.push_back(exact);
        const double dev = std::abs(e.value - exact);
        if (dev > 0.0) cp.max_z = std::max(cp.max_z, e.std_error > 0.0 ? dev / e.std_error : HUGE_VAL);
    }
    const PhaseGrid dens = density_grid_for(*phit.envelope(), density_points, density_sigmas);
    cp.wigner = charfn_to_wigner(sample(phit, conjugate_grid(dens)));
    cp.density = classical_density(ens, cp.wigner.grid);
    cp.distance = wigner_classical_distance(cp.wigner, cp.density);
    return cp;
}

inline std::uint64_t classical_seed(std::uint64_t master, size_t time_index) {
    return splitmix64(master ^ (0x7157ULL + time_index));
}

namespace detail {

inline void run_classical(const ExperimentConfig& cfg, Writer& w, RunResult& res) {
    const int d = cfg.dim();
    const int np = emitted_points(cfg.density_points, d, 64, 16);
    auto panel = w.open("classical_panel.csv");
    csv_header(panel, "classical_panel", d);
    panel << "# z=|empirical - exact| / stderr\n";
    panel << "t,point";
    for (int i = 0; i < d; ++i) panel << ",q" << i + 1;
    for (int i = 0; i < d; ++i) panel << ",p" << i + 1;
    panel << ",empirical_re,empirical_im,exact,stderr,z\n";
    auto dist = w.open("classical_distance.csv");
    csv_header(dist, "classical_distance", d);
    dist << "# distance=||W_t - p_t||_L2 / ||p_t||_L2\n";
    dist << "t,seed,distance,panel_max_z,flag\n";
    nlohmann::json seeds = nlohmann::json::array();
    int failed = 0;
    std::vector<double> series;
    for (size_t i = 0; i < cfg.times.size(); ++i) {
        const double t = cfg.times[i];
        const std::uint64_t seed = classical_seed(cfg.seed, i);
        seeds.push_back(seed);
        try {
            const ClassicalPoint cp = classical_point(cfg.noise, cfg.state.moments, t, cfg.mc_n, cfg.mc_steps, seed,
                                                      cfg.threads, np, cfg.density_sigmas);
            for (size_t j = 0; j < cp.panel.size(); ++j) {
                const Estimate& e = cp.empirical[j];
                const double z = e.std_error > 0.0 ? std::abs(e.value - cp.exact[j]) / e.std_error : 0.0;
                panel << t << "," << j;
                for (int a = 0; a < 2 * d; ++a) panel << "," << cp.panel[j][a];
                panel << "," << e.value.real() << "," << e.value.imag() << "," << cp.exact[j] << "," << e.std_error
                      << "," << z << "\n";
            }
            std::ostringstream wn;
            std::ostringstream pn;
            wn << "classical_wigner_" << std::setw(3) << std::setfill('0') << i << ".csv";
            pn << "classical_density_" << std::setw(3) << std::setfill('0') << i << ".csv";
            auto wo = w.open(wn.str());
            wo << "# t=" << std::setprecision(17) << t << "\n";
            write_density_csv(wo, cp.wigner, "wigner");
            auto po = w.open(pn.str());
            po << "# t=" << std::setprecision(17) << t << "\n# paths=" << cfg.mc_n << "\n# seed=" << seed << "\n";
            write_density_csv(po, cp.density, "classical_histogram");
            const bool ok = cp.max_z <= 3.0;
            dist << t << "," << seed << "," << cp.distance << "," << cp.max_z << "," << (ok ? "" : "panel beyond 3 stderr")
                 << "\n";
            failed += ok ? 0 : 1;
            series.push_back(cp.distance);
        } catch (const Error& e) {
            dist << t << "," << seed << ",,," << flag_text(e.what()) << "\n";
            ++failed;
        }
    }
    bool decreasing = failed == 0;
    for (size_t i = 1; i < series.size(); ++i) decreasing = decreasing && series[i] < series[i - 1];
    res.summary["seeds"] = seeds;
    res.summary["strictly_decreasing"] = decreasing;
    res.summary["failed_times"] = failed;
    res.status = failed ? 2 : 0;
}

inline nlohmann::json noise_json(const ExperimentConfig& cfg) {
    const NoiseSpec& n = cfg.noise;
    nlohmann::json atoms = nlohmann::json::array();
    if (!n.jump.has_density()) {
        for (const auto& a : n.jump.pairs()) atoms.push_back({{"point", to_json(a.point)}, {"weight", a.weight}});
    }
    return {{"dim", n.dim},
            {"A", to_json(n.A)},
            {"source", cfg.noise_source},
            {"jump_kind", to_string(n.jump.kind())},
            {"jump_pairs", n.jump.pairs().size()},
            {"atoms", atoms},
            {"second_moments", to_json(second_moment_matrix(n.jump))}};
}

}  // namespace detail

// Runs one experiment and writes its CSVs plus manifest.json into cfg.out_dir.
inline RunResult run(const ExperimentConfig& cfg, ExperimentKind kind) {
    if (cfg.kind && *cfg.kind != kind) {
        throw ConfigError("[experiment] kind: config says " + std::string(to_string(*cfg.kind)) + " but " +
                          to_string(kind) + " was requested");
    }
    check_for_kind(cfg, kind);
    const std::filesystem::path dir(cfg.out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ConfigError("[output] dir: cannot create '" + cfg.out_dir + "': " + ec.message());
    RunResult res;
    detail::Writer w(dir, res);
    switch (kind) {
        case ExperimentKind::validate: detail::run_validate(cfg, w, res); break;
        case ExperimentKind::index_series: detail::run_index(cfg, w, res); break;
        case ExperimentKind::evolve: detail::run_evolve(cfg, w, res); break;
        case ExperimentKind::asymptotics: detail::run_asymptotics(cfg, w, res); break;
        case ExperimentKind::relaxation: detail::run_relaxation(cfg, w, res); break;
        case ExperimentKind::classical: detail::run_classical(cfg, w, res); break;
    }
    const int d = cfg.dim();
    nlohmann::json m;
    m["tool"] = "decoh";
    m["version"] = kToolVersion;
    m["kind"] = to_string(kind);
    m["config"] = cfg.source;
    m["conventions"] = {{"weyl", kWeylConvention}, {"measure", kMeasureConvention}, {"block_pairing", kBlockConvention},
                        {"units", "hbar=1, H_free=|K|^2, free shear q -> q + t p"}};
    m["noise"] = detail::noise_json(cfg);
    m["state"] = {{"family", cfg.state.family},
                  {"sigma", detail::to_json(cfg.state.moments.sigma)},
                  {"mean", detail::to_json(cfg.state.moments.mean)}};
    m["times"] = cfg.times;
    m["grid"] = {{"points_per_axis", cfg.grid.points_per_axis > 0 ? cfg.grid.points_per_axis : default_points(std::min(d, 2))},
                 {"half_width", cfg.grid.half_width},
                 {"max_doublings", cfg.grid.max_doublings},
                 {"boundary_tol", cfg.grid.boundary_tol},
                 {"sample_points", detail::emitted_points(cfg.sample_points, d, 128, 32)},
                 {"density_points", detail::emitted_points(cfg.density_points, d, 64, 16)},
                 {"density_sigmas", cfg.density_sigmas}};
    m["mc"] = {{"n", cfg.mc_n}, {"steps", cfg.mc_steps}, {"seed", cfg.seed}, {"threads", cfg.threads},
               {"integral_rule", "trapezoid on the step lattice"}};
    m["panel"] = {{"count", 20}, {"seed", 20240611}, {"radius", 1.5}};
    m["summary"] = res.summary;
    m["status"] = res.status;
    std::vector<std::string> outputs = res.outputs;
    m["outputs"] = outputs;
    std::ofstream os(dir / "manifest.json");
    if (!os) throw ConfigError("[output] dir: cannot write manifest.json");
    os << m.dump(2) << "\n";
    res.outputs.push_back("manifest.json");
    return res;
}

}  // namespace decoh
