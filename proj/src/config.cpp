#include "dh/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "dh/errors.hpp"
#include "dh/rng.hpp"

extern char** environ;

namespace dh {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_list(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ", ";
        s += fmt_double(v[i]);
    }
    return s;
}

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

/// Where a value came from, for error messages.
struct Origin {
    int line = 0;
    int column = 0;
    std::string label;
};

[[noreturn]] void bad_value(const Origin& o, const std::string& msg) {
    if (o.line > 0) throw ParseError(msg, o.line, o.column);
    throw ValidationError(o.label + ": " + msg);
}

double to_double(const std::string& s, const Origin& o) {
    const std::string t = trim(s);
    char* end = nullptr;
    double v = std::strtod(t.c_str(), &end);
    if (t.empty() || *end != '\0' || !std::isfinite(v)) bad_value(o, "expected a number, got '" + t + "'");
    return v;
}

long long to_int(const std::string& s, const Origin& o) {
    const std::string t = trim(s);
    char* end = nullptr;
    long long v = std::strtoll(t.c_str(), &end, 10);
    if (t.empty() || *end != '\0') bad_value(o, "expected an integer, got '" + t + "'");
    return v;
}

std::uint64_t to_u64(const std::string& s, const Origin& o) {
    const std::string t = trim(s);
    char* end = nullptr;
    if (t.empty() || t[0] == '-') bad_value(o, "expected a non-negative integer, got '" + t + "'");
    unsigned long long v = std::strtoull(t.c_str(), &end, 10);
    if (*end != '\0') bad_value(o, "expected a non-negative integer, got '" + t + "'");
    return v;
}

std::vector<double> to_list(const std::string& s, const Origin& o) {
    std::vector<double> out;
    const std::string t = trim(s);
    if (t.empty()) return out;
    std::stringstream ss(t);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_double(item, o));
    return out;
}

using Setter = std::function<void(RunConfig&, const std::string&, const Origin&)>;

struct KeySpec {
    std::string section;
    std::string key;
    Setter set;
    std::function<std::string(const RunConfig&)> get;
};

#define NUM(sec, name, field)                                                                        \
    KeySpec{sec, name, [](RunConfig& c, const std::string& v, const Origin& o) { c.field = to_double(v, o); }, \
            [](const RunConfig& c) { return fmt_double(c.field); }}
#define INT(sec, name, field)                                                                                     \
    KeySpec{sec, name,                                                                                            \
            [](RunConfig& c, const std::string& v, const Origin& o) { c.field = static_cast<int>(to_int(v, o)); }, \
            [](const RunConfig& c) { return std::to_string(c.field); }}
#define LIST(sec, name, field)                                                                                   \
    KeySpec{sec, name, [](RunConfig& c, const std::string& v, const Origin& o) { c.field = to_list(v, o); }, \
            [](const RunConfig& c) { return fmt_list(c.field); }}
#define STR(sec, name, field)                                                                                 \
    KeySpec{sec, name, [](RunConfig& c, const std::string& v, const Origin&) { c.field = trim(v); }, \
            [](const RunConfig& c) { return c.field; }}

const std::vector<KeySpec>& keys() {
    static const std::vector<KeySpec> k = {
        INT("grid", "d", exp.grid.d),
        INT("grid", "n_x", exp.grid.n_x),
        INT("grid", "n_t", exp.grid.n_t),
        NUM("grid", "L", exp.grid.L),
        NUM("grid", "T_env", exp.grid.T_env),
        NUM("params", "ell_x", exp.params.ell_x),
        NUM("params", "ell_t", exp.params.ell_t),
        NUM("params", "beta_decay", exp.params.beta_decay),
        NUM("params", "sigma_s", exp.params.sigma_s),
        NUM("params", "sigma_a", exp.params.sigma_a),
        NUM("params", "lambda", exp.params.lambda),
        NUM("params", "upper_lambda", exp.params.Lambda),
        KeySpec{"bbar", "model",
                [](RunConfig& c, const std::string& v, const Origin& o) {
                    try {
                        c.exp.bbar.model = parse_bbar_model(trim(v));
                    } catch (const Error& e) {
                        bad_value(o, e.what());
                    }
                },
                [](const RunConfig& c) { return to_string(c.exp.bbar.model); }},
        NUM("bbar", "amplitude", exp.bbar.amplitude),
        NUM("bbar", "period", exp.bbar.period),
        NUM("bbar", "tau", exp.bbar.tau),
        KeySpec{"experiment", "env_kind",
                [](RunConfig& c, const std::string& v, const Origin& o) {
                    try {
                        c.exp.env_kind = parse_env_kind(trim(v));
                    } catch (const Error& e) {
                        bad_value(o, e.what());
                    }
                },
                [](const RunConfig& c) { return to_string(c.exp.env_kind); }},
        INT("experiment", "m_x", exp.domain.m_x),
        NUM("experiment", "L_sim", exp.domain.L_sim),
        NUM("experiment", "T", exp.T),
        NUM("experiment", "dt", exp.dt),
        INT("experiment", "n_snapshots", exp.n_snapshots),
        STR("experiment", "data_preset", exp.data.name),
        NUM("experiment", "data_amplitude", exp.data.amplitude),
        NUM("experiment", "data_width", exp.data.width),
        NUM("experiment", "data_radius", exp.data.radius),
        NUM("experiment", "source_amplitude", exp.data.source_amplitude),
        LIST("experiment", "eps_list", exp.eps_list),
        INT("experiment", "ensemble", exp.ensemble),
        KeySpec{"experiment", "seed",
                [](RunConfig& c, const std::string& v, const Origin& o) { c.exp.seed = to_u64(v, o); },
                [](const RunConfig& c) { return std::to_string(c.exp.seed); }},
        LIST("experiment", "delta_list", exp.delta_list),
        NUM("experiment", "gmres_tol", exp.gmres_tol),
        KeySpec{"experiment", "drift_source",
                [](RunConfig& c, const std::string& v, const Origin& o) {
                    try {
                        c.exp.drift_source = parse_drift_source(trim(v));
                    } catch (const Error& e) {
                        bad_value(o, e.what());
                    }
                },
                [](const RunConfig& c) { return to_string(c.exp.drift_source); }},
        NUM("experiment", "series_dt", exp.series_dt),
        INT("experiment", "permutations", exp.permutations),
        INT("experiment", "workers", exp.workers),
        NUM("experiment", "delta", delta),
        LIST("experiment", "direction", direction),
        STR("experiment", "formulation", formulation),
        INT("experiment", "paths", paths),
        INT("experiment", "lag_max", lag_max),
        INT("experiment", "horizon", horizon),
        NUM("experiment", "stream_alpha", stream_alpha),
        LIST("experiment", "a_bar", a_bar),
        LIST("experiment", "sigma", sigma),
        STR("experiment", "env_file", env_file),
    };
    return k;
}

#undef NUM
#undef INT
#undef LIST
#undef STR

const KeySpec* find_key(const std::string& section, const std::string& key) {
    for (const auto& k : keys())
        if (k.section == section && k.key == key) return &k;
    return nullptr;
}

std::string upper(std::string s) {
    for (auto& ch : s) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    return s;
}

}  // namespace

bool RunConfig::operator==(const RunConfig& o) const { return serialize_config(*this) == serialize_config(o); }

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    cfg.exp.domain.d = cfg.exp.grid.d;
    std::istringstream in(text);
    std::string raw, section;
    int line_no = 0;
    std::map<std::string, int> seen;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = raw;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::size_t cut = line.find_first_of("#;");
        std::string body = cut == std::string::npos ? line : line.substr(0, cut);
        std::size_t first = body.find_first_not_of(" \t");
        if (first == std::string::npos) continue;
        const int col = static_cast<int>(first) + 1;
        if (body[first] == '[') {
            std::size_t close = body.find(']', first);
            if (close == std::string::npos) throw ParseError("unterminated section header", line_no, col);
            if (!trim(body.substr(close + 1)).empty())
                throw ParseError("unexpected text after section header", line_no, static_cast<int>(close) + 2);
            section = trim(body.substr(first + 1, close - first - 1));
            if (section != "grid" && section != "params" && section != "bbar" && section != "experiment")
                throw ParseError("unknown section [" + section + "]", line_no, col + 1);
            continue;
        }
        std::size_t eq = body.find('=');
        if (eq == std::string::npos) throw ParseError("expected 'key = value'", line_no, col);
        if (section.empty()) throw ParseError("key outside of any section", line_no, col);
        const std::string key = trim(body.substr(first, eq - first));
        if (key.empty()) throw ParseError("empty key", line_no, col);
        const KeySpec* spec = find_key(section, key);
        if (!spec) throw ParseError("unknown key '" + key + "' in [" + section + "]", line_no, col);
        const std::string full = section + "." + key;
        if (seen.count(full)) throw ParseError("duplicate key '" + key + "' (first on line " + std::to_string(seen[full]) + ")", line_no, col);
        seen[full] = line_no;
        std::size_t vstart = body.find_first_not_of(" \t", eq + 1);
        Origin o{line_no, vstart == std::string::npos ? static_cast<int>(eq) + 2 : static_cast<int>(vstart) + 1, full};
        spec->set(cfg, body.substr(eq + 1), o);
    }
    cfg.exp.domain.d = cfg.exp.grid.d;
    return cfg;
}

RunConfig parse_config(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str());
}

void apply_env_overrides(RunConfig& cfg, const std::map<std::string, std::string>& env) {
    for (const auto& [name, value] : env) {
        if (name.rfind("DH_", 0) != 0) continue;
        if (name == "DH_SEED" || name == "DH_WORKERS" || name == "DH_EPS" || name == "DH_CLI_PATH") continue;
        const KeySpec* hit = nullptr;
        for (const auto& k : keys())
            if ("DH_" + upper(k.section) + "_" + upper(k.key) == name) hit = &k;
        if (!hit) throw ValidationError("unknown override variable " + name);
        hit->set(cfg, value, Origin{0, 0, name});
    }
    cfg.exp.domain.d = cfg.exp.grid.d;
}

std::map<std::string, std::string> dh_environment() {
    std::map<std::string, std::string> out;
    for (char** e = environ; e && *e; ++e) {
        std::string kv(*e);
        if (kv.rfind("DH_", 0) != 0) continue;
        std::size_t eq = kv.find('=');
        if (eq == std::string::npos) continue;
        out[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    return out;
}

std::string serialize_config(const RunConfig& cfg) {
    std::string out, section;
    for (const auto& k : keys()) {
        if (k.section != section) {
            if (!section.empty()) out += "\n";
            section = k.section;
            out += "[" + section + "]\n";
        }
        out += k.key + " = " + k.get(cfg) + "\n";
    }
    return out;
}

std::string config_hash(const RunConfig& cfg) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(serialize_config(cfg))));
    return buf;
}

void validate_config(const RunConfig& cfg) {
    cfg.exp.validate();
    const int d = cfg.exp.grid.d;
    if (!(cfg.delta > 0.0)) throw ValidationError("delta must be positive");
    if (!cfg.direction.empty() && static_cast<int>(cfg.direction.size()) != d)
        throw ValidationError("direction must have d entries");
    if (cfg.formulation != "direct" && cfg.formulation != "transported")
        throw ValidationError("formulation must be direct or transported");
    if (cfg.paths < 1) throw ValidationError("paths must be >= 1");
    if (cfg.lag_max < 1 || cfg.lag_max >= cfg.horizon) throw ValidationError("need 1 <= lag_max < horizon");
    if (cfg.stream_alpha < 0.0 || cfg.stream_alpha >= 1.0) throw ValidationError("stream_alpha must lie in [0, 1)");
    if (!cfg.a_bar.empty() && static_cast<int>(cfg.a_bar.size()) != d * d) throw ValidationError("a_bar must have d*d entries");
    if (!cfg.sigma.empty() && static_cast<int>(cfg.sigma.size()) != d * d) throw ValidationError("sigma must have d*d entries");
}

}  // namespace dh
