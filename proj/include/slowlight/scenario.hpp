#pragma once

// Declarative scenario runner behind the `slowlight` command line tool.
//
// A scenario is a JSON document validated strictly (unknown keys are errors,
// reported with their key path). Results are written as CSV tables with 12
// significant digits plus a manifest.json holding the fully resolved config,
// which can itself be fed back in as a config. Wall time goes to timing.json so
// that every other file is byte-identical across repeated runs.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <limits>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "band.hpp"
#include "dynamics.hpp"
#include "emission.hpp"
#include "platforms.hpp"
#include "spectral.hpp"

#ifndef SLOWLIGHT_VERSION
#define SLOWLIGHT_VERSION "unknown"
#endif

namespace slowlight::scenario {

using json = nlohmann::ordered_json;

class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& path, const std::string& msg)
        : std::runtime_error(path + ": " + msg), path_(path)
    {
    }
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

inline const std::vector<std::string>& scenario_kinds()
{
    static const std::vector<std::string> k{"emit",       "transfer", "directionality-map", "validity-map", "boundstates",
                                            "cubic",      "disorder-ensemble", "fiber",   "cpw"};
    return k;
}

// ---------------------------------------------------------------------------
// Strict JSON access with key paths

class Node {
public:
    Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {}

    const std::string& path() const { return path_; }
    const json& raw() const { return j_; }
    bool has(const std::string& key) const { return j_.contains(key); }

    void expect_object() const
    {
        if (!j_.is_object()) throw ConfigError(path_, "expected an object");
    }

    void allow(std::initializer_list<const char*> keys) const
    {
        expect_object();
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            bool ok = false;
            for (const char* k : keys) ok = ok || it.key() == k;
            if (!ok) throw ConfigError(path_ + "." + it.key(), "unknown key");
        }
    }

    Node child(const std::string& key) const
    {
        expect_object();
        if (!j_.contains(key)) throw ConfigError(path_ + "." + key, "missing required key");
        return Node(j_.at(key), path_ + "." + key);
    }

    Node at(std::size_t i) const { return Node(j_.at(i), path_ + "[" + std::to_string(i) + "]"); }

    double number() const
    {
        if (!j_.is_number()) throw ConfigError(path_, "expected a number");
        const double x = j_.get<double>();
        if (!std::isfinite(x)) throw ConfigError(path_, "expected a finite number");
        return x;
    }
    double number(const std::string& key) const { return child(key).number(); }
    double number(const std::string& key, double fallback) const
    {
        return has(key) ? child(key).number() : fallback;
    }

    long integer() const
    {
        if (!j_.is_number_integer()) throw ConfigError(path_, "expected an integer");
        return j_.get<long>();
    }
    long integer(const std::string& key, long fallback) const { return has(key) ? child(key).integer() : fallback; }

    bool boolean(const std::string& key, bool fallback) const
    {
        if (!has(key)) return fallback;
        const auto& v = j_.at(key);
        if (!v.is_boolean()) throw ConfigError(path_ + "." + key, "expected true or false");
        return v.get<bool>();
    }

    std::string string(const std::string& key) const
    {
        const auto c = child(key);
        if (!c.j_.is_string()) throw ConfigError(c.path_, "expected a string");
        return c.j_.get<std::string>();
    }

    std::size_t array_size() const
    {
        if (!j_.is_array()) throw ConfigError(path_, "expected an array");
        return j_.size();
    }

private:
    const json& j_;
    std::string path_;
};

/// Parameter axis: a number, an explicit array, or {"min", "max", "n"} (inclusive, uniform).
inline std::vector<double> parse_axis(const Node& n)
{
    const auto& j = n.raw();
    if (j.is_number()) return {n.number()};
    if (j.is_array()) {
        std::vector<double> out;
        for (std::size_t i = 0; i < n.array_size(); ++i) out.push_back(n.at(i).number());
        if (out.empty()) throw ConfigError(n.path(), "axis must not be empty");
        return out;
    }
    n.allow({"min", "max", "n"});
    const double lo = n.number("min"), hi = n.number("max");
    const long cnt = n.child("n").integer();
    if (cnt < 1) throw ConfigError(n.path() + ".n", "must be >= 1");
    if (cnt > 1 && !(hi > lo)) throw ConfigError(n.path(), "max must exceed min");
    std::vector<double> out;
    for (long i = 0; i < cnt; ++i) out.push_back(cnt == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / (cnt - 1));
    return out;
}

// ---------------------------------------------------------------------------
// Resolved configuration

struct MapSpec {
    std::vector<double> delta;
    std::vector<double> v;
    double gamma_p = 0.01; // broadening for the directionality map, units of J
    double t_f = 50.0;     // validity map comparison window
};

struct BoundSpec {
    std::vector<double> delta;
    std::vector<double> v;
    double gbar = 0.2;
    int oracle_sites = 0; // 0 disables the diagonalization oracle
};

struct CubicSpec {
    CubicModelParams params;
    double t_max = 100.0;
    double dt = 0.1;
};

struct FiberSpec {
    si::FiberParams base;     // deltaR and a are taken from the axes
    std::vector<double> a;    // m
    std::vector<double> ratio; // deltaR / R0
};

struct CpwSpec {
    si::CPWParams base;
    std::vector<double> y_a;
    double J = 0.0; // rad/s; enables the Gamma_c column when > 0
};

struct Config {
    std::string scenario;
    BandParams band;
    std::vector<AtomSpec> atoms;
    CouplingSpec coupling = EffectiveCoupling{0.2};
    std::optional<int> n_sites; // unset = light-cone auto size
    RunSettings run;
    std::optional<DisorderSpec> disorder;
    MapSpec map;
    BoundSpec bound;
    CubicSpec cubic;
    FiberSpec fiber;
    CpwSpec cpw;
};

namespace detail {

inline BandParams parse_band(const Node& root)
{
    BandParams b;
    if (!root.has("band")) return b;
    const auto n = root.child("band");
    n.allow({"J", "a", "gamma_p"});
    b.J = n.number("J", 1.0);
    b.a = n.number("a", 1.0);
    b.gamma_p = n.number("gamma_p", 0.0);
    try {
        b.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(n.path(), e.what());
    }
    return b;
}

inline std::vector<AtomSpec> parse_atoms(const Node& root)
{
    const auto n = root.child("atoms");
    const std::size_t cnt = n.array_size();
    if (cnt == 0) throw ConfigError(n.path(), "at least one atom is required");
    std::vector<AtomSpec> out;
    for (std::size_t i = 0; i < cnt; ++i) {
        const auto a = n.at(i);
        a.allow({"delta", "z", "v", "gamma_a", "excited"});
        AtomSpec s;
        s.delta = a.number("delta", 0.0);
        s.z_init = a.number("z", 0.0);
        s.v = a.number("v", 0.0);
        s.gamma_a = a.number("gamma_a", 0.0);
        if (s.gamma_a < 0.0) throw ConfigError(a.path() + ".gamma_a", "must be >= 0");
        const bool excited = a.boolean("excited", i == 0);
        s.initial_amplitude = excited ? 1.0 : 0.0;
        out.push_back(s);
    }
    bool any = false;
    for (const auto& s : out) any = any || std::norm(s.initial_amplitude) > 0.0;
    if (!any) throw ConfigError(n.path(), "no atom is initially excited");
    double norm = 0.0;
    for (const auto& s : out) norm += std::norm(s.initial_amplitude);
    for (auto& s : out) s.initial_amplitude /= std::sqrt(norm);
    return out;
}

inline CouplingSpec parse_coupling(const Node& root, double a)
{
    const auto n = root.child("coupling");
    const std::string model = n.string("model");
    if (model == "effective") {
        n.allow({"model", "gbar"});
        const double g = n.number("gbar");
        if (g < 0.0) throw ConfigError(n.path() + ".gbar", "must be >= 0");
        return EffectiveCoupling{g};
    }
    if (model == "full") {
        n.allow({"model", "g", "z0"});
        FullCoupling c{n.number("g"), n.number("z0", 0.1)};
        try {
            c.validate(a);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(n.path(), e.what());
        }
        return c;
    }
    throw ConfigError(n.path() + ".model", "expected \"effective\" or \"full\", got \"" + model + "\"");
}

inline std::optional<int> parse_grid(const Node& root)
{
    if (!root.has("grid")) return std::nullopt;
    const auto n = root.child("grid");
    n.allow({"n_sites"});
    if (!n.has("n_sites")) return std::nullopt;
    const auto c = n.child("n_sites");
    if (c.raw().is_string() && c.raw().get<std::string>() == "auto") return std::nullopt;
    const long v = c.integer();
    if (v < 2 || v % 2 != 0) throw ConfigError(c.path(), "must be an even integer >= 2");
    return static_cast<int>(v);
}

inline RunSettings parse_run(const Node& root, bool t_max_required, double t_max_default)
{
    RunSettings r;
    r.t_max = t_max_default;
    if (!root.has("run")) {
        if (t_max_required) throw ConfigError(root.path() + ".run", "missing required key");
        return r;
    }
    const auto n = root.child("run");
    n.allow({"t_max", "dt", "record_every", "snapshots"});
    r.t_max = t_max_required ? n.number("t_max") : n.number("t_max", t_max_default);
    if (!(r.t_max > 0.0)) throw ConfigError(n.path() + ".t_max", "must be > 0");
    r.dt = n.number("dt", 0.01);
    if (!(r.dt > 0.0)) throw ConfigError(n.path() + ".dt", "must be > 0");
    r.record_every = static_cast<int>(n.integer("record_every", 10));
    if (r.record_every < 1) throw ConfigError(n.path() + ".record_every", "must be >= 1");
    if (n.has("snapshots")) {
        const auto s = n.child("snapshots");
        for (std::size_t i = 0; i < s.array_size(); ++i) {
            const double t = s.at(i).number();
            if (t < 0.0 || t > r.t_max) throw ConfigError(s.at(i).path(), "snapshot time outside [0, t_max]");
            r.snapshot_times.push_back(t);
        }
    }
    return r;
}

inline DisorderSpec parse_disorder(const Node& root)
{
    const auto n = root.child("disorder");
    n.allow({"epsilon", "seed", "realizations"});
    DisorderSpec d;
    d.epsilon = n.number("epsilon");
    if (d.epsilon < 0.0) throw ConfigError(n.path() + ".epsilon", "must be >= 0");
    const long seed = n.integer("seed", 0);
    if (seed < 0) throw ConfigError(n.path() + ".seed", "must be >= 0");
    d.seed = static_cast<std::uint64_t>(seed);
    d.n_realizations = static_cast<int>(n.integer("realizations", 1));
    if (d.n_realizations < 1) throw ConfigError(n.path() + ".realizations", "must be >= 1");
    return d;
}

inline void allow_sections(const Node& root, std::initializer_list<const char*> sections)
{
    for (auto it = root.raw().begin(); it != root.raw().end(); ++it) {
        if (it.key() == "scenario") continue;
        bool ok = false;
        for (const char* s : sections) ok = ok || it.key() == s;
        if (!ok) throw ConfigError(root.path() + "." + it.key(), "unknown key for this scenario");
    }
}

} // namespace detail

/// Validates and resolves a config document for `scenario`. A manifest written by
/// a previous run (top-level "config" object) is accepted as well.
inline Config parse_config(const json& doc, const std::string& scenario)
{
    const json& body = (doc.is_object() && doc.contains("config") && doc.contains("manifest_version"))
                           ? doc.at("config")
                           : doc;
    const Node root(body, "config");
    root.expect_object();
    if (std::find(scenario_kinds().begin(), scenario_kinds().end(), scenario) == scenario_kinds().end())
        throw ConfigError("scenario", "unknown scenario \"" + scenario + "\"");
    if (root.has("scenario") && root.string("scenario") != scenario)
        throw ConfigError("config.scenario",
                          "config is for \"" + root.string("scenario") + "\" but \"" + scenario + "\" was requested");

    Config c;
    c.scenario = scenario;
    using namespace detail;
    if (scenario == "emit" || scenario == "transfer" || scenario == "disorder-ensemble") {
        allow_sections(root, {"band", "atoms", "coupling", "grid", "run", "disorder"});
        c.band = parse_band(root);
        c.atoms = parse_atoms(root);
        if (scenario == "transfer" && c.atoms.size() < 2)
            throw ConfigError("config.atoms", "transfer needs at least two atoms");
        c.coupling = parse_coupling(root, c.band.a);
        c.n_sites = parse_grid(root);
        c.run = parse_run(root, true, 0.0);
        if (scenario == "disorder-ensemble" || root.has("disorder")) c.disorder = parse_disorder(root);
        if (scenario == "emit" && c.disorder && c.disorder->n_realizations != 1)
            throw ConfigError("config.disorder.realizations", "emit runs a single realization");
    } else if (scenario == "directionality-map") {
        allow_sections(root, {"band", "coupling", "map"});
        c.band = parse_band(root);
        c.coupling = parse_coupling(root, c.band.a);
        const auto m = root.child("map");
        m.allow({"delta", "v", "gamma_p"});
        c.map.delta = parse_axis(m.child("delta"));
        c.map.v = parse_axis(m.child("v"));
        c.map.gamma_p = m.number("gamma_p", 0.01 * c.band.J);
        if (!(c.map.gamma_p > 0.0)) throw ConfigError(m.path() + ".gamma_p", "must be > 0");
    } else if (scenario == "validity-map") {
        allow_sections(root, {"band", "coupling", "map", "run", "grid"});
        c.band = parse_band(root);
        c.coupling = parse_coupling(root, c.band.a);
        if (!std::holds_alternative<FullCoupling>(c.coupling))
            throw ConfigError("config.coupling.model", "validity-map compares against the full model; use \"full\"");
        const auto m = root.child("map");
        m.allow({"delta", "v", "t_f"});
        c.map.delta = parse_axis(m.child("delta"));
        c.map.v = parse_axis(m.child("v"));
        c.map.t_f = m.number("t_f", 50.0);
        if (!(c.map.t_f > 0.0)) throw ConfigError(m.path() + ".t_f", "must be > 0");
        c.n_sites = parse_grid(root);
        c.run = parse_run(root, false, c.map.t_f);
        if (c.run.t_max < c.map.t_f) throw ConfigError("config.run.t_max", "must be >= map.t_f");
    } else if (scenario == "boundstates") {
        allow_sections(root, {"band", "bound"});
        c.band = parse_band(root);
        const auto b = root.child("bound");
        b.allow({"delta", "v", "gbar", "oracle_sites"});
        c.bound.delta = parse_axis(b.child("delta"));
        c.bound.v = parse_axis(b.child("v"));
        c.bound.gbar = b.number("gbar");
        if (!(c.bound.gbar > 0.0)) throw ConfigError(b.path() + ".gbar", "must be > 0");
        const long os = b.integer("oracle_sites", 0);
        if (os != 0 && (os < 2 || os % 2 != 0 || os > 8192))
            throw ConfigError(b.path() + ".oracle_sites", "must be 0 or an even integer in [2, 8192]");
        c.bound.oracle_sites = static_cast<int>(os);
    } else if (scenario == "cubic") {
        allow_sections(root, {"cubic"});
        const auto n = root.child("cubic");
        n.allow({"J", "a", "gbar", "delta", "t_max", "dt"});
        auto& p = c.cubic.params;
        p.J = n.number("J", 1.0);
        p.a = n.number("a", 1.0);
        p.gbar = n.number("gbar");
        p.delta = n.number("delta", 0.0);
        try {
            p.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(n.path(), e.what());
        }
        c.cubic.t_max = n.number("t_max");
        c.cubic.dt = n.number("dt", 0.1);
        if (!(c.cubic.t_max > 0.0)) throw ConfigError(n.path() + ".t_max", "must be > 0");
        if (!(c.cubic.dt > 0.0)) throw ConfigError(n.path() + ".dt", "must be > 0");
    } else if (scenario == "fiber") {
        allow_sections(root, {"fiber"});
        const auto n = root.child("fiber");
        n.allow({"R0", "n", "omega_e", "a", "deltaR_over_R0"});
        auto& f = c.fiber;
        f.base.R0 = n.number("R0");
        f.base.n = n.number("n");
        f.base.omega_e = n.number("omega_e");
        f.a = parse_axis(n.child("a"));
        f.ratio = parse_axis(n.child("deltaR_over_R0"));
        f.base.a = f.a.front();
        try {
            f.base.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(n.path(), e.what());
        }
        for (double x : f.a)
            if (!(x > 0.0)) throw ConfigError(n.path() + ".a", "values must be > 0");
        for (double x : f.ratio)
            if (!(x >= 0.0)) throw ConfigError(n.path() + ".deltaR_over_R0", "values must be >= 0");
    } else if (scenario == "cpw") {
        allow_sections(root, {"cpw"});
        const auto n = root.child("cpw");
        n.allow({"l1", "l2", "Lx", "omega0", "dipole", "a", "h", "y_a", "J"});
        auto& p = c.cpw.base;
        p.l1 = n.number("l1");
        p.l2 = n.number("l2");
        p.Lx = n.number("Lx");
        p.omega0 = n.number("omega0");
        p.dipole = n.number("dipole");
        p.a = n.number("a");
        p.h = n.number("h", 0.0);
        c.cpw.y_a = parse_axis(n.child("y_a"));
        c.cpw.J = n.number("J", 0.0);
        p.y_a = c.cpw.y_a.front();
        for (double y : c.cpw.y_a)
            if (!(y > 0.0)) throw ConfigError(n.path() + ".y_a", "values must be > 0");
        try {
            p.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(n.path(), e.what());
        }
        if (c.cpw.J < 0.0) throw ConfigError(n.path() + ".J", "must be >= 0");
    }
    return c;
}

// ---------------------------------------------------------------------------
// Resolved config -> JSON (the manifest's "config" object)

namespace detail {

inline json axis_json(const std::vector<double>& v)
{
    json a = json::array();
    for (double x : v) a.push_back(x);
    return a;
}

inline json band_json(const BandParams& b) { return {{"J", b.J}, {"a", b.a}, {"gamma_p", b.gamma_p}}; }

inline json coupling_json(const CouplingSpec& c)
{
    if (const auto* e = std::get_if<EffectiveCoupling>(&c)) return {{"model", "effective"}, {"gbar", e->gbar}};
    const auto& f = std::get<FullCoupling>(c);
    return {{"model", "full"}, {"g", f.g}, {"z0", f.z0}};
}

inline json run_json(const RunSettings& r)
{
    return {{"t_max", r.t_max}, {"dt", r.dt}, {"record_every", r.record_every},
            {"snapshots", axis_json(r.snapshot_times)}};
}

} // namespace detail

inline json config_json(const Config& c, std::optional<int> n_sites)
{
    using namespace detail;
    json j;
    j["scenario"] = c.scenario;
    const auto& s = c.scenario;
    if (s == "emit" || s == "transfer" || s == "disorder-ensemble") {
        j["band"] = band_json(c.band);
        json atoms = json::array();
        for (const auto& a : c.atoms)
            atoms.push_back({{"delta", a.delta},
                             {"z", a.z_init},
                             {"v", a.v},
                             {"gamma_a", a.gamma_a},
                             {"excited", std::norm(a.initial_amplitude) > 0.0}});
        j["atoms"] = atoms;
        j["coupling"] = coupling_json(c.coupling);
        j["grid"] = n_sites ? json{{"n_sites", *n_sites}} : json{{"n_sites", "auto"}};
        j["run"] = run_json(c.run);
        if (c.disorder)
            j["disorder"] = {{"epsilon", c.disorder->epsilon},
                             {"seed", c.disorder->seed},
                             {"realizations", c.disorder->n_realizations}};
    } else if (s == "directionality-map") {
        j["band"] = band_json(c.band);
        j["coupling"] = coupling_json(c.coupling);
        j["map"] = {{"delta", axis_json(c.map.delta)}, {"v", axis_json(c.map.v)}, {"gamma_p", c.map.gamma_p}};
    } else if (s == "validity-map") {
        j["band"] = band_json(c.band);
        j["coupling"] = coupling_json(c.coupling);
        j["map"] = {{"delta", axis_json(c.map.delta)}, {"v", axis_json(c.map.v)}, {"t_f", c.map.t_f}};
        j["grid"] = n_sites ? json{{"n_sites", *n_sites}} : json{{"n_sites", "auto"}};
        j["run"] = run_json(c.run);
    } else if (s == "boundstates") {
        j["band"] = band_json(c.band);
        j["bound"] = {{"delta", axis_json(c.bound.delta)},
                      {"v", axis_json(c.bound.v)},
                      {"gbar", c.bound.gbar},
                      {"oracle_sites", c.bound.oracle_sites}};
    } else if (s == "cubic") {
        const auto& p = c.cubic.params;
        j["cubic"] = {{"J", p.J}, {"a", p.a}, {"gbar", p.gbar}, {"delta", p.delta}, {"t_max", c.cubic.t_max},
                      {"dt", c.cubic.dt}};
    } else if (s == "fiber") {
        const auto& f = c.fiber;
        j["fiber"] = {{"R0", f.base.R0},       {"n", f.base.n},
                      {"omega_e", f.base.omega_e}, {"a", axis_json(f.a)},
                      {"deltaR_over_R0", axis_json(f.ratio)}};
    } else if (s == "cpw") {
        const auto& p = c.cpw.base;
        j["cpw"] = {{"l1", p.l1},         {"l2", p.l2}, {"Lx", p.Lx}, {"omega0", p.omega0},
                    {"dipole", p.dipole}, {"a", p.a},   {"h", p.h},   {"y_a", axis_json(c.cpw.y_a)},
                    {"J", c.cpw.J}};
    }
    return j;
}

// ---------------------------------------------------------------------------
// Output helpers

inline std::string fmt(double x)
{
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

class Csv {
public:
    Csv(const std::filesystem::path& file, const std::vector<std::string>& header) : out_(file)
    {
        if (!out_) throw std::runtime_error("cannot write " + file.string());
        row_strings(header);
    }
    void row(const std::vector<double>& values)
    {
        std::vector<std::string> s;
        s.reserve(values.size());
        for (double x : values) s.push_back(fmt(x));
        row_strings(s);
    }
    void row_strings(const std::vector<std::string>& cells)
    {
        for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
        out_ << '\n';
    }

private:
    std::ofstream out_;
};

/// Rounds through the CSV representation so manifest numbers match the tables.
inline json num(double x)
{
    if (!std::isfinite(x)) return fmt(x);
    return std::stod(fmt(x));
}

/// Runs body(i) for i in [0, n) on `jobs` worker threads. The first exception is rethrown.
inline void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& body)
{
    const std::size_t workers = std::clamp<std::size_t>(jobs < 1 ? 1 : static_cast<std::size_t>(jobs), 1, std::max<std::size_t>(n, 1));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex m;
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        body(i);
                    } catch (...) {
                        std::lock_guard lock(m);
                        if (!error) error = std::current_exception();
                        next = n;
                    }
                }
            });
    }
    if (error) std::rethrow_exception(error);
}

struct RunOptions {
    int jobs = 1;
    std::optional<std::uint64_t> seed;
};

// ---------------------------------------------------------------------------
// Scenarios

namespace detail {

inline LatticeGrid resolve_grid(const Config& c, std::span<const AtomSpec> atoms, double t_max)
{
    if (c.n_sites) return LatticeGrid{*c.n_sites, c.band.a};
    return light_cone_grid(c.band, atoms, t_max);
}

inline SimOutput simulate(const BandParams& band, std::span<const AtomSpec> atoms, const CouplingSpec& coupling,
                          const LatticeGrid& grid, const RunSettings& run, std::span<const double> disorder = {})
{
    if (const auto* e = std::get_if<EffectiveCoupling>(&coupling))
        return evolve_effective(band, atoms, *e, grid, run, disorder);
    return evolve_full(band, atoms, std::get<FullCoupling>(coupling), grid, run, disorder);
}

inline double effective_gbar(const CouplingSpec& c, double a)
{
    if (const auto* e = std::get_if<EffectiveCoupling>(&c)) return e->gbar;
    return std::get<FullCoupling>(c).gbar_equivalent(a);
}

inline void write_pe(const std::filesystem::path& dir, const SimOutput& out)
{
    std::vector<std::string> h{"t"};
    for (std::size_t i = 0; i < out.pe.size(); ++i) h.push_back("pe_" + std::to_string(i + 1));
    h.push_back("norm");
    Csv csv(dir / "pe.csv", h);
    for (std::size_t s = 0; s < out.times.size(); ++s) {
        std::vector<double> r{out.times[s]};
        for (const auto& p : out.pe) r.push_back(p[s]);
        r.push_back(out.norm[s]);
        csv.row(r);
    }
}

inline void write_snapshots(const std::filesystem::path& dir, const SimOutput& out)
{
    const auto& grid = out.manifest.grid;
    std::vector<int> order(grid.n_sites);
    for (int n = 0; n < grid.n_sites; ++n) order[n] = n;
    std::sort(order.begin(), order.end(),
              [&](int x, int y) { return grid.wrap(x * grid.a) < grid.wrap(y * grid.a); });
    for (std::size_t i = 0; i < out.snapshots.size(); ++i) {
        Csv csv(dir / ("psi_t" + std::to_string(i) + ".csv"), {"z", "re", "im", "abs2"});
        const auto& psi = out.snapshots[i].psi;
        for (int n : order)
            csv.row({grid.wrap(n * grid.a), psi[n].real(), psi[n].imag(), std::norm(psi[n])});
    }
}

inline json run_dynamics(const Config& c, const std::filesystem::path& dir, std::optional<int>& n_sites)
{
    const auto grid = resolve_grid(c, c.atoms, c.run.t_max);
    n_sites = grid.n_sites;
    std::vector<double> disorder;
    if (c.disorder) disorder = sample_disorder(*c.disorder, 0, grid.n_sites);
    const auto out = simulate(c.band, c.atoms, c.coupling, grid, c.run, disorder);
    write_pe(dir, out);
    write_snapshots(dir, out);

    json res;
    res["n_sites"] = grid.n_sites;
    res["dt_used"] = num(out.manifest.dt_used);
    res["n_steps"] = out.manifest.n_steps;
    res["samples"] = out.times.size();
    res["final_norm"] = num(out.norm.back());
    res["gbar_effective"] = num(effective_gbar(c.coupling, c.band.a));
    json snaps = json::array();
    for (std::size_t i = 0; i < out.snapshots.size(); ++i) {
        const auto& s = out.snapshots[i];
        const auto [l, r] = side_fractions(s, grid, c.atoms.front().position(s.time));
        snaps.push_back({{"index", i}, {"file", "psi_t" + std::to_string(i) + ".csv"}, {"t", num(s.time)},
                         {"left_fraction", num(l)}, {"right_fraction", num(r)}});
    }
    res["snapshots"] = snaps;
    if (c.scenario == "transfer") {
        Csv csv(dir / "retardation.csv", {"from", "to", "d", "tau"});
        for (std::size_t i = 0; i < c.atoms.size(); ++i)
            for (std::size_t j = 0; j < c.atoms.size(); ++j) {
                if (i == j) continue;
                const double d = c.atoms[j].z_init - c.atoms[i].z_init;
                csv.row({double(i + 1), double(j + 1), d, retardation_time(d, c.atoms[i], c.band)});
            }
    }
    return res;
}

inline json run_disorder(const Config& c, const std::filesystem::path& dir, const RunOptions& opt,
                         std::optional<int>& n_sites)
{
    const auto grid = resolve_grid(c, c.atoms, c.run.t_max);
    n_sites = grid.n_sites;
    const auto clean = simulate(c.band, c.atoms, c.coupling, grid, c.run);
    const int R = c.disorder->n_realizations;
    std::vector<SimOutput> runs(R);
    parallel_for(R, opt.jobs, [&](std::size_t r) {
        const auto eps = sample_disorder(*c.disorder, static_cast<int>(r), grid.n_sites);
        runs[r] = simulate(c.band, c.atoms, c.coupling, grid, c.run, eps);
    });

    const std::size_t na = c.atoms.size(), ns = clean.times.size();
    std::vector<std::string> h{"t"};
    for (std::size_t i = 0; i < na; ++i) {
        h.push_back("pe_clean_" + std::to_string(i + 1));
        h.push_back("pe_mean_" + std::to_string(i + 1));
    }
    Csv csv(dir / "disorder.csv", h);
    for (std::size_t s = 0; s < ns; ++s) {
        std::vector<double> row{clean.times[s]};
        for (std::size_t i = 0; i < na; ++i) {
            double m = 0.0;
            for (const auto& r : runs) m += r.pe[i][s];
            row.push_back(clean.pe[i][s]);
            row.push_back(m / R);
        }
        csv.row(row);
    }
    Csv sum(dir / "disorder_summary.csv", {"realization", "max_dev"});
    double mean_dev = 0.0;
    for (int r = 0; r < R; ++r) {
        double d = 0.0;
        for (std::size_t i = 0; i < na; ++i)
            for (std::size_t s = 0; s < ns; ++s) d = std::max(d, std::abs(runs[r].pe[i][s] - clean.pe[i][s]));
        sum.row({double(r), d});
        mean_dev += d / R;
    }
    json res;
    res["n_sites"] = grid.n_sites;
    res["dt_used"] = num(clean.manifest.dt_used);
    res["samples"] = ns;
    res["mean_max_dev"] = num(mean_dev);
    return res;
}

struct GridPoint {
    double delta, v;
};

inline std::vector<GridPoint> grid_points(const std::vector<double>& delta, const std::vector<double>& v)
{
    std::vector<GridPoint> out;
    for (double d : delta)
        for (double x : v) out.push_back({d, x});
    std::sort(out.begin(), out.end(),
              [](const GridPoint& a, const GridPoint& b) { return a.delta != b.delta ? a.delta < b.delta : a.v < b.v; });
    return out;
}

inline json run_dmap(const Config& c, const std::filesystem::path& dir, const RunOptions& opt)
{
    const auto pts = grid_points(c.map.delta, c.map.v);
    const double gbar = effective_gbar(c.coupling, c.band.a);
    std::vector<Directionality> res(pts.size());
    parallel_for(pts.size(), opt.jobs, [&](std::size_t i) {
        res[i] = directionality(pts[i].delta, ComovingFrame{c.band, pts[i].v}, gbar, c.map.gamma_p);
    });
    Csv csv(dir / "dmap.csv", {"delta", "v", "gamma_L", "gamma_R", "D"});
    std::size_t off = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        csv.row({pts[i].delta, pts[i].v, res[i].rates.gamma_L, res[i].rates.gamma_R, res[i].D});
        off += res[i].off_band;
    }
    return {{"points", pts.size()}, {"off_band_points", off}, {"gbar_effective", num(gbar)}};
}

inline json run_validity(const Config& c, const std::filesystem::path& dir, const RunOptions& opt)
{
    const auto pts = grid_points(c.map.delta, c.map.v);
    const auto& full = std::get<FullCoupling>(c.coupling);
    const EffectiveCoupling eff{full.gbar_equivalent(c.band.a)};
    std::vector<double> d(pts.size());
    std::vector<int> sizes(pts.size());
    parallel_for(pts.size(), opt.jobs, [&](std::size_t i) {
        const std::vector<AtomSpec> atoms{AtomSpec{pts[i].delta, 0.0, pts[i].v, 0.0, 1.0}};
        const auto grid = resolve_grid(c, atoms, c.run.t_max);
        sizes[i] = grid.n_sites;
        const auto a = evolve_effective(c.band, atoms, eff, grid, c.run);
        const auto b = evolve_full(c.band, atoms, full, grid, c.run);
        d[i] = discrepancy(a, b, c.map.t_f);
    });
    Csv csv(dir / "validity.csv", {"delta", "v", "d"});
    for (std::size_t i = 0; i < pts.size(); ++i) csv.row({pts[i].delta, pts[i].v, d[i]});
    Csv vb(dir / "validity_bound.csv", {"delta", "v_min", "v_min_over_cbar"});
    for (double delta : [&] {
             auto s = c.map.delta;
             std::sort(s.begin(), s.end());
             return s;
         }()) {
        const auto b = validity_min_velocity(delta, c.band);
        vb.row({delta, b.v_min, b.v_min_over_cbar});
    }
    return {{"points", pts.size()},
            {"gbar_effective", num(eff.gbar)},
            {"max_n_sites", *std::max_element(sizes.begin(), sizes.end())}};
}

inline json run_bound(const Config& c, const std::filesystem::path& dir, const RunOptions& opt)
{
    const auto pts = grid_points(c.bound.delta, c.bound.v);
    std::vector<BoundStateResult> res(pts.size());
    std::vector<ComovingSpectrum> oracle(pts.size());
    parallel_for(pts.size(), opt.jobs, [&](std::size_t i) {
        const ComovingFrame f{c.band, pts[i].v};
        res[i] = bound_state_frequencies(pts[i].delta, f, c.bound.gbar);
        if (c.bound.oracle_sites > 0) oracle[i] = diagonalize_comoving(pts[i].delta, f, c.bound.gbar, c.bound.oracle_sites);
    });
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::string> h{"delta", "v", "omega_minus", "omega_plus", "residual_minus", "residual_plus",
                               "photon_fraction_minus", "photon_fraction_plus", "loc_minus", "loc_plus"};
    if (c.bound.oracle_sites > 0) {
        h.push_back("oracle_minus");
        h.push_back("oracle_plus");
    }
    Csv csv(dir / "bound.csv", h);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto& m = res[i].minus;
        const auto& p = res[i].plus;
        std::vector<double> row{pts[i].delta,
                                pts[i].v,
                                m ? m->omega : nan,
                                p ? p->omega : nan,
                                m ? m->residual : nan,
                                p ? p->residual : nan,
                                m ? m->photon_fraction : nan,
                                p ? p->photon_fraction : nan,
                                m ? m->localization_length : nan,
                                p ? p->localization_length : nan};
        if (c.bound.oracle_sites > 0) {
            double lo = nan, hi = nan;
            for (const auto& b : oracle[i].bound) {
                if (b.omega < oracle[i].band_min) lo = b.omega;
                if (b.omega > oracle[i].band_max && std::isnan(hi)) hi = b.omega;
            }
            row.push_back(lo);
            row.push_back(hi);
        }
        csv.row(row);
    }
    return {{"points", pts.size()}};
}

inline json run_cubic(const Config& c, const std::filesystem::path& dir)
{
    const auto& p = c.cubic.params;
    const auto dec = cubic_decay(p, c.cubic.t_max, c.cubic.dt);
    const auto rates = critical_rates(p.gbar, p.J);
    Csv csv(dir / "cubic.csv", {"t", "pe", "pe_pole"});
    for (std::size_t i = 0; i < dec.times.size(); ++i)
        csv.row({dec.times[i], dec.pe[i], critical_decay_approx(dec.times[i], rates)});
    return {{"samples", dec.times.size()},     {"K", num(dec.K)},
            {"truncated_weight", num(dec.truncated_weight)}, {"sum_rule", num(dec.sum_rule)},
            {"Omega_c", num(rates.Omega_c)},   {"Gamma_c", num(rates.Gamma_c)}};
}

inline json run_fiber(const Config& c, const std::filesystem::path& dir, const RunOptions& opt)
{
    struct P {
        double a, r;
    };
    std::vector<P> pts;
    auto as = c.fiber.a, rs = c.fiber.ratio;
    std::sort(as.begin(), as.end());
    std::sort(rs.begin(), rs.end());
    for (double a : as)
        for (double r : rs) pts.push_back({a, r});
    std::vector<si::FiberBand> res(pts.size());
    parallel_for(pts.size(), opt.jobs, [&](std::size_t i) {
        auto f = c.fiber.base;
        f.a = pts[i].a;
        f.deltaR = pts[i].r * f.R0;
        res[i] = si::fiber_band(f);
    });
    Csv csv(dir / "band_fiber.csv",
            {"a", "deltaR_over_R0", "J_over_2pi", "cbar", "mode_mixing_warning", "paraxial_warning"});
    for (std::size_t i = 0; i < pts.size(); ++i)
        csv.row({pts[i].a, pts[i].r, res[i].J / (2.0 * pi), res[i].cbar, double(res[i].mode_mixing_warning),
                 double(res[i].paraxial_warning)});
    return {{"points", pts.size()},
            {"m_eff", num(c.fiber.base.effective_mass())},
            {"ell", num(c.fiber.base.ell())}};
}

inline json run_cpw(const Config& c, const std::filesystem::path& dir, const RunOptions& opt)
{
    auto ys = c.cpw.y_a;
    std::sort(ys.begin(), ys.end());
    std::vector<si::CPWCoupling> res(ys.size());
    parallel_for(ys.size(), opt.jobs, [&](std::size_t i) {
        auto p = c.cpw.base;
        p.y_a = ys[i];
        res[i] = si::cpw_coupling(p);
    });
    std::vector<std::string> h{"y_a", "E0", "g0", "gbar"};
    if (c.cpw.J > 0.0) h.push_back("Gamma_c");
    Csv csv(dir / "cpw.csv", h);
    for (std::size_t i = 0; i < ys.size(); ++i) {
        std::vector<double> row{ys[i], res[i].E0, res[i].g0, res[i].gbar};
        if (c.cpw.J > 0.0) row.push_back(res[i].gbar > 0.0 ? critical_rates(res[i].gbar, c.cpw.J).Gamma_c : 0.0);
        csv.row(row);
    }
    return {{"points", ys.size()}, {"V_r", num(res.front().V_r)}};
}

} // namespace detail

struct RunResult {
    json manifest;
    double wall_seconds = 0.0;
};

/// Executes a validated config, writing all outputs into `dir`.
inline RunResult run(Config c, const std::filesystem::path& dir, const RunOptions& opt = {})
{
    if (opt.seed) {
        if (!c.disorder) throw ConfigError("--seed", "scenario \"" + c.scenario + "\" has no disorder section");
        c.disorder->seed = *opt.seed;
    }
    std::filesystem::create_directories(dir);
    const auto t0 = std::chrono::steady_clock::now();
    std::optional<int> n_sites = c.n_sites;
    json results;
    const auto& s = c.scenario;
    try {
        if (s == "emit" || s == "transfer") results = detail::run_dynamics(c, dir, n_sites);
        else if (s == "disorder-ensemble") results = detail::run_disorder(c, dir, opt, n_sites);
        else if (s == "directionality-map") results = detail::run_dmap(c, dir, opt);
        else if (s == "validity-map") results = detail::run_validity(c, dir, opt);
        else if (s == "boundstates") results = detail::run_bound(c, dir, opt);
        else if (s == "cubic") results = detail::run_cubic(c, dir);
        else if (s == "fiber") results = detail::run_fiber(c, dir, opt);
        else if (s == "cpw") results = detail::run_cpw(c, dir, opt);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw std::runtime_error(s + ": " + e.what());
    }
    RunResult r;
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.manifest["manifest_version"] = 1;
    r.manifest["slowlight_version"] = SLOWLIGHT_VERSION;
    r.manifest["scenario"] = s;
    r.manifest["units"] = (s == "fiber" || s == "cpw") ? "SI" : "hbar = 1, energies relative to omega_0";
    r.manifest["config"] = config_json(c, n_sites);
    r.manifest["results"] = results;
    {
        std::ofstream m(dir / "manifest.json");
        m << r.manifest.dump(2) << '\n';
    }
    {
        std::ofstream t(dir / "timing.json");
        t << json{{"wall_seconds", r.wall_seconds}, {"jobs", opt.jobs}}.dump(2) << '\n';
    }
    return r;
}

inline json load_json(const std::filesystem::path& file)
{
    std::ifstream in(file);
    if (!in) throw ConfigError(file.string(), "cannot open config file");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(file.string(), std::string("invalid JSON: ") + e.what());
    }
}

} // namespace slowlight::scenario
