#pragma once

#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "portopt/instance.hpp"
#include "portopt/metrics.hpp"
#include "portopt/oracle.hpp"
#include "portopt/search.hpp"
#include "portopt/version.hpp"

namespace portopt {

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& s, const std::string& what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ValidationError("cannot parse " + what + " from '" + s + "'");
    }
}

inline long long parse_int(const std::string& s, const std::string& what) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ValidationError("cannot parse " + what + " from '" + s + "'");
    }
}

inline std::string g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

inline std::string fingerprint_hex(std::uint64_t fp) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fp));
    return buf;
}

inline std::uint64_t fingerprint_from_hex(const std::string& s) {
    if (s.empty()) return 0;
    return std::stoull(s, nullptr, 16);
}

inline const char* mode_name(EvalMode m) {
    return m == EvalMode::per_neighbor ? "per-neighbor" : "single-solve";
}

inline EvalMode parse_mode(const std::string& s) {
    if (s == "per-neighbor") return EvalMode::per_neighbor;
    if (s == "single-solve") return EvalMode::single_solve;
    throw ValidationError("mode must be per-neighbor or single-solve, got '" + s + "'");
}

inline Provenance parse_provenance(const std::string& s) {
    for (Provenance p : {Provenance::enumeration, Provenance::epsilon_constraint,
                         Provenance::long_run_union, Provenance::tucpf})
        if (s == provenance_name(p)) return p;
    throw ValidationError("unknown provenance '" + s + "'");
}

// ---------------------------------------------------------------------------
// Harness configuration: `key = value` lines, '#' comments. Algorithm keys
// follow the run-parameter names; constraint keys describe the uniform
// bound set applied to whichever instance the run is pointed at.
// ---------------------------------------------------------------------------

struct HarnessConfig {
    RunConfig run;
    int K = 0;
    double floor_w = 0.0;
    double ceiling_w = 1.0;
    double tau = 0.0;
    std::vector<int> preassign;
    std::string label = "run";
};

inline ConstraintSet constraints_for(const HarnessConfig& hc, int n) {
    if (hc.K < 1) throw ValidationError("config: K must be set to a positive value");
    return make_constraints(n, hc.K, hc.floor_w, hc.ceiling_w, hc.tau, hc.preassign);
}

inline HarnessConfig parse_config_text(const std::string& text, const std::string& origin = "config") {
    HarnessConfig hc;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ValidationError(origin + ":" + std::to_string(line_no) + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string val = detail::trim(line.substr(eq + 1));
        const std::string where = origin + ":" + std::to_string(line_no) + ": " + key;

        if (key == "N") hc.run.N = static_cast<int>(detail::parse_int(val, where));
        else if (key == "F") hc.run.F = detail::parse_double(val, where);
        else if (key == "CR") hc.run.CR = detail::parse_double(val, where);
        else if (key == "eta_m") hc.run.eta_m = detail::parse_double(val, where);
        else if (key == "p_m") hc.run.p_m = (val == "auto") ? 0.0 : detail::parse_double(val, where);
        else if (key == "T") hc.run.T = static_cast<int>(detail::parse_int(val, where));
        else if (key == "n_r")
            hc.run.n_r = (val == "inf") ? static_cast<std::size_t>(-1)
                                        : static_cast<std::size_t>(detail::parse_int(val, where));
        else if (key == "p_delta") hc.run.p_delta = detail::parse_double(val, where);
        else if (key == "eval_cap") hc.run.eval_cap = detail::parse_int(val, where);
        else if (key == "time_cap") hc.run.time_cap = detail::parse_double(val, where);
        else if (key == "mode") hc.run.mode = parse_mode(val);
        else if (key == "seed")
            hc.run.seed = static_cast<std::uint64_t>(detail::parse_int(val, where));
        else if (key == "workers") hc.run.workers = static_cast<int>(detail::parse_int(val, where));
        else if (key == "label") hc.label = val;
        else if (key == "K") hc.K = static_cast<int>(detail::parse_int(val, where));
        else if (key == "floor") hc.floor_w = detail::parse_double(val, where);
        else if (key == "ceiling") hc.ceiling_w = detail::parse_double(val, where);
        else if (key == "tau") hc.tau = detail::parse_double(val, where);
        else if (key == "preassign") {
            hc.preassign.clear();
            if (val != "none" && !val.empty()) {
                std::istringstream ss(val);
                std::string tok;
                while (std::getline(ss, tok, ','))
                    hc.preassign.push_back(static_cast<int>(detail::parse_int(detail::trim(tok), where)));
            }
        } else {
            throw ValidationError(origin + ":" + std::to_string(line_no) + ": unknown key '" + key +
                                  "'");
        }
    }
    return hc;
}

inline HarnessConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path);
}

// ---------------------------------------------------------------------------
// CSV files
// ---------------------------------------------------------------------------

inline void write_front_csv(const std::string& path, const std::vector<ObjectivePair>& pts) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write '" + path + "'");
    out << "risk,return\n";
    for (const auto& p : pts) out << detail::g17(p.risk) << ',' << detail::g17(p.ret) << '\n';
}

inline std::vector<ObjectivePair> load_front_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || detail::trim(line) != "risk,return")
        throw ValidationError(path + ": expected header 'risk,return'");
    std::vector<ObjectivePair> pts;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw ValidationError(path + ":" + std::to_string(line_no) + ": expected risk,return");
        pts.push_back({detail::parse_double(line.substr(0, comma), "risk"),
                       detail::parse_double(line.substr(comma + 1), "return")});
    }
    return pts;
}

/// Sparse weights: one row per held asset per front point.
inline void write_weights_csv(const std::string& path, const std::vector<Portfolio>& ports) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write '" + path + "'");
    out << "point,asset,weight\n";
    for (std::size_t i = 0; i < ports.size(); ++i)
        for (int a : ports[i].selection)
            out << i << ',' << a << ',' << detail::g17(ports[i].weights(a)) << '\n';
}

inline std::vector<Portfolio> load_weights_csv(const std::string& path, int n) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || detail::trim(line) != "point,asset,weight")
        throw ValidationError(path + ": expected header 'point,asset,weight'");
    std::vector<Portfolio> ports;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = detail::trim(line);
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string a, b, c;
        if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c))
            throw ValidationError(path + ":" + std::to_string(line_no) + ": expected point,asset,weight");
        const auto point = static_cast<std::size_t>(detail::parse_int(a, "point"));
        const int asset = static_cast<int>(detail::parse_int(b, "asset"));
        const double weight = detail::parse_double(c, "weight");
        if (asset < 0 || asset >= n)
            throw ValidationError(path + ":" + std::to_string(line_no) + ": asset out of range");
        if (point == ports.size()) {
            ports.emplace_back();
            ports.back().weights = Eigen::VectorXd::Zero(n);
        } else if (point > ports.size()) {
            throw ValidationError(path + ":" + std::to_string(line_no) + ": point ids must be contiguous");
        }
        ports[point].selection.push_back(asset);
        ports[point].weights(asset) = weight;
    }
    return ports;
}

struct TraceRow {
    int gen = 0;
    long evals = 0;
    double seconds = 0.0;
    double hv = std::numeric_limits<double>::quiet_NaN();
    double gd = std::numeric_limits<double>::quiet_NaN();
};

inline void write_trace_csv(const std::string& path, const std::vector<TraceRow>& rows) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write '" + path + "'");
    out << "gen,evals,seconds,hv,gd\n";
    for (const auto& r : rows)
        out << r.gen << ',' << r.evals << ',' << detail::g17(r.seconds) << ','
            << detail::g17(r.hv) << ',' << detail::g17(r.gd) << '\n';
}

inline std::vector<TraceRow> load_trace_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || detail::trim(line) != "gen,evals,seconds,hv,gd")
        throw ValidationError(path + ": expected header 'gen,evals,seconds,hv,gd'");
    std::vector<TraceRow> rows;
    while (std::getline(in, line)) {
        line = detail::trim(line);
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string cell;
        TraceRow r;
        std::getline(ss, cell, ',');
        r.gen = static_cast<int>(detail::parse_int(cell, "gen"));
        std::getline(ss, cell, ',');
        r.evals = detail::parse_int(cell, "evals");
        std::getline(ss, cell, ',');
        r.seconds = detail::parse_double(cell, "seconds");
        std::getline(ss, cell, ',');
        r.hv = detail::parse_double(cell, "hv");
        std::getline(ss, cell);
        r.gd = detail::parse_double(cell, "gd");
        rows.push_back(r);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Reference fronts: CSV of points + JSON sidecar with provenance and the
// instance/constraint fingerprint.
// ---------------------------------------------------------------------------

inline void save_reference(const ReferenceFront& rf, const std::string& csv_path,
                           const std::string& json_path) {
    write_front_csv(csv_path, rf.points);
    nlohmann::json j;
    j["provenance"] = provenance_name(rf.provenance);
    j["fingerprint"] = fingerprint_hex(rf.fingerprint);
    j["instance"] = rf.instance_name;
    j["points"] = rf.points.size();
    std::ofstream out(json_path);
    if (!out) throw ValidationError("cannot write '" + json_path + "'");
    out << j.dump(2) << '\n';
}

inline ReferenceFront load_reference(const std::string& csv_path, const std::string& json_path) {
    ReferenceFront rf;
    rf.points = load_front_csv(csv_path);
    std::ifstream in(json_path);
    if (!in) throw ValidationError("cannot open '" + json_path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(json_path + ": " + e.what());
    }
    rf.provenance = parse_provenance(j.at("provenance").get<std::string>());
    rf.fingerprint = fingerprint_from_hex(j.at("fingerprint").get<std::string>());
    rf.instance_name = j.value("instance", "");
    if (j.contains("points") && j["points"].get<std::size_t>() != rf.points.size())
        throw ValidationError(json_path + ": point count disagrees with " + csv_path);
    for (std::size_t i = 1; i < rf.points.size(); ++i)
        if (rf.points[i].risk <= rf.points[i - 1].risk || rf.points[i].ret <= rf.points[i - 1].ret)
            throw ValidationError(csv_path + ": reference front is not strictly increasing");
    return rf;
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

struct RunManifest {
    std::string version = version_string;
    HarnessConfig config;
    std::string instance_path;
    std::string instance_split;  // split date for price-history instances
    std::string instance_name;
    int instance_n = 0;
    std::uint64_t instance_fingerprint = 0;
    std::string reference_csv, reference_json;  // empty when no reference was supplied
    long evals_used = 0;
    double wall_seconds = 0.0;
    bool has_metrics = false;
    MetricReport metrics;
    std::string front_csv, weights_csv, trace_csv;
};

inline void save_manifest(const RunManifest& m, const std::string& path) {
    nlohmann::json j;
    j["version"] = m.version;
    j["label"] = m.config.label;
    nlohmann::json c;
    c["N"] = m.config.run.N;
    c["F"] = m.config.run.F;
    c["CR"] = m.config.run.CR;
    c["eta_m"] = m.config.run.eta_m;
    if (m.config.run.p_m > 0.0) c["p_m"] = m.config.run.p_m;
    else c["p_m"] = "auto";
    c["T"] = m.config.run.T;
    if (m.config.run.n_r == static_cast<std::size_t>(-1)) c["n_r"] = "inf";
    else c["n_r"] = m.config.run.n_r;
    c["p_delta"] = m.config.run.p_delta;
    c["eval_cap"] = m.config.run.eval_cap;
    c["time_cap"] = m.config.run.time_cap;
    c["mode"] = mode_name(m.config.run.mode);
    c["seed"] = m.config.run.seed;
    c["workers"] = m.config.run.workers;
    j["config"] = c;
    nlohmann::json k;
    k["K"] = m.config.K;
    k["floor"] = m.config.floor_w;
    k["ceiling"] = m.config.ceiling_w;
    k["tau"] = m.config.tau;
    k["preassign"] = m.config.preassign;
    j["constraints"] = k;
    nlohmann::json inst;
    inst["path"] = m.instance_path;
    if (!m.instance_split.empty()) inst["split"] = m.instance_split;
    inst["name"] = m.instance_name;
    inst["n"] = m.instance_n;
    inst["fingerprint"] = fingerprint_hex(m.instance_fingerprint);
    j["instance"] = inst;
    if (!m.reference_csv.empty()) {
        j["reference"] = {{"csv", m.reference_csv}, {"json", m.reference_json}};
    } else {
        j["reference"] = nullptr;
    }
    j["budget"] = {{"evals_used", m.evals_used}};
    j["wall_seconds"] = m.wall_seconds;
    if (m.has_metrics) {
        j["metrics"] = {{"hv", m.metrics.hv}, {"gd", m.metrics.gd}, {"count", m.metrics.count}};
    } else {
        j["metrics"] = nullptr;
    }
    j["outputs"] = {{"front", m.front_csv}, {"weights", m.weights_csv}, {"trace", m.trace_csv}};
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write '" + path + "'");
    out << j.dump(2) << '\n';
}

inline RunManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path + ": " + e.what());
    }
    RunManifest m;
    try {
        m.version = j.value("version", "");
        m.config.label = j.value("label", "run");
        const auto& c = j.at("config");
        m.config.run.N = c.at("N").get<int>();
        m.config.run.F = c.at("F").get<double>();
        m.config.run.CR = c.at("CR").get<double>();
        m.config.run.eta_m = c.at("eta_m").get<double>();
        m.config.run.p_m = c.at("p_m").is_string() ? 0.0 : c.at("p_m").get<double>();
        m.config.run.T = c.at("T").get<int>();
        m.config.run.n_r = c.at("n_r").is_string() ? static_cast<std::size_t>(-1)
                                                   : c.at("n_r").get<std::size_t>();
        m.config.run.p_delta = c.at("p_delta").get<double>();
        m.config.run.eval_cap = c.at("eval_cap").get<long>();
        m.config.run.time_cap = c.at("time_cap").get<double>();
        m.config.run.mode = parse_mode(c.at("mode").get<std::string>());
        m.config.run.seed = c.at("seed").get<std::uint64_t>();
        m.config.run.workers = c.at("workers").get<int>();
        const auto& k = j.at("constraints");
        m.config.K = k.at("K").get<int>();
        m.config.floor_w = k.at("floor").get<double>();
        m.config.ceiling_w = k.at("ceiling").get<double>();
        m.config.tau = k.at("tau").get<double>();
        m.config.preassign = k.at("preassign").get<std::vector<int>>();
        const auto& inst = j.at("instance");
        m.instance_path = inst.at("path").get<std::string>();
        m.instance_split = inst.value("split", "");
        m.instance_name = inst.value("name", "");
        m.instance_n = inst.value("n", 0);
        m.instance_fingerprint = fingerprint_from_hex(inst.value("fingerprint", ""));
        if (!j.at("reference").is_null()) {
            m.reference_csv = j["reference"].at("csv").get<std::string>();
            m.reference_json = j["reference"].at("json").get<std::string>();
        }
        m.evals_used = j.at("budget").at("evals_used").get<long>();
        m.wall_seconds = j.value("wall_seconds", 0.0);
        if (!j.at("metrics").is_null()) {
            m.has_metrics = true;
            m.metrics.hv = j["metrics"].at("hv").get<double>();
            m.metrics.gd = j["metrics"].at("gd").get<double>();
            m.metrics.count = j["metrics"].at("count").get<std::size_t>();
        }
        const auto& o = j.at("outputs");
        m.front_csv = o.at("front").get<std::string>();
        m.weights_csv = o.at("weights").get<std::string>();
        m.trace_csv = o.at("trace").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path + ": " + e.what());
    }
    return m;
}

}  // namespace portopt
