// Experiment harness: run the optimizer, generate reference fronts, and turn
// stored manifests into tables and plot-ready CSVs.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "portopt/io.hpp"
#include "portopt/metrics.hpp"
#include "portopt/oracle.hpp"
#include "portopt/search.hpp"
#include "portopt/version.hpp"

namespace fs = std::filesystem;
using namespace portopt;

namespace {

// Paths inside manifests are stored as written; when re-running from another
// directory, fall back to resolving against the manifest's own location.
std::string resolve_near(const std::string& anchor_file, const std::string& path) {
    if (path.empty() || fs::exists(path)) return path;
    const fs::path near = fs::path(anchor_file).parent_path() / path;
    if (fs::exists(near)) return near.string();
    return path;
}

struct LoadedInstance {
    Instance instance;
    PriceInstance price;  // populated only for price-history inputs
    bool from_prices = false;
};

LoadedInstance load_instance_any(const std::string& path, const std::string& split) {
    LoadedInstance li;
    if (path.size() > 4 && path.substr(path.size() - 4) == ".csv") {
        if (split.empty())
            throw ValidationError("price-history instance '" + path + "' needs --split DATE");
        li.price = load_price_history(path, split);
        li.instance = li.price.instance;
        li.from_prices = true;
    } else {
        li.instance = load_orlibrary(path);
    }
    return li;
}

int cmd_run(const std::string& config_path, const std::string& manifest_path,
            std::string instance_path, std::string split, std::string out_dir,
            std::string reference_csv, long seed_override, long evals_override,
            int workers_override, std::string label_override) {
    HarnessConfig hc;
    std::string manifest_anchor;
    std::string reference_json;
    if (!manifest_path.empty()) {
        const RunManifest prev = load_manifest(manifest_path);
        hc = prev.config;
        manifest_anchor = manifest_path;
        if (instance_path.empty()) instance_path = resolve_near(manifest_path, prev.instance_path);
        if (split.empty()) split = prev.instance_split;
        if (reference_csv.empty() && !prev.reference_csv.empty()) {
            reference_csv = resolve_near(manifest_path, prev.reference_csv);
            reference_json = resolve_near(manifest_path, prev.reference_json);
        }
        if (out_dir.empty()) out_dir = fs::path(manifest_path).parent_path().string();
    } else {
        hc = load_config(config_path);
    }
    if (instance_path.empty()) throw ValidationError("no instance given (--instance or manifest)");
    if (out_dir.empty()) out_dir = ".";
    if (seed_override >= 0) hc.run.seed = static_cast<std::uint64_t>(seed_override);
    if (evals_override >= 0) hc.run.eval_cap = evals_override;
    if (workers_override > 0) hc.run.workers = workers_override;
    if (!label_override.empty()) hc.label = label_override;

    const LoadedInstance li = load_instance_any(instance_path, split);
    const ConstraintSet cs = constraints_for(hc, li.instance.n);
    const std::uint64_t fp = fingerprint(li.instance, cs);

    bool have_ref = false;
    ReferenceFront ref;
    MetricContext ctx;
    if (!reference_csv.empty()) {
        if (reference_json.empty()) {
            reference_json = reference_csv;
            const auto dot = reference_json.rfind('.');
            if (dot != std::string::npos) reference_json.resize(dot);
            reference_json += ".json";
        }
        ref = load_reference(reference_csv, reference_json);
        if (ref.fingerprint != fp)
            throw ValidationError("reference front fingerprint " + fingerprint_hex(ref.fingerprint) +
                                  " does not match instance+constraints " + fingerprint_hex(fp));
        ctx = make_context(ref);
        have_ref = true;
    }

    const RunResult res = run(li.instance, cs, hc.run);

    fs::create_directories(out_dir);
    const fs::path out(out_dir);
    RunManifest m;
    m.config = hc;
    m.instance_path = instance_path;
    m.instance_split = li.from_prices ? split : "";
    m.instance_name = li.instance.name;
    m.instance_n = li.instance.n;
    m.instance_fingerprint = fp;
    m.reference_csv = reference_csv;
    m.reference_json = reference_json;
    m.evals_used = res.evals_used;
    m.wall_seconds = res.wall_seconds;
    m.front_csv = "front.csv";
    m.weights_csv = "weights.csv";
    m.trace_csv = "trace.csv";

    std::vector<ObjectivePair> front_pts;
    std::vector<Portfolio> front_ports;
    for (const auto& st : res.front) {
        front_pts.push_back({st.risk, st.ret});
        front_ports.push_back(st.portfolio);
    }
    write_front_csv((out / m.front_csv).string(), front_pts);
    write_weights_csv((out / m.weights_csv).string(), front_ports);

    std::vector<TraceRow> trace;
    for (const auto& g : res.trace) {
        TraceRow r;
        r.gen = g.gen;
        r.evals = g.evals;
        r.seconds = g.seconds;
        if (have_ref) {
            const MetricReport rep = evaluate_metrics(g.front, ctx);
            r.hv = rep.hv;
            r.gd = rep.gd;
        }
        trace.push_back(r);
    }
    write_trace_csv((out / m.trace_csv).string(), trace);

    if (have_ref) {
        m.has_metrics = true;
        m.metrics = evaluate_metrics(front_pts, ctx);
    }
    save_manifest(m, (out / "manifest.json").string());

    std::printf("run label=%s instance=%s seed=%llu evals=%ld front=%zu", hc.label.c_str(),
                li.instance.name.c_str(), static_cast<unsigned long long>(hc.run.seed),
                res.evals_used, front_pts.size());
    if (have_ref) std::printf(" hv=%.6f gd=%.3e", m.metrics.hv, m.metrics.gd);
    std::printf(" -> %s\n", out_dir.c_str());
    return 0;
}

int cmd_reference(const std::string& config_path, const std::string& instance_path,
                  const std::string& split, const std::string& method, int lambdas, int grids,
                  const std::string& ucpf_csv, const std::string& out_dir) {
    const HarnessConfig hc = load_config(config_path);
    const LoadedInstance li = load_instance_any(instance_path, split);
    const ConstraintSet cs = constraints_for(hc, li.instance.n);

    ReferenceFront rf;
    std::string stem;
    try {
        if (method == "enumerate") {
            rf = enumerate_front(li.instance, cs, uniform_lambda_grid(lambdas));
            stem = "ref_enumerate";
        } else if (method == "epsilon") {
            rf = epsilon_constraint_front(li.instance, cs, grids);
            stem = "ref_epsilon";
        } else if (method == "truncate") {
            if (ucpf_csv.empty()) throw ValidationError("--ucpf required for method=truncate");
            std::string ucpf_json = ucpf_csv;
            const auto dot = ucpf_json.rfind('.');
            if (dot != std::string::npos) ucpf_json.resize(dot);
            ucpf_json += ".json";
            const ReferenceFront ucpf = load_reference(ucpf_csv, ucpf_json);
            rf = truncate_ucpf(ucpf, li.instance, cs);
            stem = "ref_tucpf";
        } else {
            throw ValidationError("method must be enumerate, epsilon, or truncate");
        }
    } catch (const GuardError& e) {
        throw GuardError("instance too large for exact reference; use TUCPF (" +
                         std::string(e.what()) + ")");
    }

    fs::create_directories(out_dir);
    const fs::path out(out_dir);
    save_reference(rf, (out / (stem + ".csv")).string(), (out / (stem + ".json")).string());
    std::printf("reference method=%s instance=%s points=%zu fingerprint=%s -> %s\n", method.c_str(),
                li.instance.name.c_str(), rf.points.size(), fingerprint_hex(rf.fingerprint).c_str(),
                out_dir.c_str());
    return 0;
}

struct SeriesStats {
    std::vector<double> hv, gd;
    double hv_mean = 0.0, hv_std = 0.0, gd_mean = 0.0, gd_std = 0.0;
    int hv_rank = 0, gd_rank = 0;
};

void finalize(SeriesStats& s) {
    auto mean_std = [](const std::vector<double>& v, double& mean, double& sd) {
        mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        sd = 0.0;
        if (v.size() > 1) {
            for (double x : v) sd += (x - mean) * (x - mean);
            sd = std::sqrt(sd / static_cast<double>(v.size() - 1));
        }
    };
    mean_std(s.hv, s.hv_mean, s.hv_std);
    mean_std(s.gd, s.gd_mean, s.gd_std);
}

int cmd_table(const std::vector<std::string>& manifest_paths, const std::string& out_csv) {
    if (manifest_paths.empty()) throw ValidationError("table: no manifests given");
    // instance -> label -> stats; also fingerprint consistency per instance
    std::map<std::string, std::map<std::string, SeriesStats>> grid;
    std::map<std::string, std::uint64_t> fps;
    for (const auto& path : manifest_paths) {
        const RunManifest m = load_manifest(path);
        if (!m.has_metrics)
            throw ValidationError(path + ": manifest carries no metrics (re-run with --reference)");
        auto [it, fresh] = fps.try_emplace(m.instance_name, m.instance_fingerprint);
        if (!fresh && it->second != m.instance_fingerprint)
            throw ValidationError("mixed fingerprints for instance '" + m.instance_name + "' (" +
                                  path + ")");
        SeriesStats& s = grid[m.instance_name][m.config.label];
        s.hv.push_back(m.metrics.hv);
        s.gd.push_back(m.metrics.gd);
    }

    std::vector<std::string> labels;
    for (auto& [inst, by_label] : grid)
        for (auto& [label, s] : by_label) {
            finalize(s);
            if (std::find(labels.begin(), labels.end(), label) == labels.end())
                labels.push_back(label);
        }
    std::sort(labels.begin(), labels.end());

    // competition ranks per instance: HV higher is better, GD lower is better
    for (auto& [inst, by_label] : grid)
        for (auto& [label, s] : by_label) {
            s.hv_rank = 1;
            s.gd_rank = 1;
            for (const auto& [other, o] : by_label) {
                if (o.hv_mean > s.hv_mean) ++s.hv_rank;
                if (o.gd_mean < s.gd_mean) ++s.gd_rank;
            }
        }

    std::map<std::string, int> hv_total, gd_total;
    for (const auto& label : labels) hv_total[label] = gd_total[label] = 0;
    for (const auto& [inst, by_label] : grid)
        for (const auto& [label, s] : by_label) {
            hv_total[label] += s.hv_rank;
            gd_total[label] += s.gd_rank;
        }

    if (!out_csv.empty()) {
        std::ofstream out(out_csv);
        if (!out) throw ValidationError("cannot write '" + out_csv + "'");
        out << "instance,label,seeds,hv_mean,hv_std,hv_rank,gd_mean,gd_std,gd_rank\n";
        for (const auto& [inst, by_label] : grid)
            for (const auto& [label, s] : by_label)
                out << inst << ',' << label << ',' << s.hv.size() << ',' << s.hv_mean << ','
                    << s.hv_std << ',' << s.hv_rank << ',' << s.gd_mean << ',' << s.gd_std << ','
                    << s.gd_rank << '\n';
    }

    auto render = [&](const char* title, bool use_hv, const std::map<std::string, int>& totals) {
        std::printf("%s\n", title);
        std::printf("%-14s %-6s", "Instance", "");
        for (const auto& label : labels) std::printf(" %-18s", label.c_str());
        std::printf("\n");
        for (const auto& [inst, by_label] : grid) {
            std::printf("%-14s %-6s", inst.c_str(), "Mean");
            for (const auto& label : labels) {
                auto it = by_label.find(label);
                if (it == by_label.end()) {
                    std::printf(" %-18s", "-");
                } else {
                    char cell[32];
                    std::snprintf(cell, sizeof(cell), "%.3e[%d]",
                                  use_hv ? it->second.hv_mean : it->second.gd_mean,
                                  use_hv ? it->second.hv_rank : it->second.gd_rank);
                    std::printf(" %-18s", cell);
                }
            }
            std::printf("\n%-14s %-6s", "", "Std");
            for (const auto& label : labels) {
                auto it = by_label.find(label);
                if (it == by_label.end()) {
                    std::printf(" %-18s", "-");
                } else {
                    char cell[32];
                    std::snprintf(cell, sizeof(cell), "%.3e",
                                  use_hv ? it->second.hv_std : it->second.gd_std);
                    std::printf(" %-18s", cell);
                }
            }
            std::printf("\n");
        }
        std::printf("%-14s %-6s", "Total", "");
        for (const auto& label : labels) std::printf(" %-18d", totals.at(label));
        std::printf("\n%-14s %-6s", "Final Rank", "");
        for (const auto& label : labels) {
            int rank = 1;
            for (const auto& [other, t] : totals)
                if (t < totals.at(label)) ++rank;
            std::printf(" %-18d", rank);
        }
        std::printf("\n\n");
    };
    render("HV (higher is better)", true, hv_total);
    render("GD (lower is better)", false, gd_total);
    return 0;
}

int cmd_plotdata(const std::vector<std::string>& manifest_paths, const std::string& kind,
                 const std::string& out_csv) {
    if (manifest_paths.empty()) throw ValidationError("plotdata: no manifests given");
    std::ofstream out(out_csv);
    if (!out) throw ValidationError("cannot write '" + out_csv + "'");
    if (kind == "front") {
        out << "series,risk,return\n";
        for (const auto& path : manifest_paths) {
            const RunManifest m = load_manifest(path);
            const auto pts = load_front_csv(resolve_near(path, m.front_csv));
            const std::string series =
                m.config.label + ":" + std::to_string(m.config.run.seed);
            for (const auto& p : pts)
                out << series << ',' << detail::g17(p.risk) << ',' << detail::g17(p.ret) << '\n';
        }
    } else if (kind == "convergence") {
        out << "series,seconds,hv,gd\n";
        for (const auto& path : manifest_paths) {
            const RunManifest m = load_manifest(path);
            const auto rows = load_trace_csv(resolve_near(path, m.trace_csv));
            const std::string series =
                m.config.label + ":" + std::to_string(m.config.run.seed);
            for (const auto& r : rows)
                out << series << ',' << detail::g17(r.seconds) << ',' << detail::g17(r.hv) << ','
                    << detail::g17(r.gd) << '\n';
        }
    } else {
        throw ValidationError("kind must be front or convergence");
    }
    std::printf("plotdata kind=%s series=%zu -> %s\n", kind.c_str(), manifest_paths.size(),
                out_csv.c_str());
    return 0;
}

int cmd_evaluate_oos(const std::string& prices_path, const std::string& split,
                     const std::string& weights_path, const std::string& pick, int index,
                     const std::string& out_csv) {
    const PriceInstance pi = load_price_history(prices_path, split);
    const int n = pi.instance.n;
    const std::vector<Portfolio> ports = load_weights_csv(weights_path, n);
    if (ports.empty()) throw ValidationError(weights_path + ": no portfolios");

    int chosen = 0;
    if (pick == "max-return") {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < ports.size(); ++i) {
            const double r = pi.instance.mu.dot(ports[i].weights);
            if (r > best) {
                best = r;
                chosen = static_cast<int>(i);
            }
        }
    } else if (pick == "min-risk") {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < ports.size(); ++i) {
            const double r = ports[i].weights.dot(pi.instance.cov * ports[i].weights);
            if (r < best) {
                best = r;
                chosen = static_cast<int>(i);
            }
        }
    } else if (pick == "index") {
        if (index < 0 || index >= static_cast<int>(ports.size()))
            throw ValidationError("--index out of range");
        chosen = index;
    } else {
        throw ValidationError("pick must be max-return, min-risk, or index");
    }

    const Eigen::VectorXd& w = ports[chosen].weights;
    std::ofstream out(out_csv);
    if (!out) throw ValidationError("cannot write '" + out_csv + "'");
    out << "date,profit,in_sample\n";
    for (int t = 0; t < pi.prices.rows(); ++t) {
        double profit = 0.0;
        for (int i = 0; i < n; ++i)
            profit += w(i) * (pi.prices(t, i) - pi.prices(0, i)) / pi.prices(0, i);
        out << pi.dates[t] << ',' << detail::g17(profit) << ','
            << (t < pi.in_sample_rows ? 1 : 0) << '\n';
    }
    const ObjectivePair obj = evaluate(pi.instance, ports[chosen]);
    std::printf("evaluate-oos picked point %d (risk=%.6e return=%.6e) over %lld rows -> %s\n",
                chosen, obj.risk, obj.ret, static_cast<long long>(pi.prices.rows()),
                out_csv.c_str());
    return 0;
}

int cmd_make_instance(const std::string& kind, int n, long seed, const std::string& out_path) {
    Instance inst;
    if (kind == "random") inst = random_instance(n, static_cast<std::uint64_t>(seed));
    else if (kind == "market") inst = market_like_instance(n, static_cast<std::uint64_t>(seed));
    else throw ValidationError("kind must be random or market");
    save_orlibrary(inst, out_path);
    std::printf("make-instance kind=%s n=%d seed=%ld -> %s\n", kind.c_str(), n, seed,
                out_path.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Constrained mean-variance portfolio optimization toolkit"};
    app.set_version_flag("--version", version_string);
    app.require_subcommand(1);

    auto* s_run = app.add_subcommand("run", "Execute one optimization run");
    std::string run_config, run_manifest, run_instance, run_split, run_out, run_ref, run_label;
    long run_seed = -1, run_evals = -1;
    int run_workers = 0;
    s_run->add_option("--config", run_config, "key = value config file");
    s_run->add_option("--from-manifest", run_manifest, "reproduce a stored run");
    s_run->add_option("--instance", run_instance, "OR-Library file or price CSV");
    s_run->add_option("--split", run_split, "in-sample cutoff date for price CSVs");
    s_run->add_option("--out", run_out, "output directory");
    s_run->add_option("--reference", run_ref, "reference front CSV (sidecar JSON alongside)");
    s_run->add_option("--seed", run_seed, "override config seed");
    s_run->add_option("--evals", run_evals, "override evaluation cap");
    s_run->add_option("--workers", run_workers, "override worker count");
    s_run->add_option("--label", run_label, "override series label");

    auto* s_ref = app.add_subcommand("reference", "Generate an exact or truncated reference front");
    std::string ref_config, ref_instance, ref_split, ref_method = "enumerate", ref_ucpf,
                ref_out = ".";
    int ref_lambdas = 101, ref_grids = 100;
    s_ref->add_option("--config", ref_config)->required();
    s_ref->add_option("--instance", ref_instance)->required();
    s_ref->add_option("--split", ref_split);
    s_ref->add_option("--method", ref_method, "enumerate | epsilon | truncate");
    s_ref->add_option("--lambdas", ref_lambdas, "weight vectors for enumerate");
    s_ref->add_option("--grids", ref_grids, "grid levels for epsilon");
    s_ref->add_option("--ucpf", ref_ucpf, "unconstrained front CSV for truncate");
    s_ref->add_option("--out", ref_out);

    auto* s_table = app.add_subcommand("table", "Aggregate manifests into a mean/std/rank table");
    std::vector<std::string> table_manifests;
    std::string table_out;
    s_table->add_option("manifests", table_manifests, "manifest JSON files")->required();
    s_table->add_option("--out", table_out, "also write a tidy CSV");

    auto* s_plot = app.add_subcommand("plotdata", "Emit plot-ready CSV from manifests");
    std::vector<std::string> plot_manifests;
    std::string plot_kind = "front", plot_out;
    s_plot->add_option("manifests", plot_manifests)->required();
    s_plot->add_option("--kind", plot_kind, "front | convergence");
    s_plot->add_option("--out", plot_out)->required();

    auto* s_oos = app.add_subcommand("evaluate-oos",
                                     "Apply stored weights to held-out price history");
    std::string oos_prices, oos_split, oos_weights, oos_pick = "max-return", oos_out;
    int oos_index = -1;
    s_oos->add_option("--prices", oos_prices)->required();
    s_oos->add_option("--split", oos_split)->required();
    s_oos->add_option("--weights", oos_weights)->required();
    s_oos->add_option("--pick", oos_pick, "max-return | min-risk | index");
    s_oos->add_option("--index", oos_index, "front point id when --pick index");
    s_oos->add_option("--out", oos_out)->required();

    auto* s_make = app.add_subcommand("make-instance", "Write a synthetic OR-Library instance");
    std::string make_kind = "random", make_out;
    int make_n = 0;
    long make_seed = 1;
    s_make->add_option("--kind", make_kind, "random | market");
    s_make->add_option("--n", make_n)->required();
    s_make->add_option("--seed", make_seed);
    s_make->add_option("--out", make_out)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*s_run) {
            if (run_config.empty() && run_manifest.empty())
                throw ValidationError("run needs --config or --from-manifest");
            return cmd_run(run_config, run_manifest, run_instance, run_split, run_out, run_ref,
                           run_seed, run_evals, run_workers, run_label);
        }
        if (*s_ref)
            return cmd_reference(ref_config, ref_instance, ref_split, ref_method, ref_lambdas,
                                 ref_grids, ref_ucpf, ref_out);
        if (*s_table) return cmd_table(table_manifests, table_out);
        if (*s_plot) return cmd_plotdata(plot_manifests, plot_kind, plot_out);
        if (*s_oos)
            return cmd_evaluate_oos(oos_prices, oos_split, oos_weights, oos_pick, oos_index,
                                    oos_out);
        if (*s_make) return cmd_make_instance(make_kind, make_n, make_seed, make_out);
    } catch (const GuardError& e) {
        std::cerr << "{\"error\":\"guard\",\"message\":\"" << e.what() << "\"}\n";
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "{\"error\":\"validation\",\"message\":\"" << e.what() << "\"}\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "{\"error\":\"internal\",\"message\":\"" << e.what() << "\"}\n";
        return 1;
    }
    return 0;
}
