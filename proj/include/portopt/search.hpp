#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "portopt/instance.hpp"
#include "portopt/moead.hpp"
#include "portopt/parallel.hpp"
#include "portopt/portfolio.hpp"
#include "portopt/rng.hpp"
#include "portopt/subsolver.hpp"

namespace portopt {

/// Real-coded selection genotype, one gene per asset, all in [0,1].
using Genotype = Eigen::VectorXd;

/// Assets chosen by a genotype: every pre-assigned asset plus the K-L
/// non-pre-assigned assets with the highest gene values (ties to the lower
/// index). Returns ascending indices.
inline std::vector<int> decode(const Genotype& g, const ConstraintSet& cs) {
    const int n = cs.n();
    if (static_cast<int>(g.size()) != n)
        throw ValidationError("decode: genotype length " + std::to_string(g.size()) +
                              " != n=" + std::to_string(n));
    std::vector<int> sel, rest;
    for (int i = 0; i < n; ++i)
        (cs.pre[i] ? sel : rest).push_back(i);
    std::stable_sort(rest.begin(), rest.end(), [&](int a, int b) { return g(a) > g(b); });
    const int slots = cs.K - static_cast<int>(sel.size());
    sel.insert(sel.end(), rest.begin(), rest.begin() + slots);
    std::sort(sel.begin(), sel.end());
    return sel;
}

/// Knobs for the variation operator.
struct OperatorParams {
    double F = 0.5;
    double eta_m = 20.0;
    double p_m = 0.0;               // per-gene polynomial-mutation probability
    double de_prob = 0.5;           // probability of the DE branch over the swap branch
    const ConstraintSet* cs = nullptr;  // the swap branch decodes against this
};

namespace detail {

inline void polynomial_mutation(Genotype& v, double eta_m, double p_m, Rng& rng) {
    for (Eigen::Index k = 0; k < v.size(); ++k) {
        if (!rng.bernoulli(p_m)) continue;
        const double u = rng.uniform();
        const double y = v(k);
        double dq;
        if (u <= 0.5)
            dq = std::pow(2.0 * u + (1.0 - 2.0 * u) * std::pow(1.0 - y, eta_m + 1.0),
                          1.0 / (eta_m + 1.0)) -
                 1.0;
        else
            dq = 1.0 - std::pow(2.0 * (1.0 - u) +
                                    2.0 * (u - 0.5) * std::pow(y, eta_m + 1.0),
                                1.0 / (eta_m + 1.0));
        v(k) = std::clamp(y + dq, 0.0, 1.0);
    }
}

}  // namespace detail

/// Produces a child genotype. With probability de_prob: DE/rand/1 over the
/// first three parents followed by polynomial mutation. Otherwise: copy of
/// the first parent with the values at one random selected position and one
/// random unselected position (under decode) exchanged.
inline Genotype vary(const std::vector<Genotype>& parents, const OperatorParams& params, Rng& rng) {
    if (parents.empty()) throw ValidationError("vary: no parents");
    if (!params.cs) throw ValidationError("vary: operator params carry no constraint set");
    if (rng.bernoulli(params.de_prob)) {
        if (parents.size() < 3)
            throw ValidationError("vary: DE branch needs 3 parents, got " +
                                  std::to_string(parents.size()));
        Genotype child =
            (parents[0] + params.F * (parents[1] - parents[2])).cwiseMax(0.0).cwiseMin(1.0);
        detail::polynomial_mutation(child, params.eta_m, params.p_m, rng);
        return child;
    }
    Genotype child = parents[0].cwiseMax(0.0).cwiseMin(1.0);
    const std::vector<int> sel = decode(child, *params.cs);
    std::vector<std::uint8_t> in_sel(child.size(), 0);
    for (int i : sel) in_sel[i] = 1;
    std::vector<int> out;
    for (int i = 0; i < static_cast<int>(child.size()); ++i)
        if (!in_sel[i]) out.push_back(i);
    if (out.empty()) return child;  // K = n leaves nothing to swap with
    const int a = sel[rng.index(sel.size())];
    const int b = out[rng.index(out.size())];
    std::swap(child(a), child(b));
    return child;
}

/// How a candidate's scalarized values across neighbor weight vectors are
/// obtained: one exact subtask solve per weight vector, or one solve at the
/// generating weight vector rescored under the others.
enum class EvalMode { per_neighbor, single_solve };

/// A finalized candidate: the decoded selection and, per compared weight
/// vector, the scalarized value g and (in per-neighbor mode) its own exact
/// portfolio.
struct EvaluatedCandidate {
    Genotype genotype;
    std::vector<int> selection;
    bool feasible = true;
    std::string reason;                 // why the selection was infeasible
    std::vector<int> lambda_ids;        // grid subproblem ids compared against
    std::vector<double> g;              // parallel to lambda_ids
    std::vector<SubSolution> solutions; // per lambda_id, or a single entry in single-solve mode
    int generating = -1;                // position of the generating id in lambda_ids

    const SubSolution& solution_at(std::size_t pos) const {
        return solutions.size() == 1 ? solutions[0] : solutions[pos];
    }
};

/// Memo for exact subtask solves keyed by (selection, grid weight id). One
/// run's population revisits the same selections constantly, so this trades
/// bounded memory for skipping repeat branch-and-bound solves.
class SolveCache {
public:
    explicit SolveCache(int grid_size, std::size_t max_selections = 1u << 18)
        : grid_size_(grid_size), cap_(max_selections) {}

    const SubSolution* find(const std::vector<int>& sel, int lambda_id) const {
        auto it = map_.find(key(sel));
        if (it == map_.end() || !it->second.has[lambda_id]) return nullptr;
        return &it->second.sol[lambda_id];
    }
    void store(const std::vector<int>& sel, int lambda_id, const SubSolution& s) {
        auto it = map_.find(key(sel));
        if (it == map_.end()) {
            if (map_.size() >= cap_) return;
            it = map_.emplace(key(sel), Entry{std::vector<std::uint8_t>(grid_size_, 0),
                                              std::vector<SubSolution>(grid_size_)})
                     .first;
        }
        it->second.has[lambda_id] = 1;
        it->second.sol[lambda_id] = s;
    }

private:
    struct Entry {
        std::vector<std::uint8_t> has;
        std::vector<SubSolution> sol;
    };
    static std::string key(const std::vector<int>& sel) {
        std::string k(sel.size() * sizeof(int), '\0');
        std::memcpy(k.data(), sel.data(), k.size());
        return k;
    }
    int grid_size_;
    std::size_t cap_;
    std::unordered_map<std::string, Entry> map_;
};

/// Finalizes one candidate against the given grid subproblems. Per-neighbor
/// mode solves the subtask exactly at every weight vector; single-solve mode
/// solves once at the generating one and rescores. Workers parallelize the
/// per-neighbor solves without affecting the result.
inline EvaluatedCandidate evaluate_candidate(const Genotype& g, const Instance& inst,
                                             const ConstraintSet& cs, const WeightGrid& grid,
                                             const std::vector<int>& lambda_ids, int generating_id,
                                             EvalMode mode, int workers = 1,
                                             SolveCache* cache = nullptr) {
    EvaluatedCandidate cand;
    cand.genotype = g;
    cand.lambda_ids = lambda_ids;
    cand.generating =
        static_cast<int>(std::find(lambda_ids.begin(), lambda_ids.end(), generating_id) -
                         lambda_ids.begin());
    if (cand.generating == static_cast<int>(lambda_ids.size()))
        throw ValidationError("evaluate_candidate: generating id not in lambda list");

    cand.selection = decode(g, cs);
    SubTask task;
    try {
        task = make_subtask(inst, cs, cand.selection);
    } catch (const SubtaskInfeasible& e) {
        cand.feasible = false;
        cand.reason = e.what();
        return cand;
    }

    const std::size_t m = lambda_ids.size();
    cand.g.resize(m);
    if (mode == EvalMode::single_solve) {
        const int id = generating_id;
        SubSolution s;
        if (const SubSolution* hit = cache ? cache->find(cand.selection, id) : nullptr) {
            s = *hit;
        } else {
            s = solve_subtask(task, grid.lambda[id][0], grid.lambda[id][1]);
            if (cache) cache->store(cand.selection, id, s);
        }
        for (std::size_t p = 0; p < m; ++p)
            cand.g[p] = scalarize(grid.lambda[lambda_ids[p]][0], grid.lambda[lambda_ids[p]][1],
                                  s.risk, s.ret);
        cand.solutions.push_back(std::move(s));
        return cand;
    }

    cand.solutions.resize(m);
    std::vector<std::size_t> missing;
    for (std::size_t p = 0; p < m; ++p) {
        if (const SubSolution* hit = cache ? cache->find(cand.selection, lambda_ids[p]) : nullptr)
            cand.solutions[p] = *hit;
        else
            missing.push_back(p);
    }
    detail::parallel_for_indexed(missing.size(), workers, [&](std::size_t k) {
        const int id = lambda_ids[missing[k]];
        cand.solutions[missing[k]] = solve_subtask(task, grid.lambda[id][0], grid.lambda[id][1]);
    });
    if (cache)
        for (std::size_t p : missing) cache->store(cand.selection, lambda_ids[p], cand.solutions[p]);
    for (std::size_t p = 0; p < m; ++p) cand.g[p] = cand.solutions[p].g;
    return cand;
}

/// One subproblem's incumbent.
struct SubproblemState {
    Genotype genotype;
    Portfolio portfolio;
    double risk = 0.0;
    double ret = 0.0;
    double g = 0.0;  // scalarized objectives under this subproblem's weights
};

/// Snapshot taken after each generation.
struct GenerationStat {
    int gen = 0;
    long evals = 0;
    double seconds = 0.0;  // wall time since run start
    std::vector<ObjectivePair> front;  // nondominated population objectives
    std::vector<double> g;             // per-subproblem incumbent scalarizations
};

struct RunConfig {
    int N = 100;
    double F = 0.5;
    double CR = 0.9;   // accepted for parameter-table parity; the operator has no crossover step
    double eta_m = 20.0;
    double p_m = 0.0;  // <= 0 means 1/n
    int T = 10;
    std::size_t n_r = 2;
    double p_delta = 0.9;
    long eval_cap = 1000;
    double time_cap = 0.0;  // wall-clock seconds, 0 disables
    EvalMode mode = EvalMode::per_neighbor;
    std::uint64_t seed = 1;
    int workers = 1;
    std::function<void(const GenerationStat&)> on_generation;
};

struct RunResult {
    std::vector<SubproblemState> population;
    std::vector<SubproblemState> front;  // nondominated members, ascending risk
    std::vector<GenerationStat> trace;
    long evals_used = 0;
    double wall_seconds = 0.0;
    std::uint64_t transcript_hash = 0;  // FNV-1a over the replacement sequence
};

namespace detail {

inline std::vector<SubproblemState> population_front(const std::vector<SubproblemState>& pop) {
    std::vector<ObjectivePair> objs(pop.size());
    for (std::size_t i = 0; i < pop.size(); ++i) objs[i] = {pop[i].risk, pop[i].ret};
    std::vector<SubproblemState> out;
    for (std::size_t i : nondominated_indices(objs)) out.push_back(pop[i]);
    std::sort(out.begin(), out.end(),
              [](const SubproblemState& a, const SubproblemState& b) { return a.risk < b.risk; });
    return out;
}

}  // namespace detail

/// Full optimization run: random initialization, then the
/// mating/evaluating/replacing loop until the evaluation or wall-clock
/// budget runs out. Deterministic for a fixed seed and config.
inline RunResult run(const Instance& inst, const ConstraintSet& cs, const RunConfig& cfg) {
    if (inst.n != cs.n()) throw ValidationError("run: instance and constraints disagree on n");
    if (cfg.eval_cap < 0) throw ValidationError("run: negative evaluation cap");
    const auto t0 = std::chrono::steady_clock::now();
    const WeightGrid grid = build_grid(cfg.N, cfg.T);
    Rng rng(cfg.seed);
    const int n = inst.n;

    OperatorParams op;
    op.F = cfg.F;
    op.eta_m = cfg.eta_m;
    op.p_m = cfg.p_m > 0.0 ? cfg.p_m : 1.0 / n;
    op.cs = &cs;

    SolveCache cache(grid.N);
    RunResult res;
    res.transcript_hash = 1469598103934665603ull;

    // initialization: random genotypes, each scored on its own subproblem
    res.population.resize(grid.N);
    for (int i = 0; i < grid.N; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
            Genotype g(n);
            for (int k = 0; k < n; ++k) g(k) = rng.uniform();
            std::vector<int> sel = decode(g, cs);
            SubTask task;
            try {
                task = make_subtask(inst, cs, sel);
            } catch (const SubtaskInfeasible&) {
                continue;
            }
            SubSolution s;
            if (const SubSolution* hit = cache.find(sel, i)) {
                s = *hit;
            } else {
                s = solve_subtask(task, grid.lambda[i][0], grid.lambda[i][1]);
                cache.store(sel, i, s);
            }
            SubproblemState& st = res.population[i];
            st.genotype = std::move(g);
            st.portfolio = expand(task, s, n);
            st.risk = s.risk;
            st.ret = s.ret;
            st.g = s.g;
            placed = true;
        }
        if (!placed)
            throw ValidationError("run: could not draw a feasible initial genotype for subproblem " +
                                  std::to_string(i));
    }

    auto out_of_time = [&] {
        if (cfg.time_cap <= 0.0) return false;
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() >=
               cfg.time_cap;
    };
    auto record_generation = [&](int gen) {
        GenerationStat stat;
        stat.gen = gen;
        stat.evals = res.evals_used;
        stat.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::vector<ObjectivePair> objs(res.population.size());
        stat.g.resize(res.population.size());
        for (std::size_t i = 0; i < res.population.size(); ++i) {
            objs[i] = {res.population[i].risk, res.population[i].ret};
            stat.g[i] = res.population[i].g;
        }
        stat.front = nondominated_front(std::move(objs));
        if (cfg.on_generation) cfg.on_generation(stat);
        res.trace.push_back(std::move(stat));
    };
    record_generation(0);

    bool stop = cfg.eval_cap == 0 || out_of_time();
    for (int gen = 1; !stop; ++gen) {
        for (int i = 0; i < grid.N; ++i) {
            if (res.evals_used >= cfg.eval_cap || out_of_time()) {
                stop = true;
                break;
            }
            const std::vector<int> pool = select_pool(rng, grid, i, cfg.p_delta);
            const int jb = pool[rng.index(pool.size())];
            int jc = pool[rng.index(pool.size())];
            while (jc == jb) jc = pool[rng.index(pool.size())];
            const std::vector<Genotype> parents = {res.population[i].genotype,
                                                   res.population[jb].genotype,
                                                   res.population[jc].genotype};
            const Genotype child = vary(parents, op, rng);
            EvaluatedCandidate cand = evaluate_candidate(child, inst, cs, grid, pool, i, cfg.mode,
                                                         cfg.workers, &cache);
            ++res.evals_used;
            if (!cand.feasible) continue;

            replace_in_pool(
                rng, pool, cfg.n_r,
                [&](int j) {
                    const std::size_t pos =
                        std::find(pool.begin(), pool.end(), j) - pool.begin();
                    return cand.g[pos] < res.population[j].g;
                },
                [&](int j) {
                    const std::size_t pos =
                        std::find(pool.begin(), pool.end(), j) - pool.begin();
                    const SubSolution& s = cand.solution_at(pos);
                    SubproblemState& st = res.population[j];
                    st.genotype = child;
                    st.portfolio.selection = cand.selection;
                    st.portfolio.weights = Eigen::VectorXd::Zero(n);
                    for (int a = 0; a < cs.K; ++a)
                        st.portfolio.weights(cand.selection[a]) = s.w(a);
                    st.risk = s.risk;
                    st.ret = s.ret;
                    st.g = cand.g[pos];
                    detail::fnv1a_mix(res.transcript_hash, &i, sizeof(i));
                    detail::fnv1a_mix(res.transcript_hash, &j, sizeof(j));
                    detail::fnv1a_mix(res.transcript_hash, &st.g, sizeof(st.g));
                });
        }
        if (!stop || res.evals_used > res.trace.back().evals) record_generation(gen);
        if (res.evals_used >= cfg.eval_cap) stop = true;
    }

    res.front = detail::population_front(res.population);
    res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

}  // namespace portopt
