#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "portopt/instance.hpp"
#include "portopt/parallel.hpp"
#include "portopt/portfolio.hpp"
#include "portopt/subsolver.hpp"

namespace portopt {

inline constexpr double kSubsetGuard = 1e6;    // max K-subsets for exact oracles
inline constexpr double kLatticeGuard = 2e7;   // max lot-lattice points across subsets
inline constexpr double kObjectiveTol = 1e-9;  // oracle cross-check tolerance

enum class Provenance { enumeration, epsilon_constraint, long_run_union, tucpf };

inline const char* provenance_name(Provenance p) {
    switch (p) {
        case Provenance::enumeration: return "enumeration";
        case Provenance::epsilon_constraint: return "epsilon-constraint";
        case Provenance::long_run_union: return "long-run-union";
        case Provenance::tucpf: return "TUCPF";
    }
    return "?";
}

/// A ground-truth (or stand-in) frontier: canonical nondominated points,
/// tagged with how they were produced and for which instance + constraints.
struct ReferenceFront {
    std::vector<ObjectivePair> points;   // ascending risk, ascending return
    std::vector<Portfolio> portfolios;   // parallel to points; may be empty when loaded
    Provenance provenance = Provenance::enumeration;
    std::uint64_t fingerprint = 0;
    std::string instance_name;
};

/// Builds a canonical ReferenceFront from raw evaluated points (reduces to
/// the nondominated subset, keeps portfolios aligned).
inline ReferenceFront make_reference(std::vector<ObjectivePair> pts, std::vector<Portfolio> ports,
                                     Provenance prov, std::uint64_t fp, std::string name) {
    if (!ports.empty() && ports.size() != pts.size())
        throw ValidationError("make_reference: portfolio list does not match point list");
    ReferenceFront rf;
    rf.provenance = prov;
    rf.fingerprint = fp;
    rf.instance_name = std::move(name);
    for (std::size_t i : nondominated_indices(pts)) {
        rf.points.push_back(pts[i]);
        if (!ports.empty()) rf.portfolios.push_back(std::move(ports[i]));
    }
    return rf;
}

/// Uniform weight sweep (m points from (0,1) to (1,0)).
inline std::vector<std::array<double, 2>> uniform_lambda_grid(int m) {
    if (m < 1) throw ValidationError("uniform_lambda_grid: need at least 1 weight vector");
    std::vector<std::array<double, 2>> grid;
    if (m == 1) {
        grid.push_back({0.5, 0.5});
        return grid;
    }
    for (int i = 0; i < m; ++i) {
        const double l1 = static_cast<double>(i) / (m - 1);
        grid.push_back({l1, 1.0 - l1});
    }
    return grid;
}

namespace detail {

inline double binomial(int a, int b) {
    if (b < 0 || b > a) return 0.0;
    b = std::min(b, a - b);
    double r = 1.0;
    for (int t = 1; t <= b; ++t) {
        r = r * (a - b + t) / t;
        if (r > 1e15) return r;
    }
    return r;
}

// All K-subsets containing the pre-assigned assets, ascending, in
// lexicographic order of the free positions. fn may return false to stop.
template <class Fn>
void for_each_selection(const ConstraintSet& cs, Fn&& fn) {
    std::vector<int> pre, free_idx;
    for (int i = 0; i < cs.n(); ++i)
        (cs.pre[i] ? pre : free_idx).push_back(i);
    const int m = cs.K - static_cast<int>(pre.size());
    std::vector<int> pick(m);
    for (int t = 0; t < m; ++t) pick[t] = t;
    const int f = static_cast<int>(free_idx.size());
    std::vector<int> sel;
    while (true) {
        sel = pre;
        for (int t = 0; t < m; ++t) sel.push_back(free_idx[pick[t]]);
        std::sort(sel.begin(), sel.end());
        if (!fn(sel)) return;
        if (m == 0) return;
        int t = m - 1;
        while (t >= 0 && pick[t] == f - m + t) --t;
        if (t < 0) return;
        ++pick[t];
        for (int u = t + 1; u < m; ++u) pick[u] = pick[u - 1] + 1;
    }
}

inline void check_subset_guard(const ConstraintSet& cs, const char* who) {
    const int L = cs.preassigned_count();
    const double count = binomial(cs.n() - L, cs.K - L);
    if (count > kSubsetGuard)
        throw GuardError(std::string(who) + ": " + std::to_string(count) +
                         " candidate selections exceed the enumeration guard of 1e6");
}

}  // namespace detail

/// Brute-force frontier: every feasible K-subset crossed with every weight
/// vector, solved exactly, reduced to the nondominated set.
inline ReferenceFront enumerate_front(const Instance& inst, const ConstraintSet& cs,
                                      const std::vector<std::array<double, 2>>& lambda_grid,
                                      int workers = 1) {
    if (inst.n != cs.n())
        throw ValidationError("enumerate_front: instance and constraints disagree on n");
    if (lambda_grid.empty()) throw ValidationError("enumerate_front: empty weight grid");
    detail::check_subset_guard(cs, "enumerate_front");

    std::vector<std::vector<int>> subsets;
    detail::for_each_selection(cs, [&](const std::vector<int>& sel) {
        subsets.push_back(sel);
        return true;
    });

    struct Slot {
        std::vector<ObjectivePair> pts;
        std::vector<Portfolio> ports;
    };
    std::vector<Slot> slots(subsets.size());
    detail::parallel_for_indexed(subsets.size(), workers, [&](std::size_t si) {
        SubTask task;
        try {
            task = make_subtask(inst, cs, subsets[si]);
        } catch (const SubtaskInfeasible&) {
            return;
        }
        std::vector<ObjectivePair> pts;
        std::vector<Portfolio> ports;
        for (const auto& l : lambda_grid) {
            const SubSolution s = solve_subtask(task, l[0], l[1]);
            pts.push_back({s.risk, s.ret});
            ports.push_back(expand(task, s, inst.n));
        }
        // thin out within the subset before the global merge
        Slot& slot = slots[si];
        for (std::size_t i : nondominated_indices(pts)) {
            slot.pts.push_back(pts[i]);
            slot.ports.push_back(std::move(ports[i]));
        }
    });

    std::vector<ObjectivePair> pts;
    std::vector<Portfolio> ports;
    for (auto& slot : slots) {
        pts.insert(pts.end(), slot.pts.begin(), slot.pts.end());
        for (auto& p : slot.ports) ports.push_back(std::move(p));
    }
    return make_reference(std::move(pts), std::move(ports), Provenance::enumeration,
                          fingerprint(inst, cs), inst.name);
}

namespace detail {

// Visits every lot allocation of the subtask: fn(lots, risk, ret). Keeps a
// running objective so each leaf costs O(K). Throws past the lattice guard.
template <class Fn>
void for_each_lattice_point(const SubTask& t, double& visited, Fn&& fn) {
    const int K = t.K;
    std::vector<long long> min_rest(K + 1, 0), max_rest(K + 1, 0);
    for (int a = K - 1; a >= 0; --a) {
        min_rest[a] = min_rest[a + 1] + t.lot_lo(a);
        max_rest[a] = max_rest[a + 1] + t.lot_hi(a);
    }
    Eigen::VectorXi lots(K);
    Eigen::VectorXd w(K);

    auto rec = [&](auto&& self, int a, long long remaining, double risk, double ret) -> void {
        if (a == K) {
            if (remaining != 0) return;
            if (++visited > kLatticeGuard)
                throw GuardError("lot-lattice enumeration exceeded the guard of 2e7 points");
            fn(lots, risk, ret);
            return;
        }
        const long long lo =
            std::max<long long>(t.lot_lo(a), remaining - max_rest[a + 1]);
        const long long hi = std::min<long long>(t.lot_hi(a), remaining - min_rest[a + 1]);
        for (long long v = lo; v <= hi; ++v) {
            lots(a) = static_cast<int>(v);
            const double wa = t.tau * static_cast<double>(v);
            w(a) = wa;
            double cross = 0.0;
            for (int b = 0; b < a; ++b) cross += t.cov(a, b) * w(b);
            const double risk2 = risk + t.cov(a, a) * wa * wa + 2.0 * wa * cross;
            const double ret2 = ret + t.mu(a) * wa;
            self(self, a + 1, remaining - v, risk2, ret2);
        }
    };
    rec(rec, 0, t.total_lots, 0.0, 0.0);
}

}  // namespace detail

/// Epsilon-constraint frontier for round-lot instances: a grid of return
/// floors over the achievable range; each level keeps the exact minimum-risk
/// portfolio with return at or above it. Exactness comes from full subset +
/// lattice enumeration, so the guards apply.
inline ReferenceFront epsilon_constraint_front(const Instance& inst, const ConstraintSet& cs,
                                               int grids) {
    if (inst.n != cs.n())
        throw ValidationError("epsilon_constraint_front: instance and constraints disagree on n");
    if (grids < 1) throw ValidationError("epsilon_constraint_front: grids must be >= 1");
    if (!cs.has_lots())
        throw ValidationError(
            "epsilon_constraint_front: requires a round-lot constraint (tau > 0); use "
            "enumerate_front for continuous instances");
    detail::check_subset_guard(cs, "epsilon_constraint_front");

    // pass 1: achievable return range from the constraint-respecting extremes
    double min_risk = std::numeric_limits<double>::infinity();
    double ret_min = 0.0, ret_max = -std::numeric_limits<double>::infinity();
    detail::for_each_selection(cs, [&](const std::vector<int>& sel) {
        SubTask task;
        try {
            task = make_subtask(inst, cs, sel);
        } catch (const SubtaskInfeasible&) {
            return true;
        }
        const SubSolution low = solve_lot(task, 1.0, 0.0);
        if (low.risk < min_risk) {
            min_risk = low.risk;
            ret_min = low.ret;
        }
        const SubSolution high = solve_lot(task, 0.0, 1.0);
        ret_max = std::max(ret_max, high.ret);
        return true;
    });
    if (std::isinf(min_risk))
        throw ValidationError("epsilon_constraint_front: no feasible selection");

    const double step = grids > 1 ? (ret_max - ret_min) / (grids - 1) : 0.0;

    struct Bucket {
        double risk = std::numeric_limits<double>::infinity();
        double ret = 0.0;
        Eigen::VectorXi lots;
        std::vector<int> sel;
    };
    std::vector<Bucket> buckets(grids);

    // pass 2: sweep the lot lattice once; each point lands in the highest
    // grid level whose floor it clears, then a suffix pass spreads the best
    // risks down to lower levels
    double visited = 0.0;
    detail::for_each_selection(cs, [&](const std::vector<int>& sel) {
        SubTask task;
        try {
            task = make_subtask(inst, cs, sel);
        } catch (const SubtaskInfeasible&) {
            return true;
        }
        detail::for_each_lattice_point(task, visited,
                                       [&](const Eigen::VectorXi& lots, double risk, double ret) {
            int k;
            if (step > 0.0) {
                k = static_cast<int>(std::floor((ret - ret_min) / step));
                k = std::min(k, grids - 1);
                while (k + 1 < grids && ret_min + (k + 1) * step <= ret + 1e-12) ++k;
                while (k >= 0 && ret_min + k * step > ret + 1e-12) --k;
            } else {
                k = ret >= ret_min - 1e-12 ? 0 : -1;
            }
            if (k < 0) return;
            if (risk < buckets[k].risk) {
                buckets[k].risk = risk;
                buckets[k].ret = ret;
                buckets[k].lots = lots;
                buckets[k].sel = sel;
            }
        });
        return true;
    });
    for (int k = grids - 2; k >= 0; --k)
        if (buckets[k + 1].risk < buckets[k].risk) buckets[k] = buckets[k + 1];

    std::vector<ObjectivePair> pts;
    std::vector<Portfolio> ports;
    for (const Bucket& b : buckets) {
        if (std::isinf(b.risk)) continue;  // unreachable level, skipped
        pts.push_back({b.risk, b.ret});
        Portfolio p;
        p.selection = b.sel;
        p.weights = Eigen::VectorXd::Zero(inst.n);
        for (std::size_t a = 0; a < b.sel.size(); ++a)
            p.weights(b.sel[a]) = cs.tau * b.lots(static_cast<int>(a));
        ports.push_back(std::move(p));
    }
    return make_reference(std::move(pts), std::move(ports), Provenance::epsilon_constraint,
                          fingerprint(inst, cs), inst.name);
}

/// Highest-return feasible portfolio. Exact (enumeration) when the subset
/// guard allows; otherwise greedy top-K by expected return with bound
/// filling, which is what large-instance truncation uses.
inline Portfolio max_return_portfolio(const Instance& inst, const ConstraintSet& cs) {
    if (inst.n != cs.n())
        throw ValidationError("max_return_portfolio: instance and constraints disagree on n");
    const int L = cs.preassigned_count();
    if (detail::binomial(inst.n - L, cs.K - L) <= kSubsetGuard) {
        double best = -std::numeric_limits<double>::infinity();
        Portfolio out;
        detail::for_each_selection(cs, [&](const std::vector<int>& sel) {
            SubTask task;
            try {
                task = make_subtask(inst, cs, sel);
            } catch (const SubtaskInfeasible&) {
                return true;
            }
            const SubSolution s = solve_subtask(task, 0.0, 1.0);
            if (s.ret > best) {
                best = s.ret;
                out = expand(task, s, inst.n);
            }
            return true;
        });
        if (std::isinf(best)) throw ValidationError("max_return_portfolio: no feasible selection");
        return out;
    }
    std::vector<int> sel, rest;
    for (int i = 0; i < inst.n; ++i)
        (cs.pre[i] ? sel : rest).push_back(i);
    std::stable_sort(rest.begin(), rest.end(), [&](int a, int b) { return inst.mu(a) > inst.mu(b); });
    sel.insert(sel.end(), rest.begin(), rest.begin() + (cs.K - L));
    std::sort(sel.begin(), sel.end());
    const SubTask task = make_subtask(inst, cs, sel);
    return expand(task, solve_subtask(task, 0.0, 1.0), inst.n);
}

/// Truncates an unconstrained front at the maximum return achievable under
/// the constraint set.
inline ReferenceFront truncate_ucpf(const ReferenceFront& ucpf, const Instance& inst,
                                    const ConstraintSet& cs) {
    const Portfolio mx = max_return_portfolio(inst, cs);
    const double cutoff = evaluate(inst, mx).ret + 1e-12;
    ReferenceFront out;
    out.provenance = Provenance::tucpf;
    out.fingerprint = fingerprint(inst, cs);
    out.instance_name = ucpf.instance_name;
    for (std::size_t i = 0; i < ucpf.points.size(); ++i) {
        if (ucpf.points[i].ret > cutoff) continue;
        out.points.push_back(ucpf.points[i]);
        if (!ucpf.portfolios.empty()) out.portfolios.push_back(ucpf.portfolios[i]);
    }
    return out;
}

}  // namespace portopt
