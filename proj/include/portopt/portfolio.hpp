#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "portopt/instance.hpp"

namespace portopt {

/// One point in objective space. Risk is minimized, return is maximized.
struct ObjectivePair {
    double risk = 0.0;
    double ret = 0.0;
};

/// a dominates b in the (min risk, max return) sense.
inline bool dominates(const ObjectivePair& a, const ObjectivePair& b) {
    return a.risk <= b.risk && a.ret >= b.ret && (a.risk < b.risk || a.ret > b.ret);
}

/// A concrete portfolio: chosen assets (sorted, 0-based) and the full-length
/// weight vector (zero outside the selection).
struct Portfolio {
    std::vector<int> selection;
    Eigen::VectorXd weights;
};

inline ObjectivePair evaluate(const Instance& inst, const Portfolio& p) {
    ObjectivePair o;
    o.risk = p.weights.dot(inst.cov * p.weights);
    o.ret = inst.mu.dot(p.weights);
    return o;
}

// ---------------------------------------------------------------------------
// Feasibility
// ---------------------------------------------------------------------------

inline constexpr double kSumTolerance = 1e-9;
inline constexpr double kLotTolerance = 1e-6;

/// Outcome of a constraint check. Each violated constraint contributes one
/// entry, prefixed with its kind (cardinality, pre-assignment,
/// floor/ceiling, round-lot, sum-to-one, binary); an empty list means
/// feasible.
struct FeasibilityReport {
    std::vector<std::string> violations;
    bool feasible() const { return violations.empty(); }
};

inline FeasibilityReport check_feasible(const ConstraintSet& cs, const Portfolio& p) {
    FeasibilityReport rep;
    auto add = [&](std::string why) { rep.violations.push_back(std::move(why)); };
    const int n = cs.n();
    if (static_cast<int>(p.weights.size()) != n) {
        add("binary: weight vector has wrong length");
        return rep;
    }
    std::vector<std::uint8_t> in_sel(n, 0);
    for (int i : p.selection) {
        if (i < 0 || i >= n) {
            add("binary: selection index " + std::to_string(i) + " out of range");
            return rep;
        }
        if (in_sel[i]) {
            add("binary: duplicate asset " + std::to_string(i) + " in selection");
            return rep;
        }
        in_sel[i] = 1;
    }

    if (static_cast<int>(p.selection.size()) != cs.K)
        add("cardinality: " + std::to_string(p.selection.size()) + " assets selected, K=" +
            std::to_string(cs.K));
    for (int i = 0; i < n; ++i)
        if (cs.pre[i] && !in_sel[i])
            add("pre-assignment: asset " + std::to_string(i) + " missing from selection");

    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const double w = p.weights(i);
        if (in_sel[i]) {
            if (w < cs.floor_(i) - kSumTolerance || w > cs.ceiling_(i) + kSumTolerance)
                add("floor/ceiling: weight " + std::to_string(w) + " of asset " +
                    std::to_string(i) + " outside bounds");
            if (cs.has_lots()) {
                const double lots = w / cs.tau;
                if (std::abs(lots - std::round(lots)) > kLotTolerance)
                    add("round-lot: weight of asset " + std::to_string(i) +
                        " is not a lot multiple");
            }
        } else if (w != 0.0) {
            add("binary: nonzero weight on unselected asset " + std::to_string(i));
        }
        sum += w;
    }
    if (std::abs(sum - 1.0) > kSumTolerance)
        add("sum-to-one: weights sum to " + std::to_string(sum));
    return rep;
}

// ---------------------------------------------------------------------------
// Nondominated utilities
// ---------------------------------------------------------------------------

/// Indices of the nondominated subset in canonical order (ascending risk,
/// strictly increasing return). Exact duplicates keep the first occurrence.
inline std::vector<std::size_t> nondominated_indices(const std::vector<ObjectivePair>& pts) {
    std::vector<std::size_t> idx(pts.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (pts[a].risk != pts[b].risk) return pts[a].risk < pts[b].risk;
        return pts[a].ret > pts[b].ret;
    });
    std::vector<std::size_t> keep;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i : idx) {
        if (pts[i].ret > best) {
            keep.push_back(i);
            best = pts[i].ret;
        }
    }
    return keep;
}

/// Reduces to the nondominated subset in canonical order.
inline std::vector<ObjectivePair> nondominated_front(const std::vector<ObjectivePair>& pts) {
    std::vector<ObjectivePair> out;
    out.reserve(pts.size());
    for (std::size_t i : nondominated_indices(pts)) out.push_back(pts[i]);
    return out;
}

}  // namespace portopt
