#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "portopt/oracle.hpp"
#include "portopt/portfolio.hpp"

namespace portopt {

/// Normalization bounds and reference point shared by every metric
/// evaluation against one reference front. Objectives are the minimization
/// pair (risk, -return).
struct MetricContext {
    std::array<double, 2> ideal{};
    std::array<double, 2> nadir{};
    std::array<double, 2> r{1.1, 1.1};
    std::vector<std::array<double, 2>> ref_normalized;  // the reference front itself
    std::uint64_t fingerprint = 0;
};

struct MetricReport {
    double hv = 0.0;
    double gd = 0.0;
    std::size_t count = 0;     // |Q|
    bool empty_input = false;  // GD was defined as 0 because Q was empty
};

namespace detail {

inline std::array<double, 2> as_min_pair(const ObjectivePair& p) { return {p.risk, -p.ret}; }

}  // namespace detail

/// Maps objective pairs into [0,1]^2 using the context bounds (values
/// outside the reference range land outside [0,1]).
inline std::vector<std::array<double, 2>> normalize(const std::vector<ObjectivePair>& pts,
                                                    const MetricContext& ctx) {
    std::vector<std::array<double, 2>> out(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto p = detail::as_min_pair(pts[i]);
        for (int c = 0; c < 2; ++c) {
            const double span = ctx.nadir[c] - ctx.ideal[c];
            out[i][c] = span > 0.0 ? (p[c] - ctx.ideal[c]) / span : 0.0;
        }
    }
    return out;
}

inline MetricContext make_context(const ReferenceFront& ref) {
    if (ref.points.empty()) throw ValidationError("make_context: empty reference front");
    MetricContext ctx;
    ctx.fingerprint = ref.fingerprint;
    for (int c = 0; c < 2; ++c) {
        ctx.ideal[c] = std::numeric_limits<double>::infinity();
        ctx.nadir[c] = -std::numeric_limits<double>::infinity();
    }
    for (const auto& pt : ref.points) {
        const auto p = detail::as_min_pair(pt);
        for (int c = 0; c < 2; ++c) {
            ctx.ideal[c] = std::min(ctx.ideal[c], p[c]);
            ctx.nadir[c] = std::max(ctx.nadir[c], p[c]);
        }
    }
    ctx.ref_normalized = normalize(ref.points, ctx);
    return ctx;
}

/// Exact 2-objective hypervolume dominated by `pts` up to the reference
/// point r (minimization; points beyond r contribute nothing).
inline double hypervolume(const std::vector<std::array<double, 2>>& pts,
                          const std::array<double, 2>& r) {
    std::vector<std::array<double, 2>> q;
    for (const auto& p : pts)
        if (p[0] <= r[0] && p[1] <= r[1]) q.push_back(p);
    if (q.empty()) return 0.0;
    std::sort(q.begin(), q.end());
    double hv = 0.0;
    double best_f2 = std::numeric_limits<double>::infinity();
    std::vector<std::array<double, 2>> stair;
    for (const auto& p : q) {
        if (p[1] < best_f2) {
            stair.push_back(p);
            best_f2 = p[1];
        }
    }
    for (std::size_t i = 0; i < stair.size(); ++i) {
        const double next_f1 = i + 1 < stair.size() ? stair[i + 1][0] : r[0];
        hv += (next_f1 - stair[i][0]) * (r[1] - stair[i][1]);
    }
    return hv;
}

/// Generational distance, canonical p=2 form: sqrt(sum of squared nearest
/// distances) / |Q|. Empty Q is defined as 0 (callers can check the flag in
/// MetricReport).
inline double gd(const std::vector<std::array<double, 2>>& pts,
                 const std::vector<std::array<double, 2>>& ref) {
    if (ref.empty()) throw ValidationError("gd: empty reference front");
    if (pts.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& p : pts) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& q : ref) {
            const double dx = p[0] - q[0], dy = p[1] - q[1];
            best = std::min(best, dx * dx + dy * dy);
        }
        acc += best;
    }
    return std::sqrt(acc) / static_cast<double>(pts.size());
}

/// HV and GD of a front under one context.
inline MetricReport evaluate_metrics(const std::vector<ObjectivePair>& front,
                                     const MetricContext& ctx) {
    MetricReport rep;
    rep.count = front.size();
    rep.empty_input = front.empty();
    const auto norm = normalize(front, ctx);
    rep.hv = hypervolume(norm, ctx.r);
    rep.gd = gd(norm, ctx.ref_normalized);
    return rep;
}

}  // namespace portopt
