#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "portopt/instance.hpp"
#include "portopt/rng.hpp"

namespace portopt {

/// Decomposition weights on the 2-simplex plus each subproblem's
/// neighborhood (the T closest weight vectors, itself included).
struct WeightGrid {
    int N = 0;
    int T = 0;
    std::vector<std::array<double, 2>> lambda;   // (l1, l2), l1 ascending
    std::vector<std::vector<int>> neighbors;
};

/// Evenly spaced weights lambda_i = (i/(N-1), 1-i/(N-1)). Neighborhoods are
/// by Euclidean distance with ties going to the lower index.
inline WeightGrid build_grid(int N, int T) {
    if (N < 2) throw ValidationError("build_grid: need at least 2 subproblems");
    if (T < 2 || T > N)
        throw ValidationError("build_grid: neighborhood size must satisfy 2 <= T <= N");
    WeightGrid g;
    g.N = N;
    g.T = T;
    g.lambda.resize(N);
    for (int i = 0; i < N; ++i) {
        const double l1 = static_cast<double>(i) / (N - 1);
        g.lambda[i] = {l1, 1.0 - l1};
    }
    g.neighbors.resize(N);
    std::vector<std::pair<double, int>> by_dist(N);
    for (int i = 0; i < N; ++i) {
        for (int j = 0; j < N; ++j) {
            const double dx = g.lambda[i][0] - g.lambda[j][0];
            const double dy = g.lambda[i][1] - g.lambda[j][1];
            by_dist[j] = {std::sqrt(dx * dx + dy * dy), j};
        }
        std::sort(by_dist.begin(), by_dist.end());
        g.neighbors[i].resize(g.T);
        for (int t = 0; t < g.T; ++t) g.neighbors[i][t] = by_dist[t].second;
    }
    return g;
}

/// Mating/replacement pool for subproblem i: its neighborhood with
/// probability p_delta, otherwise the whole population.
inline std::vector<int> select_pool(Rng& rng, const WeightGrid& grid, int i, double p_delta) {
    if (rng.bernoulli(p_delta)) return grid.neighbors[i];
    std::vector<int> all(grid.N);
    std::iota(all.begin(), all.end(), 0);
    return all;
}

/// Visits the pool in random order and hands each index to `better`; when it
/// returns true, `assign` installs the candidate there. At most n_r
/// replacements are made (pass SIZE_MAX for no cap). Returns the number of
/// slots replaced.
template <class Better, class Assign>
std::size_t replace_in_pool(Rng& rng, const std::vector<int>& pool, std::size_t n_r,
                            Better&& better, Assign&& assign) {
    std::size_t replaced = 0;
    if (n_r == 0) return replaced;
    for (int pi : rng.permutation(pool.size())) {
        const int j = pool[pi];
        if (better(j)) {
            assign(j);
            if (++replaced >= n_r) break;
        }
    }
    return replaced;
}

}  // namespace portopt
