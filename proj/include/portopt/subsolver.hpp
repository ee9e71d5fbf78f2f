#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include "portopt/instance.hpp"
#include "portopt/portfolio.hpp"

namespace portopt {

/// Raised when a particular asset selection admits no feasible weighting.
struct SubtaskInfeasible : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr double kPsdRejectTol = 1e-8;   // reject below -this, repair above
inline constexpr double kPruneMargin = 1e-12;   // branch-and-bound pruning slack
inline constexpr double kIntegralTol = 1e-9;    // relaxation counts as integral

///// Weighting problem restricted to one asset selection: minimize
/// l1*w'Cw - l2*mu'w over sum(w)=1, lo<=w<=hi, optionally w on the tau lattice.
struct SubTask {
    int K = 0;
    Eigen::MatrixXd cov;          // K x K, positive semidefinite after repair
    Eigen::VectorXd mu;           // K
    Eigen::VectorXd lo, hi;       // continuous bounds for the chosen assets
    double tau = 0.0;
    Eigen::VectorXi lot_lo, lot_hi;
    int total_lots = 0;
    std::vector<int> selection;   // original asset indices, ascending
};

/// Exact optimum of one subtask at a fixed weight vector (l1, l2).
struct SubSolution {
    Eigen::VectorXd w;
    Eigen::VectorXi lots;  // empty unless the task has a lot size
    double g = 0.0;
    double risk = 0.0;
    double ret = 0.0;
    long bnb_nodes = 0;
};

inline double scalarize(double l1, double l2, double risk, double ret) {
    return l1 * risk - l2 * ret;
}

/// Extracts the reduced problem for one selection. Repairs slightly
/// indefinite covariance blocks (minimum eigenvalue in (-1e-8, 0)) by a
/// diagonal shift; anything worse is rejected.
inline SubTask make_subtask(const Instance& inst, const ConstraintSet& cs,
                            std::vector<int> selection) {
    if (inst.n != cs.n())
        throw ValidationError("make_subtask: instance and constraints disagree on n");
    if (static_cast<int>(selection.size()) != cs.K)
        throw ValidationError("make_subtask: selection size " + std::to_string(selection.size()) +
                              " != K=" + std::to_string(cs.K));
    std::sort(selection.begin(), selection.end());
    for (std::size_t k = 0; k < selection.size(); ++k) {
        const int i = selection[k];
        if (i < 0 || i >= inst.n)
            throw ValidationError("make_subtask: asset index " + std::to_string(i) + " out of range");
        if (k > 0 && selection[k] == selection[k - 1])
            throw ValidationError("make_subtask: duplicate asset " + std::to_string(i));
    }
    for (int i = 0; i < cs.n(); ++i)
        if (cs.pre[i] && !std::binary_search(selection.begin(), selection.end(), i))
            throw SubtaskInfeasible("selection misses pre-assigned asset " + std::to_string(i));

    SubTask t;
    t.K = cs.K;
    t.selection = std::move(selection);
    t.cov.resize(t.K, t.K);
    t.mu.resize(t.K);
    t.lo.resize(t.K);
    t.hi.resize(t.K);
    for (int a = 0; a < t.K; ++a) {
        const int i = t.selection[a];
        t.mu(a) = inst.mu(i);
        t.lo(a) = cs.floor_(i);
        t.hi(a) = cs.ceiling_(i);
        for (int b = 0; b < t.K; ++b) t.cov(a, b) = inst.cov(i, t.selection[b]);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t.cov, Eigen::EigenvaluesOnly);
    const double min_eig = es.eigenvalues().minCoeff();
    if (min_eig < -kPsdRejectTol)
        throw ValidationError("make_subtask: covariance block is indefinite (min eigenvalue " +
                              std::to_string(min_eig) + ")");
    if (min_eig < 0.0) t.cov.diagonal().array() += -min_eig;

    t.tau = cs.tau;
    if (cs.has_lots()) {
        t.total_lots = cs.total_lots();
        t.lot_lo.resize(t.K);
        t.lot_hi.resize(t.K);
        long long lo_sum = 0, hi_sum = 0;
        for (int a = 0; a < t.K; ++a) {
            t.lot_lo(a) = cs.lot_floor(t.selection[a]);
            t.lot_hi(a) = cs.lot_ceiling(t.selection[a]);
            lo_sum += t.lot_lo(a);
            hi_sum += t.lot_hi(a);
        }
        if (lo_sum > t.total_lots || hi_sum < t.total_lots)
            throw SubtaskInfeasible("selection admits no full lot allocation");
    } else if (t.lo.sum() > 1.0 + kSumTolerance || t.hi.sum() < 1.0 - kSumTolerance) {
        throw SubtaskInfeasible("selection admits no weighting that sums to 1");
    }
    return t;
}

namespace detail {

// Assets sorted by descending expected return; ties go to the lower index.
inline std::vector<int> return_order(const Eigen::VectorXd& mu) {
    std::vector<int> order(mu.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return mu(a) > mu(b); });
    return order;
}

// Exact minimizer of l1*w'Qw - l2*mu'w over {sum(w)=1, lo<=w<=hi} by a
// primal active-set method. Q must be positive semidefinite; singular
// blocks are handled through least-squares KKT solves and, when the
// reduced system is inconsistent, a walk along a kernel ray of Q.
inline Eigen::VectorXd solve_box_qp(const Eigen::MatrixXd& Q, const Eigen::VectorXd& mu,
                                    const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                                    double l1, double l2) {
    const int K = static_cast<int>(mu.size());
    const double lo_sum = lo.sum(), hi_sum = hi.sum();
    if (lo_sum > 1.0 + kSumTolerance || hi_sum < 1.0 - kSumTolerance)
        throw SubtaskInfeasible("box does not intersect the budget plane");

    // start at the greedy vertex: floors everywhere, then pour the slack by
    // descending expected return
    Eigen::VectorXd w = lo;
    double slack = 1.0 - lo_sum;
    for (int idx : return_order(mu)) {
        const double add = std::min(hi(idx) - lo(idx), slack);
        w(idx) += add;
        slack -= add;
        if (slack <= 0.0) break;
    }
    if (l1 == 0.0) return w;  // linear objective: the greedy vertex is optimal

    const double act_tol = 1e-10;
    const double mult_tol = 1e-10;
    // -1 at lower bound, +1 at upper, 0 free, 2 pinned (lo == hi)
    std::vector<int> state(K, 0);
    for (int i = 0; i < K; ++i) {
        if (hi(i) - lo(i) <= act_tol) {
            state[i] = 2;
            w(i) = lo(i);
        } else if (w(i) <= lo(i) + act_tol) {
            state[i] = -1;
            w(i) = lo(i);
        } else if (w(i) >= hi(i) - act_tol) {
            state[i] = 1;
            w(i) = hi(i);
        }
    }

    const int max_iter = 120 + 40 * K;
    for (int iter = 0; iter < max_iter; ++iter) {
        std::vector<int> F;
        for (int i = 0; i < K; ++i)
            if (state[i] == 0) F.push_back(i);
        const int f = static_cast<int>(F.size());

        bool subspace_stationary = true;
        if (f > 0) {
            // KKT system of the equality-constrained problem on the free set
            Eigen::MatrixXd M = Eigen::MatrixXd::Zero(f + 1, f + 1);
            Eigen::VectorXd b(f + 1);
            double fixed_sum = 0.0;
            for (int i = 0; i < K; ++i)
                if (state[i] != 0) fixed_sum += w(i);
            for (int a = 0; a < f; ++a) {
                for (int c = 0; c < f; ++c) M(a, c) = 2.0 * l1 * Q(F[a], F[c]);
                M(a, f) = M(f, a) = 1.0;
                double cross = 0.0;
                for (int i = 0; i < K; ++i)
                    if (state[i] != 0) cross += Q(F[a], i) * w(i);
                b(a) = l2 * mu(F[a]) - 2.0 * l1 * cross;
            }
            b(f) = 1.0 - fixed_sum;

            Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(M);
            Eigen::VectorXd z = cod.solve(b);
            const double resid = (M * z - b).lpNorm<Eigen::Infinity>();
            const double ctol = 1e-9 * std::max(1.0, b.lpNorm<Eigen::Infinity>());

            Eigen::VectorXd d(f);
            if (resid <= ctol) {
                for (int a = 0; a < f; ++a) d(a) = z(a) - w(F[a]);
            } else {
                // inconsistent system: the objective is linear along some
                // kernel ray of Q restricted to the free set; follow the ray
                // that raises mu'w until a bound blocks it
                Eigen::MatrixXd Qff(f, f);
                for (int a = 0; a < f; ++a)
                    for (int c = 0; c < f; ++c) Qff(a, c) = Q(F[a], F[c]);
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Qff);
                const double keps = 1e-12 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
                Eigen::VectorXd muF(f), ones = Eigen::VectorXd::Ones(f);
                for (int a = 0; a < f; ++a) muF(a) = mu(F[a]);
                Eigen::VectorXd p = Eigen::VectorXd::Zero(f);
                Eigen::VectorXd u = Eigen::VectorXd::Zero(f);
                for (int c = 0; c < f; ++c) {
                    if (es.eigenvalues()(c) > keps) continue;
                    const Eigen::VectorXd v = es.eigenvectors().col(c);
                    p += v.dot(muF) * v;
                    u += v.dot(ones) * v;
                }
                if (u.squaredNorm() > 1e-20) p -= (u.dot(p) / u.squaredNorm()) * u;
                if (p.lpNorm<Eigen::Infinity>() <= 1e-14) {
                    // no usable ray; fall back to the least-squares target
                    for (int a = 0; a < f; ++a) d(a) = z(a) - w(F[a]);
                } else {
                    d = (l2 >= 0.0 ? 1.0 : -1.0) * p;
                }
            }

            if (d.lpNorm<Eigen::Infinity>() > 1e-12) {
                subspace_stationary = false;
                double alpha = 1.0;
                int blocking = -1;
                for (int a = 0; a < f; ++a) {
                    if (d(a) == 0.0) continue;
                    const double room =
                        d(a) > 0.0 ? (hi(F[a]) - w(F[a])) / d(a) : (lo(F[a]) - w(F[a])) / d(a);
                    if (room < alpha) {
                        alpha = room;
                        blocking = a;
                    }
                }
                alpha = std::max(alpha, 0.0);
                for (int a = 0; a < f; ++a) w(F[a]) += alpha * d(a);
                if (blocking >= 0) {
                    const int i = F[blocking];
                    if (d(blocking) > 0.0) {
                        w(i) = hi(i);
                        state[i] = 1;
                    } else {
                        w(i) = lo(i);
                        state[i] = -1;
                    }
                } else {
                    subspace_stationary = true;  // full step landed on the target
                }
            }
        }

        if (!subspace_stationary) continue;

        // multiplier check at the stationary point of the reduced problem
        Eigen::VectorXd grad = 2.0 * l1 * (Q * w) - l2 * mu;
        double nu = 0.0;
        if (f > 0) {
            double acc = 0.0;
            for (int i : F) acc += grad(i);
            nu = -acc / f;
        } else {
            double nu_lo = -std::numeric_limits<double>::infinity();
            double nu_hi = std::numeric_limits<double>::infinity();
            for (int i = 0; i < K; ++i) {
                if (state[i] == -1) nu_lo = std::max(nu_lo, -grad(i));
                if (state[i] == 1) nu_hi = std::min(nu_hi, -grad(i));
            }
            if (std::isinf(nu_lo) && std::isinf(nu_hi)) nu = 0.0;
            else if (std::isinf(nu_lo)) nu = nu_hi;
            else if (std::isinf(nu_hi)) nu = nu_lo;
            else nu = 0.5 * (nu_lo + nu_hi);
        }

        double worst = -mult_tol;
        int worst_i = -1;
        for (int i = 0; i < K; ++i) {
            double m = 0.0;
            if (state[i] == -1) m = grad(i) + nu;
            else if (state[i] == 1) m = -(grad(i) + nu);
            else continue;
            if (m < worst) {
                worst = m;
                worst_i = i;
            }
        }
        if (worst_i < 0) return w;
        state[worst_i] = 0;
    }
    throw std::logic_error("solve_box_qp: active-set iteration did not converge");
}

}  // namespace detail

/// Exact continuous optimum for one subtask at weights (l1, l2).
inline SubSolution solve_continuous(const SubTask& t, double l1, double l2) {
    SubSolution s;
    s.w = detail::solve_box_qp(t.cov, t.mu, t.lo, t.hi, l1, l2);
    s.risk = s.w.dot(t.cov * s.w);
    s.ret = t.mu.dot(s.w);
    s.g = scalarize(l1, l2, s.risk, s.ret);
    return s;
}

/// Exact lot-constrained optimum by branch and bound on the lot counts.
/// Nodes are explored best-bound-first; ties fall to the older node. An
/// optional trace stream receives one line per node event.
inline SubSolution solve_lot(const SubTask& t, double l1, double l2,
                             std::ostream* trace = nullptr) {
    if (!(t.tau > 0.0)) throw ValidationError("solve_lot: task has no lot size");
    const int K = t.K;
    const int R = t.total_lots;

    auto eval_lots = [&](const Eigen::VectorXi& lots) {
        SubSolution s;
        s.lots = lots;
        s.w = t.tau * lots.cast<double>();
        s.risk = s.w.dot(t.cov * s.w);
        s.ret = t.mu.dot(s.w);
        s.g = scalarize(l1, l2, s.risk, s.ret);
        return s;
    };

    {
        long long lo_sum = 0, hi_sum = 0;
        for (int i = 0; i < K; ++i) {
            lo_sum += t.lot_lo(i);
            hi_sum += t.lot_hi(i);
        }
        if (lo_sum > R || hi_sum < R)
            throw SubtaskInfeasible("lot bounds do not admit a full allocation");
    }

    if (l1 == 0.0) {
        // linear objective: fill lots greedily by descending expected return
        Eigen::VectorXi lots = t.lot_lo;
        long long slack = R - lots.cast<long long>().sum();
        for (int idx : detail::return_order(t.mu)) {
            const long long add = std::min<long long>(t.lot_hi(idx) - t.lot_lo(idx), slack);
            lots(idx) += static_cast<int>(add);
            slack -= add;
            if (slack <= 0) break;
        }
        SubSolution s = eval_lots(lots);
        s.bnb_nodes = 1;
        return s;
    }

    struct Node {
        double bound;
        long id;
        Eigen::VectorXi l, u;
        Eigen::VectorXd relax;
    };
    auto later = [](const Node& a, const Node& b) {
        if (a.bound != b.bound) return a.bound > b.bound;
        return a.id > b.id;
    };
    std::priority_queue<Node, std::vector<Node>, decltype(later)> open(later);

    double best_g = std::numeric_limits<double>::infinity();
    Eigen::VectorXi best_lots;
    long nodes = 0;

    auto emit = [&](long id, const char* event, double bound) {
        if (!trace) return;
        (*trace) << id << ',' << event << ',' << bound << ','
                 << (std::isinf(best_g) ? std::numeric_limits<double>::quiet_NaN() : best_g)
                 << '\n';
    };

    // creates a node: solves its relaxation, absorbs integral ones into the
    // incumbent, queues the rest
    auto push_node = [&](Eigen::VectorXi l, Eigen::VectorXi u) {
        const long id = nodes++;
        Eigen::VectorXd wlo = t.tau * l.cast<double>();
        Eigen::VectorXd whi = t.tau * u.cast<double>();
        Eigen::VectorXd w;
        try {
            w = detail::solve_box_qp(t.cov, t.mu, wlo, whi, l1, l2);
        } catch (const SubtaskInfeasible&) {
            emit(id, "infeasible", std::numeric_limits<double>::quiet_NaN());
            return;
        }
        const double bound = scalarize(l1, l2, w.dot(t.cov * w), t.mu.dot(w));
        bool integral = true;
        for (int i = 0; i < K && integral; ++i) {
            const double lots = w(i) / t.tau;
            if (std::abs(lots - std::round(lots)) > kIntegralTol) integral = false;
        }
        if (integral) {
            Eigen::VectorXi lots(K);
            for (int i = 0; i < K; ++i) lots(i) = static_cast<int>(std::llround(w(i) / t.tau));
            const SubSolution cand = eval_lots(lots);
            if (cand.g < best_g) {
                best_g = cand.g;
                best_lots = lots;
            }
            emit(id, "integral", bound);
            return;
        }
        if (bound >= best_g - kPruneMargin) {
            emit(id, "prune_bound", bound);
            return;
        }
        emit(id, "open", bound);
        open.push(Node{bound, id, std::move(l), std::move(u), std::move(w)});
    };

    // incumbent seed: round the root relaxation and repair the lot total
    // with the cheapest single-lot moves
    {
        Eigen::VectorXd wlo = t.tau * t.lot_lo.cast<double>();
        Eigen::VectorXd whi = t.tau * t.lot_hi.cast<double>();
        Eigen::VectorXd w = detail::solve_box_qp(t.cov, t.mu, wlo, whi, l1, l2);
        Eigen::VectorXi lots(K);
        for (int i = 0; i < K; ++i)
            lots(i) = std::clamp(static_cast<int>(std::llround(w(i) / t.tau)), t.lot_lo(i),
                                 t.lot_hi(i));
        long long total = lots.cast<long long>().sum();
        bool ok = true;
        while (total != R && ok) {
            const int dir = total < R ? 1 : -1;
            int pick = -1;
            double pick_g = std::numeric_limits<double>::infinity();
            for (int i = 0; i < K; ++i) {
                const int v = lots(i) + dir;
                if (v < t.lot_lo(i) || v > t.lot_hi(i)) continue;
                lots(i) = v;
                const double g = eval_lots(lots).g;
                lots(i) = v - dir;
                if (g < pick_g) {
                    pick_g = g;
                    pick = i;
                }
            }
            if (pick < 0) ok = false;
            else {
                lots(pick) += dir;
                total += dir;
            }
        }
        if (ok) {
            const SubSolution seed = eval_lots(lots);
            best_g = seed.g;
            best_lots = lots;
        }
    }

    push_node(t.lot_lo, t.lot_hi);
    while (!open.empty()) {
        Node node = open.top();
        open.pop();
        if (node.bound >= best_g - kPruneMargin) break;  // best-bound order: rest prune too

        // branch on the most fractional lot count; ties to the lower index
        int pick = 0;
        double pick_score = -1.0;
        for (int i = 0; i < K; ++i) {
            const double lots = node.relax(i) / t.tau;
            const double frac = lots - std::floor(lots);
            const double score = std::min(frac, 1.0 - frac);
            if (score > pick_score + 1e-15) {
                pick_score = score;
                pick = i;
            }
        }
        const int split = static_cast<int>(std::floor(node.relax(pick) / t.tau));
        Eigen::VectorXi u_down = node.u;
        u_down(pick) = std::min(u_down(pick), split);
        Eigen::VectorXi l_up = node.l;
        l_up(pick) = std::max(l_up(pick), split + 1);
        push_node(node.l, std::move(u_down));
        push_node(std::move(l_up), node.u);
    }

    if (best_lots.size() == 0)
        throw SubtaskInfeasible("branch and bound found no feasible lot allocation");
    SubSolution s = eval_lots(best_lots);
    s.bnb_nodes = nodes;
    return s;
}

/// Dispatches on the lot size: exact lot solve when tau > 0, else the
/// continuous solve.
inline SubSolution solve_subtask(const SubTask& t, double l1, double l2,
                                 std::ostream* trace = nullptr) {
    return t.tau > 0.0 ? solve_lot(t, l1, l2, trace) : solve_continuous(t, l1, l2);
}

/// Max-norm KKT residual of w for the continuous subtask. Zero (up to
/// tolerance) certifies optimality.
inline double kkt_residual(const SubTask& t, double l1, double l2, const Eigen::VectorXd& w) {
    const int K = t.K;
    const double act_tol = 1e-9;
    Eigen::VectorXd grad = 2.0 * l1 * (t.cov * w) - l2 * t.mu;

    double res = std::abs(w.sum() - 1.0);
    for (int i = 0; i < K; ++i) {
        res = std::max(res, t.lo(i) - w(i));
        res = std::max(res, w(i) - t.hi(i));
    }

    std::vector<int> F;
    double nu;
    for (int i = 0; i < K; ++i)
        if (w(i) > t.lo(i) + act_tol && w(i) < t.hi(i) - act_tol) F.push_back(i);
    if (!F.empty()) {
        double acc = 0.0;
        for (int i : F) acc += grad(i);
        nu = -acc / static_cast<double>(F.size());
    } else {
        double nu_lo = -std::numeric_limits<double>::infinity();
        double nu_hi = std::numeric_limits<double>::infinity();
        for (int i = 0; i < K; ++i) {
            const bool at_lo = w(i) <= t.lo(i) + act_tol;
            const bool at_hi = w(i) >= t.hi(i) - act_tol;
            if (at_lo && !at_hi) nu_lo = std::max(nu_lo, -grad(i));
            if (at_hi && !at_lo) nu_hi = std::min(nu_hi, -grad(i));
        }
        if (std::isinf(nu_lo) && std::isinf(nu_hi)) nu = 0.0;
        else if (std::isinf(nu_lo)) nu = nu_hi;
        else if (std::isinf(nu_hi)) nu = nu_lo;
        else nu = 0.5 * (nu_lo + nu_hi);
    }

    for (int i = 0; i < K; ++i) {
        const bool at_lo = w(i) <= t.lo(i) + act_tol;
        const bool at_hi = w(i) >= t.hi(i) - act_tol;
        const double s = grad(i) + nu;
        if (!at_lo && !at_hi) res = std::max(res, std::abs(s));
        else if (at_lo && at_hi) continue;  // pinned variable, any multiplier works
        else if (at_lo) res = std::max(res, -s);
        else res = std::max(res, s);
    }
    return res;
}

/// Lifts a subtask solution back to a full-length portfolio.
inline Portfolio expand(const SubTask& t, const SubSolution& s, int n) {
    Portfolio p;
    p.selection = t.selection;
    p.weights = Eigen::VectorXd::Zero(n);
    for (int a = 0; a < t.K; ++a) p.weights(t.selection[a]) = s.w(a);
    return p;
}

}  // namespace portopt
