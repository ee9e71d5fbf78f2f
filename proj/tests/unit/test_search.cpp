#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "portopt/search.hpp"
#include "support/test_oracles.hpp"

using namespace portopt;

namespace {

Genotype geno(std::initializer_list<double> vals) {
    Genotype g(static_cast<Eigen::Index>(vals.size()));
    Eigen::Index k = 0;
    for (double v : vals) g(k++) = v;
    return g;
}

std::vector<int> all_ids(int N) {
    std::vector<int> ids(N);
    std::iota(ids.begin(), ids.end(), 0);
    return ids;
}

}  // namespace

TEST_CASE("decode: top genes win the free slots") {
    auto cs = make_constraints(5, 2, 0.0, 1.0, 0.0);
    REQUIRE(decode(geno({0.9, 0.1, 0.8, 0.2, 0.5}), cs) == std::vector<int>{0, 2});
}

TEST_CASE("decode: pre-assigned assets take slots first") {
    auto cs = make_constraints(5, 2, 0.0, 1.0, 0.0, {4});
    REQUIRE(decode(geno({0.9, 0.1, 0.8, 0.2, 0.5}), cs) == std::vector<int>{0, 4});
}

TEST_CASE("decode: gene ties go to the lower index") {
    auto cs = make_constraints(2, 1, 0.0, 1.0, 0.0);
    REQUIRE(decode(geno({0.7, 0.7}), cs) == std::vector<int>{0});
}

TEST_CASE("decode: length mismatch is rejected") {
    auto cs = make_constraints(5, 2, 0.0, 1.0, 0.0);
    REQUIRE_THROWS_AS(decode(geno({0.5, 0.5}), cs), ValidationError);
}

TEST_CASE("vary: degenerate DE returns the base parent exactly") {
    auto cs = make_constraints(4, 2, 0.0, 1.0, 0.0);
    OperatorParams op;
    op.F = 0.0;
    op.p_m = 0.0;
    op.de_prob = 1.0;
    op.cs = &cs;
    Rng rng(1);
    const Genotype a = geno({0.3, 0.6, 0.1, 0.9});
    const Genotype b = geno({0.2, 0.1, 0.8, 0.4});
    const Genotype c = geno({0.9, 0.4, 0.2, 0.6});
    const Genotype child = vary({a, b, c}, op, rng);
    REQUIRE((child - a).norm() == 0.0);
}

TEST_CASE("vary: forced swap on a two-gene genotype") {
    auto cs = make_constraints(2, 1, 0.0, 1.0, 0.0);
    OperatorParams op;
    op.de_prob = 0.0;
    op.cs = &cs;
    Rng rng(1);
    const Genotype child = vary({geno({0.9, 0.1})}, op, rng);
    REQUIRE(child(0) == 0.1);
    REQUIRE(child(1) == 0.9);
}

TEST_CASE("vary: swap with nothing unselected is the identity") {
    auto cs = make_constraints(2, 2, 0.0, 1.0, 0.0);
    OperatorParams op;
    op.de_prob = 0.0;
    op.cs = &cs;
    Rng rng(1);
    const Genotype child = vary({geno({0.9, 0.1})}, op, rng);
    REQUIRE(child(0) == 0.9);
    REQUIRE(child(1) == 0.1);
}

TEST_CASE("vary: DE branch frequency is close to one half") {
    auto cs = make_constraints(6, 3, 0.0, 1.0, 0.0);
    OperatorParams op;
    op.F = 0.0;   // DE child equals the base parent bitwise
    op.p_m = 0.0;
    op.cs = &cs;
    Rng rng(2718);
    Rng draw(999);
    int de_hits = 0;
    const int trials = 10000;
    for (int trial = 0; trial < trials; ++trial) {
        Genotype a(6), b(6), c(6);
        for (int k = 0; k < 6; ++k) {
            a(k) = draw.uniform();
            b(k) = draw.uniform();
            c(k) = draw.uniform();
        }
        const Genotype child = vary({a, b, c}, op, rng);
        if ((child - a).norm() == 0.0) ++de_hits;
    }
    const double freq = static_cast<double>(de_hits) / trials;
    REQUIRE(freq >= 0.48);
    REQUIRE(freq <= 0.52);
}

TEST_CASE("vary: children always stay inside the unit box") {
    auto cs = make_constraints(5, 2, 0.0, 1.0, 0.0);
    OperatorParams op;
    op.F = 0.9;
    op.p_m = 0.5;
    op.cs = &cs;
    Rng rng(77);
    Rng draw(78);
    for (int trial = 0; trial < 2000; ++trial) {
        Genotype a(5), b(5), c(5);
        for (int k = 0; k < 5; ++k) {
            a(k) = draw.uniform();
            b(k) = draw.uniform();
            c(k) = draw.uniform();
        }
        const Genotype child = vary({a, b, c}, op, rng);
        for (int k = 0; k < 5; ++k) {
            REQUIRE(child(k) >= 0.0);
            REQUIRE(child(k) <= 1.0);
        }
    }
}

TEST_CASE("vary: DE branch rejects a short parent list") {
    auto cs = make_constraints(4, 2, 0.0, 1.0, 0.0);
    OperatorParams op;
    op.de_prob = 1.0;
    op.cs = &cs;
    Rng rng(5);
    REQUIRE_THROWS_AS(vary({geno({0.1, 0.2, 0.3, 0.4})}, op, rng), ValidationError);
}

TEST_CASE("evaluate_candidate: a forced single asset scores by formula") {
    Eigen::VectorXd mu(3), sigma(3);
    mu << 0.10, 0.20, 0.05;
    sigma << 0.10, 0.30, 0.20;
    auto inst = make_instance("k1", mu, sigma, Eigen::MatrixXd::Identity(3, 3));
    auto cs = make_constraints(3, 1, 0.0, 1.0, 0.0);
    auto grid = build_grid(5, 2);

    // gene 1 is the highest: the selection is asset 1 everywhere
    auto cand = evaluate_candidate(geno({0.2, 0.9, 0.4}), inst, cs, grid, all_ids(5), 0,
                                   EvalMode::per_neighbor);
    REQUIRE(cand.feasible);
    REQUIRE(cand.selection == std::vector<int>{1});
    for (int j = 0; j < 5; ++j) {
        REQUIRE(cand.solutions[j].w(0) == Catch::Approx(1.0).epsilon(0.0).margin(1e-12));
        const double want = grid.lambda[j][0] * 0.09 - grid.lambda[j][1] * 0.20;
        REQUIRE(cand.g[j] == Catch::Approx(want).epsilon(0.0).margin(1e-12));
    }
}

TEST_CASE("evaluate_candidate: per-neighbor values equal the lattice optimum") {
    auto inst = testsup::tiny_instance();
    auto cs = make_constraints(4, 2, 0.0, 1.0, 0.25);
    auto grid = build_grid(11, 3);
    auto cand = evaluate_candidate(geno({0.9, 0.8, 0.1, 0.2}), inst, cs, grid, all_ids(11), 5,
                                   EvalMode::per_neighbor);
    REQUIRE(cand.feasible);
    REQUIRE(cand.selection == std::vector<int>{0, 1});
    auto task = make_subtask(inst, cs, cand.selection);
    for (int j = 0; j < 11; ++j) {
        auto brute = testsup::brute_force_lot(task, grid.lambda[j][0], grid.lambda[j][1]);
        REQUIRE(cand.g[j] == Catch::Approx(brute.g).epsilon(0.0).margin(1e-9));
    }
}

TEST_CASE("evaluate_candidate: per-neighbor never loses to single-solve") {
    auto inst = random_instance(10, 17);
    auto cs = make_constraints(10, 4, 0.0, 1.0, 0.05);
    auto grid = build_grid(15, 15);
    const Genotype g = geno({0.1, 0.9, 0.3, 0.8, 0.5, 0.2, 0.7, 0.4, 0.6, 0.05});
    auto per = evaluate_candidate(g, inst, cs, grid, all_ids(15), 7, EvalMode::per_neighbor);
    auto single = evaluate_candidate(g, inst, cs, grid, all_ids(15), 7, EvalMode::single_solve);
    REQUIRE(per.feasible);
    REQUIRE(single.feasible);
    REQUIRE(single.solutions.size() == 1);
    for (int j = 0; j < 15; ++j) REQUIRE(per.g[j] <= single.g[j] + 1e-12);
    // the generating subproblem sees the same exact solve in both modes
    REQUIRE(per.g[7] == Catch::Approx(single.g[7]).epsilon(0.0).margin(1e-12));
}

TEST_CASE("evaluate_candidate: infeasible selections are flagged, not thrown") {
    auto inst = testsup::tiny_instance();
    Eigen::VectorXd fl = Eigen::VectorXd::Zero(4);
    Eigen::VectorXd ce(4);
    ce << 0.3, 0.3, 0.9, 0.9;
    auto cs = make_constraints(2, fl, ce, std::vector<std::uint8_t>(4, 0), 0.0);
    auto grid = build_grid(5, 2);
    auto cand = evaluate_candidate(geno({0.9, 0.8, 0.1, 0.2}), inst, cs, grid, all_ids(5), 0,
                                   EvalMode::per_neighbor);
    REQUIRE_FALSE(cand.feasible);
    REQUIRE_FALSE(cand.reason.empty());
    REQUIRE(cand.g.empty());
}

TEST_CASE("evaluate_candidate: cache and workers leave results unchanged") {
    auto inst = random_instance(8, 23);
    auto cs = make_constraints(8, 3, 0.0, 1.0, 0.05);
    auto grid = build_grid(9, 9);
    const Genotype g = geno({0.6, 0.2, 0.8, 0.4, 0.3, 0.9, 0.1, 0.7});

    auto plain = evaluate_candidate(g, inst, cs, grid, all_ids(9), 4, EvalMode::per_neighbor);
    SolveCache cache(9);
    auto first = evaluate_candidate(g, inst, cs, grid, all_ids(9), 4, EvalMode::per_neighbor, 1,
                                    &cache);
    auto cached = evaluate_candidate(g, inst, cs, grid, all_ids(9), 4, EvalMode::per_neighbor, 1,
                                     &cache);
    auto wide = evaluate_candidate(g, inst, cs, grid, all_ids(9), 4, EvalMode::per_neighbor, 4);
    for (int j = 0; j < 9; ++j) {
        REQUIRE(first.g[j] == plain.g[j]);
        REQUIRE(cached.g[j] == plain.g[j]);
        REQUIRE(wide.g[j] == plain.g[j]);
    }
}

TEST_CASE("evaluate_candidate: a dominating selection wins under every weight") {
    // selection {0,1} beats {2,3} asset-by-asset in both mean and variance,
    // so its exact scalarized optimum must be strictly lower for every
    // weight vector
    auto inst = testsup::tiny_instance();
    auto cs = make_constraints(4, 2, 0.0, 1.0, 0.0);
    auto grid = build_grid(21, 3);
    auto good = evaluate_candidate(geno({0.9, 0.8, 0.1, 0.2}), inst, cs, grid, all_ids(21), 0,
                                   EvalMode::per_neighbor);
    auto bad = evaluate_candidate(geno({0.1, 0.2, 0.9, 0.8}), inst, cs, grid, all_ids(21), 0,
                                  EvalMode::per_neighbor);
    REQUIRE(good.selection == std::vector<int>{0, 1});
    REQUIRE(bad.selection == std::vector<int>{2, 3});
    for (int j = 0; j < 21; ++j) REQUIRE(good.g[j] < bad.g[j]);
}

TEST_CASE("run: zero budget returns the initial front") {
    auto inst = random_instance(8, 3);
    auto cs = make_constraints(8, 3, 0.0, 1.0, 0.05);
    RunConfig cfg;
    cfg.N = 12;
    cfg.T = 4;
    cfg.eval_cap = 0;
    cfg.seed = 7;
    auto res = run(inst, cs, cfg);
    REQUIRE(res.evals_used == 0);
    REQUIRE(res.population.size() == 12);
    REQUIRE(res.trace.size() == 1);
    REQUIRE(res.trace[0].evals == 0);
    REQUIRE_FALSE(res.front.empty());
    // front = nondominated subset of the population
    std::vector<ObjectivePair> pop_objs;
    for (const auto& st : res.population) pop_objs.push_back({st.risk, st.ret});
    auto want = nondominated_front(pop_objs);
    REQUIRE(want.size() == res.front.size());
    for (std::size_t k = 0; k < want.size(); ++k) {
        REQUIRE(res.front[k].risk == want[k].risk);
        REQUIRE(res.front[k].ret == want[k].ret);
    }
}

TEST_CASE("run: budget is consumed exactly") {
    auto inst = random_instance(8, 3);
    auto cs = make_constraints(8, 3, 0.0, 1.0, 0.05);
    RunConfig cfg;
    cfg.N = 10;
    cfg.T = 3;
    cfg.eval_cap = 57;
    cfg.seed = 11;
    auto res = run(inst, cs, cfg);
    REQUIRE(res.evals_used == 57);
    REQUIRE(res.trace.back().evals == 57);
}

TEST_CASE("run: deterministic per seed, sensitive to the seed") {
    auto inst = random_instance(8, 3);
    auto cs = make_constraints(8, 3, 0.0, 1.0, 0.05);
    RunConfig cfg;
    cfg.N = 10;
    cfg.T = 3;
    cfg.eval_cap = 80;
    cfg.seed = 5;
    auto a = run(inst, cs, cfg);
    auto b = run(inst, cs, cfg);
    REQUIRE(a.transcript_hash == b.transcript_hash);
    REQUIRE(a.front.size() == b.front.size());
    for (std::size_t k = 0; k < a.front.size(); ++k) {
        REQUIRE(a.front[k].risk == b.front[k].risk);
        REQUIRE(a.front[k].ret == b.front[k].ret);
    }
    cfg.seed = 6;
    auto c = run(inst, cs, cfg);
    REQUIRE(c.transcript_hash != a.transcript_hash);
}

TEST_CASE("run: worker count does not change the outcome") {
    auto inst = random_instance(8, 3);
    auto cs = make_constraints(8, 3, 0.0, 1.0, 0.05);
    RunConfig cfg;
    cfg.N = 10;
    cfg.T = 4;
    cfg.eval_cap = 60;
    cfg.seed = 13;
    auto serial = run(inst, cs, cfg);
    cfg.workers = 4;
    auto parallel = run(inst, cs, cfg);
    REQUIRE(serial.transcript_hash == parallel.transcript_hash);
    REQUIRE(serial.front.size() == parallel.front.size());
    for (std::size_t k = 0; k < serial.front.size(); ++k)
        REQUIRE(serial.front[k].risk == parallel.front[k].risk);
}

TEST_CASE("run: emitted portfolios are feasible and mutually nondominated") {
    auto inst = random_instance(9, 41);
    auto cs = make_constraints(9, 4, 0.01, 0.9, 0.02, {2});
    RunConfig cfg;
    cfg.N = 12;
    cfg.T = 4;
    cfg.eval_cap = 100;
    cfg.seed = 3;
    auto res = run(inst, cs, cfg);
    for (const auto& st : res.front) {
        REQUIRE(check_feasible(cs, st.portfolio).feasible());
        auto o = evaluate(inst, st.portfolio);
        REQUIRE(o.risk == Catch::Approx(st.risk).epsilon(0.0).margin(1e-12));
        REQUIRE(o.ret == Catch::Approx(st.ret).epsilon(0.0).margin(1e-12));
    }
    for (std::size_t i = 1; i < res.front.size(); ++i) {
        REQUIRE(res.front[i].risk > res.front[i - 1].risk);
        REQUIRE(res.front[i].ret > res.front[i - 1].ret);
    }
}

TEST_CASE("run: per-subproblem incumbents never get worse") {
    auto inst = random_instance(8, 3);
    auto cs = make_constraints(8, 3, 0.0, 1.0, 0.05);
    RunConfig cfg;
    cfg.N = 10;
    cfg.T = 3;
    cfg.eval_cap = 120;
    cfg.seed = 9;
    for (EvalMode mode : {EvalMode::per_neighbor, EvalMode::single_solve}) {
        cfg.mode = mode;
        auto res = run(inst, cs, cfg);
        REQUIRE(res.trace.size() >= 2);
        for (std::size_t t = 1; t < res.trace.size(); ++t)
            for (int i = 0; i < cfg.N; ++i)
                REQUIRE(res.trace[t].g[i] <= res.trace[t - 1].g[i] + 1e-15);
    }
}

TEST_CASE("run: wall-clock cap stops the loop") {
    auto inst = random_instance(10, 19);
    auto cs = make_constraints(10, 4, 0.0, 1.0, 0.02);
    RunConfig cfg;
    cfg.N = 10;
    cfg.T = 3;
    cfg.eval_cap = 100000000;
    cfg.time_cap = 0.2;
    cfg.seed = 2;
    auto res = run(inst, cs, cfg);
    REQUIRE(res.evals_used < cfg.eval_cap);
    REQUIRE(res.wall_seconds < 30.0);
}
