#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <vector>

#include "portopt/metrics.hpp"
#include "portopt/oracle.hpp"
#include "portopt/rng.hpp"

using namespace portopt;

namespace {

ReferenceFront two_point_ref() {
    // Staircase pair: low risk / low return, high risk / high return.
    std::vector<ObjectivePair> pts = {{0.1, 0.3}, {0.4, 0.8}};
    return make_reference(pts, {}, Provenance::enumeration, 7u, "toy");
}

}  // namespace

TEST_CASE("normalize maps ideal, nadir, and midpoint to the unit-square anchors") {
    const auto ctx = make_context(two_point_ref());

    // Minimization pair is (risk, -return), so the ideal combines the lowest
    // risk with the highest return across the reference.
    const auto anchors = normalize({{0.1, 0.8}, {0.4, 0.3}, {0.25, 0.55}}, ctx);
    REQUIRE(anchors.size() == 3);
    CHECK(anchors[0][0] == Catch::Approx(0.0).epsilon(0.0).margin(1e-15));
    CHECK(anchors[0][1] == Catch::Approx(0.0).epsilon(0.0).margin(1e-15));
    CHECK(anchors[1][0] == Catch::Approx(1.0).epsilon(0.0).margin(1e-15));
    CHECK(anchors[1][1] == Catch::Approx(1.0).epsilon(0.0).margin(1e-15));
    CHECK(anchors[2][0] == Catch::Approx(0.5).epsilon(0.0).margin(1e-15));
    CHECK(anchors[2][1] == Catch::Approx(0.5).epsilon(0.0).margin(1e-15));
}

TEST_CASE("normalize lets points outside the reference range leave the unit square") {
    const auto ctx = make_context(two_point_ref());
    const auto out = normalize({{0.7, 0.1}}, ctx);
    CHECK(out[0][0] > 1.0);
    CHECK(out[0][1] > 1.0);
}

TEST_CASE("normalize collapses a degenerate span to zero") {
    std::vector<ObjectivePair> pts = {{0.2, 0.5}};
    const auto ctx = make_context(make_reference(pts, {}, Provenance::enumeration, 1u, "one"));
    const auto out = normalize({{0.9, -0.4}}, ctx);
    CHECK(out[0][0] == 0.0);
    CHECK(out[0][1] == 0.0);
}

TEST_CASE("make_context rejects an empty reference and copies the fingerprint") {
    ReferenceFront empty;
    REQUIRE_THROWS_AS(make_context(empty), ValidationError);

    const auto ctx = make_context(two_point_ref());
    CHECK(ctx.fingerprint == 7u);
    CHECK(ctx.r[0] == 1.1);
    CHECK(ctx.r[1] == 1.1);
    REQUIRE(ctx.ref_normalized.size() == 2);
    CHECK(ctx.ref_normalized[0][0] == Catch::Approx(0.0).epsilon(0.0).margin(1e-15));
    CHECK(ctx.ref_normalized[0][1] == Catch::Approx(1.0).epsilon(0.0).margin(1e-15));
    CHECK(ctx.ref_normalized[1][0] == Catch::Approx(1.0).epsilon(0.0).margin(1e-15));
    CHECK(ctx.ref_normalized[1][1] == Catch::Approx(0.0).epsilon(0.0).margin(1e-15));
}

TEST_CASE("hypervolume matches the pinned rectangle decompositions") {
    const std::array<double, 2> r{1.1, 1.1};

    CHECK(hypervolume({{0.0, 0.0}}, r) == Catch::Approx(1.21).epsilon(0.0).margin(1e-15));
    CHECK(hypervolume({{0.2, 0.5}, {0.5, 0.2}}, r) ==
          Catch::Approx(0.72).epsilon(0.0).margin(1e-15));
    CHECK(hypervolume({}, r) == 0.0);
}

TEST_CASE("hypervolume ignores points beyond the reference point") {
    const std::array<double, 2> r{1.1, 1.1};
    const double base = hypervolume({{0.2, 0.5}}, r);
    CHECK(base == Catch::Approx(0.54).epsilon(0.0).margin(1e-15));
    CHECK(hypervolume({{0.2, 0.5}, {1.15, 0.0}, {0.0, 1.2}}, r) == base);
    CHECK(hypervolume({{1.2, 0.0}}, r) == 0.0);
}

TEST_CASE("hypervolume is invariant to dominated points, duplicates, and order") {
    const std::array<double, 2> r{1.1, 1.1};
    const double base = hypervolume({{0.2, 0.5}, {0.5, 0.2}}, r);
    CHECK(hypervolume({{0.5, 0.2}, {0.2, 0.5}}, r) == base);
    CHECK(hypervolume({{0.2, 0.5}, {0.2, 0.5}, {0.5, 0.2}}, r) == base);
    CHECK(hypervolume({{0.2, 0.5}, {0.3, 0.6}, {0.5, 0.2}}, r) == base);
}

TEST_CASE("hypervolume stays within the box and never decreases under domination") {
    const std::array<double, 2> r{1.1, 1.1};
    Rng rng(2024);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t m = 1 + rng.index(6);
        std::vector<std::array<double, 2>> pts(m);
        for (auto& p : pts) {
            p[0] = rng.uniform();
            p[1] = rng.uniform();
        }
        const double hv = hypervolume(pts, r);
        REQUIRE(hv >= 0.0);
        REQUIRE(hv <= 1.21 + 1e-12);

        // Add a point dominating a random incumbent.
        const auto& host = pts[rng.index(m)];
        std::array<double, 2> dom{host[0] * rng.uniform(), host[1] * rng.uniform()};
        auto extended = pts;
        extended.push_back(dom);
        REQUIRE(hypervolume(extended, r) >= hv - 1e-12);
    }
}

TEST_CASE("gd matches the pinned hand computations") {
    const std::vector<std::array<double, 2>> origin = {{0.0, 0.0}};

    CHECK(gd({{0.3, 0.0}}, origin) == Catch::Approx(0.3).epsilon(0.0).margin(1e-15));
    CHECK(gd({{0.1, 0.0}, {0.0, 0.2}, {0.2, 0.0}}, origin) ==
          Catch::Approx(0.1).epsilon(0.0).margin(1e-15));
    CHECK(gd(origin, origin) == 0.0);
}

TEST_CASE("gd uses the nearest reference point") {
    const std::vector<std::array<double, 2>> ref = {{0.0, 0.0}, {1.0, 1.0}};
    CHECK(gd({{0.9, 1.0}}, ref) == Catch::Approx(0.1).epsilon(0.0).margin(1e-12));
}

TEST_CASE("gd rejects an empty reference but defines empty input as zero") {
    REQUIRE_THROWS_AS(gd({{0.1, 0.1}}, {}), ValidationError);
    CHECK(gd({}, {{0.0, 0.0}}) == 0.0);
}

TEST_CASE("evaluate_metrics scores the reference front against itself cleanly") {
    const auto ref = two_point_ref();
    const auto ctx = make_context(ref);
    const auto rep = evaluate_metrics(ref.points, ctx);

    CHECK(rep.count == 2);
    CHECK_FALSE(rep.empty_input);
    CHECK(rep.gd == 0.0);
    // Normalized corners (0,1) and (1,0) against r = (1.1, 1.1).
    CHECK(rep.hv == Catch::Approx(0.21).epsilon(0.0).margin(1e-15));
}

TEST_CASE("evaluate_metrics flags empty fronts") {
    const auto ctx = make_context(two_point_ref());
    const auto rep = evaluate_metrics({}, ctx);
    CHECK(rep.count == 0);
    CHECK(rep.empty_input);
    CHECK(rep.hv == 0.0);
    CHECK(rep.gd == 0.0);
}

TEST_CASE("reference front attains the maximal hypervolume under its own context") {
    std::vector<ObjectivePair> pts = {{0.10, 0.30}, {0.18, 0.46}, {0.29, 0.61}, {0.45, 0.80}};
    const auto ref = make_reference(pts, {}, Provenance::enumeration, 3u, "stairs");
    const auto ctx = make_context(ref);
    const double full = evaluate_metrics(ref.points, ctx).hv;

    Rng rng(99);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<ObjectivePair> subset;
        for (const auto& p : ref.points)
            if (rng.bernoulli(0.6)) subset.push_back(p);
        const auto rep = evaluate_metrics(subset, ctx);
        REQUIRE(rep.hv <= full + 1e-12);
    }
}
