#include "doctest.h"

#include <random>

#include "depkit/coverage.hpp"
#include "support/oracles.hpp"
#include "support/testutil.hpp"

using namespace depkit;

namespace {

/// Five-category highway scenario space with sizes (3,2,2,3,2).
CategorySpace highway_space() {
    CategorySpace s;
    s.categories = {{"weather", {"cloudy", "rainy", "sunny"}},
                    {"day", {"day", "night"}},
                    {"lane", {"inner", "outer"}},
                    {"curvature", {"straight", "left_bending", "right_bending"}},
                    {"surface", {"dry", "wet"}}};
    return s;
}

IndicatorConstraint sunny_night_constraint() {
    // 0 <= weather.sunny + day.night <= 1
    IndicatorConstraint c;
    c.terms = {{0, 2, 1}, {1, 1, 1}};
    c.lower = 0;
    c.upper = 1;
    return c;
}

CategorySpace random_space(std::mt19937_64& rng) {
    CategorySpace s;
    int m = testutil::uniform_int(rng, 2, 4);
    for (int c = 0; c < m; ++c) {
        CategorySpace::Category cat;
        cat.name = "c" + std::to_string(c);
        int vals = testutil::uniform_int(rng, 2, 3);
        for (int v = 0; v < vals; ++v) cat.values.push_back("v" + std::to_string(v));
        s.categories.push_back(std::move(cat));
    }
    return s;
}

ScenarioItem random_item(std::mt19937_64& rng, const CategorySpace& s) {
    ScenarioItem item;
    for (std::size_t c = 0; c < s.size(); ++c)
        item.assignment.push_back(testutil::uniform_int(rng, 0, static_cast<int>(s.cardinality(c)) - 1));
    return item;
}

} // namespace

TEST_CASE("projection_denominator: highway-space values") {
    CategorySpace s = highway_space();
    CHECK(projection_denominator(s, 2) == 57);
    CHECK(projection_denominator(s, 5) == 72);
    CHECK(projection_denominator(s, 1) == 12);
    CHECK_THROWS_AS(projection_denominator(s, 0), KOutOfRange);
    CHECK_THROWS_AS(projection_denominator(s, 6), KOutOfRange);
}

TEST_CASE("projection_coverage: small pinned cases") {
    CategorySpace s = highway_space();
    CoverageLedger empty = projection_coverage(s, {}, 2);
    CHECK(empty.covered.empty());
    CHECK(empty.denominator == 57);

    ScenarioItem one{{2, 0, 0, 0, 0}}; // sunny day inner straight dry
    CoverageLedger single = projection_coverage(s, {one}, 2);
    CHECK(single.covered.size() == 10); // C(5,2)

    ScenarioItem other{{0, 1, 1, 1, 1}}; // differs in every category
    CoverageLedger two = projection_coverage(s, {one, other}, 2);
    CHECK(two.covered.size() == 20);

    CoverageLedger dup = projection_coverage(s, {one, one, one}, 2);
    CHECK(dup.covered.size() == 10); // duplicates do not count twice
}

TEST_CASE("ledger monotonicity and idempotence") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        CategorySpace s = random_space(rng);
        int k = testutil::uniform_int(rng, 1, 2);
        CoverageLedger ledger;
        ledger.k = k;
        ledger.denominator = projection_denominator(s, k);
        std::size_t prev = 0;
        for (int i = 0; i < 5; ++i) {
            ScenarioItem item = random_item(rng, s);
            ledger_add(s, ledger, item);
            CHECK(ledger.covered.size() >= prev);
            prev = ledger.covered.size();
            CHECK(ledger_add(s, ledger, item) == 0); // re-adding changes nothing
            CHECK(ledger.covered.size() == prev);
        }
        CHECK(ledger.covered.size() <= static_cast<std::size_t>(ledger.denominator));
    }
}

TEST_CASE("propose_next: pinned gains on the highway space") {
    CategorySpace s = highway_space();
    CoverageLedger empty = projection_coverage(s, {}, 2);
    auto proposals = propose_next(s, empty, {}, 1);
    REQUIRE(proposals.size() == 1);
    CHECK(proposals[0].gain == 10);
    // Lexicographically first assignment wins the tie.
    CHECK(proposals[0].item.assignment == std::vector<int>{0, 0, 0, 0, 0});

    ScenarioItem one{{2, 0, 0, 0, 0}};
    CoverageLedger ledger = projection_coverage(s, {one}, 2);
    auto next = propose_next(s, ledger, {}, 1);
    CHECK(next[0].gain == 10); // an everywhere-different assignment is reachable
}

TEST_CASE("propose_next: gain bounded by C(m, k)") {
    std::mt19937_64 rng(37);
    for (int trial = 0; trial < 10; ++trial) {
        CategorySpace s = random_space(rng);
        std::vector<ScenarioItem> items;
        for (int i = 0; i < 3; ++i) items.push_back(random_item(rng, s));
        CoverageLedger ledger = projection_coverage(s, items, 2);
        long long cmk = 0;
        oracle::for_each_combo(s.size(), 2, [&](const std::vector<int>&) { ++cmk; });
        for (const Proposal& p : propose_next(s, ledger, {}, 3)) CHECK(p.gain <= cmk);
    }
}

TEST_CASE("is_feasible: paper constraint") {
    CategorySpace s = highway_space();
    std::vector<IndicatorConstraint> cs{sunny_night_constraint()};
    CHECK_FALSE(is_feasible(ScenarioItem{{2, 1, 0, 0, 0}}, cs)); // sunny + night
    CHECK(is_feasible(ScenarioItem{{2, 0, 0, 0, 0}}, cs));       // sunny + day
    CHECK(is_feasible(ScenarioItem{{2, 1, 0, 0, 0}}, {}));       // vacuous
}

TEST_CASE("propose_next: constraint filtering") {
    CategorySpace s = highway_space();
    std::vector<IndicatorConstraint> cs{sunny_night_constraint()};
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<ScenarioItem> items;
        int count = testutil::uniform_int(rng, 0, 6);
        for (int i = 0; i < count; ++i) items.push_back(random_item(rng, s));
        CoverageLedger ledger = projection_coverage(s, items, 2);
        for (const Proposal& p : propose_next(s, ledger, cs, 3)) {
            bool sunny = p.item.assignment[0] == 2;
            bool night = p.item.assignment[1] == 1;
            CHECK_FALSE((sunny && night));
        }
    }
}

TEST_CASE("propose_next: infeasible constraint set") {
    CategorySpace s = highway_space();
    IndicatorConstraint must_sunny{{{0, 2, 1}}, 1, 1};
    IndicatorConstraint must_cloudy{{{0, 0, 1}}, 1, 1};
    CoverageLedger empty = projection_coverage(s, {}, 2);
    CHECK_THROWS_AS(propose_next(s, empty, {must_sunny, must_cloudy}, 1), NoFeasibleAssignment);
    CHECK_THROWS_AS(propose_next_greedy(s, empty, {must_sunny, must_cloudy}, 1),
                    NoFeasibleAssignment);
}

TEST_CASE("oracle equivalence on random small spaces") {
    std::mt19937_64 rng(43);
    for (int trial = 0; trial < 60; ++trial) {
        CategorySpace s = random_space(rng);
        int k = testutil::uniform_int(rng, 1, 2);
        std::vector<ScenarioItem> items;
        int count = testutil::uniform_int(rng, 0, 6);
        for (int i = 0; i < count; ++i) items.push_back(random_item(rng, s));

        CoverageLedger ledger = projection_coverage(s, items, k);
        auto expected = oracle::covered_tuples(s, items, k);
        CHECK(ledger.covered == expected);
        CHECK(ledger.denominator == oracle::tuple_denominator(s, k));

        auto best = oracle::best_gain(s, expected, k, {});
        auto proposals = propose_next(s, ledger, {}, 1);
        REQUIRE(best.any_feasible);
        CHECK(proposals[0].gain == best.gain);
        CHECK(proposals[0].item.assignment == best.assignment);
    }
}

TEST_CASE("oracle equivalence under random indicator constraints") {
    std::mt19937_64 rng(47);
    for (int trial = 0; trial < 40; ++trial) {
        CategorySpace s = random_space(rng);
        std::vector<IndicatorConstraint> cs;
        IndicatorConstraint c;
        c.terms = {{0, 0, 1},
                   {static_cast<int>(s.size()) - 1,
                    testutil::uniform_int(rng, 0, static_cast<int>(s.cardinality(s.size() - 1)) - 1),
                    1}};
        c.lower = 0;
        c.upper = 1;
        cs.push_back(c);

        std::vector<ScenarioItem> items;
        for (int i = 0; i < 4; ++i) items.push_back(random_item(rng, s));
        CoverageLedger ledger = projection_coverage(s, items, 2);
        auto best = oracle::best_gain(s, ledger.covered, 2, cs);
        if (!best.any_feasible) {
            CHECK_THROWS_AS(propose_next(s, ledger, cs, 1), NoFeasibleAssignment);
            continue;
        }
        auto proposals = propose_next(s, ledger, cs, 2);
        CHECK(proposals[0].gain == best.gain);
        CHECK(proposals[0].item.assignment == best.assignment);
        if (proposals.size() == 2) CHECK(proposals[0].gain >= proposals[1].gain);
    }
}

TEST_CASE("propose_next: count larger than the assignment space") {
    CategorySpace s;
    s.categories = {{"a", {"x", "y"}}, {"b", {"x", "y"}}};
    CoverageLedger empty = projection_coverage(s, {}, 2);
    auto proposals = propose_next(s, empty, {}, 100);
    CHECK(proposals.size() == 4); // every full assignment, nothing repeated
    for (std::size_t i = 1; i < proposals.size(); ++i)
        CHECK(proposals[i - 1].gain >= proposals[i].gain);
    std::set<std::vector<int>> distinct;
    for (const Proposal& p : proposals) distinct.insert(p.item.assignment);
    CHECK(distinct.size() == proposals.size());
}

TEST_CASE("greedy propose-add loop reaches full coverage") {
    std::mt19937_64 rng(53);
    for (int trial = 0; trial < 10; ++trial) {
        CategorySpace s = random_space(rng);
        int k = testutil::uniform_int(rng, 1, 2);
        CoverageLedger ledger;
        ledger.k = k;
        ledger.denominator = projection_denominator(s, k);
        long long steps = 0;
        while (static_cast<long long>(ledger.covered.size()) < ledger.denominator) {
            auto proposals = propose_next(s, ledger, {}, 1);
            REQUIRE(proposals[0].gain > 0); // otherwise 100% is unreachable
            ledger_add(s, ledger, proposals[0].item);
            ++steps;
            REQUIRE(steps <= ledger.denominator);
        }
        CHECK(ledger.ratio() == 1.0);
    }
}

TEST_CASE("constrained denominator excludes unreachable tuples") {
    CategorySpace s = highway_space();
    std::vector<IndicatorConstraint> cs{sunny_night_constraint()};
    // Exactly one pair (sunny, night) appears in no feasible assignment.
    CHECK(constrained_projection_denominator(s, 2, cs) == 56);
    CHECK(constrained_projection_denominator(s, 2, {}) == 57);

    CoverageOptions opts;
    opts.constrained_denominator = true;
    CoverageLedger ledger = projection_coverage(s, {}, 2, cs, opts);
    CHECK(ledger.denominator == 56);

    // An item that itself violates the constraint cannot push covered above
    // the attainable denominator: its unreachable tuple leaves the ratio.
    ScenarioItem sunny_night{{2, 1, 0, 0, 0}};
    CoverageLedger odd = projection_coverage(s, {sunny_night}, 2, cs, opts);
    CHECK(odd.covered.size() == 9); // 10 pairs minus the (sunny, night) tuple
    CHECK(odd.covered.size() <= static_cast<std::size_t>(odd.denominator));
}

TEST_CASE("greedy proposals are feasible and gains are honest") {
    CategorySpace s = highway_space();
    std::vector<IndicatorConstraint> cs{sunny_night_constraint()};
    CoverageLedger ledger = projection_coverage(s, {ScenarioItem{{0, 0, 0, 0, 0}}}, 2);
    auto proposals = propose_next_greedy(s, ledger, cs, 3);
    REQUIRE(!proposals.empty());
    CoverageLedger replay = ledger;
    for (const Proposal& p : proposals) {
        CHECK(is_feasible(p.item, cs));
        CHECK(ledger_add(s, replay, p.item) == p.gain);
    }
}
