#include "doctest.h"

#include <random>

#include "depkit/octagon.hpp"
#include "support/oracles.hpp"
#include "support/testutil.hpp"

using namespace depkit;

namespace {

/// Random coherent octagon with dyadic bounds (multiples of 0.25), so path
/// sums and halvings are exact in floating point.
Octagon random_octagon(std::mt19937_64& rng, std::size_t n) {
    Octagon oct(n);
    for (std::size_t i = 0; i < n; ++i) {
        double lo = 0.25 * testutil::uniform_int(rng, -8, 0);
        double hi = lo + 0.25 * testutil::uniform_int(rng, 0, 8);
        oct.set_var_upper(i, hi);
        oct.set_var_lower(i, lo);
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            if (rng() % 2) oct.set_sum_upper(i, j, 0.25 * testutil::uniform_int(rng, -2, 10));
            if (rng() % 2) oct.set_diff_upper(i, j, 0.25 * testutil::uniform_int(rng, -2, 10));
            if (rng() % 2) oct.set_negsum_upper(i, j, 0.25 * testutil::uniform_int(rng, -2, 10));
        }
    return oct;
}

} // namespace

TEST_CASE("strong_closure: transitivity") {
    Octagon oct(3);
    for (std::size_t i = 0; i < 3; ++i) {
        oct.set_var_upper(i, 10.0);
        oct.set_var_lower(i, -10.0);
    }
    oct.set_diff_upper(0, 1, 1.0); // x0 - x1 <= 1
    oct.set_diff_upper(1, 2, 1.0); // x1 - x2 <= 1
    auto closed = strong_closure(oct);
    REQUIRE(closed.has_value());
    CHECK(closed->at(0, 4) <= 2.0); // x0 - x2 <= 2
    CHECK(closed->pair_upper(0, false, 2, true) <= 2.0);
}

TEST_CASE("strong_closure: unary contradiction is empty") {
    Octagon oct(1);
    oct.set_var_upper(0, 1.0);
    oct.set_var_lower(0, 2.0);
    CHECK_FALSE(strong_closure(oct).has_value());
}

TEST_CASE("strong_closure: idempotent and coherent") {
    std::mt19937_64 rng(61);
    int done = 0;
    while (done < 40) {
        Octagon oct = random_octagon(rng, 3);
        auto once = strong_closure(oct);
        if (!once) continue;
        CHECK(once->is_coherent());
        auto twice = strong_closure(*once);
        REQUIRE(twice.has_value());
        CHECK(once->same_entries(*twice));
        ++done;
    }
}

TEST_CASE("strong_closure matches the path-enumeration oracle") {
    std::mt19937_64 rng(67);
    int done = 0;
    while (done < 40) {
        Octagon oct = random_octagon(rng, 3);
        auto impl = strong_closure(oct);
        auto ref = oracle::closure_by_paths(oct);
        CHECK(impl.has_value() == ref.has_value());
        if (!impl || !ref) continue;
        CHECK(impl->same_entries(*ref)); // dyadic inputs: exact equality
        ++done;
    }
}

TEST_CASE("bound_linear_form: pairing beats unary bounding") {
    Octagon oct(2);
    oct.set_var_upper(0, 1.0);
    oct.set_var_lower(0, 0.0);
    oct.set_var_upper(1, 1.0);
    oct.set_var_lower(1, 0.0);
    oct.set_diff_upper(0, 1, 0.2); // x0 - x1 <= 0.2
    auto closed = strong_closure(oct);
    REQUIRE(closed.has_value());
    auto [lo, hi] = bound_linear_form({1.0, -1.0}, *closed);
    CHECK(hi == doctest::Approx(0.2));
    CHECK(hi < 1.0); // interval bounding would give 1
    CHECK(lo >= -1.0);
}

TEST_CASE("bound_linear_form: single coefficient uses the unary bound") {
    Octagon oct(3);
    oct.set_var_upper(1, 0.75);
    oct.set_var_lower(1, -0.5);
    for (std::size_t i : {0u, 2u}) {
        oct.set_var_upper(i, 1.0);
        oct.set_var_lower(i, -1.0);
    }
    auto closed = strong_closure(oct);
    REQUIRE(closed.has_value());
    auto [lo, hi] = bound_linear_form({0.0, 2.0, 0.0}, *closed);
    CHECK(hi == doctest::Approx(1.5));
    CHECK(lo == doctest::Approx(-1.0));

    auto [zlo, zhi] = bound_linear_form({0.0, 0.0, 0.0}, *closed);
    CHECK(zlo == 0.0);
    CHECK(zhi == 0.0);
}

TEST_CASE("bound_linear_form: sound and tighter than unary sums on random octagons") {
    std::mt19937_64 rng(71);
    int done = 0;
    while (done < 30) {
        Octagon raw = random_octagon(rng, 3);
        auto closed = strong_closure(raw);
        if (!closed) continue;
        Vec c(3);
        for (double& v : c) v = testutil::uniform(rng, -2.0, 2.0);
        auto [lo, hi] = bound_linear_form(c, *closed);
        CHECK(lo <= hi);

        // Unary-only interval bound from the same octagon.
        double ulo = 0.0, uhi = 0.0;
        for (std::size_t i = 0; i < 3; ++i) {
            double l = closed->var_lower(i), u = closed->var_upper(i);
            ulo += std::min(c[i] * l, c[i] * u);
            uhi += std::max(c[i] * l, c[i] * u);
        }
        CHECK(hi <= uhi + 1e-12);
        CHECK(lo >= ulo - 1e-12);

        // Soundness: sampled octagon points never exceed the bounds.
        for (int s = 0; s < 200; ++s) {
            Vec x(3);
            for (std::size_t i = 0; i < 3; ++i)
                x[i] = testutil::uniform(rng, closed->var_lower(i), closed->var_upper(i));
            if (!closed->contains(x)) continue;
            double v = c[0] * x[0] + c[1] * x[1] + c[2] * x[2];
            CHECK(v <= hi + 1e-9);
            CHECK(v >= lo - 1e-9);
        }
        ++done;
    }
}

TEST_CASE("bound_linear_form rejects an empty octagon") {
    Octagon oct(1);
    oct.at(0, 0) = -1.0;
    CHECK_THROWS_AS(bound_linear_form({1.0}, oct), EmptyDomain);
}
