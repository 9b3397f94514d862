#include "doctest.h"

#include <random>

#include "depkit/propagate.hpp"
#include "support/testutil.hpp"

using namespace depkit;

namespace {

Network affine_net(std::size_t in, std::vector<std::vector<double>> rows, Vec bias) {
    Network net;
    net.input_dim = in;
    Matrix w(rows.size(), in);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < in; ++c) w.at(r, c) = rows[r][c];
    net.layers.push_back(Layer::affine(std::move(w), std::move(bias)));
    return net;
}

} // namespace

TEST_CASE("tighten_box: forced point, contradiction, and fixpoint") {
    Box unit{{0.0, 0.0}, {1.0, 1.0}};
    LinearConstraint sum_le0{{1.0, 1.0}, Relation::Le, 0.0};
    auto tightened = tighten_box(unit, {sum_le0});
    REQUIRE(tightened.has_value());
    CHECK(tightened->lower == Vec{0.0, 0.0});
    CHECK(tightened->upper == Vec{0.0, 0.0});

    Box line{{0.0}, {1.0}};
    LinearConstraint ge2{{1.0}, Relation::Ge, 2.0};
    CHECK_FALSE(tighten_box(line, {ge2}).has_value());

    LinearConstraint diff{{1.0, -1.0}, Relation::Le, 0.0};
    auto same = tighten_box(unit, {diff});
    REQUIRE(same.has_value());
    CHECK(same->lower == unit.lower); // no single-variable tightening possible
    CHECK(same->upper == unit.upper);
}

TEST_CASE("tighten_box never removes feasible points") {
    std::mt19937_64 rng(73);
    for (int trial = 0; trial < 30; ++trial) {
        Box box{{-1.0, -1.0, -1.0}, {1.0, 1.0, 1.0}};
        std::vector<LinearConstraint> cs;
        for (int c = 0; c < 2; ++c) {
            Vec a(3);
            for (double& v : a) v = testutil::uniform(rng, -1.0, 1.0);
            cs.push_back({a, rng() % 2 ? Relation::Le : Relation::Ge,
                          testutil::uniform(rng, -0.5, 0.5)});
        }
        auto tightened = tighten_box(box, cs);
        for (int s = 0; s < 300; ++s) {
            Vec x = testutil::random_point(rng, box);
            bool ok = true;
            for (const LinearConstraint& c : cs) ok = ok && c.satisfied(x);
            if (!ok) continue;
            REQUIRE(tightened.has_value());
            CHECK(tightened->contains(x));
        }
    }
}

TEST_CASE("propagate_interval: pinned affine and ReLU examples") {
    Network doubling = affine_net(1, {{2.0}}, {-1.0});
    auto boxes = propagate_interval(doubling, Box{{0.0}, {1.0}});
    CHECK(boxes.back().lower[0] == -1.0);
    CHECK(boxes.back().upper[0] == 1.0);

    Network clamp;
    clamp.input_dim = 1;
    Matrix w(1, 1);
    w.at(0, 0) = 1.0;
    clamp.layers.push_back(Layer::affine(std::move(w), Vec{0.0}));
    clamp.layers.push_back(Layer::relu());
    auto relu_boxes = propagate_interval(clamp, Box{{-1.0}, {1.0}});
    CHECK(relu_boxes.back().lower[0] == 0.0);
    CHECK(relu_boxes.back().upper[0] == 1.0);

    Network diff = affine_net(2, {{1.0, -1.0}}, {0.0});
    auto diff_boxes = propagate_interval(diff, Box{{0.0, 0.0}, {1.0, 1.0}});
    CHECK(diff_boxes.back().lower[0] == -1.0);
    CHECK(diff_boxes.back().upper[0] == 1.0);
}

TEST_CASE("propagate_interval: sampling soundness on random nets") {
    std::mt19937_64 rng(79);
    for (int trial = 0; trial < 10; ++trial) {
        Network net = testutil::random_net(rng, 2, {5, 4}, 3);
        Box box{{0.0, 0.0}, {1.0, 1.0}};
        auto boxes = propagate_interval(net, box);
        for (int s = 0; s < 2000; ++s) {
            Vec x = testutil::random_point(rng, box);
            ForwardResult fwd = forward(net, x);
            for (std::size_t li = 0; li < boxes.size(); ++li)
                for (std::size_t i = 0; i < boxes[li].lower.size(); ++i) {
                    CHECK(fwd.trace.per_layer[li][i] >= boxes[li].lower[i]);
                    CHECK(fwd.trace.per_layer[li][i] <= boxes[li].upper[i]);
                }
        }
    }
}

TEST_CASE("propagate_octagon: duplicated outputs stay equal") {
    Network dup = affine_net(1, {{1.0}, {1.0}}, {0.0, 0.0});
    auto octs = propagate_octagon(dup, octagon_from_box(Box{{0.0}, {1.0}}));
    const Octagon& out = octs.back();
    CHECK(out.pair_upper(0, false, 1, true) == 0.0); // y0 - y1 <= 0
    CHECK(out.pair_upper(1, false, 0, true) == 0.0); // y1 - y0 <= 0
}

TEST_CASE("propagate_octagon: input relations survive the affine layer") {
    Box box{{0.0, 0.0}, {1.0, 1.0}};
    Octagon in = octagon_from_box(box);
    in.set_diff_upper(0, 1, 0.1);  // x0 - x1 <= 0.1
    in.set_diff_upper(1, 0, 0.1);  // x1 - x0 <= 0.1
    auto closed = strong_closure(in);
    REQUIRE(closed.has_value());

    Network diff = affine_net(2, {{1.0, -1.0}}, {0.0});
    auto octs = propagate_octagon(diff, *closed);
    CHECK(octs.back().var_upper(0) == doctest::Approx(0.1));
    CHECK(octs.back().var_lower(0) == doctest::Approx(-0.1));

    // Interval propagation cannot see the relation.
    auto boxes = propagate_interval(diff, box);
    CHECK(boxes.back().upper[0] == 1.0);
    CHECK(boxes.back().lower[0] == -1.0);
}

TEST_CASE("propagate_octagon: sampling soundness over the full octagons") {
    std::mt19937_64 rng(83);
    for (int trial = 0; trial < 6; ++trial) {
        Network net = testutil::random_net(rng, 3, {4}, 3);
        Box box{{0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}};
        auto octs = propagate_octagon(net, octagon_from_box(box));
        for (int s = 0; s < 1500; ++s) {
            Vec x = testutil::random_point(rng, box);
            ForwardResult fwd = forward(net, x);
            for (std::size_t li = 0; li < octs.size(); ++li)
                CHECK(octs[li].contains(fwd.trace.per_layer[li]));
        }
    }
}

TEST_CASE("octagon unary bounds dominate interval bounds") {
    std::mt19937_64 rng(89);
    for (int trial = 0; trial < 10; ++trial) {
        Network net = testutil::random_net(rng, 2, {4, 4}, 2);
        Box box{{0.0, 0.0}, {1.0, 1.0}};
        auto boxes = propagate_interval(net, box);
        auto octs = propagate_octagon(net, octagon_from_box(box));
        REQUIRE(boxes.size() == octs.size());
        for (std::size_t li = 0; li < boxes.size(); ++li)
            for (std::size_t i = 0; i < boxes[li].lower.size(); ++i) {
                double iw = boxes[li].upper[i] - boxes[li].lower[i];
                double ow = octs[li].var_upper(i) - octs[li].var_lower(i);
                CHECK(ow <= iw * (1.0 + 1e-12) + 1e-300);
            }
    }
}

TEST_CASE("propagate_with_phases: fixing a phase tightens and can empty") {
    // One hidden neuron y = relu(x) over x in [-1, 1].
    Network net;
    net.input_dim = 1;
    Matrix w(1, 1);
    w.at(0, 0) = 1.0;
    net.layers.push_back(Layer::affine(std::move(w), Vec{0.0}));
    net.layers.push_back(Layer::relu());

    Box box{{-1.0}, {1.0}};
    PhaseMap active{{{1, 0}, Phase::Active}};
    auto prop = propagate_with_phases(net, box, Domain::Interval, active);
    CHECK_FALSE(prop.empty);
    CHECK(prop.layers.back().lower[0] == 0.0);
    CHECK(prop.unstable.empty());

    Box negative{{-1.0}, {-0.5}};
    auto infeasible = propagate_with_phases(net, negative, Domain::Interval, active);
    CHECK(infeasible.empty); // activation impossible on a negative box
}
