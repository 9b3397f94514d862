#pragma once

#include <map>
#include <optional>
#include <vector>

#include "depkit/network.hpp"
#include "depkit/octagon.hpp"

namespace depkit {

struct Box {
    Vec lower, upper;

    std::size_t dim() const { return lower.size(); }
    bool contains(const Vec& x) const;
    void validate() const;
};

enum class Relation { Le, Ge };

/// sum(coeffs[i] * y_i) rel bound. Satisfaction is checked with exact
/// floating-point comparisons (no epsilon slack).
struct LinearConstraint {
    Vec coeffs;
    Relation rel = Relation::Le;
    double bound = 0.0;

    bool satisfied(const Vec& y) const;
    void validate() const;
};

/// Iterated interval constraint propagation (fixpoint or 100 rounds).
/// std::nullopt when some interval becomes void. Sound: never removes a
/// feasible point.
std::optional<Box> tighten_box(Box box, const std::vector<LinearConstraint>& constraints);

/// Branch-and-bound phase fixing for one ReLU neuron.
enum class Phase : unsigned char { Free, Active, Inactive };
using PhaseMap = std::map<std::pair<int, int>, Phase>; // (layer, neuron) -> phase

enum class Domain { Interval, Octagon };

struct LayerBounds {
    Vec lower, upper; // post-activation unary bounds
};

struct PropagationResult {
    bool empty = false;
    std::vector<LayerBounds> layers;

    struct NeuronStatus {
        Phase effective = Phase::Free; // Active/Inactive once stable or branch-fixed
        bool fixed_by_branch = false;
    };
    // One entry per ReLU layer index present in the network.
    std::map<int, std::vector<NeuronStatus>> relu_status;

    struct Unstable {
        int layer = 0;
        int neuron = 0;
        double width = 0.0; // pre-activation interval width
    };
    std::vector<Unstable> unstable;

    std::vector<Octagon> octagons; // per layer, octagon domain only
};

/// Core bound propagation with optional branch-fixed ReLU phases. When
/// `input_oct` is given (octagon domain), it seeds the relational input state
/// instead of the box's unary bounds.
PropagationResult propagate_with_phases(const Network& net, const Box& input, Domain domain,
                                        const PhaseMap& phases,
                                        const std::optional<Octagon>& input_oct = std::nullopt);

/// Per-layer interval boxes (sign-split affine transformer, clamped ReLU).
std::vector<Box> propagate_interval(const Network& net, const Box& box);

/// Per-layer octagons (pairwise affine bounding + strong closure; unstable
/// ReLU neurons forget their binary relations).
std::vector<Octagon> propagate_octagon(const Network& net, const Octagon& input);

/// Closed octagon holding exactly the box's unary bounds.
Octagon octagon_from_box(const Box& box);

/// Absorb input constraints that are octagon-expressible (one nonzero
/// coefficient, or two of equal magnitude) into the octagon, then close.
Octagon octagon_with_constraints(const Box& box, const std::vector<LinearConstraint>& constraints);

} // namespace depkit
