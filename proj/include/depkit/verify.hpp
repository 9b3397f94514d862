#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "depkit/network.hpp"
#include "depkit/propagate.hpp"

namespace depkit {

/// Does any input in the constrained box drive the network into the risk
/// property (a conjunction of linear constraints over the output logits)?
struct VerificationProblem {
    Network net;
    Box input_box;
    std::vector<LinearConstraint> input_constraints;
    std::vector<LinearConstraint> risk;

    void validate() const;
};

enum class VerdictKind { Proved, Counterexample, Unknown };

struct Verdict {
    VerdictKind kind = VerdictKind::Unknown;
    std::string note;
    Vec witness_input;  // Counterexample only, re-validated concretely
    Vec witness_output;
    int budget_given = 0;
    int splits_used = 0;
    int unknown_leaves = 0;
    std::vector<LayerBounds> layer_bounds; // root propagation summary
};

struct VerifyOptions {
    Domain domain = Domain::Interval;
    int budget = 256;      // max ReLU splits
    std::uint64_t seed = 0;
    int cex_attempts = 256;
};

/// Sound bound propagation refined by ReLU-phase branch-and-bound; leaves with
/// every phase resolved are decided exactly, so with budget >= 2^(#unstable)
/// the verdict is never Unknown. Proved requires every leaf refuted;
/// Counterexample carries a concretely validated witness.
Verdict verify(const VerificationProblem& problem, const VerifyOptions& opts = {});

/// Falsification half of verify: corner + random sampling inside the
/// tightened box plus projected gradient ascent on a hinge measure of
/// risk-constraint satisfaction. Witnesses are validated exactly.
std::optional<std::pair<Vec, Vec>> find_counterexample(const VerificationProblem& problem,
                                                       int attempts, std::uint64_t seed);

/// Problem file (JSON): model path resolves relative to the problem file.
VerificationProblem load_problem(const std::filesystem::path& path);

} // namespace depkit
