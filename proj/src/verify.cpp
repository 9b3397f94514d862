#include "depkit/verify.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <json.hpp>

#include "depkit/jsonutil.hpp"
#include "depkit/lp.hpp"

namespace depkit {

using nlohmann::json;

void VerificationProblem::validate() const {
    net.validate();
    input_box.validate();
    if (input_box.dim() != net.input_dim)
        throw DimensionMismatch("problem: input_box dimension != input_dim");
    for (const LinearConstraint& c : input_constraints) {
        c.validate();
        if (c.coeffs.size() != net.input_dim)
            throw DimensionMismatch("problem: input constraint dimension != input_dim");
    }
    if (risk.empty()) throw BadParameters("problem: risk property needs at least one constraint");
    for (const LinearConstraint& c : risk) {
        c.validate();
        if (c.coeffs.size() != net.output_dim())
            throw DimensionMismatch("problem: risk constraint dimension != output width");
    }
}

namespace {

double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

bool inputs_satisfied(const VerificationProblem& p, const Vec& x) {
    if (!p.input_box.contains(x)) return false;
    for (const LinearConstraint& c : p.input_constraints)
        if (!c.satisfied(x)) return false;
    return true;
}

/// min over risk constraints of the signed satisfaction margin; >= 0 iff
/// every risk constraint holds at y.
double risk_margin(const VerificationProblem& p, const Vec& y) {
    double m = kInf;
    for (const LinearConstraint& c : p.risk) {
        double s = dot(c.coeffs, y);
        m = std::min(m, c.rel == Relation::Ge ? s - c.bound : c.bound - s);
    }
    return m;
}

/// Exact witness check: box, input constraints and risk all hold with plain
/// floating-point comparisons. Returns the forward output on success.
std::optional<Vec> validate_witness(const VerificationProblem& p, const Vec& x) {
    if (!inputs_satisfied(p, x)) return std::nullopt;
    Vec y = forward(p.net, x).logits;
    if (risk_margin(p, y) < 0.0) return std::nullopt;
    return y;
}

bool interval_refutes(const LayerBounds& out, const std::vector<LinearConstraint>& risk) {
    for (const LinearConstraint& c : risk) {
        double lo = 0.0, hi = 0.0;
        for (std::size_t i = 0; i < c.coeffs.size(); ++i) {
            double g = c.coeffs[i];
            lo += std::min(g * out.lower[i], g * out.upper[i]);
            hi += std::max(g * out.lower[i], g * out.upper[i]);
        }
        if (c.rel == Relation::Ge && hi < c.bound) return true;
        if (c.rel == Relation::Le && lo > c.bound) return true;
    }
    return false;
}

bool octagon_refutes(const Octagon& out, const std::vector<LinearConstraint>& risk) {
    for (const LinearConstraint& c : risk) {
        auto [lo, hi] = bound_linear_form(c.coeffs, out);
        if (c.rel == Relation::Ge && hi < c.bound) return true;
        if (c.rel == Relation::Le && lo > c.bound) return true;
    }
    return false;
}

struct LeafRow {
    Vec a;      // over the input variables
    double rhs; // a.x <= rhs
};

enum class LeafKind { Refuted, Witness, Undecided };

struct LeafDecision {
    LeafKind kind = LeafKind::Undecided;
    Vec witness;
    Vec output;
};

/// With every ReLU phase stable or branch-fixed the network is affine on the
/// leaf region; decide risk reachability exactly by maximizing the minimum
/// constraint slack with the simplex.
LeafDecision decide_leaf(const VerificationProblem& p, const Box& box,
                         const PropagationResult& prop) {
    const std::size_t n = p.net.input_dim;
    std::vector<Vec> M(n, Vec(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) M[i][i] = 1.0;
    Vec d(n, 0.0);

    std::vector<LeafRow> rows;
    for (const LinearConstraint& c : p.input_constraints) {
        Vec a = c.coeffs;
        double b = c.bound;
        if (c.rel == Relation::Ge) {
            for (double& v : a) v = -v;
            b = -b;
        }
        rows.push_back({std::move(a), b});
    }

    for (std::size_t li = 0; li < p.net.layers.size(); ++li) {
        const Layer& layer = p.net.layers[li];
        if (layer.kind == LayerKind::Affine) {
            std::size_t out_n = layer.weights.rows;
            std::vector<Vec> nm(out_n, Vec(n, 0.0));
            Vec nd(out_n, 0.0);
            for (std::size_t r = 0; r < out_n; ++r) {
                nd[r] = layer.bias[r];
                for (std::size_t c = 0; c < layer.weights.cols; ++c) {
                    double w = layer.weights.at(r, c);
                    if (w == 0.0) continue;
                    nd[r] += w * d[c];
                    for (std::size_t j = 0; j < n; ++j) nm[r][j] += w * M[c][j];
                }
            }
            M = std::move(nm);
            d = std::move(nd);
        } else {
            const auto& status = prop.relu_status.at(static_cast<int>(li));
            for (std::size_t i = 0; i < status.size(); ++i) {
                if (status[i].effective == Phase::Free) return {}; // unstable leaf, cannot decide
                if (status[i].effective == Phase::Active) {
                    if (status[i].fixed_by_branch) {
                        Vec a(n);
                        for (std::size_t j = 0; j < n; ++j) a[j] = -M[i][j];
                        rows.push_back({std::move(a), d[i]}); // pre >= 0
                    }
                } else {
                    if (status[i].fixed_by_branch) rows.push_back({M[i], -d[i]}); // pre <= 0
                    std::fill(M[i].begin(), M[i].end(), 0.0);
                    d[i] = 0.0;
                }
            }
        }
    }

    for (const LinearConstraint& c : p.risk) {
        Vec a(n, 0.0);
        double off = 0.0;
        for (std::size_t r = 0; r < c.coeffs.size(); ++r) {
            double g = c.coeffs[r];
            if (g == 0.0) continue;
            off += g * d[r];
            for (std::size_t j = 0; j < n; ++j) a[j] += g * M[r][j];
        }
        if (c.rel == Relation::Ge) {
            for (double& v : a) v = -v;
            rows.push_back({std::move(a), off - c.bound});
        } else {
            rows.push_back({std::move(a), c.bound - off});
        }
    }

    // Shift to u = x - lower >= 0 and maximize the uniform slack t.
    double shift = 0.0;
    for (const LeafRow& r : rows) shift = std::max(shift, dot(r.a, box.lower) - r.rhs);
    double t0 = shift + 1.0;

    std::vector<Vec> A;
    Vec b, obj(n + 1, 0.0);
    obj[n] = 1.0;
    for (const LeafRow& r : rows) {
        Vec row(n + 1, 0.0);
        for (std::size_t j = 0; j < n; ++j) row[j] = r.a[j];
        row[n] = 1.0;
        A.push_back(std::move(row));
        b.push_back(r.rhs - dot(r.a, box.lower) + t0);
    }
    for (std::size_t i = 0; i < n; ++i) {
        Vec row(n + 1, 0.0);
        row[i] = 1.0;
        A.push_back(std::move(row));
        b.push_back(box.upper[i] - box.lower[i]);
    }

    lp::Result lpres = lp::solve_max(A, b, obj);
    if (lpres.status == lp::Result::Status::Unbounded)
        return {}; // cannot happen with a compact box; stay conservative
    double slack = lpres.value - t0;

    Vec x(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = box.lower[i] + lpres.point[i];
        x[i] = std::min(std::max(x[i], box.lower[i]), box.upper[i]);
    }
    if (auto y = validate_witness(p, x)) return {LeafKind::Witness, x, *y};
    if (slack <= 1e-10) return {LeafKind::Refuted, {}, {}};
    return {}; // LP feasible but the witness failed exact validation
}

struct SearchCtx {
    const VerificationProblem& p;
    Domain domain;
    Box box;
    std::optional<Octagon> input_oct;
    int budget = 0;
    int splits = 0;
    int unknown = 0;
    Vec cex_in, cex_out;
};

enum class NodeOutcome { Refuted, Cex, HasUnknown };

NodeOutcome explore(SearchCtx& ctx, PhaseMap& phases) {
    PropagationResult prop =
        propagate_with_phases(ctx.p.net, ctx.box, ctx.domain, phases, ctx.input_oct);
    if (prop.empty) return NodeOutcome::Refuted;
    if (ctx.domain == Domain::Octagon ? octagon_refutes(prop.octagons.back(), ctx.p.risk)
                                      : interval_refutes(prop.layers.back(), ctx.p.risk))
        return NodeOutcome::Refuted;

    if (prop.unstable.empty()) {
        LeafDecision leaf = decide_leaf(ctx.p, ctx.box, prop);
        switch (leaf.kind) {
        case LeafKind::Refuted:
            return NodeOutcome::Refuted;
        case LeafKind::Witness:
            ctx.cex_in = std::move(leaf.witness);
            ctx.cex_out = std::move(leaf.output);
            return NodeOutcome::Cex;
        case LeafKind::Undecided:
            ++ctx.unknown;
            return NodeOutcome::HasUnknown;
        }
    }

    // Branch on the unstable ReLU with the widest pre-activation interval;
    // ties go to the lowest (layer, neuron).
    const PropagationResult::Unstable* pick = &prop.unstable.front();
    for (const auto& u : prop.unstable) {
        if (u.width > pick->width ||
            (u.width == pick->width &&
             std::pair{u.layer, u.neuron} < std::pair{pick->layer, pick->neuron}))
            pick = &u;
    }
    if (ctx.budget <= 0) {
        ++ctx.unknown;
        return NodeOutcome::HasUnknown;
    }
    --ctx.budget;
    ++ctx.splits;

    bool has_unknown = false;
    for (Phase ph : {Phase::Active, Phase::Inactive}) {
        phases[{pick->layer, pick->neuron}] = ph;
        NodeOutcome r = explore(ctx, phases);
        phases.erase({pick->layer, pick->neuron});
        if (r == NodeOutcome::Cex) return NodeOutcome::Cex;
        if (r == NodeOutcome::HasUnknown) has_unknown = true;
    }
    return has_unknown ? NodeOutcome::HasUnknown : NodeOutcome::Refuted;
}

} // namespace

std::optional<std::pair<Vec, Vec>> find_counterexample(const VerificationProblem& p, int attempts,
                                                       std::uint64_t seed) {
    p.validate();
    auto tb = tighten_box(p.input_box, p.input_constraints);
    if (!tb) return std::nullopt;
    const Box& box = *tb;
    const std::size_t n = box.dim();

    std::mt19937_64 rng(seed);
    auto uniform01 = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };

    Vec best_x;
    double best_margin = -kInf;
    auto consider = [&](const Vec& x) -> bool {
        if (!inputs_satisfied(p, x)) return false;
        Vec y = forward(p.net, x).logits;
        double m = risk_margin(p, y);
        if (m > best_margin) {
            best_margin = m;
            best_x = x;
        }
        return m >= 0.0;
    };

    // Corner phase: evaluate all corners (or a seeded sample in high
    // dimension) and keep the margin-maximizing one.
    if (n <= 16) {
        for (std::uint64_t mask = 0; mask < (1ull << n); ++mask) {
            Vec x(n);
            for (std::size_t i = 0; i < n; ++i)
                x[i] = (mask >> i) & 1 ? box.upper[i] : box.lower[i];
            consider(x);
        }
    } else {
        for (int s = 0; s < 4096; ++s) {
            Vec x(n);
            for (std::size_t i = 0; i < n; ++i)
                x[i] = (rng() & 1) ? box.upper[i] : box.lower[i];
            consider(x);
        }
    }
    if (best_margin >= 0.0)
        if (auto y = validate_witness(p, best_x)) return std::make_pair(best_x, *y);

    // Random interior sampling.
    for (int s = 0; s < attempts; ++s) {
        Vec x(n);
        for (std::size_t i = 0; i < n; ++i)
            x[i] = box.lower[i] + uniform01() * (box.upper[i] - box.lower[i]);
        if (consider(x))
            if (auto y = validate_witness(p, x)) return std::make_pair(x, *y);
    }

    // Projected gradient ascent on the hinge measure of risk satisfaction.
    Vec x = best_x;
    if (x.empty()) {
        x.resize(n);
        for (std::size_t i = 0; i < n; ++i) x[i] = (box.lower[i] + box.upper[i]) / 2.0;
    }
    double width = 0.0;
    for (std::size_t i = 0; i < n; ++i) width = std::max(width, box.upper[i] - box.lower[i]);
    double step = 0.25 * width;
    for (int it = 0; it < 200 && step > 1e-12; ++it) {
        Vec y = forward(p.net, x).logits;
        if (risk_margin(p, y) >= 0.0)
            if (auto yy = validate_witness(p, x)) return std::make_pair(x, *yy);
        Vec cot(p.net.output_dim(), 0.0);
        for (const LinearConstraint& c : p.risk) {
            double s = dot(c.coeffs, y);
            bool violated = c.rel == Relation::Ge ? s < c.bound : s > c.bound;
            if (!violated) continue;
            double sign = c.rel == Relation::Ge ? 1.0 : -1.0;
            for (std::size_t i = 0; i < cot.size(); ++i) cot[i] += sign * c.coeffs[i];
        }
        Vec dx = backprop_logit_gradient(p.net, x, cot);
        double norm = 0.0;
        for (double v : dx) norm = std::max(norm, std::abs(v));
        if (norm == 0.0) break;
        Vec nx(n);
        for (std::size_t i = 0; i < n; ++i) {
            nx[i] = x[i] + step * dx[i] / norm;
            nx[i] = std::min(std::max(nx[i], box.lower[i]), box.upper[i]);
        }
        if (inputs_satisfied(p, nx)) {
            x = std::move(nx);
        } else {
            step /= 2.0;
        }
    }
    Vec y = forward(p.net, x).logits;
    if (risk_margin(p, y) >= 0.0)
        if (auto yy = validate_witness(p, x)) return std::make_pair(x, *yy);
    return std::nullopt;
}

Verdict verify(const VerificationProblem& problem, const VerifyOptions& opts) {
    problem.validate();
    Verdict v;
    v.budget_given = opts.budget;

    auto tightened = tighten_box(problem.input_box, problem.input_constraints);
    if (!tightened) {
        v.kind = VerdictKind::Proved;
        v.note = "input region empty after constraint tightening; risk vacuously unreachable";
        return v;
    }

    SearchCtx ctx{problem, opts.domain, *tightened, std::nullopt, opts.budget, 0, 0, {}, {}};
    if (opts.domain == Domain::Octagon)
        ctx.input_oct = octagon_with_constraints(*tightened, problem.input_constraints);

    PropagationResult root =
        propagate_with_phases(problem.net, ctx.box, opts.domain, {}, ctx.input_oct);
    v.layer_bounds = root.layers;

    // Falsification first: any validated concrete witness settles the problem.
    VerificationProblem scoped = problem;
    scoped.input_box = ctx.box;
    if (auto w = find_counterexample(scoped, opts.cex_attempts, opts.seed)) {
        v.kind = VerdictKind::Counterexample;
        v.witness_input = w->first;
        v.witness_output = w->second;
        v.note = "witness found by sampling / gradient search";
        return v;
    }

    PhaseMap phases;
    NodeOutcome out = explore(ctx, phases);
    v.splits_used = ctx.splits;
    v.unknown_leaves = ctx.unknown;
    switch (out) {
    case NodeOutcome::Cex: {
        v.kind = VerdictKind::Counterexample;
        v.witness_input = ctx.cex_in;
        v.witness_output = ctx.cex_out;
        v.note = "witness found by branch-and-bound leaf decision";
        break;
    }
    case NodeOutcome::Refuted:
        v.kind = VerdictKind::Proved;
        v.note = "all branches refuted";
        break;
    case NodeOutcome::HasUnknown:
        v.kind = VerdictKind::Unknown;
        v.note = "budget exhausted with " + std::to_string(ctx.unknown) +
                 " undecided leaves (budget " + std::to_string(opts.budget) + ", splits used " +
                 std::to_string(ctx.splits) + ")";
        break;
    }
    return v;
}

namespace {

LinearConstraint parse_constraint(const json& cj, const std::string& ctx) {
    LinearConstraint c;
    c.coeffs = cj.at("coeffs").get<Vec>();
    std::string rel = cj.at("rel").get<std::string>();
    if (rel == "<=")
        c.rel = Relation::Le;
    else if (rel == ">=")
        c.rel = Relation::Ge;
    else
        throw MalformedInput(ctx + ": relation must be \"<=\" or \">=\"");
    c.bound = cj.at("bound").get<double>();
    c.validate();
    return c;
}

} // namespace

VerificationProblem load_problem(const std::filesystem::path& path) {
    json j = read_json_file(path);
    require_format(j, "problem " + path.string());
    VerificationProblem p;
    try {
        std::filesystem::path model = j.at("model").get<std::string>();
        if (model.is_relative()) model = path.parent_path() / model;
        p.net = load_network(model);
        const json& bj = j.at("input_box");
        if (bj.is_array() && bj.size() == 2) {
            p.input_box.lower = bj.at(0).get<Vec>();
            p.input_box.upper = bj.at(1).get<Vec>();
        } else {
            p.input_box.lower = bj.at("lower").get<Vec>();
            p.input_box.upper = bj.at("upper").get<Vec>();
        }
        if (j.contains("input_constraints"))
            for (const json& cj : j["input_constraints"])
                p.input_constraints.push_back(parse_constraint(cj, "input constraint"));
        for (const json& cj : j.at("risk"))
            p.risk.push_back(parse_constraint(cj, "risk constraint"));
    } catch (const json::exception& e) {
        throw MalformedInput("problem " + path.string() + ": " + e.what());
    }
    p.validate();
    return p;
}

} // namespace depkit
