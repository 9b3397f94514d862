#pragma once

// Independent reference implementations used to freeze expected values.
// They deliberately avoid the library's own propagation, search and closure
// code paths: brute-force enumeration, path enumeration and vertex
// enumeration only.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "depkit/coverage.hpp"
#include "depkit/network.hpp"
#include "depkit/octagon.hpp"
#include "depkit/propagate.hpp"
#include "depkit/verify.hpp"

namespace oracle {

// ---------------------------------------------------------------- coverage

inline void for_each_combo(std::size_t m, int k,
                           const std::function<void(const std::vector<int>&)>& fn) {
    std::vector<int> combo(k);
    std::function<void(int, int)> rec = [&](int start, int depth) {
        if (depth == k) {
            fn(combo);
            return;
        }
        for (int c = start; c <= static_cast<int>(m) - (k - depth); ++c) {
            combo[depth] = c;
            rec(c + 1, depth + 1);
        }
    };
    rec(0, 0);
}

/// All k-tuples of one assignment, encoded as (cat,val) pair lists.
inline std::set<depkit::KTuple> tuples_of(const depkit::CategorySpace& space,
                                          const std::vector<int>& assignment, int k) {
    std::set<depkit::KTuple> out;
    for_each_combo(space.size(), k, [&](const std::vector<int>& cats) {
        depkit::KTuple t;
        for (int c : cats) t.emplace_back(c, assignment[c]);
        out.insert(std::move(t));
    });
    return out;
}

inline std::set<depkit::KTuple> covered_tuples(const depkit::CategorySpace& space,
                                               const std::vector<depkit::ScenarioItem>& items,
                                               int k) {
    std::set<depkit::KTuple> covered;
    for (const depkit::ScenarioItem& item : items) {
        auto t = tuples_of(space, item.assignment, k);
        covered.insert(t.begin(), t.end());
    }
    return covered;
}

inline long long tuple_denominator(const depkit::CategorySpace& space, int k) {
    long long total = 0;
    for_each_combo(space.size(), k, [&](const std::vector<int>& cats) {
        long long prod = 1;
        for (int c : cats) prod *= static_cast<long long>(space.cardinality(c));
        total += prod;
    });
    return total;
}

inline void for_each_assignment(const depkit::CategorySpace& space,
                                const std::function<void(const std::vector<int>&)>& fn) {
    std::vector<int> a(space.size(), 0);
    std::function<void(std::size_t)> rec = [&](std::size_t cat) {
        if (cat == space.size()) {
            fn(a);
            return;
        }
        for (std::size_t v = 0; v < space.cardinality(cat); ++v) {
            a[cat] = static_cast<int>(v);
            rec(cat + 1);
        }
    };
    rec(0);
}

struct BestProposal {
    bool any_feasible = false;
    long long gain = -1;
    std::vector<int> assignment; // lexicographically first among maxima
};

/// Exhaustive search over every full assignment.
inline BestProposal best_gain(const depkit::CategorySpace& space,
                              const std::set<depkit::KTuple>& covered, int k,
                              const std::vector<depkit::IndicatorConstraint>& constraints) {
    BestProposal best;
    for_each_assignment(space, [&](const std::vector<int>& a) {
        if (!depkit::is_feasible(depkit::ScenarioItem{a}, constraints)) return;
        best.any_feasible = true;
        long long gain = 0;
        for (const depkit::KTuple& t : tuples_of(space, a, k))
            if (!covered.count(t)) ++gain;
        if (gain > best.gain) {
            best.gain = gain;
            best.assignment = a;
        }
    });
    return best;
}

// ----------------------------------------------------------------- octagon

/// Shortest octagonal paths by exhaustive simple-path enumeration (length
/// <= 2n), then one strengthening pass. Exact on dyadic inputs.
inline std::optional<depkit::Octagon> closure_by_paths(const depkit::Octagon& oct) {
    std::size_t dim = 2 * oct.dim();
    depkit::Octagon out = oct;

    for (std::size_t src = 0; src < dim; ++src) {
        std::vector<bool> used(dim, false);
        std::function<void(std::size_t, double)> walk = [&](std::size_t at, double cost) {
            if (cost < out.at(src, at)) out.at(src, at) = cost;
            for (std::size_t next = 0; next < dim; ++next) {
                if (used[next] || oct.at(at, next) == depkit::kInf) continue;
                used[next] = true;
                walk(next, cost + oct.at(at, next));
                used[next] = false;
            }
        };
        used[src] = true;
        walk(src, 0.0);
        // negative cycles through src
        for (std::size_t mid = 0; mid < dim; ++mid) {
            if (out.at(src, mid) == depkit::kInf || oct.at(mid, src) == depkit::kInf) continue;
            if (mid != src && out.at(src, mid) + oct.at(mid, src) < 0.0) return std::nullopt;
        }
    }
    for (std::size_t a = 0; a < dim; ++a)
        if (out.at(a, a) < 0.0) return std::nullopt;
    for (std::size_t a = 0; a < dim; ++a) out.at(a, a) = 0.0;

    depkit::Octagon strengthened = out;
    for (std::size_t a = 0; a < dim; ++a)
        for (std::size_t b = 0; b < dim; ++b) {
            double ua = out.at(a, depkit::Octagon::bar(a));
            double ub = out.at(depkit::Octagon::bar(b), b);
            if (ua == depkit::kInf || ub == depkit::kInf) continue;
            double cand = (ua + ub) / 2.0;
            if (cand < strengthened.at(a, b)) strengthened.at(a, b) = cand;
        }
    for (std::size_t a = 0; a < dim; ++a) strengthened.at(a, a) = 0.0;
    return strengthened;
}

// ------------------------------------------------------------ verification

struct Row {
    depkit::Vec a;
    double b; // a.x <= b
};

/// Solve the n x n system A x = rhs by Gaussian elimination with partial
/// pivoting; false when near-singular.
inline bool solve_square(std::vector<depkit::Vec> A, depkit::Vec rhs, depkit::Vec& x) {
    std::size_t n = rhs.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
        if (std::abs(A[piv][col]) < 1e-9) return false;
        std::swap(A[piv], A[col]);
        std::swap(rhs[piv], rhs[col]);
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            double f = A[r][col] / A[col][col];
            if (f == 0.0) continue;
            for (std::size_t c = col; c < n; ++c) A[r][c] -= f * A[col][c];
            rhs[r] -= f * rhs[col];
        }
    }
    x.resize(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = rhs[i] / A[i][i];
    return true;
}

inline bool point_feasible(const std::vector<Row>& rows, const depkit::Vec& x, double tol) {
    for (const Row& r : rows) {
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) s += r.a[i] * x[i];
        if (s > r.b + tol) return false;
    }
    return true;
}

/// Vertex enumeration over all n-subsets of constraint boundaries. The row
/// set must describe a compact polytope (box rows included).
inline bool feasible_by_vertices(const std::vector<Row>& rows, std::size_t n, double tol,
                                 depkit::Vec* witness = nullptr) {
    std::vector<int> pick(n);
    bool found = false;
    std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t start, std::size_t depth) {
        if (found) return;
        if (depth == n) {
            std::vector<depkit::Vec> A(n);
            depkit::Vec rhs(n);
            for (std::size_t i = 0; i < n; ++i) {
                A[i] = rows[pick[i]].a;
                rhs[i] = rows[pick[i]].b;
            }
            depkit::Vec x;
            if (solve_square(std::move(A), std::move(rhs), x) && point_feasible(rows, x, tol)) {
                found = true;
                if (witness) *witness = x;
            }
            return;
        }
        for (std::size_t r = start; r < rows.size(); ++r) {
            pick[depth] = static_cast<int>(r);
            rec(r + 1, depth + 1);
        }
    };
    rec(0, 0);
    return found;
}

/// Max of obj.x over the polytope's vertices; nullopt when infeasible.
inline std::optional<double> max_by_vertices(const std::vector<Row>& rows, std::size_t n,
                                             const depkit::Vec& obj, double tol) {
    std::vector<int> pick(n);
    std::optional<double> best;
    std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t start, std::size_t depth) {
        if (depth == n) {
            std::vector<depkit::Vec> A(n);
            depkit::Vec rhs(n);
            for (std::size_t i = 0; i < n; ++i) {
                A[i] = rows[pick[i]].a;
                rhs[i] = rows[pick[i]].b;
            }
            depkit::Vec x;
            if (!solve_square(std::move(A), std::move(rhs), x) || !point_feasible(rows, x, tol))
                return;
            double v = 0.0;
            for (std::size_t i = 0; i < n; ++i) v += obj[i] * x[i];
            if (!best || v > *best) best = v;
            return;
        }
        for (std::size_t r = start; r < rows.size(); ++r) {
            pick[depth] = static_cast<int>(r);
            rec(r + 1, depth + 1);
        }
    };
    rec(0, 0);
    return best;
}

/// Affine composition of the network under one full ReLU phase pattern.
/// Pattern bit order: ReLU layers in network order, neurons ascending.
struct PatternRegion {
    std::vector<Row> rows;   // phase constraints over the input
    std::vector<depkit::Vec> M; // output rows
    depkit::Vec d;
};

inline PatternRegion compose_pattern(const depkit::Network& net, std::uint64_t pattern) {
    std::size_t n = net.input_dim;
    PatternRegion out;
    out.M.assign(n, depkit::Vec(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) out.M[i][i] = 1.0;
    out.d.assign(n, 0.0);
    std::size_t bit = 0;
    for (const depkit::Layer& layer : net.layers) {
        if (layer.kind == depkit::LayerKind::Affine) {
            std::size_t rows_n = layer.weights.rows;
            std::vector<depkit::Vec> nm(rows_n, depkit::Vec(n, 0.0));
            depkit::Vec nd(rows_n, 0.0);
            for (std::size_t r = 0; r < rows_n; ++r) {
                nd[r] = layer.bias[r];
                for (std::size_t c = 0; c < layer.weights.cols; ++c) {
                    double w = layer.weights.at(r, c);
                    nd[r] += w * out.d[c];
                    for (std::size_t j = 0; j < n; ++j) nm[r][j] += w * out.M[c][j];
                }
            }
            out.M = std::move(nm);
            out.d = std::move(nd);
        } else {
            for (std::size_t i = 0; i < out.M.size(); ++i, ++bit) {
                bool active = (pattern >> bit) & 1;
                if (active) {
                    depkit::Vec a(n);
                    for (std::size_t j = 0; j < n; ++j) a[j] = -out.M[i][j];
                    out.rows.push_back({std::move(a), out.d[i]}); // pre >= 0
                } else {
                    out.rows.push_back({out.M[i], -out.d[i]}); // pre <= 0
                    std::fill(out.M[i].begin(), out.M[i].end(), 0.0);
                    out.d[i] = 0.0;
                }
            }
        }
    }
    return out;
}

inline std::size_t relu_count(const depkit::Network& net) {
    std::size_t count = 0, width = net.input_dim;
    for (const depkit::Layer& l : net.layers) {
        if (l.kind == depkit::LayerKind::Affine)
            width = l.weights.rows;
        else
            count += width;
    }
    return count;
}

inline std::vector<Row> base_rows(const depkit::VerificationProblem& p) {
    std::size_t n = p.net.input_dim;
    std::vector<Row> rows;
    for (std::size_t i = 0; i < n; ++i) {
        depkit::Vec up(n, 0.0), dn(n, 0.0);
        up[i] = 1.0;
        dn[i] = -1.0;
        rows.push_back({up, p.input_box.upper[i]});
        rows.push_back({dn, -p.input_box.lower[i]});
    }
    for (const depkit::LinearConstraint& c : p.input_constraints) {
        depkit::Vec a = c.coeffs;
        double b = c.bound;
        if (c.rel == depkit::Relation::Ge) {
            for (double& v : a) v = -v;
            b = -b;
        }
        rows.push_back({std::move(a), b});
    }
    return rows;
}

/// Exhaustive ReLU-phase-enumeration decision: is any risk-satisfying input
/// reachable? Feasibility of every pattern region is decided by vertex
/// enumeration.
inline bool risk_reachable(const depkit::VerificationProblem& p, double tol = 1e-7) {
    std::size_t n = p.net.input_dim;
    std::size_t relus = relu_count(p.net);
    for (std::uint64_t pattern = 0; pattern < (1ull << relus); ++pattern) {
        PatternRegion region = compose_pattern(p.net, pattern);
        std::vector<Row> rows = base_rows(p);
        rows.insert(rows.end(), region.rows.begin(), region.rows.end());
        for (const depkit::LinearConstraint& c : p.risk) {
            depkit::Vec a(n, 0.0);
            double off = 0.0;
            for (std::size_t r = 0; r < c.coeffs.size(); ++r) {
                off += c.coeffs[r] * region.d[r];
                for (std::size_t j = 0; j < n; ++j) a[j] += c.coeffs[r] * region.M[r][j];
            }
            if (c.rel == depkit::Relation::Ge) {
                for (double& v : a) v = -v;
                rows.push_back({std::move(a), off - c.bound});
            } else {
                rows.push_back({std::move(a), c.bound - off});
            }
        }
        if (feasible_by_vertices(rows, n, tol)) return true;
    }
    return false;
}

/// Exact max of obj over the network's output across all pattern regions
/// (risk ignored); nullopt when the input region itself is empty.
inline std::optional<double> output_max(const depkit::VerificationProblem& p,
                                        const depkit::Vec& obj, double tol = 1e-7) {
    std::size_t n = p.net.input_dim;
    std::size_t relus = relu_count(p.net);
    std::optional<double> best;
    for (std::uint64_t pattern = 0; pattern < (1ull << relus); ++pattern) {
        PatternRegion region = compose_pattern(p.net, pattern);
        std::vector<Row> rows = base_rows(p);
        rows.insert(rows.end(), region.rows.begin(), region.rows.end());
        depkit::Vec a(n, 0.0);
        double off = 0.0;
        for (std::size_t r = 0; r < obj.size(); ++r) {
            off += obj[r] * region.d[r];
            for (std::size_t j = 0; j < n; ++j) a[j] += obj[r] * region.M[r][j];
        }
        auto v = max_by_vertices(rows, n, a, tol);
        if (v && (!best || *v + off > *best)) best = *v + off;
    }
    return best;
}

// ------------------------------------------------------------------- bdd

inline std::set<std::vector<bool>> hamming_ball(const std::set<std::vector<bool>>& patterns,
                                                int gamma) {
    std::set<std::vector<bool>> out = patterns;
    for (int round = 0; round < gamma; ++round) {
        std::set<std::vector<bool>> next = out;
        for (const auto& p : out)
            for (std::size_t i = 0; i < p.size(); ++i) {
                std::vector<bool> q = p;
                q[i] = !q[i];
                next.insert(std::move(q));
            }
        out = std::move(next);
    }
    return out;
}

inline int hamming_distance(const std::vector<bool>& a, const std::vector<bool>& b) {
    int d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
    return d;
}

// -------------------------------------------------------------- gradients

/// Central finite differences of L = -log softmax(f(x))[label].
inline depkit::Vec fd_gradient(const depkit::Network& net, const depkit::Vec& x,
                               std::size_t label, double h = 1e-4) {
    auto loss = [&](const depkit::Vec& p) {
        depkit::Vec probs = depkit::softmax(depkit::forward(net, p).logits);
        return -std::log(probs[label]);
    };
    depkit::Vec g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        depkit::Vec hi = x, lo = x;
        hi[i] += h;
        lo[i] -= h;
        g[i] = (loss(hi) - loss(lo)) / (2.0 * h);
    }
    return g;
}

/// Distance from any pre-activation to the ReLU kink.
inline double min_preactivation_gap(const depkit::Network& net, const depkit::Vec& x) {
    depkit::ForwardResult fwd = depkit::forward(net, x);
    double gap = depkit::kInf;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        if (net.layers[i].kind != depkit::LayerKind::Relu) continue;
        const depkit::Vec& pre = i == 0 ? x : fwd.trace.per_layer[i - 1];
        for (double v : pre) gap = std::min(gap, std::abs(v));
    }
    return gap;
}

} // namespace oracle
