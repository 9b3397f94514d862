#include "depkit/octagon.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

namespace depkit {

void Octagon::forget(std::size_t i) {
    std::size_t p = 2 * i, q = 2 * i + 1;
    for (std::size_t b = 0; b < 2 * n_; ++b) {
        if (b != p && b != q) {
            at(p, b) = kInf;
            at(q, b) = kInf;
            at(b, p) = kInf;
            at(b, q) = kInf;
        }
    }
    at(p, q) = kInf;
    at(q, p) = kInf;
}

bool Octagon::is_coherent() const {
    for (std::size_t a = 0; a < 2 * n_; ++a)
        for (std::size_t b = 0; b < 2 * n_; ++b)
            if (at(a, b) != at(bar(b), bar(a))) return false;
    return true;
}

bool Octagon::contains(const Vec& x, double slack) const {
    if (x.size() != n_) throw DimensionMismatch("Octagon::contains: wrong point dimension");
    auto signed_value = [&](std::size_t a) { return (a & 1) ? -x[a / 2] : x[a / 2]; };
    for (std::size_t a = 0; a < 2 * n_; ++a)
        for (std::size_t b = 0; b < 2 * n_; ++b) {
            double c = at(a, b);
            if (c == kInf) continue;
            if (signed_value(a) - signed_value(b) > c + slack) return false;
        }
    return true;
}

// TwoSum error compensation: exact sums stay exact; inexact ones never land
// below the real value, so derived closure entries cannot cut feasible points
// or fake a negative cycle on degenerate (point-like) octagons.
double add_up(double a, double b) {
    double s = a + b;
    if (!std::isfinite(s)) return s;
    double ap = s - b;
    double bp = s - ap;
    double err = (a - ap) + (b - bp);
    return err > 0.0 ? std::nextafter(s, kInf) : s;
}

double mul_up(double a, double b) {
    double p = a * b;
    if (!std::isfinite(p)) return p;
    double err = std::fma(a, b, -p);
    return err > 0.0 ? std::nextafter(p, kInf) : p;
}

std::optional<Octagon> strong_closure(Octagon oct) {
    std::size_t dim = 2 * oct.dim();
    // Floyd-Warshall + strengthening, iterated to a fixpoint so the result is
    // bitwise idempotent under floating point.
    for (std::size_t round = 0; round <= dim + 1; ++round) {
        bool changed = false;
        for (std::size_t k = 0; k < dim; ++k)
            for (std::size_t a = 0; a < dim; ++a) {
                double ak = oct.at(a, k);
                if (ak == kInf) continue;
                for (std::size_t b = 0; b < dim; ++b) {
                    double kb = oct.at(k, b);
                    if (kb == kInf) continue;
                    double cand = add_up(ak, kb);
                    if (cand < oct.at(a, b)) {
                        oct.at(a, b) = cand;
                        changed = true;
                    }
                }
            }
        for (std::size_t a = 0; a < dim; ++a)
            if (oct.at(a, a) < 0.0) return std::nullopt;
        for (std::size_t a = 0; a < dim; ++a) {
            double ua = oct.at(a, Octagon::bar(a));
            if (ua == kInf) continue;
            for (std::size_t b = 0; b < dim; ++b) {
                double ub = oct.at(Octagon::bar(b), b);
                if (ub == kInf) continue;
                double cand = add_up(ua, ub) / 2.0; // halving is exact
                if (cand < oct.at(a, b)) {
                    oct.at(a, b) = cand;
                    changed = true;
                }
            }
        }
        if (!changed) break;
    }
    for (std::size_t a = 0; a < dim; ++a) oct.at(a, a) = 0.0;
    return oct;
}

namespace {

struct Entry {
    double mag;
    std::size_t var;
    bool neg;
};

struct EntryLess {
    // Max-heap: largest magnitude first, ties to the smallest variable index.
    bool operator()(const Entry& a, const Entry& b) const {
        if (a.mag != b.mag) return a.mag < b.mag;
        return a.var > b.var;
    }
};

double upper_of(const Vec& coeffs, const Octagon& oct) {
    std::priority_queue<Entry, std::vector<Entry>, EntryLess> heap;
    for (std::size_t i = 0; i < coeffs.size(); ++i) {
        double c = coeffs[i];
        if (c > 0.0)
            heap.push(Entry{c, i, false});
        else if (c < 0.0)
            heap.push(Entry{-c, i, true});
    }
    double total = 0.0;
    while (heap.size() >= 2) {
        Entry e1 = heap.top();
        heap.pop();
        Entry e2 = heap.top();
        heap.pop();
        double t = e2.mag; // min of the two magnitudes
        total = add_up(total, mul_up(t, oct.pair_upper(e1.var, e1.neg, e2.var, e2.neg)));
        double residual = e1.mag - t;
        // Fast2Sum: e1.mag - t = residual + err exactly (|t| <= e1.mag).
        // Charging err against the unary bound keeps the coefficient
        // decomposition exact, so the result stays an upper bound.
        double err = -t - (residual - e1.mag);
        if (err != 0.0)
            total = add_up(total, mul_up(std::abs(err),
                                         oct.unary_upper(e1.var, err > 0.0 ? e1.neg : !e1.neg)));
        if (residual > 0.0) heap.push(Entry{residual, e1.var, e1.neg});
    }
    if (!heap.empty()) {
        Entry e = heap.top();
        total = add_up(total, mul_up(e.mag, oct.unary_upper(e.var, e.neg)));
    }
    return total;
}

} // namespace

std::pair<double, double> bound_linear_form(const Vec& coeffs, const Octagon& closed) {
    if (coeffs.size() != closed.dim())
        throw DimensionMismatch("bound_linear_form: coefficient count != octagon dimension");
    for (std::size_t a = 0; a < 2 * closed.dim(); ++a)
        if (closed.at(a, a) < 0.0) throw EmptyDomain("bound_linear_form on empty octagon");
    double hi = upper_of(coeffs, closed);
    Vec neg(coeffs.size());
    for (std::size_t i = 0; i < coeffs.size(); ++i) neg[i] = -coeffs[i];
    double lo = -upper_of(neg, closed);
    return {lo, hi};
}

} // namespace depkit
