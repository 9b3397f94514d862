#include "depkit/propagate.hpp"

#include <algorithm>
#include <cmath>

namespace depkit {

namespace {

// Directed-rounding companions to add_up/mul_up from the octagon core.
double add_dn(double a, double b) { return -add_up(-a, -b); }
double mul_dn(double a, double b) { return -mul_up(-a, b); }

/// a / b rounded toward +infinity (resp. -infinity).
double div_up(double a, double b) {
    double q = a / b;
    if (!std::isfinite(q)) return q;
    double err = std::fma(q, b, -a); // sign of q*b - a, exactly
    bool low = b > 0.0 ? err < 0.0 : err > 0.0;
    return low ? std::nextafter(q, kInf) : q;
}
double div_dn(double a, double b) { return -div_up(-a, b); }

/// TwoSum rounding error: a + b = fl(a + b) + twosum_err(a, b) exactly.
double twosum_err(double a, double b) {
    double s = a + b;
    double ap = s - b;
    double bp = s - ap;
    return (a - ap) + (b - bp);
}

} // namespace

bool Box::contains(const Vec& x) const {
    if (x.size() != lower.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] < lower[i] || x[i] > upper[i]) return false;
    return true;
}

void Box::validate() const {
    if (lower.size() != upper.size()) throw DimensionMismatch("box: lower/upper length mismatch");
    for (std::size_t i = 0; i < lower.size(); ++i) {
        if (!std::isfinite(lower[i]) || !std::isfinite(upper[i]))
            throw BadParameters("box: non-finite bound");
        if (lower[i] > upper[i])
            throw BadParameters("box: lower > upper at index " + std::to_string(i));
    }
}

bool LinearConstraint::satisfied(const Vec& y) const {
    if (y.size() != coeffs.size()) throw DimensionMismatch("constraint: wrong vector length");
    double s = 0.0;
    for (std::size_t i = 0; i < coeffs.size(); ++i) s += coeffs[i] * y[i];
    return rel == Relation::Le ? s <= bound : s >= bound;
}

void LinearConstraint::validate() const {
    if (coeffs.empty()) throw BadParameters("constraint: empty coefficient vector");
    bool any = false;
    for (double c : coeffs) {
        if (!std::isfinite(c)) throw BadParameters("constraint: non-finite coefficient");
        if (c != 0.0) any = true;
    }
    if (!std::isfinite(bound)) throw BadParameters("constraint: non-finite bound");
    if (!any) throw BadParameters("constraint: all coefficients zero");
}

std::optional<Box> tighten_box(Box box, const std::vector<LinearConstraint>& constraints) {
    box.validate();
    std::size_t n = box.dim();
    for (const LinearConstraint& c : constraints) {
        c.validate();
        if (c.coeffs.size() != n) throw DimensionMismatch("tighten_box: constraint dimension");
    }
    for (int round = 0; round < 100; ++round) {
        bool changed = false;
        for (const LinearConstraint& raw : constraints) {
            // Normalize to sum a_i x_i <= b.
            Vec a = raw.coeffs;
            double b = raw.bound;
            if (raw.rel == Relation::Ge) {
                for (double& v : a) v = -v;
                b = -b;
            }
            for (std::size_t j = 0; j < n; ++j) {
                if (a[j] == 0.0) continue;
                // a_j x_j <= b - min over the box of sum_{i != j} a_i x_i.
                // Directed rounding keeps the step sound: the residual minimum
                // rounds down, the division rounds away from the kept side.
                double rest_lo = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    if (i == j) continue;
                    rest_lo = add_dn(rest_lo, std::min(mul_dn(a[i], box.lower[i]),
                                                       mul_dn(a[i], box.upper[i])));
                }
                double rhs = add_up(b, -rest_lo);
                if (a[j] > 0.0) {
                    double nu = div_up(rhs, a[j]);
                    if (nu < box.upper[j]) {
                        box.upper[j] = nu;
                        changed = true;
                    }
                } else {
                    double nl = div_dn(rhs, a[j]);
                    if (nl > box.lower[j]) {
                        box.lower[j] = nl;
                        changed = true;
                    }
                }
                if (box.lower[j] > box.upper[j]) return std::nullopt;
            }
        }
        if (!changed) break;
    }
    return box;
}

Octagon octagon_from_box(const Box& box) {
    box.validate();
    Octagon oct(box.dim());
    for (std::size_t i = 0; i < box.dim(); ++i) {
        oct.set_var_upper(i, box.upper[i]);
        oct.set_var_lower(i, box.lower[i]);
    }
    auto closed = strong_closure(std::move(oct));
    if (!closed) throw EmptyDomain("octagon_from_box: empty box");
    return *closed;
}

Octagon octagon_with_constraints(const Box& box,
                                 const std::vector<LinearConstraint>& constraints) {
    Octagon oct = octagon_from_box(box);
    for (const LinearConstraint& raw : constraints) {
        Vec a = raw.coeffs;
        double b = raw.bound;
        if (raw.rel == Relation::Ge) {
            for (double& v : a) v = -v;
            b = -b;
        }
        std::vector<std::size_t> nz;
        for (std::size_t i = 0; i < a.size(); ++i)
            if (a[i] != 0.0) nz.push_back(i);
        if (nz.size() == 1) {
            std::size_t i = nz[0];
            if (a[i] > 0.0)
                oct.set_var_upper(i, div_up(b, a[i]));
            else
                oct.set_var_lower(i, div_dn(b, a[i]));
        } else if (nz.size() == 2 && std::abs(a[nz[0]]) == std::abs(a[nz[1]])) {
            std::size_t i = nz[0], j = nz[1];
            double s = std::abs(a[i]);
            double c = div_up(b, s);
            bool pi = a[i] > 0.0, pj = a[j] > 0.0;
            if (pi && pj)
                oct.set_sum_upper(i, j, c);
            else if (pi && !pj)
                oct.set_diff_upper(i, j, c);
            else if (!pi && pj)
                oct.set_diff_upper(j, i, c);
            else
                oct.set_negsum_upper(i, j, c);
        }
    }
    auto closed = strong_closure(std::move(oct));
    if (!closed) throw EmptyDomain("octagon_with_constraints: constraints empty the box");
    return *closed;
}

namespace {

Phase lookup(const PhaseMap& phases, int layer, int neuron) {
    auto it = phases.find({layer, neuron});
    return it == phases.end() ? Phase::Free : it->second;
}

/// Affine transformer on octagons: bound every output form and output pair
/// via bound_linear_form on combined weight rows, then strongly close.
///
/// The octagon must contain the floating-point forward values, not just the
/// real-arithmetic ones. Three measures make that hold:
///  - unary bounds intersect with interval-style bounds computed in exactly
///    forward()'s accumulation order (monotone rounding makes those bounds
///    sound for the floating-point function, and the octagon can then never
///    be looser than the interval domain);
///  - variables pinned to a point fold into the bias through directed
///    accumulation, so point octagons stay consistent;
///  - bounds derived through the coefficient pairing carry an explicit
///    forward rounding-error radius, covering the gap between real and
///    floating-point evaluation.
std::optional<Octagon> octagon_affine(const Layer& l, const Octagon& in) {
    std::size_t out_n = l.weights.rows;
    std::size_t in_n = l.weights.cols;

    std::vector<std::size_t> wide;
    Vec pinned_value(in_n, 0.0);
    std::vector<bool> pinned(in_n, false);
    for (std::size_t c = 0; c < in_n; ++c) {
        double lo = in.var_lower(c), hi = in.var_upper(c);
        if (lo == hi) {
            pinned[c] = true;
            pinned_value[c] = lo;
        } else {
            wide.push_back(c);
        }
    }

    Octagon sub(wide.size());
    for (std::size_t a = 0; a < wide.size(); ++a)
        for (std::size_t b = 0; b < wide.size(); ++b)
            for (int sa = 0; sa < 2; ++sa)
                for (int sb = 0; sb < 2; ++sb)
                    sub.at(2 * a + sa, 2 * b + sb) = in.at(2 * wide[a] + sa, 2 * wide[b] + sb);

    // Interval-style bounds in forward()'s op order, plus the per-output
    // rounding radius gamma * (|b| + sum |w|*|x|).
    Vec ilo(out_n), ihi(out_n), pad(out_n);
    const double gamma = 2.0 * static_cast<double>(in_n + 2) * 0x1.0p-53;
    for (std::size_t r = 0; r < out_n; ++r) {
        double alo = l.bias[r], ahi = l.bias[r], mag = std::abs(l.bias[r]);
        for (std::size_t c = 0; c < in_n; ++c) {
            double w = l.weights.at(r, c);
            double lo = in.var_lower(c), hi = in.var_upper(c);
            if (w >= 0.0) {
                alo += w * lo;
                ahi += w * hi;
            } else {
                alo += w * hi;
                ahi += w * lo;
            }
            mag += std::abs(w) * std::max(std::abs(lo), std::abs(hi));
        }
        ilo[r] = alo;
        ihi[r] = ahi;
        pad[r] = gamma * mag;
    }

    // Folded offsets carry directed bounds: upper bounds combine offsets
    // rounded up, lower bounds offsets rounded down.
    std::vector<Vec> rows(out_n, Vec(wide.size()));
    Vec off_up(out_n), off_dn(out_n);
    for (std::size_t r = 0; r < out_n; ++r) {
        double up = l.bias[r], dn = l.bias[r];
        for (std::size_t c = 0; c < in_n; ++c) {
            if (!pinned[c]) continue;
            double w = l.weights.at(r, c);
            up = add_up(up, mul_up(w, pinned_value[c]));
            dn = add_dn(dn, mul_dn(w, pinned_value[c]));
        }
        off_up[r] = up;
        off_dn[r] = dn;
        for (std::size_t k = 0; k < wide.size(); ++k) rows[r][k] = l.weights.at(r, wide[k]);
    }

    // Magnitude bound per wide variable, for charging row-combination errors.
    Vec abs_bound(wide.size());
    for (std::size_t c = 0; c < wide.size(); ++c)
        abs_bound[c] = std::max(std::abs(sub.var_lower(c)), std::abs(sub.var_upper(c)));

    // All installed bounds combine with upward rounding so no stored upper
    // bound can sit below its real value (see add_up in the octagon core).
    Octagon out(out_n);
    for (std::size_t i = 0; i < out_n; ++i) {
        auto [lo, hi] = bound_linear_form(rows[i], sub);
        double up_i = add_up(add_up(hi, off_up[i]), pad[i]);
        double lo_i = -add_up(add_up(-lo, -off_dn[i]), pad[i]);
        out.set_var_upper(i, std::min(up_i, ihi[i]));
        out.set_var_lower(i, std::max(lo_i, ilo[i]));
        for (std::size_t j = i + 1; j < out_n; ++j) {
            // Outputs computed by the identical (or exactly negated)
            // expression produce identical (negated) floating-point values,
            // so their difference (sum) is exactly zero.
            bool same_row = l.bias[i] == l.bias[j];
            bool negated_row = l.bias[i] == -l.bias[j];
            for (std::size_t c = 0; c < in_n && (same_row || negated_row); ++c) {
                same_row = same_row && l.weights.at(i, c) == l.weights.at(j, c);
                negated_row = negated_row && l.weights.at(i, c) == -l.weights.at(j, c);
            }
            if (same_row) {
                out.set_diff_upper(i, j, 0.0);
                out.set_diff_upper(j, i, 0.0);
            }
            if (negated_row) {
                out.set_sum_upper(i, j, 0.0);
                out.set_negsum_upper(i, j, 0.0);
            }

            // Combine coefficient rows before bounding so cancellation is
            // kept; the combination's own rounding error is charged against
            // the variables' magnitude bounds.
            Vec sum(wide.size()), diff(wide.size());
            double sum_corr = add_up(pad[i], pad[j]), diff_corr = sum_corr;
            for (std::size_t c = 0; c < wide.size(); ++c) {
                sum[c] = rows[i][c] + rows[j][c];
                double serr = twosum_err(rows[i][c], rows[j][c]);
                if (serr != 0.0)
                    sum_corr = add_up(sum_corr, mul_up(std::abs(serr), abs_bound[c]));
                diff[c] = rows[i][c] - rows[j][c];
                double derr = twosum_err(rows[i][c], -rows[j][c]);
                if (derr != 0.0)
                    diff_corr = add_up(diff_corr, mul_up(std::abs(derr), abs_bound[c]));
            }
            auto [slo, shi] = bound_linear_form(sum, sub);
            auto [dlo, dhi] = bound_linear_form(diff, sub);
            // y_i + y_j bounds
            out.set_sum_upper(i, j,
                              add_up(add_up(shi, sum_corr), add_up(off_up[i], off_up[j])));
            out.set_negsum_upper(i, j,
                                 add_up(add_up(-slo, sum_corr), add_up(-off_dn[i], -off_dn[j])));
            // y_i - y_j bounds
            out.set_diff_upper(i, j,
                               add_up(add_up(dhi, diff_corr), add_up(off_up[i], -off_dn[j])));
            out.set_diff_upper(j, i,
                               add_up(add_up(-dlo, diff_corr), add_up(off_up[j], -off_dn[i])));
        }
    }
    return strong_closure(std::move(out));
}

} // namespace

PropagationResult propagate_with_phases(const Network& net, const Box& input, Domain domain,
                                        const PhaseMap& phases,
                                        const std::optional<Octagon>& input_oct) {
    if (input.dim() != net.input_dim)
        throw DimensionMismatch("propagate: box dimension != input_dim");
    input.validate();

    PropagationResult res;
    Vec lo = input.lower, hi = input.upper; // interval state
    std::optional<Octagon> oct;             // octagon state
    if (domain == Domain::Octagon) {
        if (input_oct) {
            if (input_oct->dim() != net.input_dim)
                throw DimensionMismatch("propagate: input octagon dimension != input_dim");
            oct = *input_oct;
        } else {
            oct = octagon_from_box(input);
        }
    }

    auto unary_from_oct = [](const Octagon& o, Vec& l, Vec& u) {
        l.resize(o.dim());
        u.resize(o.dim());
        for (std::size_t i = 0; i < o.dim(); ++i) {
            l[i] = o.var_lower(i);
            u[i] = o.var_upper(i);
        }
    };

    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        const Layer& layer = net.layers[li];
        if (layer.kind == LayerKind::Affine) {
            if (domain == Domain::Interval) {
                std::size_t rows = layer.weights.rows;
                Vec nlo(rows), nhi(rows);
                for (std::size_t r = 0; r < rows; ++r) {
                    // Same accumulation order as forward(): bias first, columns
                    // ascending, so concrete runs never exit these bounds.
                    double alo = layer.bias[r], ahi = layer.bias[r];
                    for (std::size_t c = 0; c < layer.weights.cols; ++c) {
                        double w = layer.weights.at(r, c);
                        if (w >= 0.0) {
                            alo += w * lo[c];
                            ahi += w * hi[c];
                        } else {
                            alo += w * hi[c];
                            ahi += w * lo[c];
                        }
                    }
                    nlo[r] = alo;
                    nhi[r] = ahi;
                }
                lo = std::move(nlo);
                hi = std::move(nhi);
            } else {
                auto next = octagon_affine(layer, *oct);
                if (!next) {
                    res.empty = true;
                    return res;
                }
                oct = std::move(*next);
                unary_from_oct(*oct, lo, hi);
            }
        } else {
            // ReLU: pre-activation bounds are the current (lo, hi).
            std::vector<PropagationResult::NeuronStatus> status(lo.size());
            for (std::size_t i = 0; i < lo.size(); ++i) {
                Phase fixed = lookup(phases, static_cast<int>(li), static_cast<int>(i));
                double l = lo[i], u = hi[i];
                if (fixed == Phase::Active) {
                    if (u < 0.0) {
                        res.empty = true;
                        return res;
                    }
                    status[i] = {Phase::Active, true};
                } else if (fixed == Phase::Inactive) {
                    if (l > 0.0) {
                        res.empty = true;
                        return res;
                    }
                    status[i] = {Phase::Inactive, true};
                } else if (l >= 0.0) {
                    status[i] = {Phase::Active, false};
                } else if (u <= 0.0) {
                    status[i] = {Phase::Inactive, false};
                } else {
                    status[i] = {Phase::Free, false};
                    res.unstable.push_back(
                        {static_cast<int>(li), static_cast<int>(i), u - l});
                }
            }
            if (domain == Domain::Interval) {
                for (std::size_t i = 0; i < lo.size(); ++i) {
                    switch (status[i].effective) {
                    case Phase::Active:
                        lo[i] = std::max(lo[i], 0.0);
                        hi[i] = std::max(hi[i], 0.0);
                        break;
                    case Phase::Inactive:
                        lo[i] = 0.0;
                        hi[i] = 0.0;
                        break;
                    case Phase::Free:
                        lo[i] = 0.0; // unstable: [0, u]
                        break;
                    }
                }
            } else {
                Octagon next = *oct;
                for (std::size_t i = 0; i < lo.size(); ++i) {
                    switch (status[i].effective) {
                    case Phase::Active:
                        // Exact pass-through; branch-fixed neurons gain l >= 0.
                        next.set_var_lower(i, std::max(lo[i], 0.0));
                        break;
                    case Phase::Inactive:
                        next.forget(i);
                        next.set_var_upper(i, 0.0);
                        next.set_var_lower(i, 0.0);
                        break;
                    case Phase::Free:
                        // Sound forget: keep unary [0, u], drop binary relations.
                        next.forget(i);
                        next.set_var_upper(i, hi[i]);
                        next.set_var_lower(i, 0.0);
                        break;
                    }
                }
                auto closed = strong_closure(std::move(next));
                if (!closed) {
                    res.empty = true;
                    return res;
                }
                oct = std::move(*closed);
                unary_from_oct(*oct, lo, hi);
            }
            res.relu_status[static_cast<int>(li)] = std::move(status);
        }
        res.layers.push_back(LayerBounds{lo, hi});
        if (domain == Domain::Octagon) res.octagons.push_back(*oct);
    }
    return res;
}

std::vector<Box> propagate_interval(const Network& net, const Box& box) {
    PropagationResult res = propagate_with_phases(net, box, Domain::Interval, {});
    std::vector<Box> out;
    out.reserve(res.layers.size());
    for (const LayerBounds& lb : res.layers) out.push_back(Box{lb.lower, lb.upper});
    return out;
}

std::vector<Octagon> propagate_octagon(const Network& net, const Octagon& input) {
    if (input.dim() != net.input_dim)
        throw DimensionMismatch("propagate_octagon: octagon dimension != input_dim");
    for (std::size_t a = 0; a < 2 * input.dim(); ++a)
        if (input.at(a, a) < 0.0) throw EmptyDomain("propagate_octagon: empty input octagon");
    std::vector<Octagon> out;
    std::optional<Octagon> cur = input;
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        const Layer& layer = net.layers[li];
        if (layer.kind == LayerKind::Affine) {
            auto next = octagon_affine(layer, *cur);
            if (!next) throw EmptyDomain("propagate_octagon: affine step emptied the octagon");
            cur = std::move(*next);
        } else {
            Octagon next = *cur;
            for (std::size_t i = 0; i < cur->dim(); ++i) {
                double l = cur->var_lower(i), u = cur->var_upper(i);
                if (u <= 0.0) {
                    next.forget(i);
                    next.set_var_upper(i, 0.0);
                    next.set_var_lower(i, 0.0);
                } else if (l >= 0.0) {
                    // stable active: unchanged
                } else {
                    next.forget(i);
                    next.set_var_upper(i, u);
                    next.set_var_lower(i, 0.0);
                }
            }
            auto closed = strong_closure(std::move(next));
            if (!closed) throw EmptyDomain("propagate_octagon: ReLU step emptied the octagon");
            cur = std::move(*closed);
        }
        out.push_back(*cur);
    }
    return out;
}

} // namespace depkit
