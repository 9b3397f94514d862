#pragma once

#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "depkit/errors.hpp"
#include "depkit/network.hpp"

namespace depkit {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Octagon over n variables: difference-bound matrix over 2n signed forms.
/// Signed index 2i stands for +x_i, 2i+1 for -x_i; entry at(a,b) is an upper
/// bound on V_a - V_b. Coherence: at(a,b) == at(bar(b),bar(a)) with
/// bar(a) = a^1.
class Octagon {
public:
    explicit Octagon(std::size_t n)
        : n_(n), m_(4 * n * n, kInf) {
        for (std::size_t a = 0; a < 2 * n; ++a) at(a, a) = 0.0;
    }

    std::size_t dim() const { return n_; }
    static std::size_t bar(std::size_t a) { return a ^ 1; }

    double& at(std::size_t a, std::size_t b) { return m_[a * 2 * n_ + b]; }
    double at(std::size_t a, std::size_t b) const { return m_[a * 2 * n_ + b]; }

    /// Tighten an entry and its coherent mirror.
    void bound(std::size_t a, std::size_t b, double c) {
        if (c < at(a, b)) {
            at(a, b) = c;
            at(bar(b), bar(a)) = c;
        }
    }

    // Octagonal constraint setters (all tighten, never loosen).
    void set_var_upper(std::size_t i, double u) { bound(2 * i, 2 * i + 1, 2 * u); }
    void set_var_lower(std::size_t i, double l) { bound(2 * i + 1, 2 * i, -2 * l); }
    void set_sum_upper(std::size_t i, std::size_t j, double c) { bound(2 * i, 2 * j + 1, c); }
    void set_diff_upper(std::size_t i, std::size_t j, double c) { bound(2 * i, 2 * j, c); }
    void set_negsum_upper(std::size_t i, std::size_t j, double c) { bound(2 * i + 1, 2 * j, c); }

    double var_upper(std::size_t i) const { return at(2 * i, 2 * i + 1) / 2.0; }
    double var_lower(std::size_t i) const { return -at(2 * i + 1, 2 * i) / 2.0; }

    /// Upper bound on s_i*x_i + s_j*x_j where neg_* selects the negative form.
    double pair_upper(std::size_t i, bool neg_i, std::size_t j, bool neg_j) const {
        std::size_t a = 2 * i + (neg_i ? 1 : 0);
        std::size_t b = 2 * j + (neg_j ? 1 : 0);
        return at(a, bar(b));
    }

    double unary_upper(std::size_t i, bool neg) const {
        std::size_t a = 2 * i + (neg ? 1 : 0);
        return at(a, bar(a)) / 2.0;
    }

    /// Drop every binary relation involving variable i (keep diagonals).
    void forget(std::size_t i);

    bool is_coherent() const;

    /// All finite octagonal constraints hold at x (inclusive, plus slack).
    bool contains(const Vec& x, double slack = 0.0) const;

    bool same_entries(const Octagon& other) const { return m_ == other.m_; }

private:
    std::size_t n_;
    std::vector<double> m_;
};

/// Tightest coherent matrix implied by transitivity plus unary-binary
/// strengthening; std::nullopt when the octagon is empty. Idempotent.
std::optional<Octagon> strong_closure(Octagon oct);

/// Sound bounds on sum(coeffs[i] * x_i) over a closed, non-empty octagon via
/// greedy coefficient pairing; never wider than unary-only interval bounding.
std::pair<double, double> bound_linear_form(const Vec& coeffs, const Octagon& closed);

/// a + b and a * b rounded toward +infinity (error-compensated). Exact
/// results stay bitwise exact. Upper bounds built from these never land
/// below their real values, which keeps degenerate octagons consistent.
double add_up(double a, double b);
double mul_up(double a, double b);

} // namespace depkit
