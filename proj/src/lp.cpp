#include "depkit/lp.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace depkit::lp {

namespace {
constexpr double kEps = 1e-9;
}

Result solve_max(const std::vector<Vec>& A, const Vec& b, const Vec& c) {
    const std::size_t m = A.size();
    const std::size_t n = c.size();
    if (b.size() != m) throw std::invalid_argument("lp: rhs length mismatch");
    for (const Vec& row : A)
        if (row.size() != n) throw std::invalid_argument("lp: row length mismatch");
    for (double v : b)
        if (v < 0.0) throw std::invalid_argument("lp: negative rhs, origin not feasible");

    // Tableau: structural columns [0, n), slack columns [n, n+m), rhs column last.
    std::vector<Vec> T(m, Vec(n + m + 1, 0.0));
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) T[i][j] = A[i][j];
        T[i][n + i] = 1.0;
        T[i][n + m] = b[i];
    }
    Vec cost(n + m, 0.0);
    for (std::size_t j = 0; j < n; ++j) cost[j] = c[j];
    std::vector<std::size_t> basis(m);
    for (std::size_t i = 0; i < m; ++i) basis[i] = n + i;

    double value = 0.0;
    for (long iter = 0; iter < 100000; ++iter) {
        // Bland: smallest-index entering column with positive reduced cost.
        std::size_t enter = n + m;
        for (std::size_t j = 0; j < n + m; ++j)
            if (cost[j] > kEps) {
                enter = j;
                break;
            }
        if (enter == n + m) break; // optimal

        std::size_t leave = m;
        double best_ratio = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < m; ++i) {
            if (T[i][enter] > kEps) {
                double ratio = T[i][n + m] / T[i][enter];
                if (leave == m || ratio < best_ratio ||
                    (ratio == best_ratio && basis[i] < basis[leave])) {
                    best_ratio = ratio;
                    leave = i;
                }
            }
        }
        if (leave == m) return Result{Result::Status::Unbounded, 0.0, {}};

        value += cost[enter] * (T[leave][n + m] / T[leave][enter]);
        double piv = T[leave][enter];
        for (double& v : T[leave]) v /= piv;
        for (std::size_t i = 0; i < m; ++i) {
            if (i == leave) continue;
            double f = T[i][enter];
            if (f == 0.0) continue;
            for (std::size_t j = 0; j <= n + m; ++j) T[i][j] -= f * T[leave][j];
        }
        double cf = cost[enter];
        for (std::size_t j = 0; j < n + m; ++j) cost[j] -= cf * T[leave][j];
        basis[leave] = enter;
    }

    Result res;
    res.status = Result::Status::Optimal;
    res.value = value;
    res.point.assign(n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        if (basis[i] < n) res.point[basis[i]] = T[i][n + m];
    return res;
}

} // namespace depkit::lp
