#pragma once

#include <vector>

#include "depkit/network.hpp"

namespace depkit::lp {

/// maximize c.x  subject to  A x <= b,  x >= 0,  with every b_i >= 0 so the
/// origin is feasible. Dense tableau simplex with Bland's rule.
struct Result {
    enum class Status { Optimal, Unbounded } status = Status::Optimal;
    double value = 0.0;
    Vec point;
};

Result solve_max(const std::vector<Vec>& A, const Vec& b, const Vec& c);

} // namespace depkit::lp
