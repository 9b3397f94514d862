#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "depkit/errors.hpp"

namespace depkit {

/// Ordered discrete scenario categories, e.g. weather = {cloudy, rainy, sunny}.
struct CategorySpace {
    struct Category {
        std::string name;
        std::vector<std::string> values;
    };
    std::vector<Category> categories;

    std::size_t size() const { return categories.size(); }
    std::size_t cardinality(std::size_t cat) const { return categories[cat].values.size(); }
    int category_index(const std::string& name) const; // -1 if absent
    int value_index(std::size_t cat, const std::string& value) const;

    void validate() const;
};

/// One full assignment: a value index per category.
struct ScenarioItem {
    std::vector<int> assignment;

    bool operator==(const ScenarioItem&) const = default;
};

/// Linear constraint over 0/1 category-value indicators:
/// lower <= sum coeff*[cat=value] <= upper.
struct IndicatorConstraint {
    struct Term {
        int category = 0;
        int value = 0;
        long long coefficient = 1;
    };
    std::vector<Term> terms;
    long long lower = 0;
    long long upper = 0;
};

/// One covered k-tuple: (category index, value index) pairs with strictly
/// increasing category indices.
using KTuple = std::vector<std::pair<int, int>>;

struct CoverageLedger {
    int k = 2;
    std::set<KTuple> covered;
    long long denominator = 1;

    double ratio() const {
        return static_cast<double>(covered.size()) / static_cast<double>(denominator);
    }
};

struct Proposal {
    ScenarioItem item;
    long long gain = 0;
};

struct CoverageOptions {
    /// When set, the denominator excludes k-tuples contained in no feasible
    /// full assignment. Default reproduces the plain all-tuples denominator.
    bool constrained_denominator = false;
};

/// Sum over all k-subsets of categories of the product of their cardinalities
/// (the elementary symmetric polynomial e_k of the cardinalities).
long long projection_denominator(const CategorySpace& space, int k);

/// Same sum but counting only k-tuples that appear in at least one full
/// assignment satisfying all constraints.
long long constrained_projection_denominator(const CategorySpace& space, int k,
                                             const std::vector<IndicatorConstraint>& constraints);

bool is_feasible(const ScenarioItem& item, const std::vector<IndicatorConstraint>& constraints);

CoverageLedger projection_coverage(const CategorySpace& space,
                                   const std::vector<ScenarioItem>& items, int k,
                                   const std::vector<IndicatorConstraint>& constraints = {},
                                   const CoverageOptions& opts = {});

/// Insert one item's k-tuples into the ledger. Returns the number of newly
/// covered tuples.
long long ledger_add(const CategorySpace& space, CoverageLedger& ledger, const ScenarioItem& item);

/// Exact branch-and-bound proposal search. The first proposal's gain is the
/// maximum over all feasible full assignments; ties resolve lexicographically
/// by (category order, value order). Throws NoFeasibleAssignment when the
/// constraints exclude every assignment.
std::vector<Proposal> propose_next(const CategorySpace& space, const CoverageLedger& ledger,
                                   const std::vector<IndicatorConstraint>& constraints,
                                   int count);

/// Greedy escape hatch for large spaces; no optimality promise.
std::vector<Proposal> propose_next_greedy(const CategorySpace& space, const CoverageLedger& ledger,
                                          const std::vector<IndicatorConstraint>& constraints,
                                          int count);

/// Catalog file: categories + optional constraints + collected items.
struct Catalog {
    CategorySpace space;
    std::vector<IndicatorConstraint> constraints;
    std::vector<ScenarioItem> items;
};

Catalog load_catalog(const std::filesystem::path& path);

std::vector<std::string> item_value_names(const CategorySpace& space, const ScenarioItem& item);

} // namespace depkit
