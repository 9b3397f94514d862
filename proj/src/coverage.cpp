#include "depkit/coverage.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>

#include <json.hpp>

#include "depkit/jsonutil.hpp"

namespace depkit {

using nlohmann::json;

int CategorySpace::category_index(const std::string& name) const {
    for (std::size_t i = 0; i < categories.size(); ++i)
        if (categories[i].name == name) return static_cast<int>(i);
    return -1;
}

int CategorySpace::value_index(std::size_t cat, const std::string& value) const {
    const auto& vals = categories[cat].values;
    for (std::size_t i = 0; i < vals.size(); ++i)
        if (vals[i] == value) return static_cast<int>(i);
    return -1;
}

void CategorySpace::validate() const {
    if (categories.empty()) throw MalformedInput("category space: need at least one category");
    std::set<std::string> names;
    for (const Category& c : categories) {
        if (c.values.size() < 2)
            throw MalformedInput("category \"" + c.name + "\": need at least two values");
        if (!names.insert(c.name).second)
            throw MalformedInput("duplicate category name \"" + c.name + "\"");
        std::set<std::string> vals(c.values.begin(), c.values.end());
        if (vals.size() != c.values.size())
            throw MalformedInput("category \"" + c.name + "\": duplicate values");
    }
}

namespace {

void check_item(const CategorySpace& space, const ScenarioItem& item) {
    if (item.assignment.size() != space.size())
        throw InvalidItem("item has " + std::to_string(item.assignment.size()) +
                          " entries, space has " + std::to_string(space.size()) + " categories");
    for (std::size_t c = 0; c < space.size(); ++c) {
        int v = item.assignment[c];
        if (v < 0 || static_cast<std::size_t>(v) >= space.cardinality(c))
            throw InvalidItem("value index " + std::to_string(v) + " out of range for category \"" +
                              space.categories[c].name + "\"");
    }
}

void check_k(const CategorySpace& space, int k) {
    if (k < 1 || static_cast<std::size_t>(k) > space.size())
        throw KOutOfRange("k=" + std::to_string(k) + " outside [1, " +
                          std::to_string(space.size()) + "]");
}

void for_each_k_subset(std::size_t m, int k, const std::function<void(const std::vector<int>&)>& fn) {
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

KTuple tuple_of(const std::vector<int>& cats, const ScenarioItem& item) {
    KTuple t;
    t.reserve(cats.size());
    for (int c : cats) t.emplace_back(c, item.assignment[c]);
    return t;
}

/// Per-constraint contribution of assigning value v to category c.
struct ConstraintProfile {
    // contribution[c][v]
    std::vector<std::vector<long long>> contribution;
    // suffix_min[c] = sum over categories >= c of the minimum value contribution
    std::vector<long long> suffix_min, suffix_max;
    long long lower = 0, upper = 0;
};

std::vector<ConstraintProfile> profile_constraints(const CategorySpace& space,
                                                   const std::vector<IndicatorConstraint>& cs) {
    std::vector<ConstraintProfile> out;
    out.reserve(cs.size());
    for (const IndicatorConstraint& c : cs) {
        if (c.lower > c.upper) throw MalformedInput("indicator constraint with lower > upper");
        ConstraintProfile p;
        p.lower = c.lower;
        p.upper = c.upper;
        p.contribution.resize(space.size());
        for (std::size_t cat = 0; cat < space.size(); ++cat)
            p.contribution[cat].assign(space.cardinality(cat), 0);
        for (const IndicatorConstraint::Term& t : c.terms) {
            if (t.category < 0 || static_cast<std::size_t>(t.category) >= space.size() ||
                t.value < 0 ||
                static_cast<std::size_t>(t.value) >= space.cardinality(t.category))
                throw MalformedInput("constraint term references unknown category/value");
            p.contribution[t.category][t.value] += t.coefficient;
        }
        std::size_t m = space.size();
        p.suffix_min.assign(m + 1, 0);
        p.suffix_max.assign(m + 1, 0);
        for (std::size_t cat = m; cat-- > 0;) {
            auto [lo, hi] = std::minmax_element(p.contribution[cat].begin(),
                                                p.contribution[cat].end());
            p.suffix_min[cat] = p.suffix_min[cat + 1] + *lo;
            p.suffix_max[cat] = p.suffix_max[cat + 1] + *hi;
        }
        out.push_back(std::move(p));
    }
    return out;
}

/// Can any completion of categories [fixed_upto, m) still satisfy every constraint?
bool prefix_feasible(const std::vector<ConstraintProfile>& profiles,
                     const std::vector<long long>& partial_sums, std::size_t fixed_upto) {
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        const ConstraintProfile& p = profiles[i];
        long long lo = partial_sums[i] + p.suffix_min[fixed_upto];
        long long hi = partial_sums[i] + p.suffix_max[fixed_upto];
        if (lo > p.upper || hi < p.lower) return false;
    }
    return true;
}

bool exists_feasible_completion(const CategorySpace& space,
                                const std::vector<ConstraintProfile>& profiles,
                                std::vector<int>& assignment,
                                std::vector<long long>& partial_sums, std::size_t cat) {
    if (!prefix_feasible(profiles, partial_sums, cat)) return false;
    if (cat == space.size()) return true;
    if (assignment[cat] >= 0) {
        int v = assignment[cat];
        for (std::size_t i = 0; i < profiles.size(); ++i)
            partial_sums[i] += profiles[i].contribution[cat][v];
        bool ok = exists_feasible_completion(space, profiles, assignment, partial_sums, cat + 1);
        for (std::size_t i = 0; i < profiles.size(); ++i)
            partial_sums[i] -= profiles[i].contribution[cat][v];
        return ok;
    }
    for (std::size_t v = 0; v < space.cardinality(cat); ++v) {
        assignment[cat] = static_cast<int>(v);
        for (std::size_t i = 0; i < profiles.size(); ++i)
            partial_sums[i] += profiles[i].contribution[cat][v];
        bool ok = exists_feasible_completion(space, profiles, assignment, partial_sums, cat + 1);
        for (std::size_t i = 0; i < profiles.size(); ++i)
            partial_sums[i] -= profiles[i].contribution[cat][v];
        assignment[cat] = -1;
        if (ok) return true;
    }
    return false;
}

} // namespace

long long projection_denominator(const CategorySpace& space, int k) {
    space.validate();
    check_k(space, k);
    // Elementary symmetric polynomial e_k of the cardinalities.
    std::vector<__int128> e(static_cast<std::size_t>(k) + 1, 0);
    e[0] = 1;
    for (std::size_t c = 0; c < space.size(); ++c) {
        __int128 card = static_cast<long long>(space.cardinality(c));
        for (int j = std::min<int>(k, static_cast<int>(c) + 1); j >= 1; --j) {
            e[j] += e[j - 1] * card;
            if (e[j] > std::numeric_limits<long long>::max())
                throw Error("projection denominator overflows 64 bits");
        }
    }
    return static_cast<long long>(e[k]);
}

bool is_feasible(const ScenarioItem& item, const std::vector<IndicatorConstraint>& constraints) {
    for (const IndicatorConstraint& c : constraints) {
        long long sum = 0;
        for (const IndicatorConstraint::Term& t : c.terms)
            if (item.assignment[t.category] == t.value) sum += t.coefficient;
        if (sum < c.lower || sum > c.upper) return false;
    }
    return true;
}

namespace {

/// All k-tuples contained in at least one feasible full assignment.
std::set<KTuple> attainable_tuples(const CategorySpace& space, int k,
                                   const std::vector<IndicatorConstraint>& constraints) {
    auto profiles = profile_constraints(space, constraints);
    std::set<KTuple> out;
    for_each_k_subset(space.size(), k, [&](const std::vector<int>& cats) {
        std::vector<int> vals(cats.size(), 0);
        std::function<void(std::size_t)> rec = [&](std::size_t pos) {
            if (pos == cats.size()) {
                std::vector<int> assignment(space.size(), -1);
                for (std::size_t i = 0; i < cats.size(); ++i) assignment[cats[i]] = vals[i];
                std::vector<long long> sums(profiles.size(), 0);
                if (exists_feasible_completion(space, profiles, assignment, sums, 0)) {
                    KTuple t;
                    for (std::size_t i = 0; i < cats.size(); ++i) t.emplace_back(cats[i], vals[i]);
                    out.insert(std::move(t));
                }
                return;
            }
            for (std::size_t v = 0; v < space.cardinality(cats[pos]); ++v) {
                vals[pos] = static_cast<int>(v);
                rec(pos + 1);
            }
        };
        rec(0);
    });
    return out;
}

} // namespace

long long constrained_projection_denominator(const CategorySpace& space, int k,
                                             const std::vector<IndicatorConstraint>& constraints) {
    space.validate();
    check_k(space, k);
    return static_cast<long long>(attainable_tuples(space, k, constraints).size());
}

long long ledger_add(const CategorySpace& space, CoverageLedger& ledger, const ScenarioItem& item) {
    check_item(space, item);
    long long gained = 0;
    for_each_k_subset(space.size(), ledger.k, [&](const std::vector<int>& cats) {
        if (ledger.covered.insert(tuple_of(cats, item)).second) ++gained;
    });
    return gained;
}

CoverageLedger projection_coverage(const CategorySpace& space,
                                   const std::vector<ScenarioItem>& items, int k,
                                   const std::vector<IndicatorConstraint>& constraints,
                                   const CoverageOptions& opts) {
    space.validate();
    check_k(space, k);
    CoverageLedger ledger;
    ledger.k = k;
    for (const ScenarioItem& item : items) ledger_add(space, ledger, item);
    if (opts.constrained_denominator) {
        // Keep the ledger invariant covered <= denominator: tuples no feasible
        // assignment can reach leave both sides of the ratio.
        std::set<KTuple> attainable = attainable_tuples(space, k, constraints);
        ledger.denominator = static_cast<long long>(attainable.size());
        std::set<KTuple> kept;
        for (const KTuple& t : ledger.covered)
            if (attainable.count(t)) kept.insert(t);
        ledger.covered = std::move(kept);
    } else {
        ledger.denominator = projection_denominator(space, k);
    }
    return ledger;
}

namespace {

/// Shared state of the exact proposal search.
struct ProposalSearch {
    const CategorySpace& space;
    int k;
    std::vector<ConstraintProfile> profiles;

    // Per k-subset: member categories, covered value combos, total combos.
    struct Subset {
        std::vector<int> cats;
        std::set<std::vector<int>> covered;
        long long total = 1;
    };
    std::vector<Subset> subsets;
    // Subsets whose maximum category is c (they become fully fixed when c is assigned).
    std::vector<std::vector<int>> by_max_cat;
    // Subsets touching at least one category >= c, used by the optimistic bound.
    std::vector<std::vector<int>> open_at;

    std::size_t max_results;
    // Kept sorted by (gain desc, assignment lex asc). DFS order guarantees any
    // later find with equal gain is lexicographically larger, so pruning at
    // bound <= worst kept gain is exact.
    std::vector<Proposal> best;

    std::vector<int> assignment;
    std::vector<long long> partial_sums;
    long long exact_gain = 0;

    ProposalSearch(const CategorySpace& sp, const CoverageLedger& ledger,
                   const std::vector<IndicatorConstraint>& constraints, std::size_t count)
        : space(sp), k(ledger.k), profiles(profile_constraints(sp, constraints)),
          max_results(count) {
        std::size_t m = space.size();
        by_max_cat.resize(m);
        open_at.resize(m + 1);
        for_each_k_subset(m, k, [&](const std::vector<int>& cats) {
            Subset s;
            s.cats = cats;
            for (int c : cats) s.total *= static_cast<long long>(space.cardinality(c));
            subsets.push_back(std::move(s));
        });
        for (const KTuple& t : ledger.covered) {
            std::vector<int> cats, vals;
            for (auto [c, v] : t) {
                cats.push_back(c);
                vals.push_back(v);
            }
            for (Subset& s : subsets)
                if (s.cats == cats) {
                    s.covered.insert(vals);
                    break;
                }
        }
        for (std::size_t i = 0; i < subsets.size(); ++i) {
            by_max_cat[subsets[i].cats.back()].push_back(static_cast<int>(i));
            for (std::size_t c = 0; c <= static_cast<std::size_t>(subsets[i].cats.back()); ++c)
                open_at[c].push_back(static_cast<int>(i));
        }
        assignment.assign(m, -1);
        partial_sums.assign(profiles.size(), 0);
    }

    bool subset_can_gain(const Subset& s, std::size_t fixed_upto) const {
        // Count covered combos consistent with the fixed prefix; compare against
        // the number of combos the free categories can still form.
        long long consistent_total = 1;
        for (int c : s.cats)
            if (c >= static_cast<int>(fixed_upto))
                consistent_total *= static_cast<long long>(space.cardinality(c));
        long long consistent_covered = 0;
        for (const std::vector<int>& vals : s.covered) {
            bool match = true;
            for (std::size_t i = 0; i < s.cats.size(); ++i)
                if (s.cats[i] < static_cast<int>(fixed_upto) &&
                    vals[i] != assignment[s.cats[i]]) {
                    match = false;
                    break;
                }
            if (match) ++consistent_covered;
        }
        return consistent_covered < consistent_total;
    }

    long long optimistic_bound(std::size_t fixed_upto) const {
        long long bound = exact_gain;
        for (int si : open_at[fixed_upto])
            if (subset_can_gain(subsets[si], fixed_upto)) ++bound;
        return bound;
    }

    long long worst_kept_gain() const { return best.back().gain; }

    void offer(const ScenarioItem& item, long long gain) {
        Proposal p{item, gain};
        auto pos = std::lower_bound(best.begin(), best.end(), p,
                                    [](const Proposal& a, const Proposal& b) {
                                        if (a.gain != b.gain) return a.gain > b.gain;
                                        return a.item.assignment < b.item.assignment;
                                    });
        best.insert(pos, std::move(p));
        if (best.size() > max_results) best.pop_back();
    }

    void dfs(std::size_t cat) {
        if (!prefix_feasible(profiles, partial_sums, cat)) return;
        if (best.size() == max_results && optimistic_bound(cat) <= worst_kept_gain()) return;
        if (cat == space.size()) {
            offer(ScenarioItem{assignment}, exact_gain);
            return;
        }
        for (std::size_t v = 0; v < space.cardinality(cat); ++v) {
            assignment[cat] = static_cast<int>(v);
            for (std::size_t i = 0; i < profiles.size(); ++i)
                partial_sums[i] += profiles[i].contribution[cat][v];
            long long delta = 0;
            for (int si : by_max_cat[cat]) {
                const Subset& s = subsets[si];
                std::vector<int> vals;
                vals.reserve(s.cats.size());
                for (int c : s.cats) vals.push_back(assignment[c]);
                if (!s.covered.count(vals)) ++delta;
            }
            exact_gain += delta;
            dfs(cat + 1);
            exact_gain -= delta;
            for (std::size_t i = 0; i < profiles.size(); ++i)
                partial_sums[i] -= profiles[i].contribution[cat][v];
            assignment[cat] = -1;
        }
    }
};

} // namespace

std::vector<Proposal> propose_next(const CategorySpace& space, const CoverageLedger& ledger,
                                   const std::vector<IndicatorConstraint>& constraints,
                                   int count) {
    space.validate();
    check_k(space, ledger.k);
    if (count < 1) throw BadParameters("propose_next: count must be positive");
    ProposalSearch search(space, ledger, constraints, static_cast<std::size_t>(count));
    search.dfs(0);
    if (search.best.empty())
        throw NoFeasibleAssignment("constraints exclude every full assignment");
    return search.best;
}

std::vector<Proposal> propose_next_greedy(const CategorySpace& space, const CoverageLedger& ledger,
                                          const std::vector<IndicatorConstraint>& constraints,
                                          int count) {
    space.validate();
    check_k(space, ledger.k);
    if (count < 1) throw BadParameters("propose_next_greedy: count must be positive");
    auto profiles = profile_constraints(space, constraints);
    CoverageLedger work = ledger;
    std::vector<Proposal> out;
    for (int round = 0; round < count; ++round) {
        ProposalSearch search(space, work, constraints, 1);
        std::vector<int>& assignment = search.assignment;
        std::vector<long long>& sums = search.partial_sums;
        for (std::size_t cat = 0; cat < space.size(); ++cat) {
            long long best_bound = -1;
            int best_value = -1;
            for (std::size_t v = 0; v < space.cardinality(cat); ++v) {
                assignment[cat] = static_cast<int>(v);
                for (std::size_t i = 0; i < profiles.size(); ++i)
                    sums[i] += profiles[i].contribution[cat][v];
                if (prefix_feasible(profiles, sums, cat + 1)) {
                    long long delta = 0;
                    for (int si : search.by_max_cat[cat]) {
                        const auto& s = search.subsets[si];
                        std::vector<int> vals;
                        for (int c : s.cats) vals.push_back(assignment[c]);
                        if (!s.covered.count(vals)) ++delta;
                    }
                    long long b = delta + search.optimistic_bound(cat + 1);
                    if (b > best_bound) {
                        best_bound = b;
                        best_value = static_cast<int>(v);
                    }
                }
                for (std::size_t i = 0; i < profiles.size(); ++i)
                    sums[i] -= profiles[i].contribution[cat][v];
                assignment[cat] = -1;
            }
            if (best_value < 0) throw NoFeasibleAssignment("greedy search dead-ends on constraints");
            assignment[cat] = best_value;
            for (std::size_t i = 0; i < profiles.size(); ++i)
                sums[i] += profiles[i].contribution[cat][best_value];
            long long delta = 0;
            for (int si : search.by_max_cat[cat]) {
                const auto& s = search.subsets[si];
                std::vector<int> vals;
                for (int c : s.cats) vals.push_back(assignment[c]);
                if (!s.covered.count(vals)) ++delta;
            }
            search.exact_gain += delta;
        }
        ScenarioItem item{assignment};
        long long gain = ledger_add(space, work, item);
        out.push_back(Proposal{std::move(item), gain});
        if (gain == 0) break; // further rounds would repeat the same item
    }
    return out;
}

Catalog load_catalog(const std::filesystem::path& path) {
    json j = read_json_file(path);
    require_format(j, "catalog " + path.string());
    Catalog cat;
    try {
        for (const json& cj : j.at("categories")) {
            CategorySpace::Category c;
            c.name = cj.at("name").get<std::string>();
            c.values = cj.at("values").get<std::vector<std::string>>();
            cat.space.categories.push_back(std::move(c));
        }
        cat.space.validate();
        if (j.contains("constraints")) {
            for (const json& cj : j["constraints"]) {
                IndicatorConstraint c;
                c.lower = cj.at("lower").get<long long>();
                c.upper = cj.at("upper").get<long long>();
                for (const json& tj : cj.at("terms")) {
                    IndicatorConstraint::Term t;
                    std::string cname = tj.at(0).get<std::string>();
                    std::string vname = tj.at(1).get<std::string>();
                    t.coefficient = tj.at(2).get<long long>();
                    t.category = cat.space.category_index(cname);
                    if (t.category < 0)
                        throw MalformedInput("constraint references unknown category \"" + cname +
                                             "\"");
                    t.value = cat.space.value_index(t.category, vname);
                    if (t.value < 0)
                        throw MalformedInput("constraint references unknown value \"" + vname +
                                             "\" of \"" + cname + "\"");
                    c.terms.push_back(t);
                }
                if (c.lower > c.upper)
                    throw MalformedInput("constraint with lower > upper in " + path.string());
                cat.constraints.push_back(std::move(c));
            }
        }
        if (j.contains("items")) {
            for (const json& ij : j["items"]) {
                auto names = ij.get<std::vector<std::string>>();
                if (names.size() != cat.space.size())
                    throw InvalidItem("catalog item has wrong number of values");
                ScenarioItem item;
                for (std::size_t c = 0; c < names.size(); ++c) {
                    int v = cat.space.value_index(c, names[c]);
                    if (v < 0)
                        throw InvalidItem("catalog item value \"" + names[c] +
                                          "\" unknown in category \"" +
                                          cat.space.categories[c].name + "\"");
                    item.assignment.push_back(v);
                }
                cat.items.push_back(std::move(item));
            }
        }
    } catch (const json::exception& e) {
        throw MalformedInput("catalog " + path.string() + ": " + e.what());
    }
    return cat;
}

std::vector<std::string> item_value_names(const CategorySpace& space, const ScenarioItem& item) {
    std::vector<std::string> names;
    names.reserve(item.assignment.size());
    for (std::size_t c = 0; c < item.assignment.size(); ++c)
        names.push_back(space.categories[c].values[item.assignment[c]]);
    return names;
}

} // namespace depkit
