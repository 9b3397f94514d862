#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "depkit/errors.hpp"

namespace depkit {

/// Bit vector over the monitored neurons, one bit per neuron.
using Pattern = std::vector<bool>;

std::string pattern_to_string(const Pattern& p);
Pattern pattern_from_string(const std::string& s);

/// Reduced ordered BDD store with a shared unique table. Variable order is
/// fixed to the neuron index (ascending along every path); no complement
/// edges. Node ids are canonical for a fixed manager: equal functions share
/// one id regardless of construction order.
class BddManager {
public:
    using NodeId = std::uint32_t;
    static constexpr NodeId kFalse = 0;
    static constexpr NodeId kTrue = 1;

    BddManager();

    /// root OR the minterm given by `bits`. Idempotent.
    NodeId insert_pattern(NodeId root, const Pattern& bits);

    bool contains(NodeId root, const Pattern& bits) const;

    /// Satisfying assignments over exactly `width` variables.
    std::uint64_t satcount(NodeId root, int width) const;

    /// Function accepting anything within Hamming distance <= gamma of an
    /// accepted assignment: gamma applications of the one-bit-flip expansion.
    NodeId relax_hamming(NodeId root, int width, int gamma);

    NodeId bdd_or(NodeId a, NodeId b);

    /// f with the polarity of variable `var` swapped.
    NodeId flip_var(NodeId f, int var);

    /// Find-or-create the reduced node (var, low, high). Children must test
    /// strictly larger variables; used when deserializing a node table.
    NodeId make_node(int var, NodeId low, NodeId high);

    std::size_t node_count() const { return nodes_.size(); }

    struct Node {
        int var;
        NodeId low, high;
    };
    const Node& node(NodeId id) const { return nodes_[id]; }
    bool is_terminal(NodeId id) const { return id <= kTrue; }

private:
    struct Key {
        int var;
        NodeId low, high;
        bool operator==(const Key&) const = default;
    };
    struct KeyHash {
        std::size_t operator()(const Key& k) const {
            std::uint64_t h = static_cast<std::uint64_t>(k.var);
            h = h * 0x9e3779b97f4a7c15ULL + k.low;
            h = h * 0x9e3779b97f4a7c15ULL + k.high;
            return static_cast<std::size_t>(h ^ (h >> 32));
        }
    };
    struct PairHash {
        std::size_t operator()(const std::pair<NodeId, NodeId>& p) const {
            return static_cast<std::size_t>((static_cast<std::uint64_t>(p.first) << 32) | p.second);
        }
    };

    NodeId make(int var, NodeId low, NodeId high);
    int var_of(NodeId id) const; // terminals sort last

    std::vector<Node> nodes_;
    std::unordered_map<Key, NodeId, KeyHash> unique_;
    std::unordered_map<std::pair<NodeId, NodeId>, NodeId, PairHash> or_cache_;
};

} // namespace depkit
