#include "depkit/bdd.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <map>
#include <string>

namespace depkit {

namespace {
constexpr int kTerminalVar = std::numeric_limits<int>::max();
}

std::string pattern_to_string(const Pattern& p) {
    std::string s;
    s.reserve(p.size());
    for (bool b : p) s.push_back(b ? '1' : '0');
    return s;
}

Pattern pattern_from_string(const std::string& s) {
    Pattern p;
    p.reserve(s.size());
    for (char c : s) {
        if (c != '0' && c != '1') throw BadParameters("pattern string must be 0/1");
        p.push_back(c == '1');
    }
    return p;
}

BddManager::BddManager() {
    nodes_.push_back({kTerminalVar, kFalse, kFalse}); // 0
    nodes_.push_back({kTerminalVar, kTrue, kTrue});   // 1
}

int BddManager::var_of(NodeId id) const { return nodes_[id].var; }

BddManager::NodeId BddManager::make(int var, NodeId low, NodeId high) {
    if (low == high) return low; // reduction
    Key key{var, low, high};
    auto it = unique_.find(key);
    if (it != unique_.end()) return it->second;
    NodeId id = static_cast<NodeId>(nodes_.size());
    nodes_.push_back({var, low, high});
    unique_.emplace(key, id);
    return id;
}

BddManager::NodeId BddManager::bdd_or(NodeId a, NodeId b) {
    if (a == b) return a;
    if (a == kTrue || b == kTrue) return kTrue;
    if (a == kFalse) return b;
    if (b == kFalse) return a;
    if (a > b) std::swap(a, b); // OR is symmetric; normalize the cache key
    auto it = or_cache_.find({a, b});
    if (it != or_cache_.end()) return it->second;

    int va = var_of(a), vb = var_of(b);
    int v = std::min(va, vb);
    NodeId a0 = va == v ? nodes_[a].low : a;
    NodeId a1 = va == v ? nodes_[a].high : a;
    NodeId b0 = vb == v ? nodes_[b].low : b;
    NodeId b1 = vb == v ? nodes_[b].high : b;
    NodeId r = make(v, bdd_or(a0, b0), bdd_or(a1, b1));
    or_cache_.emplace(std::make_pair(a, b), r);
    return r;
}

BddManager::NodeId BddManager::insert_pattern(NodeId root, const Pattern& bits) {
    NodeId minterm = kTrue;
    for (std::size_t i = bits.size(); i-- > 0;) {
        minterm = bits[i] ? make(static_cast<int>(i), kFalse, minterm)
                          : make(static_cast<int>(i), minterm, kFalse);
    }
    return bdd_or(root, minterm);
}

bool BddManager::contains(NodeId root, const Pattern& bits) const {
    NodeId cur = root;
    while (!is_terminal(cur)) {
        const Node& nd = nodes_[cur];
        if (static_cast<std::size_t>(nd.var) >= bits.size())
            throw BadParameters("pattern narrower than BDD support");
        cur = bits[nd.var] ? nd.high : nd.low;
    }
    return cur == kTrue;
}

std::uint64_t BddManager::satcount(NodeId root, int width) const {
    if (width < 0 || width > 62) throw BadParameters("satcount: width out of range");
    std::map<NodeId, std::uint64_t> memo;
    // count(n) = assignments of variables in [var(n), width)
    auto var_at = [&](NodeId id) { return is_terminal(id) ? width : nodes_[id].var; };
    std::function<std::uint64_t(NodeId)> count = [&](NodeId id) -> std::uint64_t {
        if (id == kFalse) return 0;
        if (id == kTrue) return 1;
        auto it = memo.find(id);
        if (it != memo.end()) return it->second;
        const Node& nd = nodes_[id];
        if (nd.var >= width) throw BadParameters("satcount: width below BDD support");
        std::uint64_t lo = count(nd.low) << (var_at(nd.low) - nd.var - 1);
        std::uint64_t hi = count(nd.high) << (var_at(nd.high) - nd.var - 1);
        std::uint64_t total = lo + hi;
        memo.emplace(id, total);
        return total;
    };
    return count(root) << var_at(root);
}

BddManager::NodeId BddManager::flip_var(NodeId f, int var) {
    if (is_terminal(f) || var_of(f) > var) return f; // var unconstrained here
    // Local memo per call: (node) -> flipped node, valid for this var only.
    std::unordered_map<NodeId, NodeId> memo;
    std::function<NodeId(NodeId)> rec = [&](NodeId g) -> NodeId {
        if (is_terminal(g) || var_of(g) > var) return g;
        auto it = memo.find(g);
        if (it != memo.end()) return it->second;
        Node nd = nodes_[g]; // copy: make() below may grow the node table
        NodeId r = nd.var == var ? make(var, nd.high, nd.low)
                                 : make(nd.var, rec(nd.low), rec(nd.high));
        memo.emplace(g, r);
        return r;
    };
    return rec(f);
}

BddManager::NodeId BddManager::make_node(int var, NodeId low, NodeId high) {
    if (low >= nodes_.size() || high >= nodes_.size())
        throw BadParameters("make_node: child id out of range");
    if (var < 0 || var >= var_of(low) || var >= var_of(high))
        throw BadParameters("make_node: variable order violated");
    return make(var, low, high);
}

BddManager::NodeId BddManager::relax_hamming(NodeId root, int width, int gamma) {
    if (gamma < 0 || gamma > width) throw BadParameters("relax_hamming: gamma out of range");
    NodeId cur = root;
    for (int round = 0; round < gamma; ++round) {
        NodeId next = cur;
        for (int v = 0; v < width; ++v) next = bdd_or(next, flip_var(cur, v));
        if (next == cur) break; // saturated
        cur = next;
    }
    return cur;
}

} // namespace depkit
