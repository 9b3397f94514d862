#include "depkit/monitor.hpp"

#include <algorithm>
#include <functional>
#include <map>

#include <json.hpp>

#include "depkit/jsonutil.hpp"

namespace depkit {

using nlohmann::json;

int resolve_monitor_layer(const Network& net, int requested) {
    if (requested == -1) {
        for (int i = static_cast<int>(net.layers.size()); i-- > 0;)
            if (net.layers[i].kind == LayerKind::Relu) return i;
        throw LayerNotMonitorable("network has no ReLU layer to monitor");
    }
    if (requested < 0 || static_cast<std::size_t>(requested) >= net.layers.size())
        throw LayerNotMonitorable("layer index " + std::to_string(requested) + " out of range");
    if (net.layers[requested].kind != LayerKind::Relu)
        throw LayerNotMonitorable("layer " + std::to_string(requested) + " is not a ReLU output");
    return requested;
}

Pattern binarize(const Network& net, const ActivationTrace& trace, int layer, double threshold) {
    int resolved = resolve_monitor_layer(net, layer);
    const Vec& act = trace.per_layer.at(resolved);
    Pattern p(act.size());
    for (std::size_t i = 0; i < act.size(); ++i) p[i] = act[i] > threshold;
    return p;
}

std::uint64_t Monitor::relaxed_satcount(std::size_t cls) const {
    return mgr_->satcount(roots_.at(cls), width_);
}

bool Monitor::class_contains(std::size_t cls, const Pattern& p) const {
    return mgr_->contains(roots_.at(cls), p);
}

MonitorVerdict Monitor::check(const Network& net, const Vec& input) const {
    ForwardResult fwd = forward(net, input);
    // argmax with ties to the lowest class index
    std::size_t cls = 0;
    for (std::size_t i = 1; i < fwd.logits.size(); ++i)
        if (fwd.logits[i] > fwd.logits[cls]) cls = i;
    MonitorVerdict v;
    v.predicted_class = cls;
    v.pattern = binarize(net, fwd.trace, layer_);
    v.supported = cls < roots_.size() && mgr_->contains(roots_[cls], v.pattern);
    return v;
}

Monitor build_monitor(const Network& net, const Dataset& dataset, int layer, int gamma,
                      const std::string& model_path, const std::string& model_hash) {
    int resolved = resolve_monitor_layer(net, layer);
    std::size_t classes = net.output_dim();
    Monitor mon;
    mon.layer_ = resolved;
    mon.gamma_ = gamma;
    mon.width_ = static_cast<int>(net.layer_output_width(resolved));
    mon.model_path_ = model_path;
    mon.model_hash_ = model_hash;
    mon.roots_.assign(classes, BddManager::kFalse);
    mon.stats_.assign(classes, {});
    if (gamma < 0 || gamma > mon.width_)
        throw BadParameters("monitor gamma must lie in [0, monitored width]");

    for (const DataItem& item : dataset.items) {
        if (item.label < 0 || static_cast<std::size_t>(item.label) >= classes)
            throw LabelOutOfRange("dataset label " + std::to_string(item.label) +
                                  " >= class count " + std::to_string(classes));
        ForwardResult fwd = forward(net, item.x);
        Pattern p = binarize(net, fwd.trace, resolved);
        mon.roots_[item.label] = mon.mgr_->insert_pattern(mon.roots_[item.label], p);
        ++mon.stats_[item.label].examples;
    }
    for (std::size_t c = 0; c < classes; ++c) {
        mon.stats_[c].distinct_patterns = mon.mgr_->satcount(mon.roots_[c], mon.width_);
        mon.roots_[c] = mon.mgr_->relax_hamming(mon.roots_[c], mon.width_, gamma);
    }
    return mon;
}

void Monitor::save(const std::filesystem::path& path) const {
    // Serialize the reachable subgraph, children before parents so the loader
    // can rebuild bottom-up. Ids: 0/1 terminals, internals from 2.
    std::map<BddManager::NodeId, std::uint32_t> remap{{BddManager::kFalse, 0},
                                                      {BddManager::kTrue, 1}};
    json nodes = json::array();
    std::function<std::uint32_t(BddManager::NodeId)> emit =
        [&](BddManager::NodeId id) -> std::uint32_t {
        auto it = remap.find(id);
        if (it != remap.end()) return it->second;
        const BddManager::Node& nd = mgr_->node(id);
        std::uint32_t lo = emit(nd.low);
        std::uint32_t hi = emit(nd.high);
        std::uint32_t fresh = static_cast<std::uint32_t>(nodes.size()) + 2;
        nodes.push_back(json::array({nd.var, lo, hi}));
        remap.emplace(id, fresh);
        return fresh;
    };
    json roots = json::array();
    for (BddManager::NodeId r : roots_) roots.push_back(emit(r));

    json stats = json::array();
    for (const ClassStats& s : stats_)
        stats.push_back({{"examples", s.examples}, {"distinct_patterns", s.distinct_patterns}});

    json j{{"format", kFormatTag},
           {"model_path", model_path_},
           {"model_hash", model_hash_},
           {"layer_index", layer_},
           {"gamma", gamma_},
           {"width", width_},
           {"nodes", std::move(nodes)},
           {"roots", std::move(roots)},
           {"class_stats", std::move(stats)}};
    write_text_atomic(path, j.dump(2) + "\n");
}

Monitor Monitor::load(const std::filesystem::path& path) {
    json j = read_json_file(path);
    require_format(j, "monitor " + path.string());
    Monitor mon;
    try {
        mon.model_path_ = j.at("model_path").get<std::string>();
        mon.model_hash_ = j.at("model_hash").get<std::string>();
        mon.layer_ = j.at("layer_index").get<int>();
        mon.gamma_ = j.at("gamma").get<int>();
        mon.width_ = j.at("width").get<int>();
        const json& nodes = j.at("nodes");
        std::vector<BddManager::NodeId> ids(nodes.size() + 2);
        ids[0] = BddManager::kFalse;
        ids[1] = BddManager::kTrue;
        // Children precede parents in the node list by construction.
        std::size_t next = 2;
        for (const json& nj : nodes) {
            int var = nj.at(0).get<int>();
            std::uint32_t lo = nj.at(1).get<std::uint32_t>();
            std::uint32_t hi = nj.at(2).get<std::uint32_t>();
            if (lo >= next || hi >= next)
                throw MalformedInput("monitor " + path.string() + ": node list not topological");
            ids[next] = mon.mgr_->make_node(var, ids[lo], ids[hi]);
            ++next;
        }
        for (const json& rj : j.at("roots")) {
            std::uint32_t r = rj.get<std::uint32_t>();
            if (r >= next)
                throw MalformedInput("monitor " + path.string() + ": root id out of range");
            mon.roots_.push_back(ids[r]);
        }
        for (const json& sj : j.at("class_stats")) {
            ClassStats s;
            s.examples = sj.at("examples").get<std::uint64_t>();
            s.distinct_patterns = sj.at("distinct_patterns").get<std::uint64_t>();
            mon.stats_.push_back(s);
        }
        if (mon.stats_.size() != mon.roots_.size())
            throw MalformedInput("monitor " + path.string() + ": stats/roots length mismatch");
    } catch (const json::exception& e) {
        throw MalformedInput("monitor " + path.string() + ": " + e.what());
    }
    return mon;
}

} // namespace depkit
