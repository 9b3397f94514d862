#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "depkit/bdd.hpp"
#include "depkit/network.hpp"

namespace depkit {

/// bit i = 1 iff activation_i > threshold; the layer must be a ReLU output.
Pattern binarize(const Network& net, const ActivationTrace& trace, int layer,
                 double threshold = 0.0);

/// Resolve a monitored-layer request: -1 picks the last ReLU layer; otherwise
/// the index must point at a ReLU layer.
int resolve_monitor_layer(const Network& net, int requested);

struct MonitorVerdict {
    bool supported = false;
    std::size_t predicted_class = 0;
    Pattern pattern;
};

/// Per-class BDDs over binarized activation patterns of the training set.
/// Frozen after build; checks are pure.
class Monitor {
public:
    Monitor() = default;

    int layer_index() const { return layer_; }
    int gamma() const { return gamma_; }
    int width() const { return width_; }
    std::size_t class_count() const { return roots_.size(); }

    struct ClassStats {
        std::uint64_t examples = 0;
        std::uint64_t distinct_patterns = 0; // satcount before relaxation
    };
    const std::vector<ClassStats>& class_stats() const { return stats_; }
    std::uint64_t relaxed_satcount(std::size_t cls) const;
    const std::string& model_path() const { return model_path_; }
    const std::string& model_hash() const { return model_hash_; }

    MonitorVerdict check(const Network& net, const Vec& input) const;
    bool class_contains(std::size_t cls, const Pattern& p) const;

    void save(const std::filesystem::path& path) const;
    static Monitor load(const std::filesystem::path& path);

    friend Monitor build_monitor(const Network& net, const Dataset& dataset, int layer, int gamma,
                                 const std::string& model_path, const std::string& model_hash);

private:
    std::shared_ptr<BddManager> mgr_ = std::make_shared<BddManager>();
    std::vector<BddManager::NodeId> roots_; // one per class, after relaxation
    std::vector<ClassStats> stats_;
    int layer_ = -1;
    int gamma_ = 0;
    int width_ = 0;
    std::string model_path_;
    std::string model_hash_;
};

/// Insert every training input's binarized pattern into its class BDD, then
/// apply the Hamming relaxation per class. Order-independent.
Monitor build_monitor(const Network& net, const Dataset& dataset, int layer, int gamma,
                      const std::string& model_path = {}, const std::string& model_hash = {});

} // namespace depkit
