#include "depkit/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "depkit/jsonutil.hpp"

namespace depkit {

using nlohmann::json;

Layer Layer::affine(Matrix w, Vec b) {
    Layer l;
    l.kind = LayerKind::Affine;
    l.weights = std::move(w);
    l.bias = std::move(b);
    return l;
}

Layer Layer::relu() {
    Layer l;
    l.kind = LayerKind::Relu;
    return l;
}

std::size_t Network::layer_output_width(std::size_t idx) const {
    std::size_t width = input_dim;
    for (std::size_t i = 0; i <= idx && i < layers.size(); ++i) {
        if (layers[i].kind == LayerKind::Affine) width = layers[i].weights.rows;
    }
    return width;
}

std::size_t Network::output_dim() const {
    if (layers.empty()) return input_dim;
    return layer_output_width(layers.size() - 1);
}

void Network::validate() const {
    if (input_dim == 0) throw MalformedModel("input_dim must be positive");
    if (layers.empty()) throw MalformedModel("network must have at least one layer");
    std::size_t width = input_dim;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const Layer& l = layers[i];
        if (l.kind == LayerKind::Affine) {
            if (l.weights.rows == 0 || l.weights.cols == 0)
                throw MalformedModel("layer " + std::to_string(i) + ": empty weight matrix");
            if (l.weights.data.size() != l.weights.rows * l.weights.cols)
                throw MalformedModel("layer " + std::to_string(i) + ": ragged weight matrix");
            if (l.weights.cols != width)
                throw DimensionMismatch("layer " + std::to_string(i) + ": expects input width " +
                                        std::to_string(l.weights.cols) + ", got " +
                                        std::to_string(width));
            if (l.bias.size() != l.weights.rows)
                throw MalformedModel("layer " + std::to_string(i) + ": bias length " +
                                     std::to_string(l.bias.size()) + " != output width " +
                                     std::to_string(l.weights.rows));
            for (double w : l.weights.data)
                if (!std::isfinite(w)) throw NonFiniteWeight("layer " + std::to_string(i));
            for (double b : l.bias)
                if (!std::isfinite(b)) throw NonFiniteWeight("layer " + std::to_string(i));
            width = l.weights.rows;
        }
        // ReLU carries no parameters and preserves width.
    }
    if (class_labels && class_labels->size() != output_dim())
        throw MalformedModel("class_labels length " + std::to_string(class_labels->size()) +
                             " != output width " + std::to_string(output_dim()));
}

Network load_network(const std::filesystem::path& path) {
    json j = read_json_file(path);
    require_format(j, "model " + path.string());
    Network net;
    try {
        net.input_dim = j.at("input_dim").get<std::size_t>();
        if (j.contains("class_labels"))
            net.class_labels = j["class_labels"].get<std::vector<std::string>>();
        for (const json& lj : j.at("layers")) {
            std::string kind = lj.at("kind").get<std::string>();
            if (kind == "affine") {
                auto rows = lj.at("weights").get<std::vector<std::vector<double>>>();
                if (rows.empty()) throw MalformedModel("affine layer with no rows");
                Matrix w(rows.size(), rows[0].size());
                for (std::size_t r = 0; r < rows.size(); ++r) {
                    if (rows[r].size() != w.cols)
                        throw MalformedModel("ragged weight matrix in " + path.string());
                    std::copy(rows[r].begin(), rows[r].end(), w.data.begin() + r * w.cols);
                }
                net.layers.push_back(Layer::affine(std::move(w), lj.at("bias").get<Vec>()));
            } else if (kind == "relu") {
                net.layers.push_back(Layer::relu());
            } else {
                // Raw-logit networks only: no normalization or other layer kinds.
                throw MalformedModel("unknown layer kind \"" + kind + "\" in " + path.string());
            }
        }
    } catch (const json::exception& e) {
        throw MalformedModel("model " + path.string() + ": " + e.what());
    }
    net.validate();
    return net;
}

void save_network(const Network& net, const std::filesystem::path& path) {
    json j;
    j["format"] = kFormatTag;
    j["input_dim"] = net.input_dim;
    if (net.class_labels) j["class_labels"] = *net.class_labels;
    json layers = json::array();
    for (const Layer& l : net.layers) {
        json lj;
        if (l.kind == LayerKind::Affine) {
            lj["kind"] = "affine";
            json rows = json::array();
            for (std::size_t r = 0; r < l.weights.rows; ++r) {
                json row = json::array();
                for (std::size_t c = 0; c < l.weights.cols; ++c) row.push_back(l.weights.at(r, c));
                rows.push_back(std::move(row));
            }
            lj["weights"] = std::move(rows);
            lj["bias"] = l.bias;
        } else {
            lj["kind"] = "relu";
        }
        layers.push_back(std::move(lj));
    }
    j["layers"] = std::move(layers);
    write_text_atomic(path, j.dump(2) + "\n");
}

ForwardResult forward(const Network& net, const Vec& input) {
    if (input.size() != net.input_dim)
        throw DimensionMismatch("forward: input length " + std::to_string(input.size()) +
                                " != input_dim " + std::to_string(net.input_dim));
    ForwardResult res;
    res.trace.per_layer.reserve(net.layers.size());
    Vec cur = input;
    for (const Layer& l : net.layers) {
        if (l.kind == LayerKind::Affine) {
            Vec next(l.weights.rows);
            for (std::size_t r = 0; r < l.weights.rows; ++r) {
                // Accumulation order (bias first, then columns ascending) must match
                // the interval transformer so concrete values never exit sound bounds.
                double acc = l.bias[r];
                for (std::size_t c = 0; c < l.weights.cols; ++c)
                    acc += l.weights.at(r, c) * cur[c];
                next[r] = acc;
            }
            cur = std::move(next);
        } else {
            for (double& v : cur) v = std::max(0.0, v);
        }
        res.trace.per_layer.push_back(cur);
    }
    res.logits = cur;
    return res;
}

Vec softmax(const Vec& logits) {
    if (logits.empty()) throw BadParameters("softmax: empty logits");
    double m = *std::max_element(logits.begin(), logits.end());
    if (!std::isfinite(m)) throw BadParameters("softmax: non-finite logits");
    Vec p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

Vec backprop_logit_gradient(const Network& net, const Vec& input, const Vec& logit_grad) {
    if (input.size() != net.input_dim) throw DimensionMismatch("backprop: bad input length");
    if (logit_grad.size() != net.output_dim())
        throw DimensionMismatch("backprop: bad cotangent length");
    ForwardResult fwd = forward(net, input);
    Vec g = logit_grad;
    for (std::size_t i = net.layers.size(); i-- > 0;) {
        const Layer& l = net.layers[i];
        if (l.kind == LayerKind::Affine) {
            Vec prev(l.weights.cols, 0.0);
            for (std::size_t r = 0; r < l.weights.rows; ++r)
                for (std::size_t c = 0; c < l.weights.cols; ++c)
                    prev[c] += l.weights.at(r, c) * g[r];
            g = std::move(prev);
        } else {
            // ReLU input = previous layer's post-activation output (or the network input).
            const Vec& pre = (i == 0) ? input : fwd.trace.per_layer[i - 1];
            for (std::size_t n = 0; n < g.size(); ++n)
                if (!(pre[n] > 0.0)) g[n] = 0.0; // subgradient at 0 is 0
        }
    }
    return g;
}

Vec input_gradient(const Network& net, const Vec& input, std::size_t label) {
    if (label >= net.output_dim())
        throw LabelOutOfRange("input_gradient: label " + std::to_string(label) +
                              " >= output width " + std::to_string(net.output_dim()));
    ForwardResult fwd = forward(net, input);
    Vec seed = softmax(fwd.logits);
    seed[label] -= 1.0; // d(-log softmax[label])/dlogits
    return backprop_logit_gradient(net, input, seed);
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MalformedInput("cannot open dataset: " + path.string());
    std::string line;
    Dataset ds;
    bool saw_header = false;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw MalformedInput("dataset " + path.string() + ": bad JSON on line " +
                                 std::to_string(lineno));
        if (!saw_header) {
            require_format(j, "dataset " + path.string());
            saw_header = true;
            continue;
        }
        try {
            DataItem item;
            item.x = j.at("x").get<Vec>();
            item.label = j.at("label").get<int>();
            if (j.contains("tags"))
                item.tags = j["tags"].get<std::map<std::string, std::string>>();
            ds.items.push_back(std::move(item));
        } catch (const json::exception& e) {
            throw MalformedInput("dataset " + path.string() + " line " + std::to_string(lineno) +
                                 ": " + e.what());
        }
    }
    if (!saw_header) throw MalformedInput("dataset " + path.string() + ": missing header line");
    return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
    std::ostringstream out;
    out << json{{"format", kFormatTag}}.dump() << "\n";
    for (const DataItem& item : ds.items) {
        json j{{"x", item.x}, {"label", item.label}};
        if (!item.tags.empty()) j["tags"] = item.tags;
        out << j.dump() << "\n";
    }
    write_text_atomic(path, out.str());
}

} // namespace depkit
