#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "depkit/errors.hpp"

namespace depkit {

using Vec = std::vector<double>;

/// Dense row-major matrix; row = output neuron, matching the model file layout.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

enum class LayerKind { Affine, Relu };

struct Layer {
    LayerKind kind = LayerKind::Relu;
    Matrix weights; // Affine only
    Vec bias;       // Affine only

    static Layer affine(Matrix w, Vec b);
    static Layer relu();
};

/// Post-activation output of every layer, indexed by layer position.
struct ActivationTrace {
    std::vector<Vec> per_layer;
};

struct ForwardResult {
    Vec logits;
    ActivationTrace trace;
};

/// Layered feedforward network over raw logits. Immutable after load;
/// forward/softmax/input_gradient are pure.
struct Network {
    std::size_t input_dim = 0;
    std::vector<Layer> layers;
    std::optional<std::vector<std::string>> class_labels;

    /// Output width of layer `idx` given the dimension chain.
    std::size_t layer_output_width(std::size_t idx) const;
    std::size_t output_dim() const;

    /// Throws DimensionMismatch / NonFiniteWeight / MalformedModel on broken invariants.
    void validate() const;
};

Network load_network(const std::filesystem::path& path);
void save_network(const Network& net, const std::filesystem::path& path);

ForwardResult forward(const Network& net, const Vec& input);

/// Numerically stabilized softmax (max subtraction).
Vec softmax(const Vec& logits);

/// Gradient of L = -log softmax(f(x))[label] w.r.t. the input.
/// ReLU subgradient at exactly 0 is 0.
Vec input_gradient(const Network& net, const Vec& input, std::size_t label);

/// Backpropagate an arbitrary cotangent on the logits to the input.
Vec backprop_logit_gradient(const Network& net, const Vec& input, const Vec& logit_grad);

struct DataItem {
    Vec x;
    int label = 0;
    std::map<std::string, std::string> tags;
};

struct Dataset {
    std::vector<DataItem> items;
};

/// JSON-lines dataset: a `{"format":"depkit/1"}` header line, then one record
/// `{"x":[...],"label":int,"tags":{...}?}` per line.
Dataset load_dataset(const std::filesystem::path& path);
void save_dataset(const Dataset& ds, const std::filesystem::path& path);

} // namespace depkit
