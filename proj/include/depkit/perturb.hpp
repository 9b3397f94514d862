#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "depkit/network.hpp"

namespace depkit {

/// Flat pixel vector in [0,1] with spatial shape (height, width, channels).
/// Values are clamped to [0,1] on construction.
struct ImageInput {
    Vec values;
    int height = 1;
    int width = 1;
    int channels = 1;

    ImageInput() = default;
    ImageInput(Vec v, int h, int w, int c);

    std::size_t index(int y, int x, int c) const {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }
};

struct GaussianNoise {
    double sigma = 0.1;
};
struct Haze {
    double alpha = 0.3;
};
struct Fog {
    double alpha = 0.5;
    int blur_radius = 2;
};
struct Snow {
    double density = 0.05;
    double brightness = 1.0;
};
struct SaltPepper {
    double density = 0.05;
};
struct Blur {
    int radius = 2; // box kernel side = 2*radius - 1; radius 1 is the identity
};
struct Fgsm {
    double epsilon = 8.0 / 255.0;
};

using PerturbationKind = std::variant<GaussianNoise, Haze, Fog, Snow, SaltPepper, Blur, Fgsm>;

std::string kind_name(const PerturbationKind& kind);
PerturbationKind kind_from_name(const std::string& name); // default parameters

/// Apply a non-FGSM perturbation. Deterministic given the seed; output
/// clamped to [0,1].
ImageInput perturb(const ImageInput& image, const PerturbationKind& kind, std::uint64_t seed);

/// x' = clamp(x + epsilon * sign(grad_x L(x, label)), 0, 1); sign(0) = 0.
ImageInput fgsm(const Network& net, const ImageInput& image, std::size_t label, double epsilon);

struct ExampleLoss {
    std::size_t index = 0;
    double loss = 0.0;     // max(0, P_orig - P_pert)
    double raw_drop = 0.0; // unclamped P_orig - P_pert
};

/// Performance-drop loss of one example: max(0, p_orig - p_pert).
double probability_drop_loss(double p_orig, double p_pert);

struct KindReport {
    PerturbationKind kind;
    double average_loss = 0.0;
    double max_loss = 0.0;
    std::vector<ExampleLoss> per_example;
};

struct PerturbationReport {
    std::vector<KindReport> kinds;
};

/// Softmax-probability drop of the ground-truth label under each kind,
/// aggregated as average and max. Per-example seeds derive as seed ^ index,
/// so data-parallel evaluation cannot change results.
PerturbationReport perturbation_loss(const Network& net,
                                     const std::vector<std::pair<ImageInput, int>>& dataset,
                                     const std::vector<PerturbationKind>& kinds,
                                     std::uint64_t seed, int jobs = 1);

struct OcclusionResult {
    std::vector<std::vector<double>> heatmap; // rows x cols of probability drops
    double max_drop = 0.0;
};

/// Slide a patch_size^2 patch with the given stride, overwrite it with
/// patch_value, and record P_orig(label) - P_occluded(label) per position.
OcclusionResult occlusion_sensitivity(const Network& net, const ImageInput& image,
                                      std::size_t label, int patch_size, int stride,
                                      double patch_value = 0.5);

/// ASCII PGM rendering of a heatmap (linear min-max scaling to 0..255).
std::string heatmap_to_pgm(const std::vector<std::vector<double>>& heatmap);

} // namespace depkit
