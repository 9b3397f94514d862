#include "depkit/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

namespace depkit {

namespace {

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

/// Uniform double in [0,1) from the raw engine bits; avoids the
/// implementation-defined std::uniform_real_distribution.
double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Marsaglia-free Box-Muller (one draw per call, cosine branch only).
double gaussian(std::mt19937_64& rng) {
    double u1 = (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53; // (0, 1]
    double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.141592653589793 * u2);
}

std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
    // Unbiased bounded draw: reject below (2^64 mod n).
    std::uint64_t threshold = (0 - n) % n;
    std::uint64_t v;
    do {
        v = rng();
    } while (v < threshold);
    return v % n;
}

/// First `count` entries of a seeded partial Fisher-Yates over [0, n).
std::vector<std::size_t> choose_pixels(std::mt19937_64& rng, std::size_t n, std::size_t count) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    count = std::min(count, n);
    for (std::size_t i = 0; i < count; ++i) {
        std::size_t j = i + static_cast<std::size_t>(uniform_below(rng, n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(count);
    return idx;
}

ImageInput box_blur(const ImageInput& img, int radius) {
    if (radius < 1) throw BadParameters("blur radius must be >= 1");
    if (radius == 1) return img; // 1x1 kernel
    int half = radius - 1;
    ImageInput out = img;
    double norm = static_cast<double>((2 * half + 1) * (2 * half + 1));
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                double acc = 0.0;
                for (int dy = -half; dy <= half; ++dy)
                    for (int dx = -half; dx <= half; ++dx) {
                        int yy = std::clamp(y + dy, 0, img.height - 1);
                        int xx = std::clamp(x + dx, 0, img.width - 1);
                        acc += img.values[img.index(yy, xx, c)];
                    }
                out.values[out.index(y, x, c)] = clamp01(acc / norm);
            }
    return out;
}

struct Perturber {
    const ImageInput& img;
    std::uint64_t seed;

    ImageInput operator()(const GaussianNoise& p) const {
        if (!(p.sigma > 0.0)) throw BadParameters("gaussian sigma must be > 0");
        std::mt19937_64 rng(seed);
        ImageInput out = img;
        for (double& v : out.values) v = clamp01(v + p.sigma * gaussian(rng));
        return out;
    }
    ImageInput operator()(const Haze& p) const {
        check_alpha(p.alpha);
        ImageInput out = img;
        for (double& v : out.values) v = clamp01((1.0 - p.alpha) * v + p.alpha);
        return out;
    }
    ImageInput operator()(const Fog& p) const {
        check_alpha(p.alpha);
        ImageInput blended = img;
        for (double& v : blended.values) v = clamp01((1.0 - p.alpha) * v + p.alpha);
        return box_blur(blended, p.blur_radius);
    }
    ImageInput operator()(const Snow& p) const {
        check_density(p.density);
        if (p.brightness < 0.0 || p.brightness > 1.0)
            throw BadParameters("snow brightness must lie in [0,1]");
        std::mt19937_64 rng(seed);
        ImageInput out = img;
        std::size_t count = static_cast<std::size_t>(
            std::llround(p.density * static_cast<double>(img.pixel_count())));
        for (std::size_t pix : choose_pixels(rng, img.pixel_count(), count)) {
            int y = static_cast<int>(pix / img.width);
            int x = static_cast<int>(pix % img.width);
            for (int c = 0; c < img.channels; ++c)
                out.values[out.index(y, x, c)] = p.brightness;
        }
        return out;
    }
    ImageInput operator()(const SaltPepper& p) const {
        check_density(p.density);
        std::mt19937_64 rng(seed);
        ImageInput out = img;
        std::size_t count = static_cast<std::size_t>(
            std::llround(p.density * static_cast<double>(img.pixel_count())));
        auto chosen = choose_pixels(rng, img.pixel_count(), count);
        for (std::size_t i = 0; i < chosen.size(); ++i) {
            int y = static_cast<int>(chosen[i] / img.width);
            int x = static_cast<int>(chosen[i] % img.width);
            double v = (i % 2 == 0) ? 0.0 : 1.0; // even picks pepper, odd salt
            for (int c = 0; c < img.channels; ++c) out.values[out.index(y, x, c)] = v;
        }
        return out;
    }
    ImageInput operator()(const Blur& p) const { return box_blur(img, p.radius); }
    ImageInput operator()(const Fgsm&) const {
        throw BadParameters("FGSM needs a network and label; use fgsm()");
    }

    static void check_alpha(double a) {
        if (a < 0.0 || a > 1.0) throw BadParameters("alpha must lie in [0,1]");
    }
    static void check_density(double d) {
        if (d < 0.0 || d > 1.0) throw BadParameters("density must lie in [0,1]");
    }
};

} // namespace

ImageInput::ImageInput(Vec v, int h, int w, int c) : values(std::move(v)), height(h), width(w), channels(c) {
    if (h < 1 || w < 1 || c < 1) throw BadParameters("image shape must be positive");
    if (values.size() != static_cast<std::size_t>(h) * w * c)
        throw DimensionMismatch("image: shape product != value count");
    for (double& x : values) {
        if (!std::isfinite(x)) throw BadParameters("image: non-finite value");
        x = clamp01(x);
    }
}

std::string kind_name(const PerturbationKind& kind) {
    return std::visit(
        [](const auto& k) -> std::string {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, GaussianNoise>) return "gaussian";
            if constexpr (std::is_same_v<T, Haze>) return "haze";
            if constexpr (std::is_same_v<T, Fog>) return "fog";
            if constexpr (std::is_same_v<T, Snow>) return "snow";
            if constexpr (std::is_same_v<T, SaltPepper>) return "saltpepper";
            if constexpr (std::is_same_v<T, Blur>) return "blur";
            return "fgsm";
        },
        kind);
}

PerturbationKind kind_from_name(const std::string& name) {
    if (name == "gaussian") return GaussianNoise{};
    if (name == "haze") return Haze{};
    if (name == "fog") return Fog{};
    if (name == "snow") return Snow{};
    if (name == "saltpepper") return SaltPepper{};
    if (name == "blur") return Blur{};
    if (name == "fgsm") return Fgsm{};
    throw BadParameters("unknown perturbation kind \"" + name + "\"");
}

ImageInput perturb(const ImageInput& image, const PerturbationKind& kind, std::uint64_t seed) {
    return std::visit(Perturber{image, seed}, kind);
}

ImageInput fgsm(const Network& net, const ImageInput& image, std::size_t label, double epsilon) {
    if (!(epsilon > 0.0)) throw BadParameters("fgsm epsilon must be > 0");
    Vec g = input_gradient(net, image.values, label);
    ImageInput out = image;
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        double s = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
        out.values[i] = clamp01(out.values[i] + epsilon * s);
    }
    return out;
}

double probability_drop_loss(double p_orig, double p_pert) {
    if (!(p_orig >= 0.0 && p_orig <= 1.0) || !(p_pert >= 0.0 && p_pert <= 1.0))
        throw BadParameters("probabilities must lie in [0,1]");
    return std::max(0.0, p_orig - p_pert);
}

PerturbationReport perturbation_loss(const Network& net,
                                     const std::vector<std::pair<ImageInput, int>>& dataset,
                                     const std::vector<PerturbationKind>& kinds,
                                     std::uint64_t seed, int jobs) {
    if (dataset.empty()) throw EmptyDataset("perturbation_loss: empty dataset");
    if (jobs < 1) throw BadParameters("jobs must be >= 1");
    for (const auto& [img, label] : dataset) {
        if (img.values.size() != net.input_dim)
            throw DimensionMismatch("perturbation_loss: image size != input_dim");
        if (label < 0 || static_cast<std::size_t>(label) >= net.output_dim())
            throw LabelOutOfRange("perturbation_loss: label out of range");
    }

    PerturbationReport report;
    for (const PerturbationKind& kind : kinds) {
        KindReport kr;
        kr.kind = kind;
        kr.per_example.resize(dataset.size());
        auto work = [&](std::size_t begin, std::size_t end) {
            for (std::size_t i = begin; i < end; ++i) {
                const auto& [img, label] = dataset[i];
                double p_orig = softmax(forward(net, img.values).logits)[label];
                ImageInput pert =
                    std::holds_alternative<Fgsm>(kind)
                        ? fgsm(net, img, static_cast<std::size_t>(label),
                               std::get<Fgsm>(kind).epsilon)
                        : perturb(img, kind, seed ^ static_cast<std::uint64_t>(i));
                double p_pert = softmax(forward(net, pert.values).logits)[label];
                double drop = p_orig - p_pert;
                kr.per_example[i] = ExampleLoss{i, probability_drop_loss(p_orig, p_pert), drop};
            }
        };
        if (jobs == 1 || dataset.size() < 2) {
            work(0, dataset.size());
        } else {
            std::vector<std::thread> pool;
            std::size_t chunk = (dataset.size() + jobs - 1) / jobs;
            for (std::size_t b = 0; b < dataset.size(); b += chunk)
                pool.emplace_back(work, b, std::min(b + chunk, dataset.size()));
            for (std::thread& t : pool) t.join();
        }
        double sum = 0.0, mx = 0.0;
        for (const ExampleLoss& e : kr.per_example) {
            sum += e.loss;
            mx = std::max(mx, e.loss);
        }
        kr.average_loss = sum / static_cast<double>(kr.per_example.size());
        kr.max_loss = mx;
        report.kinds.push_back(std::move(kr));
    }
    return report;
}

OcclusionResult occlusion_sensitivity(const Network& net, const ImageInput& image,
                                      std::size_t label, int patch_size, int stride,
                                      double patch_value) {
    if (patch_size < 1 || patch_size > image.height || patch_size > image.width)
        throw BadParameters("occlusion: patch must fit inside the image");
    if (stride < 1) throw BadParameters("occlusion: stride must be >= 1");
    if (label >= net.output_dim()) throw LabelOutOfRange("occlusion: label out of range");
    patch_value = clamp01(patch_value);

    double p_orig = softmax(forward(net, image.values).logits)[label];
    int rows = (image.height - patch_size) / stride + 1;
    int cols = (image.width - patch_size) / stride + 1;
    OcclusionResult res;
    res.heatmap.assign(rows, std::vector<double>(cols, 0.0));
    res.max_drop = -std::numeric_limits<double>::infinity();
    for (int r = 0; r < rows; ++r)
        for (int cidx = 0; cidx < cols; ++cidx) {
            ImageInput occ = image;
            for (int dy = 0; dy < patch_size; ++dy)
                for (int dx = 0; dx < patch_size; ++dx)
                    for (int c = 0; c < image.channels; ++c)
                        occ.values[occ.index(r * stride + dy, cidx * stride + dx, c)] =
                            patch_value;
            double p_occ = softmax(forward(net, occ.values).logits)[label];
            double drop = p_orig - p_occ; // may be negative
            res.heatmap[r][cidx] = drop;
            res.max_drop = std::max(res.max_drop, drop);
        }
    return res;
}

std::string heatmap_to_pgm(const std::vector<std::vector<double>>& heatmap) {
    int rows = static_cast<int>(heatmap.size());
    int cols = rows > 0 ? static_cast<int>(heatmap[0].size()) : 0;
    double lo = 0.0, hi = 0.0;
    bool first = true;
    for (const auto& row : heatmap)
        for (double v : row) {
            if (first) {
                lo = hi = v;
                first = false;
            }
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    std::ostringstream out;
    out << "P2\n" << cols << " " << rows << "\n255\n";
    for (const auto& row : heatmap) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            int g = hi > lo ? static_cast<int>(std::lround((row[c] - lo) / (hi - lo) * 255.0)) : 0;
            out << g << (c + 1 < row.size() ? " " : "");
        }
        out << "\n";
    }
    return out.str();
}

} // namespace depkit
