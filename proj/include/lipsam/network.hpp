#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "power.hpp"

namespace lipsam {

// ---------------------------------------------------------------------------
// Activations

enum class ActivationKind : std::uint32_t { Identity = 0, LeakyReLU = 1, SoftPlus = 2 };

struct Activation {
    ActivationKind kind = ActivationKind::Identity;
    double slope = 0.1;  // LeakyReLU only

    static Activation identity() { return {}; }
    static Activation leaky_relu(double slope = 0.1) { return {ActivationKind::LeakyReLU, slope}; }
    static Activation softplus() { return {ActivationKind::SoftPlus, 0.0}; }

    double operator()(double v) const {
        switch (kind) {
            case ActivationKind::Identity: return v;
            case ActivationKind::LeakyReLU: return v > 0.0 ? v : slope * v;
            case ActivationKind::SoftPlus: return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
        }
        return v;
    }

    // LeakyReLU takes the negative-side slope at the kink.
    double derivative(double v) const {
        switch (kind) {
            case ActivationKind::Identity: return 1.0;
            case ActivationKind::LeakyReLU: return v > 0.0 ? 1.0 : slope;
            case ActivationKind::SoftPlus: return 1.0 / (1.0 + std::exp(-v));
        }
        return 1.0;
    }

    double lipschitz() const {
        return kind == ActivationKind::LeakyReLU ? std::max(1.0, std::abs(slope)) : 1.0;
    }

    bool smooth() const { return kind != ActivationKind::LeakyReLU; }
};

inline const char* to_string(ActivationKind k) {
    switch (k) {
        case ActivationKind::Identity: return "identity";
        case ActivationKind::LeakyReLU: return "leaky_relu";
        case ActivationKind::SoftPlus: return "softplus";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Layers and nets

/// [channels, height, width]; 1-D feature maps have height 1.
struct FeatureShape {
    int channels = 1;
    int height = 1;
    int width = 1;

    std::size_t size() const noexcept {
        return static_cast<std::size_t>(channels) * static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
    }
    std::size_t plane() const noexcept { return static_cast<std::size_t>(height) * static_cast<std::size_t>(width); }
    bool operator==(const FeatureShape&) const = default;
};

/// Circular "same" convolution (cross-correlation convention, centered kernel)
/// followed by an optional bias and an activation.
struct ConvLayer {
    int spatial_dims = 1;
    int out_channels = 1;
    int in_channels = 1;
    int kernel_h = 1;
    int kernel_w = 1;
    std::vector<double> weights;  // [out][in][kh][kw], row-major
    std::vector<double> bias;     // empty when disabled
    Activation activation;
    std::optional<double> norm_certificate;

    static ConvLayer conv1d(int out_ch, int in_ch, int kernel, Activation act, bool with_bias) {
        require(out_ch > 0 && in_ch > 0 && kernel > 0 && kernel % 2 == 1, ErrorKind::Shape,
                "conv1d needs positive channels and an odd kernel");
        ConvLayer l{1, out_ch, in_ch, 1, kernel, {}, {}, act, std::nullopt};
        l.weights.assign(static_cast<std::size_t>(out_ch) * in_ch * kernel, 0.0);
        if (with_bias) l.bias.assign(static_cast<std::size_t>(out_ch), 0.0);
        return l;
    }

    static ConvLayer conv2d(int out_ch, int in_ch, int kernel, Activation act, bool with_bias) {
        require(out_ch > 0 && in_ch > 0 && kernel > 0 && kernel % 2 == 1, ErrorKind::Shape,
                "conv2d needs positive channels and an odd kernel");
        ConvLayer l{2, out_ch, in_ch, kernel, kernel, {}, {}, act, std::nullopt};
        l.weights.assign(static_cast<std::size_t>(out_ch) * in_ch * kernel * kernel, 0.0);
        if (with_bias) l.bias.assign(static_cast<std::size_t>(out_ch), 0.0);
        return l;
    }

    bool has_bias() const noexcept { return !bias.empty(); }
    std::size_t kernel_size() const noexcept { return static_cast<std::size_t>(kernel_h) * kernel_w; }
    std::size_t parameter_count() const noexcept { return weights.size() + bias.size(); }

    double& w(int o, int i, int dy, int dx) {
        return weights[((static_cast<std::size_t>(o) * in_channels + i) * kernel_h + dy) * kernel_w + dx];
    }
    double w(int o, int i, int dy, int dx) const {
        return weights[((static_cast<std::size_t>(o) * in_channels + i) * kernel_h + dy) * kernel_w + dx];
    }

    FeatureShape output_shape(const FeatureShape& in) const {
        if (in.channels != in_channels)
            throw Error(ErrorKind::Shape,
                        "layer expects " + std::to_string(in_channels) + " channels, got " + std::to_string(in.channels));
        require(spatial_dims == 2 || in.height == 1, ErrorKind::Shape, "1-D layer applied to a 2-D feature map");
        return {out_channels, in.height, in.width};
    }

    void validate() const {
        require(weights.size() == static_cast<std::size_t>(out_channels) * in_channels * kernel_size(),
                ErrorKind::Shape, "weight tensor has the wrong size");
        require(bias.empty() || bias.size() == static_cast<std::size_t>(out_channels), ErrorKind::Shape,
                "bias has the wrong size");
        for (double v : weights) require(std::isfinite(v), ErrorKind::Poisoned, "non-finite weight");
        for (double v : bias) require(std::isfinite(v), ErrorKind::Poisoned, "non-finite bias");
        require(!norm_certificate || *norm_certificate >= 0.0, ErrorKind::Domain, "negative norm certificate");
    }
};

struct ConvNet {
    std::vector<ConvLayer> layers;
    double scale = 1.0;

    int input_channels() const { return layers.empty() ? 0 : layers.front().in_channels; }
    int output_channels() const { return layers.empty() ? 0 : layers.back().out_channels; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.parameter_count();
        return n;
    }

    void validate() const {
        require(!layers.empty(), ErrorKind::Shape, "net has no layers");
        require(std::isfinite(scale), ErrorKind::Poisoned, "non-finite output scale");
        for (std::size_t i = 0; i < layers.size(); ++i) {
            layers[i].validate();
            if (i > 0)
                require(layers[i].in_channels == layers[i - 1].out_channels, ErrorKind::Shape,
                        "channel counts do not chain between layers " + std::to_string(i - 1) + " and " +
                            std::to_string(i));
        }
    }

    /// |scale| * prod(layer certificates) * prod(activation Lipschitz constants), if every layer is certified.
    std::optional<double> certified_bound() const {
        double bound = std::abs(scale);
        for (const auto& l : layers) {
            if (!l.norm_certificate) return std::nullopt;
            bound *= *l.norm_certificate * l.activation.lipschitz();
        }
        return bound;
    }
};

/// Certified Lipschitz upper bound of the whole net (throws when a layer lacks a certificate).
inline double lipschitz_upper_bound(const ConvNet& net) {
    auto b = net.certified_bound();
    require(b.has_value(), ErrorKind::Uncertified, "every layer needs a norm certificate");
    return *b;
}

/// Flat parameter vector: for each layer, weights then bias.
inline std::vector<double> get_parameters(const ConvNet& net) {
    std::vector<double> p;
    p.reserve(net.parameter_count());
    for (const auto& l : net.layers) {
        p.insert(p.end(), l.weights.begin(), l.weights.end());
        p.insert(p.end(), l.bias.begin(), l.bias.end());
    }
    return p;
}

inline void set_parameters(ConvNet& net, std::span<const double> p) {
    require(p.size() == net.parameter_count(), ErrorKind::Shape, "parameter vector has the wrong length");
    std::size_t k = 0;
    for (auto& l : net.layers) {
        for (auto& v : l.weights) v = p[k++];
        for (auto& v : l.bias) v = p[k++];
    }
}

/// Hash of architecture and parameter bits; identifies the exact net a cache belongs to.
inline std::uint64_t fingerprint(const ConvNet& net) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](std::uint64_t v) {
        h ^= v;
        h *= 1099511628211ull;
        h ^= h >> 29;
    };
    mix(std::bit_cast<std::uint64_t>(net.scale));
    for (const auto& l : net.layers) {
        mix(static_cast<std::uint64_t>(l.out_channels) << 32 | static_cast<std::uint32_t>(l.in_channels));
        mix(static_cast<std::uint64_t>(l.kernel_h) << 32 | static_cast<std::uint32_t>(l.kernel_w));
        mix(static_cast<std::uint64_t>(l.activation.kind));
        for (double v : l.weights) mix(std::bit_cast<std::uint64_t>(v));
        for (double v : l.bias) mix(std::bit_cast<std::uint64_t>(v));
    }
    return h;
}

// ---------------------------------------------------------------------------
// Linear kernels

namespace detail {

// src[x] = (x + shift) mod n for every x.
inline void shifted_indices(int n, int shift, std::vector<int>& out) {
    out.resize(static_cast<std::size_t>(n));
    for (int x = 0; x < n; ++x) out[static_cast<std::size_t>(x)] = ((x + shift) % n + n) % n;
}

struct ShiftTables {
    std::vector<std::vector<int>> rows;  // per dy
    std::vector<std::vector<int>> cols;  // per dx

    ShiftTables(const ConvLayer& layer, const FeatureShape& in) {
        rows.resize(static_cast<std::size_t>(layer.kernel_h));
        cols.resize(static_cast<std::size_t>(layer.kernel_w));
        for (int dy = 0; dy < layer.kernel_h; ++dy)
            shifted_indices(in.height, dy - layer.kernel_h / 2, rows[static_cast<std::size_t>(dy)]);
        for (int dx = 0; dx < layer.kernel_w; ++dx)
            shifted_indices(in.width, dx - layer.kernel_w / 2, cols[static_cast<std::size_t>(dx)]);
    }
};

}  // namespace detail

/// out = W in (linear part only: no bias, no activation). `out` is overwritten.
inline void conv_linear(const ConvLayer& layer, const FeatureShape& in_shape, std::span<const double> in,
                        std::span<double> out) {
    const auto out_shape = layer.output_shape(in_shape);
    require(in.size() == in_shape.size() && out.size() == out_shape.size(), ErrorKind::Shape,
            "conv_linear buffer size mismatch");
    const detail::ShiftTables tables(layer, in_shape);
    const std::size_t plane = in_shape.plane();
    const int H = in_shape.height, W = in_shape.width;
    std::fill(out.begin(), out.end(), 0.0);
    for (int o = 0; o < layer.out_channels; ++o) {
        double* dst = out.data() + static_cast<std::size_t>(o) * plane;
        for (int i = 0; i < layer.in_channels; ++i) {
            const double* src = in.data() + static_cast<std::size_t>(i) * plane;
            for (int dy = 0; dy < layer.kernel_h; ++dy) {
                const auto& rows = tables.rows[static_cast<std::size_t>(dy)];
                for (int dx = 0; dx < layer.kernel_w; ++dx) {
                    const double wv = layer.w(o, i, dy, dx);
                    if (wv == 0.0) continue;
                    const auto& cols = tables.cols[static_cast<std::size_t>(dx)];
                    for (int y = 0; y < H; ++y) {
                        const double* srow = src + static_cast<std::size_t>(rows[static_cast<std::size_t>(y)]) * W;
                        double* drow = dst + static_cast<std::size_t>(y) * W;
                        for (int x = 0; x < W; ++x) drow[x] += wv * srow[cols[static_cast<std::size_t>(x)]];
                    }
                }
            }
        }
    }
}

/// in_grad = W^T g. `in_grad` is overwritten.
inline void conv_linear_transpose(const ConvLayer& layer, const FeatureShape& in_shape, std::span<const double> g,
                                  std::span<double> in_grad) {
    const auto out_shape = layer.output_shape(in_shape);
    require(g.size() == out_shape.size() && in_grad.size() == in_shape.size(), ErrorKind::Shape,
            "conv_linear_transpose buffer size mismatch");
    const detail::ShiftTables tables(layer, in_shape);
    const std::size_t plane = in_shape.plane();
    const int H = in_shape.height, W = in_shape.width;
    std::fill(in_grad.begin(), in_grad.end(), 0.0);
    for (int o = 0; o < layer.out_channels; ++o) {
        const double* gsrc = g.data() + static_cast<std::size_t>(o) * plane;
        for (int i = 0; i < layer.in_channels; ++i) {
            double* dst = in_grad.data() + static_cast<std::size_t>(i) * plane;
            for (int dy = 0; dy < layer.kernel_h; ++dy) {
                const auto& rows = tables.rows[static_cast<std::size_t>(dy)];
                for (int dx = 0; dx < layer.kernel_w; ++dx) {
                    const double wv = layer.w(o, i, dy, dx);
                    if (wv == 0.0) continue;
                    const auto& cols = tables.cols[static_cast<std::size_t>(dx)];
                    for (int y = 0; y < H; ++y) {
                        double* drow = dst + static_cast<std::size_t>(rows[static_cast<std::size_t>(y)]) * W;
                        const double* grow = gsrc + static_cast<std::size_t>(y) * W;
                        for (int x = 0; x < W; ++x) drow[cols[static_cast<std::size_t>(x)]] += wv * grow[x];
                    }
                }
            }
        }
    }
}

/// Accumulates dL/dW for upstream g at the pre-activation and layer input `in`.
inline void conv_weight_gradient(const ConvLayer& layer, const FeatureShape& in_shape, std::span<const double> in,
                                 std::span<const double> g, std::span<double> weight_grad) {
    const detail::ShiftTables tables(layer, in_shape);
    const std::size_t plane = in_shape.plane();
    const int H = in_shape.height, W = in_shape.width;
    for (int o = 0; o < layer.out_channels; ++o) {
        const double* gsrc = g.data() + static_cast<std::size_t>(o) * plane;
        for (int i = 0; i < layer.in_channels; ++i) {
            const double* src = in.data() + static_cast<std::size_t>(i) * plane;
            for (int dy = 0; dy < layer.kernel_h; ++dy) {
                const auto& rows = tables.rows[static_cast<std::size_t>(dy)];
                for (int dx = 0; dx < layer.kernel_w; ++dx) {
                    const auto& cols = tables.cols[static_cast<std::size_t>(dx)];
                    double acc = 0.0;
                    for (int y = 0; y < H; ++y) {
                        const double* srow = src + static_cast<std::size_t>(rows[static_cast<std::size_t>(y)]) * W;
                        const double* grow = gsrc + static_cast<std::size_t>(y) * W;
                        for (int x = 0; x < W; ++x) acc += grow[x] * srow[cols[static_cast<std::size_t>(x)]];
                    }
                    weight_grad[((static_cast<std::size_t>(o) * layer.in_channels + i) * layer.kernel_h + dy) *
                                    layer.kernel_w +
                                dx] += acc;
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Forward / backward

struct ForwardCache {
    std::uint64_t net_fingerprint = 0;
    FeatureShape input_shape;
    std::vector<std::vector<double>> inputs;  // input to each layer
    std::vector<std::vector<double>> pre;     // pre-activation of each layer
};

struct ForwardResult {
    std::vector<double> output;
    FeatureShape output_shape;
    ForwardCache cache;
};

inline ForwardResult forward(const ConvNet& net, std::span<const double> input, const FeatureShape& shape) {
    require(!net.layers.empty(), ErrorKind::Shape, "net has no layers");
    if (shape.channels != net.input_channels())
        throw Error(ErrorKind::Shape, "input has " + std::to_string(shape.channels) + " channels, net expects " +
                                          std::to_string(net.input_channels()));
    require(input.size() == shape.size(), ErrorKind::Shape, "input size does not match its shape");
    for (double v : input) require(std::isfinite(v), ErrorKind::Poisoned, "non-finite network input");

    ForwardResult r;
    r.cache.net_fingerprint = fingerprint(net);
    r.cache.input_shape = shape;
    std::vector<double> cur(input.begin(), input.end());
    FeatureShape cur_shape = shape;
    for (const auto& layer : net.layers) {
        const auto out_shape = layer.output_shape(cur_shape);
        std::vector<double> pre(out_shape.size());
        conv_linear(layer, cur_shape, cur, pre);
        if (layer.has_bias()) {
            const std::size_t plane = out_shape.plane();
            for (int o = 0; o < layer.out_channels; ++o)
                for (std::size_t p = 0; p < plane; ++p) pre[static_cast<std::size_t>(o) * plane + p] += layer.bias[static_cast<std::size_t>(o)];
        }
        std::vector<double> act(pre.size());
        for (std::size_t k = 0; k < pre.size(); ++k) act[k] = layer.activation(pre[k]);
        r.cache.inputs.push_back(std::move(cur));
        r.cache.pre.push_back(std::move(pre));
        cur = std::move(act);
        cur_shape = out_shape;
    }
    for (auto& v : cur) v *= net.scale;
    r.output = std::move(cur);
    r.output_shape = cur_shape;
    return r;
}

struct Gradients {
    std::vector<double> parameters;  // same layout as get_parameters
    std::vector<double> input;
};

inline Gradients backward(const ConvNet& net, const ForwardCache& cache, std::span<const double> upstream) {
    require(cache.net_fingerprint == fingerprint(net) && cache.inputs.size() == net.layers.size(), ErrorKind::Usage,
            "stale forward cache: the net changed since the forward pass");
    Gradients grads;
    grads.parameters.assign(net.parameter_count(), 0.0);

    // Parameter offsets per layer.
    std::vector<std::size_t> offsets(net.layers.size());
    std::size_t off = 0;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        offsets[l] = off;
        off += net.layers[l].parameter_count();
    }

    std::vector<FeatureShape> in_shapes(net.layers.size());
    FeatureShape s = cache.input_shape;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        in_shapes[l] = s;
        s = net.layers[l].output_shape(s);
    }
    require(upstream.size() == s.size(), ErrorKind::Shape, "upstream gradient has the wrong size");

    std::vector<double> g(upstream.begin(), upstream.end());
    for (auto& v : g) v *= net.scale;
    for (std::size_t li = net.layers.size(); li-- > 0;) {
        const auto& layer = net.layers[li];
        const auto& pre = cache.pre[li];
        for (std::size_t k = 0; k < g.size(); ++k) g[k] *= layer.activation.derivative(pre[k]);

        std::span<double> wgrad(grads.parameters.data() + offsets[li], layer.weights.size());
        conv_weight_gradient(layer, in_shapes[li], cache.inputs[li], g, wgrad);
        if (layer.has_bias()) {
            const std::size_t plane = in_shapes[li].plane();
            double* bgrad = grads.parameters.data() + offsets[li] + layer.weights.size();
            for (int o = 0; o < layer.out_channels; ++o) {
                double acc = 0.0;
                for (std::size_t p = 0; p < plane; ++p) acc += g[static_cast<std::size_t>(o) * plane + p];
                bgrad[o] += acc;
            }
        }
        std::vector<double> gin(in_shapes[li].size());
        conv_linear_transpose(layer, in_shapes[li], g, gin);
        g = std::move(gin);
    }
    grads.input = std::move(g);
    return grads;
}

/// Dense Jacobian d output / d input (rows: outputs, columns: inputs) by forward-mode
/// propagation of all input tangents at once, stored [feature][tangent].
inline Eigen::MatrixXd input_jacobian(const ConvNet& net, std::span<const double> input, const FeatureShape& shape) {
    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const auto fr = forward(net, input, shape);
    const auto n_in = static_cast<Eigen::Index>(shape.size());
    RowMat tangent = RowMat::Identity(n_in, n_in);
    FeatureShape cur = shape;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& layer = net.layers[l];
        const auto out_shape = layer.output_shape(cur);
        const detail::ShiftTables tables(layer, cur);
        const auto plane = static_cast<Eigen::Index>(cur.plane());
        const int H = cur.height, W = cur.width;
        RowMat next = RowMat::Zero(static_cast<Eigen::Index>(out_shape.size()), n_in);
        for (int o = 0; o < layer.out_channels; ++o) {
            for (int i = 0; i < layer.in_channels; ++i) {
                for (int dy = 0; dy < layer.kernel_h; ++dy) {
                    const auto& rows = tables.rows[static_cast<std::size_t>(dy)];
                    for (int dx = 0; dx < layer.kernel_w; ++dx) {
                        const double wv = layer.w(o, i, dy, dx);
                        if (wv == 0.0) continue;
                        const auto& cols = tables.cols[static_cast<std::size_t>(dx)];
                        for (int y = 0; y < H; ++y)
                            for (int x = 0; x < W; ++x)
                                next.row(o * plane + y * W + x) +=
                                    wv * tangent.row(i * plane + rows[static_cast<std::size_t>(y)] * W +
                                                     cols[static_cast<std::size_t>(x)]);
                    }
                }
            }
        }
        const auto& pre = fr.cache.pre[l];
        for (std::size_t k = 0; k < pre.size(); ++k)
            next.row(static_cast<Eigen::Index>(k)) *= layer.activation.derivative(pre[k]);
        tangent = std::move(next);
        cur = out_shape;
    }
    return net.scale * Eigen::MatrixXd(tangent);
}

// ---------------------------------------------------------------------------
// Operator norms and spectral normalization

/// Largest singular value of the layer's linear part on inputs of `input_shape`
/// (channels taken from the layer), by block power iteration on W^T W.
/// `warm_start`, when given, seeds the iteration and receives the final block.
inline double layer_operator_norm(const ConvLayer& layer, FeatureShape input_shape, int iterations,
                                  std::uint64_t seed, std::vector<double>* warm_start = nullptr) {
    require(iterations >= 1, ErrorKind::Domain, "power iteration needs at least one iteration");
    input_shape.channels = layer.in_channels;
    if (std::all_of(layer.weights.begin(), layer.weights.end(), [](double v) { return v == 0.0; })) return 0.0;
    const auto out_shape = layer.output_shape(input_shape);
    return block_power_norm(
        [&](std::span<const double> in, std::span<double> out) { conv_linear(layer, input_shape, in, out); },
        [&](std::span<const double> g, std::span<double> out) { conv_linear_transpose(layer, input_shape, g, out); },
        input_shape.size(), out_shape.size(), iterations, seed, warm_start);
}

inline constexpr double kSpectralSafetyMargin = 1e-6;

/// Rescales the weights so the layer's operator norm is at most `target` and records the certificate.
inline ConvLayer spectral_normalize(const ConvLayer& layer, const FeatureShape& input_shape, double target,
                                    int iterations = 200, std::uint64_t seed = 0,
                                    std::vector<double>* warm_start = nullptr) {
    require(target > 0.0, ErrorKind::Domain, "spectral normalization target must be positive");
    ConvLayer out = layer;
    const double sigma = layer_operator_norm(layer, input_shape, iterations, seed, warm_start);
    if (sigma == 0.0) {
        out.norm_certificate = 0.0;
        return out;
    }
    const double factor = target / (sigma + kSpectralSafetyMargin);
    for (auto& w : out.weights) w *= factor;
    out.norm_certificate = target;
    return out;
}

/// Dense matrix of the layer's linear part (oracle path; small shapes only).
inline Eigen::MatrixXd materialize_linear(const ConvLayer& layer, FeatureShape input_shape) {
    input_shape.channels = layer.in_channels;
    const auto out_shape = layer.output_shape(input_shape);
    Eigen::MatrixXd M(static_cast<Eigen::Index>(out_shape.size()), static_cast<Eigen::Index>(input_shape.size()));
    std::vector<double> e(input_shape.size(), 0.0), col(out_shape.size());
    for (std::size_t j = 0; j < input_shape.size(); ++j) {
        e[j] = 1.0;
        conv_linear(layer, input_shape, e, col);
        e[j] = 0.0;
        for (std::size_t i = 0; i < col.size(); ++i) M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = col[i];
    }
    return M;
}

/// Exact operator norm through the materialized matrix (small shapes only).
inline double layer_operator_norm_dense(const ConvLayer& layer, FeatureShape input_shape) {
    const Eigen::MatrixXd M = materialize_linear(layer, input_shape);
    const Eigen::MatrixXd gram = M.transpose() * M;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram, Eigen::EigenvaluesOnly);
    return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

/// spectral_normalize with the dense norm in place of power iteration.
inline ConvLayer spectral_normalize_dense(const ConvLayer& layer, const FeatureShape& input_shape, double target) {
    require(target > 0.0, ErrorKind::Domain, "spectral normalization target must be positive");
    ConvLayer out = layer;
    const double sigma = layer_operator_norm_dense(layer, input_shape);
    if (sigma == 0.0) {
        out.norm_certificate = 0.0;
        return out;
    }
    const double factor = target / (sigma + kSpectralSafetyMargin);
    for (auto& w : out.weights) w *= factor;
    out.norm_certificate = target;
    return out;
}

// ---------------------------------------------------------------------------
// Construction helpers

/// Conv1D stack with frequency bins as channels: in -> hidden (x layers-1) -> out.
inline ConvNet make_conv1d_net(int in_channels, int hidden, int out_channels, int kernel, int layer_count,
                               Activation hidden_activation, bool with_bias) {
    require(layer_count >= 1, ErrorKind::Shape, "need at least one layer");
    ConvNet net;
    for (int l = 0; l < layer_count; ++l) {
        const int ci = l == 0 ? in_channels : hidden;
        const int co = l == layer_count - 1 ? out_channels : hidden;
        const auto act = l == layer_count - 1 ? Activation::identity() : hidden_activation;
        net.layers.push_back(ConvLayer::conv1d(co, ci, kernel, act, with_bias));
    }
    return net;
}

inline ConvNet make_conv2d_net(int in_channels, int hidden, int out_channels, int kernel, int layer_count,
                               Activation hidden_activation, bool with_bias) {
    require(layer_count >= 1, ErrorKind::Shape, "need at least one layer");
    ConvNet net;
    for (int l = 0; l < layer_count; ++l) {
        const int ci = l == 0 ? in_channels : hidden;
        const int co = l == layer_count - 1 ? out_channels : hidden;
        const auto act = l == layer_count - 1 ? Activation::identity() : hidden_activation;
        net.layers.push_back(ConvLayer::conv2d(co, ci, kernel, act, with_bias));
    }
    return net;
}

/// Gaussian init with std gain / sqrt(fan_in); biases N(0, bias_std^2).
template <class Rng>
void randomize(ConvNet& net, Rng& rng, double gain = 1.0, double bias_std = 0.0) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& l : net.layers) {
        const double fan_in = static_cast<double>(l.in_channels) * static_cast<double>(l.kernel_size());
        const double sd = gain / std::sqrt(fan_in);
        for (auto& w : l.weights) w = sd * normal(rng);
        for (auto& b : l.bias) b = bias_std * normal(rng);
        l.norm_certificate.reset();
    }
}

/// Normalizes every layer to `target` for inputs of the given spatial size.
inline void spectral_normalize_all(ConvNet& net, int height, int width, double target, int iterations = 200,
                                   std::uint64_t seed = 0) {
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        FeatureShape s{net.layers[l].in_channels, height, width};
        net.layers[l] = spectral_normalize(net.layers[l], s, target, iterations, seed + l);
    }
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    std::uint64_t step_count = 0;
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState for_parameters(std::size_t n, double lr) {
        AdamState s;
        s.first_moment.assign(n, 0.0);
        s.second_moment.assign(n, 0.0);
        s.learning_rate = lr;
        return s;
    }
};

/// One bias-corrected Adam update, in place. A non-finite gradient leaves
/// parameters and state untouched and throws.
inline void adam_step(std::span<double> parameters, std::span<const double> gradients, AdamState& state) {
    require(parameters.size() == gradients.size() && state.first_moment.size() == parameters.size() &&
                state.second_moment.size() == parameters.size(),
            ErrorKind::Shape, "adam_step: shape mismatch");
    for (double g : gradients) require(std::isfinite(g), ErrorKind::Poisoned, "adam_step: non-finite gradient");
    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < parameters.size(); ++i) {
        const double g = gradients[i];
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = state.beta2 * v + (1.0 - state.beta2) * g * g;
        const double mhat = m / c1;
        const double vhat = v / c2;
        parameters[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
    }
}

}  // namespace lipsam
