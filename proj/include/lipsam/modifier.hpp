#pragma once

// Amplitude modifiers D(z) = A(|z|) * sign(z) and their Lipschitz-safe variants.
//
//   AM-SE      (S(|z|))+                 * sign(z)
//   AM-RE      (|z| - R(|z|))+           * sign(z)
//   LipsAM-SE  (min(S(|z|), |z|))+       * sign(z)
//   LipsAM-RE  (|z| - (R(|z|))+)+        * sign(z)
//
// The safeguard layers (min against |z|, rectification of R) keep the
// amplitude path below its input, which together with a Lipschitz inner map
// bounds the Lipschitz constant of the complex operator.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "network.hpp"
#include "signal.hpp"

namespace lipsam {

/// z/|z| for z != 0, exactly 0 at 0.
inline cd complex_sign(cd z) {
    const double r = std::abs(z);
    return r > 0.0 ? z / r : cd(0.0, 0.0);
}

enum class ModifierKind { AM_SE, AM_RE, LipsAM_SE, LipsAM_RE };

inline const char* to_string(ModifierKind k) {
    switch (k) {
        case ModifierKind::AM_SE: return "AM-SE";
        case ModifierKind::AM_RE: return "AM-RE";
        case ModifierKind::LipsAM_SE: return "LipsAM-SE";
        case ModifierKind::LipsAM_RE: return "LipsAM-RE";
    }
    return "?";
}

inline ModifierKind modifier_kind_from_string(const std::string& s) {
    if (s == "AM-SE" || s == "am_se" || s == "am-se") return ModifierKind::AM_SE;
    if (s == "AM-RE" || s == "am_re" || s == "am-re") return ModifierKind::AM_RE;
    if (s == "LipsAM-SE" || s == "lipsam_se" || s == "lipsam-se") return ModifierKind::LipsAM_SE;
    if (s == "LipsAM-RE" || s == "lipsam_re" || s == "lipsam-re") return ModifierKind::LipsAM_RE;
    throw Error(ErrorKind::Usage, "unknown modifier kind '" + s + "'");
}

inline bool is_lipschitz_variant(ModifierKind k) {
    return k == ModifierKind::LipsAM_SE || k == ModifierKind::LipsAM_RE;
}

inline bool is_residual(ModifierKind k) { return k == ModifierKind::AM_RE || k == ModifierKind::LipsAM_RE; }

/// Arrangement of a flattened amplitude vector: `bins` rows of `frames` entries.
struct Grid {
    std::size_t bins = 1;
    std::size_t frames = 1;
    std::size_t size() const noexcept { return bins * frames; }
    static Grid flat(std::size_t n) { return {1, n}; }
};

enum class InputLayout {
    ChannelsAreBins,     // [channels = bins, 1, frames] for Conv1D nets
    SingleChannelImage,  // [1, bins, frames] for Conv2D nets
};

// Inner amplitude maps ------------------------------------------------------

struct NetMap {
    ConvNet net;
    InputLayout layout = InputLayout::ChannelsAreBins;

    FeatureShape shape(const Grid& g) const {
        if (layout == InputLayout::ChannelsAreBins)
            return {static_cast<int>(g.bins), 1, static_cast<int>(g.frames)};
        return {1, static_cast<int>(g.bins), static_cast<int>(g.frames)};
    }
};

/// Constant output tau; as the residual of AM-RE it realizes soft thresholding.
struct SoftThreshConstant {
    double tau = 0.0;
};

/// x + b element-wise.
struct BiasAdd {
    double b = 0.0;
};

/// out[n] = x[index[n]].
struct Permutation {
    std::vector<std::size_t> index;
};

struct IdentityMap {};
struct ZeroMap {};

class AmplitudeMap {
public:
    using Variant = std::variant<NetMap, SoftThreshConstant, BiasAdd, Permutation, IdentityMap, ZeroMap>;

    AmplitudeMap() : v_(IdentityMap{}) {}
    AmplitudeMap(Variant v) : v_(std::move(v)) { validate(); }  // NOLINT(google-explicit-constructor)

    const Variant& variant() const noexcept { return v_; }
    bool is_net() const noexcept { return std::holds_alternative<NetMap>(v_); }
    const ConvNet* net() const { return is_net() ? &std::get<NetMap>(v_).net : nullptr; }
    ConvNet* net() { return is_net() ? &std::get<NetMap>(v_).net : nullptr; }
    const NetMap* net_map() const { return std::get_if<NetMap>(&v_); }

    std::string name() const {
        struct Namer {
            std::string operator()(const NetMap&) const { return "net"; }
            std::string operator()(const SoftThreshConstant& s) const { return "soft_thresh(" + std::to_string(s.tau) + ")"; }
            std::string operator()(const BiasAdd& b) const { return "bias_add(" + std::to_string(b.b) + ")"; }
            std::string operator()(const Permutation&) const { return "permutation"; }
            std::string operator()(const IdentityMap&) const { return "identity"; }
            std::string operator()(const ZeroMap&) const { return "zero"; }
        };
        return std::visit(Namer{}, v_);
    }

    /// Certified Lipschitz constant of the inner map, when one is known.
    std::optional<double> certified_bound() const {
        struct Bound {
            std::optional<double> operator()(const NetMap& m) const { return m.net.certified_bound(); }
            std::optional<double> operator()(const SoftThreshConstant&) const { return 0.0; }
            std::optional<double> operator()(const BiasAdd&) const { return 1.0; }
            std::optional<double> operator()(const Permutation&) const { return 1.0; }
            std::optional<double> operator()(const IdentityMap&) const { return 1.0; }
            std::optional<double> operator()(const ZeroMap&) const { return 0.0; }
        };
        return std::visit(Bound{}, v_);
    }

    struct Evaluation {
        std::vector<double> output;
        std::optional<ForwardCache> cache;  // nets only
    };

    Evaluation evaluate_cached(std::span<const double> x, const Grid& grid) const {
        require(x.size() == grid.size(), ErrorKind::Shape, "amplitude vector does not match its grid");
        Evaluation e;
        if (const auto* m = std::get_if<NetMap>(&v_)) {
            const auto shape = m->shape(grid);
            if (shape.channels != m->net.input_channels())
                throw Error(ErrorKind::Shape, "inner net expects " + std::to_string(m->net.input_channels()) +
                                                  " channels, grid provides " + std::to_string(shape.channels));
            auto fr = forward(m->net, x, shape);
            require(fr.output.size() == x.size(), ErrorKind::Shape, "inner net output size differs from its input");
            e.output = std::move(fr.output);
            e.cache = std::move(fr.cache);
        } else if (const auto* s = std::get_if<SoftThreshConstant>(&v_)) {
            e.output.assign(x.size(), s->tau);
        } else if (const auto* b = std::get_if<BiasAdd>(&v_)) {
            e.output.assign(x.begin(), x.end());
            for (auto& v : e.output) v += b->b;
        } else if (const auto* p = std::get_if<Permutation>(&v_)) {
            require(p->index.size() == x.size(), ErrorKind::Shape, "permutation size differs from input");
            e.output.resize(x.size());
            for (std::size_t n = 0; n < x.size(); ++n) e.output[n] = x[p->index[n]];
        } else if (std::holds_alternative<IdentityMap>(v_)) {
            e.output.assign(x.begin(), x.end());
        } else {
            e.output.assign(x.size(), 0.0);
        }
        return e;
    }

    std::vector<double> evaluate(std::span<const double> x, const Grid& grid) const {
        return evaluate_cached(x, grid).output;
    }

    /// d inner(x) / dx as a dense N x N matrix.
    Eigen::MatrixXd jacobian(std::span<const double> x, const Grid& grid) const {
        const auto n = static_cast<Eigen::Index>(x.size());
        if (const auto* m = std::get_if<NetMap>(&v_)) return input_jacobian(m->net, x, m->shape(grid));
        if (std::holds_alternative<BiasAdd>(v_) || std::holds_alternative<IdentityMap>(v_))
            return Eigen::MatrixXd::Identity(n, n);
        if (const auto* p = std::get_if<Permutation>(&v_)) {
            Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
            for (std::size_t i = 0; i < p->index.size(); ++i)
                J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p->index[i])) = 1.0;
            return J;
        }
        return Eigen::MatrixXd::Zero(n, n);
    }

    /// Gradient w.r.t. the inner net's parameters for an upstream gradient on the inner output.
    std::vector<double> parameter_gradient(const Evaluation& e, std::span<const double> upstream) const {
        const auto* m = std::get_if<NetMap>(&v_);
        if (m == nullptr) return {};
        require(e.cache.has_value(), ErrorKind::Usage, "evaluation carries no forward cache");
        return backward(m->net, *e.cache, upstream).parameters;
    }

private:
    void validate() const {
        if (const auto* s = std::get_if<SoftThreshConstant>(&v_))
            require(s->tau >= 0.0 && std::isfinite(s->tau), ErrorKind::Domain, "soft-threshold tau must be >= 0");
        if (const auto* p = std::get_if<Permutation>(&v_)) {
            std::vector<bool> seen(p->index.size(), false);
            for (auto i : p->index) {
                require(i < seen.size() && !seen[i], ErrorKind::Domain, "permutation is not a bijection");
                seen[i] = true;
            }
        }
        if (const auto* m = std::get_if<NetMap>(&v_)) m->net.validate();
    }

    Variant v_;
};

// Architectures --------------------------------------------------------------

/// Everything a backward pass through the amplitude path needs.
struct AmplitudeTrace {
    std::vector<double> input;  // x = |z|
    AmplitudeMap::Evaluation inner;
    std::vector<double> amplitude;  // effective A(x)
};

class ModifierArchitecture {
public:
    ModifierArchitecture(ModifierKind kind, AmplitudeMap inner) : kind_(kind), inner_(std::move(inner)) {}

    static ModifierArchitecture soft_threshold(double tau) {
        return {ModifierKind::AM_RE, AmplitudeMap(SoftThreshConstant{tau})};
    }
    static ModifierArchitecture identity() { return {ModifierKind::LipsAM_RE, AmplitudeMap(ZeroMap{})}; }

    ModifierKind kind() const noexcept { return kind_; }
    const AmplitudeMap& inner() const noexcept { return inner_; }

    /// The same inner map wrapped as a different architecture (weights are shared by value).
    ModifierArchitecture with_kind(ModifierKind k) const { return {k, inner_}; }

    std::string name() const { return std::string(to_string(kind_)) + "[" + inner_.name() + "]"; }

    AmplitudeTrace amplitude_forward(std::span<const double> x, const Grid& grid) const {
        for (double v : x) require(v >= 0.0, ErrorKind::Domain, "amplitude input must be non-negative");
        AmplitudeTrace t;
        t.input.assign(x.begin(), x.end());
        t.inner = inner_.evaluate_cached(x, grid);
        for (double v : t.inner.output)
            require(std::isfinite(v), ErrorKind::Poisoned, "inner amplitude map produced a non-finite value");
        t.amplitude.resize(x.size());
        const auto& s = t.inner.output;
        for (std::size_t n = 0; n < x.size(); ++n) {
            switch (kind_) {
                case ModifierKind::AM_SE: t.amplitude[n] = std::max(s[n], 0.0); break;
                case ModifierKind::AM_RE: t.amplitude[n] = std::max(x[n] - s[n], 0.0); break;
                case ModifierKind::LipsAM_SE: t.amplitude[n] = std::max(std::min(s[n], x[n]), 0.0); break;
                case ModifierKind::LipsAM_RE: t.amplitude[n] = std::max(x[n] - std::max(s[n], 0.0), 0.0); break;
            }
        }
        return t;
    }

    /// Effective amplitude map A, safeguards included, phase multiply excluded.
    std::vector<double> amplitude_part(std::span<const double> x, const Grid& grid) const {
        return amplitude_forward(x, grid).amplitude;
    }
    std::vector<double> amplitude_part(std::span<const double> x) const {
        return amplitude_part(x, Grid::flat(x.size()));
    }

    Spectrogram apply(const Spectrogram& z) const {
        require(z.values.size() == z.bins * z.frames, ErrorKind::Shape, "malformed spectrogram");
        std::vector<double> mag(z.size());
        for (std::size_t n = 0; n < z.size(); ++n) mag[n] = std::abs(z.values[n]);
        const auto a = amplitude_part(mag, Grid{z.bins, z.frames});
        Spectrogram out(z.bins, z.frames, z.origin);
        for (std::size_t n = 0; n < z.size(); ++n) out.values[n] = a[n] * complex_sign(z.values[n]);
        return out;
    }

    /// Local slopes of the safeguard layers: dA/dx_direct and dA/d(inner) per coordinate.
    /// Kinks take the branch that hands the inner map a zero subgradient.
    struct LocalSlopes {
        std::vector<double> direct;
        std::vector<double> through_inner;
    };

    LocalSlopes local_slopes(const AmplitudeTrace& t) const {
        const std::size_t N = t.input.size();
        LocalSlopes ls{std::vector<double>(N, 0.0), std::vector<double>(N, 0.0)};
        const auto& x = t.input;
        const auto& s = t.inner.output;
        for (std::size_t n = 0; n < N; ++n) {
            switch (kind_) {
                case ModifierKind::AM_SE:
                    if (s[n] > 0.0) ls.through_inner[n] = 1.0;
                    break;
                case ModifierKind::AM_RE:
                    if (x[n] - s[n] > 0.0) {
                        ls.direct[n] = 1.0;
                        ls.through_inner[n] = -1.0;
                    }
                    break;
                case ModifierKind::LipsAM_SE: {
                    if (s[n] < x[n]) {
                        if (s[n] > 0.0) ls.through_inner[n] = 1.0;
                    } else if (x[n] > 0.0) {
                        ls.direct[n] = 1.0;
                    }
                    break;
                }
                case ModifierKind::LipsAM_RE: {
                    if (x[n] - std::max(s[n], 0.0) > 0.0) {
                        ls.direct[n] = 1.0;
                        if (s[n] > 0.0) ls.through_inner[n] = -1.0;
                    }
                    break;
                }
            }
        }
        return ls;
    }

    /// Gradient of a loss w.r.t. the inner net parameters given dL/dA.
    std::vector<double> amplitude_backward(const AmplitudeTrace& t, std::span<const double> upstream) const {
        require(upstream.size() == t.amplitude.size(), ErrorKind::Shape, "upstream gradient has the wrong size");
        const auto ls = local_slopes(t);
        std::vector<double> g(upstream.size());
        for (std::size_t n = 0; n < g.size(); ++n) g[n] = upstream[n] * ls.through_inner[n];
        return inner_.parameter_gradient(t.inner, g);
    }

    /// dA/dx (a.e.), N x N.
    Eigen::MatrixXd amplitude_jacobian(std::span<const double> x, const Grid& grid) const {
        const auto t = amplitude_forward(x, grid);
        const auto ls = local_slopes(t);
        Eigen::MatrixXd J = inner_.jacobian(x, grid);
        for (Eigen::Index i = 0; i < J.rows(); ++i) {
            J.row(i) *= ls.through_inner[static_cast<std::size_t>(i)];
            J(i, i) += ls.direct[static_cast<std::size_t>(i)];
        }
        return J;
    }

    AmplitudeMap& mutable_inner() noexcept { return inner_; }

private:
    ModifierKind kind_;
    AmplitudeMap inner_;
};

/// Lipschitz bound of an AM whose amplitude map is L1-Lipschitz and bounded by L2 x.
inline double theorem1_bound(double L1, double L2) { return std::max(L1, L2); }

/// sqrt(Lip(S)^2 + 1) for LipsAM-SE, Lip(R) + 1 for LipsAM-RE.
inline double theoretical_bound(const ModifierArchitecture& arch) {
    require(is_lipschitz_variant(arch.kind()), ErrorKind::Unbounded,
            std::string(to_string(arch.kind())) + " has no finite Lipschitz certificate in general");
    const auto c = arch.inner().certified_bound();
    require(c.has_value(), ErrorKind::Uncertified, "inner amplitude map carries no certified Lipschitz bound");
    return arch.kind() == ModifierKind::LipsAM_SE ? std::sqrt(*c * *c + 1.0) : *c + 1.0;
}

// Assumption checker ----------------------------------------------------------

struct Assumption1Report {
    bool cond2_holds = true;
    double worst_ratio = 0.0;         // max_n A(x)_n / (L2 x_n); +inf on a zero-coordinate violation
    double cond1_empirical_L = 0.0;   // empirical lower bound only, not a proof
    std::vector<std::vector<double>> witnesses;
};

/// Samples amplitude vectors (including exact zeros and near-zero coordinates)
/// and checks 0 <= A(x)_n <= L2 x_n; estimates L1 from nearby pairs.
inline Assumption1Report check_assumption1(const ModifierArchitecture& arch, double L2, std::size_t sample_count,
                                           std::uint64_t seed, const Grid& grid) {
    require(L2 >= 0.0 && sample_count >= 1, ErrorKind::Domain, "check_assumption1 needs L2 >= 0 and samples >= 1");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t N = grid.size();

    auto draw = [&]() {
        std::vector<double> x(N);
        for (auto& v : x) {
            const double u = uni(rng);
            if (u < 0.1) v = 0.0;
            else if (u < 0.25) v = std::pow(10.0, -8.0 * uni(rng));
            else v = 3.0 * uni(rng);
        }
        return x;
    };

    Assumption1Report rep;
    for (std::size_t s = 0; s < sample_count; ++s) {
        const auto x = draw();
        const auto a = arch.amplitude_part(x, grid);
        double worst_here = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            double ratio;
            if (a[n] < 0.0) ratio = std::numeric_limits<double>::infinity();
            else if (a[n] == 0.0) ratio = 0.0;
            else if (x[n] == 0.0 || L2 == 0.0) ratio = std::numeric_limits<double>::infinity();
            else ratio = a[n] / (L2 * x[n]);
            worst_here = std::max(worst_here, ratio);
        }
        if (worst_here > rep.worst_ratio) {
            rep.worst_ratio = worst_here;
            if (worst_here > 1.0) rep.witnesses.push_back(x);
        }

        auto y = x;
        for (auto& v : y) v = std::max(0.0, v + 1e-3 * normal(rng));
        const auto b = arch.amplitude_part(y, grid);
        double num = 0.0, den = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            num += (a[n] - b[n]) * (a[n] - b[n]);
            den += (x[n] - y[n]) * (x[n] - y[n]);
        }
        if (den > 1e-24) rep.cond1_empirical_L = std::max(rep.cond1_empirical_L, std::sqrt(num / den));
    }
    rep.cond2_holds = rep.worst_ratio <= 1.0;
    if (rep.witnesses.size() > 8) rep.witnesses.erase(rep.witnesses.begin(), rep.witnesses.end() - 8);
    return rep;
}

inline Assumption1Report check_assumption1(const ModifierArchitecture& arch, double L2, std::size_t sample_count,
                                           std::uint64_t seed, std::size_t n = 16) {
    return check_assumption1(arch, L2, sample_count, seed, Grid::flat(n));
}

}  // namespace lipsam
