#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "modifier.hpp"
#include "network.hpp"
#include "power.hpp"
#include "signal.hpp"

namespace lipsam {

// ---------------------------------------------------------------------------
// Complex <-> real identification, (Re, Im) interleaved.

inline std::vector<double> realify(std::span<const cd> z) {
    std::vector<double> r(2 * z.size());
    for (std::size_t n = 0; n < z.size(); ++n) {
        r[2 * n] = z[n].real();
        r[2 * n + 1] = z[n].imag();
    }
    return r;
}

inline std::vector<cd> complexify(std::span<const double> r) {
    require(r.size() % 2 == 0, ErrorKind::Shape, "realified vector must have even length");
    std::vector<cd> z(r.size() / 2);
    for (std::size_t n = 0; n < z.size(); ++n) z[n] = cd(r[2 * n], r[2 * n + 1]);
    return z;
}

/// A complex map C^N -> C^N viewed as R^2N -> R^2N.
template <class ComplexFn>
class RealifiedMap {
public:
    RealifiedMap(ComplexFn f, std::size_t n) : f_(std::move(f)), n_(n) {}

    std::size_t dimension() const noexcept { return n_; }

    std::vector<cd> complex(std::span<const cd> z) const {
        require(z.size() == n_, ErrorKind::Shape, "realified map: wrong input dimension");
        return f_(z);
    }

    std::vector<double> operator()(std::span<const double> r) const {
        require(r.size() == 2 * n_, ErrorKind::Shape, "realified map: wrong input dimension");
        const auto z = complexify(r);
        return realify(f_(std::span<const cd>(z)));
    }

private:
    ComplexFn f_;
    std::size_t n_;
};

template <class ComplexFn>
RealifiedMap(ComplexFn, std::size_t) -> RealifiedMap<ComplexFn>;

/// The modifier as a complex vector map on a fixed grid.
inline auto modifier_map(const ModifierArchitecture& arch, const Grid& grid) {
    auto fn = [arch, grid](std::span<const cd> z) {
        Spectrogram s(grid.bins, grid.frames);
        std::copy(z.begin(), z.end(), s.values.begin());
        return arch.apply(s).values;
    };
    return RealifiedMap(std::move(fn), grid.size());
}

// ---------------------------------------------------------------------------
// Jacobians and operator norms

/// Central-difference Jacobian, J[i][j] = (f_i(x + eps e_j) - f_i(x - eps e_j)) / (2 eps).
template <class RealFn>
Eigen::MatrixXd jacobian_fd(const RealFn& f, std::span<const double> point, double epsilon = 1e-5) {
    require(epsilon > 0.0, ErrorKind::Domain, "finite-difference step must be positive");
    std::vector<double> x(point.begin(), point.end());
    const auto f0 = f(std::span<const double>(x));
    Eigen::MatrixXd J(static_cast<Eigen::Index>(f0.size()), static_cast<Eigen::Index>(x.size()));
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double orig = x[j];
        x[j] = orig + epsilon;
        const auto fp = f(std::span<const double>(x));
        x[j] = orig - epsilon;
        const auto fm = f(std::span<const double>(x));
        x[j] = orig;
        require(fp.size() == f0.size() && fm.size() == f0.size(), ErrorKind::Shape, "map changed output size");
        for (std::size_t i = 0; i < f0.size(); ++i) {
            const double d = (fp[i] - fm[i]) / (2.0 * epsilon);
            require(std::isfinite(d), ErrorKind::Poisoned, "non-finite map output during finite differencing");
            J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = d;
        }
    }
    return J;
}

enum class NormMethod { Power, DenseSvd };

/// Largest singular value. The power path iterates on M^T M (see block_power_norm);
/// dense_svd is the oracle.
inline double operator_norm(const Eigen::MatrixXd& M, NormMethod method = NormMethod::DenseSvd, int iterations = 200,
                            std::uint64_t seed = 0) {
    if (M.size() == 0) return 0.0;
    if (method == NormMethod::DenseSvd) {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
        return svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
    }
    const std::size_t n = static_cast<std::size_t>(M.cols()), m = static_cast<std::size_t>(M.rows());
    return block_power_norm(
        [&](std::span<const double> in, std::span<double> out) {
            Eigen::Map<Eigen::VectorXd>(out.data(), M.rows()) = M * Eigen::Map<const Eigen::VectorXd>(in.data(), M.cols());
        },
        [&](std::span<const double> g, std::span<double> out) {
            Eigen::Map<Eigen::VectorXd>(out.data(), M.cols()) =
                M.transpose() * Eigen::Map<const Eigen::VectorXd>(g.data(), M.rows());
        },
        n, m, iterations, seed);
}

/// Exact realified Jacobian of a modifier at z (2N x 2N), assembled from the
/// amplitude Jacobian and the polar derivatives of |z| and sign(z).
inline Eigen::MatrixXd modifier_jacobian(const ModifierArchitecture& arch, std::span<const cd> z, const Grid& grid) {
    const std::size_t N = z.size();
    require(N == grid.size(), ErrorKind::Shape, "modifier_jacobian: grid mismatch");
    std::vector<double> x(N), c(N), s(N);
    for (std::size_t n = 0; n < N; ++n) {
        x[n] = std::abs(z[n]);
        c[n] = x[n] > 0.0 ? z[n].real() / x[n] : 1.0;
        s[n] = x[n] > 0.0 ? z[n].imag() / x[n] : 0.0;
    }
    const auto a = arch.amplitude_part(x, grid);
    const Eigen::MatrixXd JA = arch.amplitude_jacobian(x, grid);
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(2 * N), static_cast<Eigen::Index>(2 * N));
    for (std::size_t n = 0; n < N; ++n) {
        const auto rn = static_cast<Eigen::Index>(2 * n);
        for (std::size_t m = 0; m < N; ++m) {
            const auto cm = static_cast<Eigen::Index>(2 * m);
            const double g = JA(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
            // radial part: g * dx_m * sign(z_n)
            J(rn, cm) += g * c[m] * c[n];
            J(rn + 1, cm) += g * c[m] * s[n];
            J(rn, cm + 1) += g * s[m] * c[n];
            J(rn + 1, cm + 1) += g * s[m] * s[n];
        }
        // tangential part: a_n / x_n * i sign(z_n) dphi_n
        double t;
        if (x[n] > 0.0) t = a[n] / x[n];
        else t = a[n] > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
        const auto cn = static_cast<Eigen::Index>(2 * n);
        // i sign = (-s, c); dphi = (-s dre + c dim)
        J(rn, cn) += t * s[n] * s[n];
        J(rn, cn + 1) += -t * s[n] * c[n];
        J(rn + 1, cn) += -t * c[n] * s[n];
        J(rn + 1, cn + 1) += t * c[n] * c[n];
    }
    return J;
}

namespace detail {

inline double top_singular_value(const Eigen::MatrixXd& M) {
    if (M.size() == 0) return 0.0;
    const Eigen::MatrixXd G = M.transpose() * M;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G, Eigen::EigenvaluesOnly);
    return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

}  // namespace detail

/// ||J_D(z)||_op without forming the 2N x 2N matrix. In per-coordinate radial /
/// tangential frames the realified Jacobian is block diagonal,
/// diag(J_A, diag(a/x)), so its norm is max(sigma_max(J_A), max_n a_n / x_n).
inline double modifier_jacobian_norm(const ModifierArchitecture& arch, std::span<const cd> z, const Grid& grid) {
    const std::size_t N = z.size();
    std::vector<double> x(N);
    for (std::size_t n = 0; n < N; ++n) x[n] = std::abs(z[n]);
    const auto trace = arch.amplitude_forward(x, grid);
    double tangential = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
        const double a = trace.amplitude[n];
        if (x[n] > 0.0) tangential = std::max(tangential, a / x[n]);
        else if (a > 0.0) return std::numeric_limits<double>::infinity();
    }
    const auto ls = arch.local_slopes(trace);
    const bool any_inner = std::any_of(ls.through_inner.begin(), ls.through_inner.end(), [](double v) { return v != 0.0; });
    Eigen::MatrixXd JA;
    if (any_inner) {
        JA = arch.inner().jacobian(x, grid);
        for (Eigen::Index i = 0; i < JA.rows(); ++i) JA.row(i) *= ls.through_inner[static_cast<std::size_t>(i)];
    } else {
        JA = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
    }
    for (std::size_t n = 0; n < N; ++n) JA(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)) += ls.direct[n];
    return std::max(detail::top_singular_value(JA), tangential);
}

// ---------------------------------------------------------------------------
// Adversarial search

struct SearchConfig {
    int restarts = 100;
    int max_iterations = 1000;
    double learning_rate = 0.1;
    double termination_threshold = 5.0;
    double fd_epsilon = 1e-5;
    int power_iterations = 50;
    std::uint64_t seed = 0;
    int threads = 1;

    void validate() const {
        require(restarts > 0 && max_iterations > 0 && learning_rate > 0.0 && termination_threshold > 0.0 &&
                    fd_epsilon > 0.0 && power_iterations > 0 && threads > 0,
                ErrorKind::Usage, "search configuration values must be positive");
    }
};

struct TrialRecord {
    int trial_id = 0;
    double best = 0.0;
    int iterations = 0;
    bool terminated_early = false;
    bool failed = false;
    double wall_time = 0.0;  // seconds
};

struct LipschitzEstimate {
    double empirical_lower = 0.0;
    std::optional<double> certified_upper;
    std::vector<cd> witness;                    // input point(s) achieving empirical_lower
    std::vector<cd> witness_other;              // second point for pairwise estimates
    std::vector<double> witness_parameters;     // parameter draw, for B estimates
    int trials = 0;
    int iterations = 0;
    std::uint64_t seed = 0;
    std::vector<TrialRecord> records;
};

/// Per-trial generator, identical for serial and parallel schedules.
inline std::mt19937_64 trial_rng(std::uint64_t seed, std::uint64_t trial) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(trial), static_cast<std::uint32_t>(trial >> 32), 0x4c495053u};
    return std::mt19937_64(seq);
}

namespace detail {

/// Runs `body(trial)` for every trial on `threads` workers (static striping).
template <class Body>
void for_each_trial(int trials, int threads, Body body) {
    threads = std::max(1, std::min(threads, trials));
    if (threads == 1) {
        for (int t = 0; t < trials; ++t) body(t);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
    for (int w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (int t = w; t < trials; t += threads) body(t);
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace detail

/// A family D(z; theta) for the B search: a modifier kind around a
/// SoftPlus conv net whose parameters are searched jointly with z.
struct BFamily {
    ModifierKind kind = ModifierKind::LipsAM_SE;
    ConvNet prototype;
    InputLayout layout = InputLayout::SingleChannelImage;
    Grid grid{4, 4};
    bool constrained = false;  // every layer spectrally normalized to `layer_target`
    double layer_target = 1.0;
    std::string label;
};

using ParameterSampler = std::function<void(ConvNet&, std::mt19937_64&)>;

inline ParameterSampler default_parameter_sampler(double gain = 1.0, double bias_std = 0.5) {
    return [gain, bias_std](ConvNet& net, std::mt19937_64& rng) { randomize(net, rng, gain, bias_std); };
}

/// The SoftPlus 2-D conv net of the 4x4 validation experiment:
/// 1 -> channels -> channels -> 1, 3x3 kernels, biases on, output scale `scale`.
inline ConvNet make_validation_net(double scale, int channels = 3, int layers = 3, bool with_bias = true) {
    auto net = make_conv2d_net(1, channels, 1, 3, layers, Activation::softplus(), with_bias);
    net.scale = scale;
    return net;
}

namespace detail {

class FamilyProjector {
public:
    FamilyProjector(const BFamily& fam, int iterations) : fam_(fam), iterations_(iterations) {
        warm_.resize(fam.prototype.layers.size());
    }

    void project(ConvNet& net, int iterations_override = 0) {
        if (!fam_.constrained) return;
        const int iters = iterations_override > 0 ? iterations_override : iterations_;
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            FeatureShape s = fam_.layout == InputLayout::SingleChannelImage
                                 ? FeatureShape{net.layers[l].in_channels, static_cast<int>(fam_.grid.bins),
                                                static_cast<int>(fam_.grid.frames)}
                                 : FeatureShape{net.layers[l].in_channels, 1, static_cast<int>(fam_.grid.frames)};
            if (s.size() <= kDenseLimit)
                net.layers[l] = spectral_normalize_dense(net.layers[l], s, fam_.layer_target);
            else
                net.layers[l] = spectral_normalize(net.layers[l], s, fam_.layer_target, iters, 17 + l, &warm_[l]);
        }
    }

private:
    static constexpr std::size_t kDenseLimit = 256;  // layer inputs up to this size are normalized exactly

    const BFamily& fam_;
    int iterations_;
    std::vector<std::vector<double>> warm_;
};

}  // namespace detail

/// Certified bound for the family, when one exists (Lips variants over certified nets).
inline std::optional<double> family_bound(const BFamily& fam) {
    if (!is_lipschitz_variant(fam.kind) || !fam.constrained) return std::nullopt;
    double c = std::abs(fam.prototype.scale);
    for (const auto& l : fam.prototype.layers) c *= fam.layer_target * l.activation.lipschitz();
    return fam.kind == ModifierKind::LipsAM_SE ? std::sqrt(c * c + 1.0) : c + 1.0;
}

/// Ascends ||J_D(z; theta)||_op jointly over z and theta with forward-difference
/// gradients and plain gradient steps; a step that lowers the objective is
/// rejected and the step size halved. Constrained families are re-normalized
/// after every step. Returns the best value over all restarts.
inline LipschitzEstimate estimate_B(const BFamily& family, const ParameterSampler& sampler, const SearchConfig& config) {
    config.validate();
    family.prototype.validate();
    for (const auto& l : family.prototype.layers)
        require(l.activation.smooth(), ErrorKind::Usage,
                "estimate_B needs smooth (SoftPlus) activations; use pairwise_quotient_search otherwise");

    const std::size_t N = family.grid.size();
    const std::size_t P = family.prototype.parameter_count();

    std::vector<TrialRecord> records(static_cast<std::size_t>(config.restarts));
    std::vector<std::vector<cd>> witness_z(records.size());
    std::vector<std::vector<double>> witness_p(records.size());

    auto trial = [&](int t) {
        const auto start = std::chrono::steady_clock::now();
        auto rng = trial_rng(config.seed, static_cast<std::uint64_t>(t));
        ConvNet net = family.prototype;
        sampler(net, rng);
        detail::FamilyProjector projector(family, config.power_iterations);
        projector.project(net, 200);

        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<double> zr(2 * N);
        for (auto& v : zr) v = normal(rng);
        std::vector<double> theta = get_parameters(net);

        ModifierArchitecture arch(family.kind, AmplitudeMap(NetMap{net, family.layout}));
        ConvNet& work = *arch.mutable_inner().net();

        auto objective = [&](std::span<const double> zri, std::span<const double> th) {
            set_parameters(work, th);
            const auto z = complexify(zri);
            return modifier_jacobian_norm(arch, z, family.grid);
        };

        TrialRecord rec;
        rec.trial_id = t;
        double current = objective(zr, theta);
        if (!std::isfinite(current)) {
            rec.failed = true;
        } else {
            double step = config.learning_rate;
            std::vector<double> grad_z(2 * N), grad_t(P);
            int it = 0;
            for (; it < config.max_iterations && current <= config.termination_threshold; ++it) {
                bool poisoned = false;
                for (std::size_t j = 0; j < 2 * N; ++j) {
                    const double orig = zr[j];
                    zr[j] = orig + config.fd_epsilon;
                    const double f = objective(zr, theta);
                    zr[j] = orig;
                    grad_z[j] = (f - current) / config.fd_epsilon;
                    poisoned |= !std::isfinite(grad_z[j]);
                }
                for (std::size_t j = 0; j < P; ++j) {
                    const double orig = theta[j];
                    theta[j] = orig + config.fd_epsilon;
                    const double f = objective(zr, theta);
                    theta[j] = orig;
                    grad_t[j] = (f - current) / config.fd_epsilon;
                    poisoned |= !std::isfinite(grad_t[j]);
                }
                if (poisoned) {
                    // A probe crossed a point where the Jacobian blows up: the
                    // objective is unbounded in a neighbourhood of the iterate.
                    rec.failed = !(current > config.termination_threshold);
                    break;
                }
                auto z_new = zr;
                for (std::size_t j = 0; j < 2 * N; ++j) z_new[j] += step * grad_z[j];
                auto t_new = theta;
                for (std::size_t j = 0; j < P; ++j) t_new[j] += step * grad_t[j];
                if (family.constrained) {
                    set_parameters(net, t_new);
                    projector.project(net);
                    t_new = get_parameters(net);
                }
                const double val = objective(z_new, t_new);
                if (!std::isfinite(val)) {
                    rec.failed = true;
                    break;
                }
                if (val >= current) {
                    current = val;
                    zr = std::move(z_new);
                    theta = std::move(t_new);
                    step = std::min(config.learning_rate, 2.0 * step);
                } else {
                    step *= 0.5;
                    if (step < 1e-12) {
                        ++it;
                        break;
                    }
                }
            }
            rec.iterations = it;
        }
        rec.best = current;
        rec.terminated_early = std::isfinite(current) && current > config.termination_threshold;
        rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        records[static_cast<std::size_t>(t)] = rec;
        witness_z[static_cast<std::size_t>(t)] = complexify(zr);
        witness_p[static_cast<std::size_t>(t)] = theta;
    };

    detail::for_each_trial(config.restarts, config.threads, trial);

    LipschitzEstimate est;
    est.certified_upper = family_bound(family);
    est.trials = config.restarts;
    est.seed = config.seed;
    est.empirical_lower = 0.0;
    for (std::size_t t = 0; t < records.size(); ++t) {
        est.iterations += records[t].iterations;
        if (!records[t].failed && std::isfinite(records[t].best) && records[t].best >= est.empirical_lower) {
            est.empirical_lower = records[t].best;
            est.witness = witness_z[t];
            est.witness_parameters = witness_p[t];
        }
    }
    est.records = std::move(records);
    return est;
}

/// Random-restart coordinate hill climbing on the pair quotient
/// ||f(x) - f(y)|| / ||x - y||; a lower bound on Lip(f) for any f.
template <class ComplexFn>
LipschitzEstimate pairwise_quotient_search(const RealifiedMap<ComplexFn>& map, const SearchConfig& config) {
    config.validate();
    const std::size_t dim = 2 * map.dimension();
    auto quotient = [&](const std::vector<double>& x, const std::vector<double>& y) {
        double den = 0.0;
        for (std::size_t i = 0; i < dim; ++i) den += (x[i] - y[i]) * (x[i] - y[i]);
        den = std::sqrt(den);
        if (den < 1e-12) return -1.0;
        const auto fx = map(x);
        const auto fy = map(y);
        double num = 0.0;
        for (std::size_t i = 0; i < fx.size(); ++i) num += (fx[i] - fy[i]) * (fx[i] - fy[i]);
        const double q = std::sqrt(num) / den;
        return std::isfinite(q) ? q : -1.0;
    };

    std::vector<TrialRecord> records(static_cast<std::size_t>(config.restarts));
    std::vector<std::vector<double>> wx(records.size()), wy(records.size());

    auto trial = [&](int t) {
        const auto start = std::chrono::steady_clock::now();
        auto rng = trial_rng(config.seed, static_cast<std::uint64_t>(t));
        std::normal_distribution<double> normal(0.0, 1.0);
        std::uniform_real_distribution<double> uni(-3.0, 0.0);
        std::vector<double> x(dim), y(dim);
        for (auto& v : x) v = normal(rng);
        const double sep = std::pow(10.0, uni(rng));
        for (std::size_t i = 0; i < dim; ++i) y[i] = x[i] + sep * normal(rng);
        double best = quotient(x, y);
        double step = 0.5;
        int it = 0;
        for (; it < config.max_iterations && step > 1e-10; ++it) {
            bool improved = false;
            for (std::size_t c = 0; c < 2 * dim; ++c) {
                auto& vec = c < dim ? x : y;
                const std::size_t i = c % dim;
                for (double sgn : {1.0, -1.0}) {
                    const double orig = vec[i];
                    vec[i] = orig + sgn * step;
                    const double q = quotient(x, y);
                    if (q > best) {
                        best = q;
                        improved = true;
                        break;
                    }
                    vec[i] = orig;
                }
            }
            if (!improved) step *= 0.5;
        }
        TrialRecord rec;
        rec.trial_id = t;
        rec.best = best;
        rec.iterations = it;
        rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        records[static_cast<std::size_t>(t)] = rec;
        wx[static_cast<std::size_t>(t)] = x;
        wy[static_cast<std::size_t>(t)] = y;
    };
    detail::for_each_trial(config.restarts, config.threads, trial);

    LipschitzEstimate est;
    est.trials = config.restarts;
    est.seed = config.seed;
    for (std::size_t t = 0; t < records.size(); ++t) {
        est.iterations += records[t].iterations;
        if (records[t].best > est.empirical_lower) {
            est.empirical_lower = records[t].best;
            est.witness = complexify(wx[t]);
            est.witness_other = complexify(wy[t]);
        }
    }
    est.records = std::move(records);
    return est;
}

// ---------------------------------------------------------------------------
// Counterexample certificates

namespace detail {

inline double modifier_quotient(const ModifierArchitecture& arch, const std::vector<cd>& z, const std::vector<cd>& w) {
    Spectrogram sz(1, z.size()), sw(1, w.size());
    sz.values = z;
    sw.values = w;
    const auto dz = arch.apply(sz).values;
    const auto dw = arch.apply(sw).values;
    double num = 0.0, den = 0.0;
    for (std::size_t n = 0; n < z.size(); ++n) {
        num += std::norm(dz[n] - dw[n]);
        den += std::norm(z[n] - w[n]);
    }
    return std::sqrt(num) / std::sqrt(den);
}

inline void check_close(double got, double expected, const char* what) {
    if (std::abs(got - expected) > 1e-9 * std::abs(expected))
        throw std::logic_error(std::string(what) + ": quotient " + std::to_string(got) + " differs from " +
                               std::to_string(expected));
}

}  // namespace detail

/// |D(z) - D(w)| / |z - w| for A(x) = x + 1 at z = eps, w = -eps; equals (eps + 1) / eps.
inline double counterexample_bias(double epsilon) {
    require(epsilon > 0.0, ErrorKind::Domain, "epsilon must be positive");
    const ModifierArchitecture arch(ModifierKind::AM_SE, AmplitudeMap(BiasAdd{1.0}));
    const double q = detail::modifier_quotient(arch, {cd(epsilon, 0.0)}, {cd(-epsilon, 0.0)});
    detail::check_close(q, (epsilon + 1.0) / epsilon, "counterexample_bias");
    return q;
}

/// Swap map at z = (eps, 1), w = (-eps, 1); equals 1 / eps.
inline double counterexample_permutation(double epsilon) {
    require(epsilon > 0.0, ErrorKind::Domain, "epsilon must be positive");
    const ModifierArchitecture arch(ModifierKind::AM_SE, AmplitudeMap(Permutation{{1, 0}}));
    const double q = detail::modifier_quotient(arch, {cd(epsilon, 0.0), cd(1.0, 0.0)}, {cd(-epsilon, 0.0), cd(1.0, 0.0)});
    detail::check_close(q, 1.0 / epsilon, "counterexample_permutation");
    return q;
}

}  // namespace lipsam
