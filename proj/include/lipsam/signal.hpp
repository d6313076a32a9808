#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "fft.hpp"

namespace lipsam {

using cd = std::complex<double>;

/// Real mono signal. Non-empty and finite by construction.
class TimeSignal {
public:
    explicit TimeSignal(std::vector<double> samples, double sample_rate = 8000.0)
        : samples_(std::move(samples)), sample_rate_(sample_rate) {
        require(!samples_.empty(), ErrorKind::Shape, "signal must have at least one sample");
        require(sample_rate_ > 0.0, ErrorKind::Domain, "sample rate must be positive");
        for (double v : samples_)
            require(std::isfinite(v), ErrorKind::Poisoned, "signal contains a non-finite sample");
    }

    static TimeSignal zeros(std::size_t length, double sample_rate = 8000.0) {
        return TimeSignal(std::vector<double>(length, 0.0), sample_rate);
    }

    std::size_t size() const noexcept { return samples_.size(); }
    double sample_rate() const noexcept { return sample_rate_; }
    std::span<const double> samples() const noexcept { return samples_; }
    const std::vector<double>& vector() const noexcept { return samples_; }
    double operator[](std::size_t i) const { return samples_[i]; }

private:
    std::vector<double> samples_;
    double sample_rate_;
};

// ---------------------------------------------------------------------------
// Vector helpers shared across modules.

inline double dot(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), ErrorKind::Shape, "dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double energy(std::span<const double> a) { return dot(a, a); }

inline double norm2(std::span<const double> a) { return std::sqrt(energy(a)); }

inline double norm2(std::span<const cd> a) {
    double s = 0.0;
    for (const auto& v : a) s += std::norm(v);
    return std::sqrt(s);
}

inline std::vector<double> subtract(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), ErrorKind::Shape, "subtract: length mismatch");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

inline std::vector<double> add(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), ErrorKind::Shape, "add: length mismatch");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

inline bool all_finite(std::span<const double> a) {
    return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

inline bool all_finite(std::span<const cd> a) {
    return std::all_of(a.begin(), a.end(),
                       [](const cd& v) { return std::isfinite(v.real()) && std::isfinite(v.imag()); });
}

// ---------------------------------------------------------------------------
// Windows and STFT configuration.

/// Periodic Hann window, sin^2(pi n / L).
inline std::vector<double> hann_window(std::size_t length) {
    std::vector<double> w(length);
    for (std::size_t n = 0; n < length; ++n) {
        const double s = std::sin(std::numbers::pi * static_cast<double>(n) / static_cast<double>(length));
        w[n] = s * s;
    }
    return w;
}

/// w[n] = p[n] / sqrt(sum_k p[n + k hop]^2): the canonical tight window of `prototype`.
inline std::vector<double> make_tight_window(std::span<const double> prototype, std::size_t hop) {
    require(hop > 0 && !prototype.empty() && prototype.size() % hop == 0, ErrorKind::InvalidWindow,
            "window length must be a positive multiple of the hop");
    std::vector<double> denom(hop, 0.0);
    for (std::size_t n = 0; n < prototype.size(); ++n) denom[n % hop] += prototype[n] * prototype[n];
    std::vector<double> w(prototype.size());
    for (std::size_t n = 0; n < prototype.size(); ++n) {
        const double d = denom[n % hop];
        require(d > 0.0, ErrorKind::InvalidWindow,
                "shifted-square sum vanishes at position " + std::to_string(n % hop));
        w[n] = prototype[n] / std::sqrt(d);
    }
    return w;
}

struct StftConfig {
    std::size_t window_length = 512;
    std::size_t hop = 256;
    std::vector<double> window = make_tight_window(hann_window(512), 256);

    static StftConfig tight_hann(std::size_t window_length, std::size_t hop) {
        auto proto = hann_window(window_length);
        return StftConfig{window_length, hop, make_tight_window(proto, hop)};
    }

    std::size_t fft_length() const noexcept { return window_length; }
    std::size_t bins() const noexcept { return window_length / 2 + 1; }
    std::size_t frames(std::size_t signal_length) const { return signal_length / hop; }

    /// max_n |sum_k w[n + k hop]^2 - 1|; zero for an exactly tight window.
    double tightness_error() const {
        std::vector<double> acc(hop, 0.0);
        for (std::size_t n = 0; n < window.size(); ++n) acc[n % hop] += window[n] * window[n];
        double worst = 0.0;
        for (double v : acc) worst = std::max(worst, std::abs(v - 1.0));
        return worst;
    }

    void validate() const {
        require(hop > 0 && window_length > 0 && window_length % hop == 0, ErrorKind::InvalidWindow,
                "hop must divide the window length");
        require(window_length % 2 == 0, ErrorKind::InvalidWindow, "window length must be even");
        require(window.size() == window_length, ErrorKind::InvalidWindow, "window has the wrong length");
        require(tightness_error() < 1e-10, ErrorKind::InvalidWindow, "window is not Parseval-tight");
    }
};

struct StftShape {
    std::size_t window_length = 0;
    std::size_t hop = 0;
    std::size_t signal_length = 0;
    bool operator==(const StftShape&) const = default;
};

/// Complex time-frequency matrix stored row-major as [bin][frame].
struct Spectrogram {
    std::size_t bins = 0;
    std::size_t frames = 0;
    std::vector<cd> values;
    std::optional<StftShape> origin;

    Spectrogram() = default;
    Spectrogram(std::size_t bins_, std::size_t frames_, std::optional<StftShape> origin_ = std::nullopt)
        : bins(bins_), frames(frames_), values(bins_ * frames_), origin(origin_) {}

    std::size_t size() const noexcept { return values.size(); }
    cd& at(std::size_t bin, std::size_t frame) { return values[bin * frames + frame]; }
    const cd& at(std::size_t bin, std::size_t frame) const { return values[bin * frames + frame]; }

    bool same_shape(const Spectrogram& other) const noexcept {
        return bins == other.bins && frames == other.frames;
    }
};

inline Spectrogram operator+(const Spectrogram& a, const Spectrogram& b) {
    require(a.same_shape(b), ErrorKind::Shape, "spectrogram shape mismatch");
    Spectrogram out = a;
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += b.values[i];
    return out;
}

inline Spectrogram operator-(const Spectrogram& a, const Spectrogram& b) {
    require(a.same_shape(b), ErrorKind::Shape, "spectrogram shape mismatch");
    Spectrogram out = a;
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] -= b.values[i];
    return out;
}

enum class Padding { Reject, ZeroPad };

namespace detail {

// Per-bin weight that makes the one-sided representation an isometry:
// interior bins stand in for a conjugate pair and carry sqrt(2).
inline double bin_weight(std::size_t k, std::size_t length) {
    return (k == 0 || 2 * k == length) ? 1.0 : std::numbers::sqrt2;
}

}  // namespace detail

/// Circular-frame STFT with unitary DFT scaling on the one-sided spectrum.
/// Entry (k, f) = c_k / sqrt(L) * sum_n w[n] x[(f hop + n) mod T] e^{-i 2 pi k n / L},
/// with c_k = sqrt(2) for 0 < k < L/2 and 1 otherwise, so that G^H G = I.
inline Spectrogram stft(const TimeSignal& signal, const StftConfig& config,
                        Padding padding = Padding::Reject) {
    config.validate();
    std::vector<double> x = signal.vector();
    if (x.size() % config.hop != 0) {
        require(padding == Padding::ZeroPad, ErrorKind::Shape,
                "signal length " + std::to_string(x.size()) + " is not a multiple of hop " +
                    std::to_string(config.hop));
        x.resize((x.size() / config.hop + 1) * config.hop, 0.0);
    }
    const std::size_t T = x.size();
    const std::size_t L = config.window_length;
    const std::size_t F = T / config.hop;
    Spectrogram spec(config.bins(), F, StftShape{L, config.hop, T});
    const double norm = 1.0 / std::sqrt(static_cast<double>(L));
    std::vector<double> frame(L);
    for (std::size_t f = 0; f < F; ++f) {
        const std::size_t start = f * config.hop;
        for (std::size_t n = 0; n < L; ++n) frame[n] = config.window[n] * x[(start + n) % T];
        const auto bins = fft::real_forward(frame);
        for (std::size_t k = 0; k < bins.size(); ++k)
            spec.at(k, f) = bins[k] * (norm * detail::bin_weight(k, L));
    }
    return spec;
}

/// Adjoint of `stft` (overlap-add with the same window). Inverts `stft` exactly.
inline TimeSignal istft(const Spectrogram& spec, const StftConfig& config, double sample_rate = 8000.0) {
    config.validate();
    const std::size_t L = config.window_length;
    require(spec.bins == config.bins(), ErrorKind::Shape, "spectrogram bin count does not match config");
    if (spec.origin) {
        require(spec.origin->window_length == L && spec.origin->hop == config.hop, ErrorKind::Shape,
                "spectrogram was produced with a different STFT configuration");
        require(spec.origin->signal_length == spec.frames * config.hop, ErrorKind::Shape,
                "spectrogram frame count does not match its recorded signal length");
    }
    require(spec.frames > 0, ErrorKind::Shape, "spectrogram has no frames");
    const std::size_t T = spec.frames * config.hop;
    const double norm = 1.0 / std::sqrt(static_cast<double>(L));
    std::vector<double> out(T, 0.0);
    std::vector<cd> half(spec.bins);
    std::vector<double> frame(L);
    for (std::size_t f = 0; f < spec.frames; ++f) {
        for (std::size_t k = 0; k < spec.bins; ++k) {
            const cd a = spec.at(k, f) * (norm * detail::bin_weight(k, L));
            const bool edge = (k == 0 || 2 * k == L);
            half[k] = edge ? cd(a.real(), 0.0) : a * 0.5;
        }
        fft::real_backward_raw(half, frame);
        const std::size_t start = f * config.hop;
        for (std::size_t n = 0; n < L; ++n) out[(start + n) % T] += config.window[n] * frame[n];
    }
    return TimeSignal(std::move(out), sample_rate);
}

// ---------------------------------------------------------------------------
// Circular convolution.

inline TimeSignal zero_pad(const TimeSignal& h, std::size_t length) {
    require(h.size() <= length, ErrorKind::Shape, "cannot pad a signal to a shorter length");
    std::vector<double> out(length, 0.0);
    std::copy(h.samples().begin(), h.samples().end(), out.begin());
    return TimeSignal(std::move(out), h.sample_rate());
}

namespace detail {

inline std::vector<cd> to_complex(std::span<const double> x) { return {x.begin(), x.end()}; }

inline std::vector<double> real_part(std::span<const cd> x) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i].real();
    return out;
}

}  // namespace detail

/// y = h (*) x, circular, i.e. the circulant H applied to x.
inline TimeSignal circular_convolve(const TimeSignal& x, const TimeSignal& h) {
    require(x.size() == h.size(), ErrorKind::Shape, "circular_convolve: lengths differ (pad h first)");
    auto X = fft::forward(detail::to_complex(x.samples()));
    auto Hf = fft::forward(detail::to_complex(h.samples()));
    for (std::size_t k = 0; k < X.size(); ++k) X[k] *= Hf[k];
    return TimeSignal(detail::real_part(fft::inverse(X)), x.sample_rate());
}

/// y = H^T x: circular cross-correlation with h, the exact adjoint of `circular_convolve`.
inline TimeSignal circular_correlate(const TimeSignal& x, const TimeSignal& h) {
    require(x.size() == h.size(), ErrorKind::Shape, "circular_correlate: lengths differ (pad h first)");
    auto X = fft::forward(detail::to_complex(x.samples()));
    auto Hf = fft::forward(detail::to_complex(h.samples()));
    for (std::size_t k = 0; k < X.size(); ++k) X[k] *= std::conj(Hf[k]);
    return TimeSignal(detail::real_part(fft::inverse(X)), x.sample_rate());
}

// ---------------------------------------------------------------------------
// Metrics.

inline constexpr double kMetricCapDb = 300.0;

namespace detail {

inline double ratio_db(double num, double den) {
    if (den <= 0.0) return num > 0.0 ? kMetricCapDb : -kMetricCapDb;
    if (num <= 0.0) return -kMetricCapDb;
    return std::clamp(10.0 * std::log10(num / den), -kMetricCapDb, kMetricCapDb);
}

}  // namespace detail

/// 10 log10(|ref|^2 / |ref - est|^2), saturating at +-300 dB.
inline double snr_db(const TimeSignal& estimate, const TimeSignal& reference) {
    require(estimate.size() == reference.size(), ErrorKind::Shape, "snr: length mismatch");
    const double ref_energy = energy(reference.samples());
    require(ref_energy > 0.0, ErrorKind::UndefinedMetric, "snr: reference is all zero");
    return detail::ratio_db(ref_energy, energy(subtract(reference.samples(), estimate.samples())));
}

/// Scale-invariant SNR. Exact scalar multiples of the reference saturate at +300 dB;
/// an estimate orthogonal to the reference saturates at -300 dB.
inline double si_snr(const TimeSignal& estimate, const TimeSignal& reference) {
    require(estimate.size() == reference.size(), ErrorKind::Shape, "si_snr: length mismatch");
    const auto r = reference.samples();
    const auto e = estimate.samples();
    const double ref_energy = energy(r);
    require(ref_energy > 0.0, ErrorKind::UndefinedMetric, "si_snr: reference is all zero");
    const double alpha = dot(e, r) / ref_energy;
    double target = 0.0;
    double residual = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        const double t = alpha * r[i];
        target += t * t;
        residual += (t - e[i]) * (t - e[i]);
    }
    return detail::ratio_db(target, residual);
}

/// signal + g with white Gaussian g rescaled so the SNR is exactly `snr_db`.
/// An infinite SNR returns the signal unchanged.
inline TimeSignal add_noise_at_snr(const TimeSignal& signal, double snr_db, std::uint64_t seed) {
    const double sig_energy = energy(signal.samples());
    require(sig_energy > 0.0, ErrorKind::UndefinedMetric, "add_noise_at_snr: signal is all zero");
    if (std::isinf(snr_db) && snr_db > 0) return signal;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> g(signal.size());
    for (auto& v : g) v = normal(rng);
    const double g_energy = energy(g);
    const double scale = std::sqrt(sig_energy / (g_energy * std::pow(10.0, snr_db / 10.0)));
    std::vector<double> out(signal.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = signal[i] + scale * g[i];
    return TimeSignal(std::move(out), signal.sample_rate());
}

}  // namespace lipsam
