#pragma once

// Desk-scale denoiser training on a synthetic harmonic corpus.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "csv.hpp"
#include "error.hpp"
#include "lipschitz.hpp"
#include "modifier.hpp"
#include "network.hpp"
#include "signal.hpp"

namespace lipsam {

// ---------------------------------------------------------------------------
// Synthetic corpus

struct SynthCorpusConfig {
    std::size_t item_count = 64;
    double duration_seconds = 1.024;  // 8192 samples, 32 hops of 256
    double sample_rate = 8000.0;
    int harmonics_min = 3;
    int harmonics_max = 8;
    double f0_min = 90.0;
    double f0_max = 250.0;
    double f0_drift = 0.1;  // relative drift over a segment
    double attack_seconds = 0.02;
    double decay_seconds = 0.08;
    double segment_min_seconds = 0.15;
    double segment_max_seconds = 0.35;
    double silence_probability = 0.25;
    std::uint64_t seed = 1;

    std::size_t length() const { return static_cast<std::size_t>(std::lround(duration_seconds * sample_rate)); }

    void validate() const {
        require(item_count > 0, ErrorKind::Usage, "item_count must be positive");
        require(length() > 0, ErrorKind::Usage, "duration must be positive");
        require(harmonics_min >= 1 && harmonics_min <= harmonics_max, ErrorKind::Usage, "bad harmonic range");
        require(f0_min > 0.0 && f0_min <= f0_max && f0_max * harmonics_max < sample_rate / 2, ErrorKind::Usage,
                "f0 range (times harmonic count) must lie below Nyquist");
        require(silence_probability >= 0.0 && silence_probability <= 1.0, ErrorKind::Usage,
                "silence_probability must be in [0, 1]");
        require(segment_min_seconds > 0.0 && segment_min_seconds <= segment_max_seconds, ErrorKind::Usage,
                "bad segment length range");
    }
};

struct SpeechlikeItem {
    TimeSignal signal;
    std::vector<double> f0;  // starting f0 of each voiced segment
};

/// Harmonic segments with drifting f0 and attack/decay envelopes, separated
/// by silent gaps; peak-normalized to 0.5. Deterministic in (seed, index).
inline SpeechlikeItem synth_speechlike_item(const SynthCorpusConfig& cfg, std::size_t index) {
    cfg.validate();
    auto rng = trial_rng(cfg.seed ^ 0x5eedc0de5eedc0deULL, index);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const std::size_t T = cfg.length();
    const double sr = cfg.sample_rate;
    std::vector<double> x(T, 0.0);
    std::vector<double> f0s;

    auto voice = [&](std::size_t start, std::size_t len) {
        const double f0 = cfg.f0_min + (cfg.f0_max - cfg.f0_min) * uni(rng);
        const double drift = cfg.f0_drift * (2.0 * uni(rng) - 1.0);
        const int H = cfg.harmonics_min + static_cast<int>(uni(rng) * (cfg.harmonics_max - cfg.harmonics_min + 1));
        std::vector<double> amp(static_cast<std::size_t>(std::min(H, cfg.harmonics_max)));
        std::vector<double> phase(amp.size());
        for (std::size_t k = 0; k < amp.size(); ++k) {
            amp[k] = (0.5 + uni(rng)) / static_cast<double>(k + 1);
            phase[k] = 2.0 * std::numbers::pi * uni(rng);
        }
        f0s.push_back(f0);
        const double attack = std::max(1.0, cfg.attack_seconds * sr);
        const double decay = std::max(1.0, cfg.decay_seconds * sr);
        double theta = 0.0;
        for (std::size_t n = 0; n < len && start + n < T; ++n) {
            const double t = static_cast<double>(n) / static_cast<double>(len);
            const double f = f0 * (1.0 + drift * t);
            theta += 2.0 * std::numbers::pi * f / sr;
            const double a = static_cast<double>(n) < attack ? 0.5 - 0.5 * std::cos(std::numbers::pi * n / attack) : 1.0;
            const double d = static_cast<double>(len - n) < decay ? std::exp(-3.0 * (1.0 - (len - n) / decay)) : 1.0;
            double v = 0.0;
            for (std::size_t k = 0; k < amp.size(); ++k) {
                const double fk = f * static_cast<double>(k + 1);
                if (fk < 0.5 * sr) v += amp[k] * std::sin(static_cast<double>(k + 1) * theta + phase[k]);
            }
            x[start + n] += a * d * v;
        }
    };

    std::vector<std::pair<std::size_t, std::size_t>> segments;
    std::size_t pos = 0;
    while (pos < T) {
        const double secs = cfg.segment_min_seconds + (cfg.segment_max_seconds - cfg.segment_min_seconds) * uni(rng);
        const std::size_t len = std::max<std::size_t>(1, static_cast<std::size_t>(secs * sr));
        segments.emplace_back(pos, std::min(len, T - pos));
        pos += len;
    }
    bool voiced_any = false;
    for (const auto& [start, len] : segments) {
        if (uni(rng) >= cfg.silence_probability) {
            voice(start, len);
            voiced_any = true;
        }
    }
    // Guard: every item carries at least one voiced segment.
    const auto rms = [&] { return std::sqrt(energy(x) / static_cast<double>(T)); };
    if (!voiced_any || rms() == 0.0) {
        const auto& [start, len] = *std::max_element(segments.begin(), segments.end(),
                                                     [](auto a, auto b) { return a.second < b.second; });
        voice(start, len);
    }
    double peak = 0.0;
    for (double v : x) peak = std::max(peak, std::abs(v));
    for (auto& v : x) v *= 0.5 / peak;
    if (rms() <= 0.01) {
        // Very short voiced spans: fill the whole item.
        std::fill(x.begin(), x.end(), 0.0);
        voice(0, T);
        peak = 0.0;
        for (double v : x) peak = std::max(peak, std::abs(v));
        for (auto& v : x) v *= 0.5 / peak;
    }
    return {TimeSignal(std::move(x), sr), std::move(f0s)};
}

inline TimeSignal synth_speechlike(const SynthCorpusConfig& cfg, std::size_t index) {
    return synth_speechlike_item(cfg, index).signal;
}

/// Direct spike of amplitude 1 followed by white noise under e^{-t / decay};
/// normalized to unit energy.
inline TimeSignal synth_rir(std::size_t length, double decay_seconds, std::uint64_t seed,
                            double sample_rate = 8000.0) {
    require(length > 0, ErrorKind::Domain, "rir length must be positive");
    require(decay_seconds >= 0.0, ErrorKind::Domain, "decay time must be non-negative");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> h(length, 0.0);
    h[0] = 1.0;
    for (std::size_t t = 1; t < length; ++t) {
        const double g = normal(rng);
        if (decay_seconds > 0.0) h[t] = g * std::exp(-static_cast<double>(t) / (decay_seconds * sample_rate));
    }
    const double e = std::sqrt(energy(h));
    for (auto& v : h) v /= e;
    return TimeSignal(std::move(h), sample_rate);
}

// ---------------------------------------------------------------------------
// Loss

inline constexpr double kLossFloor = 1e-12;

struct LossValue {
    double loss = 0.0;
    std::vector<double> gradient;  // d loss / d estimate
};

/// -10 log10(|ref|^2 / (|ref - est|^2 + 1e-12)) and its gradient.
inline LossValue neg_snr_loss(std::span<const double> estimate, std::span<const double> reference) {
    require(estimate.size() == reference.size(), ErrorKind::Shape, "loss: length mismatch");
    const double ref_energy = energy(reference);
    require(ref_energy > 0.0, ErrorKind::UndefinedMetric, "loss: reference is all zero");
    const auto diff = subtract(estimate, reference);
    const double err = energy(diff) + kLossFloor;
    LossValue out;
    out.loss = -10.0 * std::log10(ref_energy / err);
    out.gradient.resize(diff.size());
    const double c = 20.0 / std::numbers::ln10 / err;
    for (std::size_t i = 0; i < diff.size(); ++i) out.gradient[i] = c * diff[i];
    return out;
}

inline LossValue neg_snr_loss(const TimeSignal& estimate, const TimeSignal& reference) {
    return neg_snr_loss(estimate.samples(), reference.samples());
}

// ---------------------------------------------------------------------------
// End-to-end path: noisy -> STFT -> modifier -> iSTFT -> loss

struct PathResult {
    double loss = 0.0;
    std::vector<double> estimate;
    std::vector<double> parameter_gradient;  // empty unless requested
};

/// Forward (and optionally backward) through the full modifier path. The
/// phase sign(z) is a constant, so d loss / dA = Re(conj(sign z) * G g) where
/// g = d loss / d estimate and G is the STFT (the adjoint of the iSTFT).
inline PathResult modifier_path(const ModifierArchitecture& arch, const TimeSignal& noisy, const TimeSignal& clean,
                                const StftConfig& stft, bool with_gradient) {
    const auto Z = lipsam::stft(noisy, stft);
    const Grid grid{Z.bins, Z.frames};
    std::vector<double> mag(Z.size());
    std::vector<cd> phase(Z.size());
    for (std::size_t n = 0; n < Z.size(); ++n) {
        mag[n] = std::abs(Z.values[n]);
        phase[n] = complex_sign(Z.values[n]);
    }
    const auto trace = arch.amplitude_forward(mag, grid);
    Spectrogram D(Z.bins, Z.frames, Z.origin);
    for (std::size_t n = 0; n < Z.size(); ++n) D.values[n] = trace.amplitude[n] * phase[n];
    const auto est = istft(D, stft, noisy.sample_rate());
    const auto lv = neg_snr_loss(est.samples(), clean.samples());
    PathResult r;
    r.loss = lv.loss;
    r.estimate = est.vector();
    if (with_gradient) {
        const auto Gg = lipsam::stft(TimeSignal(lv.gradient, noisy.sample_rate()), stft);
        std::vector<double> dA(Z.size());
        for (std::size_t n = 0; n < Z.size(); ++n) dA[n] = (std::conj(phase[n]) * Gg.values[n]).real();
        r.parameter_gradient = arch.amplitude_backward(trace, dA);
    }
    return r;
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
    int epochs = 20;
    std::size_t batch_size = 32;
    double learning_rate = 1e-4;
    double snr_low = 20.0;
    double snr_high = 40.0;
    std::size_t frames = 32;
    ModifierKind kind = ModifierKind::AM_RE;  // trained wrapper (AM_SE or AM_RE)
    bool spectral = false;                    // keep every layer at operator norm <= 1
    int channel_width = 64;
    int kernel = 5;
    int layers = 3;
    double leaky_slope = 0.1;
    std::optional<bool> bias;  // default: off for RE, on for SE
    double init_gain = 1.0;
    double validation_fraction = 0.1;
    StftConfig stft;
    std::uint64_t seed = 0;
    int threads = 1;

    bool use_bias() const { return bias.value_or(!is_residual(kind)); }

    void validate() const {
        require(epochs >= 0, ErrorKind::Usage, "epochs must be non-negative");
        require(batch_size > 0, ErrorKind::Usage, "batch_size must be positive");
        require(learning_rate > 0.0, ErrorKind::Usage, "learning_rate must be positive");
        require(snr_low <= snr_high, ErrorKind::Usage, "snr range must satisfy low <= high");
        require(frames > 0, ErrorKind::Usage, "frames must be positive");
        require(channel_width > 0 && kernel > 0 && kernel % 2 == 1 && layers >= 1, ErrorKind::Usage,
                "bad network shape");
        require(validation_fraction > 0.0 && validation_fraction < 1.0, ErrorKind::Usage,
                "validation_fraction must be in (0, 1)");
        require(threads > 0, ErrorKind::Usage, "threads must be positive");
        stft.validate();
    }
};

inline ConvNet make_denoiser_net(const TrainConfig& cfg) {
    const int bins = static_cast<int>(cfg.stft.bins());
    return make_conv1d_net(bins, cfg.channel_width, bins, cfg.kernel, cfg.layers,
                           Activation::leaky_relu(cfg.leaky_slope), cfg.use_bias());
}

inline ConvNet init_denoiser_net(const TrainConfig& cfg) {
    auto net = make_denoiser_net(cfg);
    auto rng = trial_rng(cfg.seed, 0x1417);
    randomize(net, rng, cfg.init_gain, 0.0);
    if (cfg.spectral) spectral_normalize_all(net, 1, static_cast<int>(cfg.frames), 1.0, 100, cfg.seed);
    return net;
}

struct EpochLog {
    int epoch = 0;
    double train_loss = std::numeric_limits<double>::quiet_NaN();  // NaN for epoch 0 (before training)
    double val_loss = 0.0;
};

enum class TrainStatus { Ok, Poisoned };

struct TrainResult {
    ConvNet net;  // best validation checkpoint
    std::vector<EpochLog> log;
    int best_epoch = 0;
    double best_val_loss = std::numeric_limits<double>::infinity();
    TrainStatus status = TrainStatus::Ok;
    std::string message;
};

namespace detail {

struct NoisyItem {
    TimeSignal clean;
    TimeSignal noisy;
};

inline TimeSignal crop_item(const TimeSignal& s, std::size_t length) {
    std::vector<double> v(length, 0.0);
    std::copy_n(s.samples().begin(), std::min(length, s.size()), v.begin());
    return TimeSignal(std::move(v), s.sample_rate());
}

inline NoisyItem make_noisy(const TimeSignal& clean, double lo, double hi, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> uni(lo, hi);
    const double snr = lo == hi ? lo : uni(rng);
    return {clean, add_noise_at_snr(clean, snr, rng())};
}

/// Mean loss and gradient over a batch; per-item results reduced in index
/// order so the value does not depend on the thread count.
inline PathResult batch_gradient(const ModifierArchitecture& arch, const std::vector<NoisyItem>& batch,
                                 const StftConfig& stft, int threads, bool with_gradient) {
    std::vector<PathResult> per(batch.size());
    detail::for_each_trial(static_cast<int>(batch.size()), threads, [&](int i) {
        const auto& it = batch[static_cast<std::size_t>(i)];
        per[static_cast<std::size_t>(i)] = modifier_path(arch, it.noisy, it.clean, stft, with_gradient);
    });
    PathResult total;
    for (const auto& p : per) {
        total.loss += p.loss;
        if (with_gradient) {
            if (total.parameter_gradient.empty()) total.parameter_gradient.assign(p.parameter_gradient.size(), 0.0);
            for (std::size_t j = 0; j < p.parameter_gradient.size(); ++j)
                total.parameter_gradient[j] += p.parameter_gradient[j];
        }
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    total.loss *= inv;
    for (auto& g : total.parameter_gradient) g *= inv;
    return total;
}

}  // namespace detail

/// Gaussian-denoising training with the negative-SNR loss through the full
/// AM wrapper. Returns the checkpoint with the lowest validation loss
/// (the untrained net counts as epoch 0).
inline TrainResult train_denoiser(const TrainConfig& cfg, const SynthCorpusConfig& corpus,
                                  std::optional<ConvNet> initial = std::nullopt, std::ostream* log_csv = nullptr) {
    cfg.validate();
    corpus.validate();
    require(cfg.kind == ModifierKind::AM_SE || cfg.kind == ModifierKind::AM_RE, ErrorKind::Usage,
            "training targets the AM wrappers; wrap the result as LipsAM afterwards");
    const std::size_t item_len = cfg.frames * cfg.stft.hop;
    const std::size_t n_val = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                           std::lround(cfg.validation_fraction * corpus.item_count)));
    require(n_val < corpus.item_count, ErrorKind::Usage, "corpus too small for a validation split");
    const std::size_t n_train = corpus.item_count - n_val;

    std::vector<TimeSignal> clean;
    clean.reserve(corpus.item_count);
    for (std::size_t i = 0; i < corpus.item_count; ++i)
        clean.push_back(detail::crop_item(synth_speechlike(corpus, i), item_len));

    // Fixed noise for validation items.
    std::vector<detail::NoisyItem> val;
    {
        auto rng = trial_rng(cfg.seed, 0x7a11da7e);
        for (std::size_t i = n_train; i < corpus.item_count; ++i)
            val.push_back(detail::make_noisy(clean[i], cfg.snr_low, cfg.snr_high, rng));
    }

    ConvNet net = initial ? *initial : init_denoiser_net(cfg);
    ModifierArchitecture arch(cfg.kind, AmplitudeMap(NetMap{net, InputLayout::ChannelsAreBins}));
    ConvNet& work = *arch.mutable_inner().net();

    TrainResult res;
    // Overflow inside the path surfaces as a Poisoned error; report it as a loss of +inf.
    auto validate_now = [&] {
        try {
            return detail::batch_gradient(arch, val, cfg.stft, cfg.threads, false).loss;
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::Poisoned) throw;
            return std::numeric_limits<double>::infinity();
        }
    };
    auto train_step = [&](const std::vector<detail::NoisyItem>& batch) {
        try {
            return detail::batch_gradient(arch, batch, cfg.stft, cfg.threads, true);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::Poisoned) throw;
            PathResult bad;
            bad.loss = std::numeric_limits<double>::quiet_NaN();
            return bad;
        }
    };
    auto record = [&](const EpochLog& row) {
        res.log.push_back(row);
        if (log_csv) *log_csv << row.epoch << ',' << csv_number(row.train_loss) << ',' << csv_number(row.val_loss) << '\n';
    };
    if (log_csv) *log_csv << "epoch,train_loss,val_loss\n";

    const double v0 = validate_now();
    record({0, std::numeric_limits<double>::quiet_NaN(), v0});
    res.net = work;
    res.best_val_loss = v0;
    if (!std::isfinite(v0)) {
        res.status = TrainStatus::Poisoned;
        res.message = "initial validation loss is not finite";
        return res;
    }

    auto params = get_parameters(work);
    auto adam = AdamState::for_parameters(params.size(), cfg.learning_rate);
    std::vector<std::vector<double>> warm(work.layers.size());
    std::vector<std::size_t> order(n_train);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        auto rng = trial_rng(cfg.seed, 0x100000ULL + static_cast<std::uint64_t>(epoch));
        for (std::size_t i = 0; i < n_train; ++i) order[i] = i;
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t b0 = 0; b0 < n_train; b0 += cfg.batch_size) {
            std::vector<detail::NoisyItem> batch;
            for (std::size_t i = b0; i < std::min(n_train, b0 + cfg.batch_size); ++i)
                batch.push_back(detail::make_noisy(clean[order[i]], cfg.snr_low, cfg.snr_high, rng));
            const auto g = train_step(batch);
            bool finite = std::isfinite(g.loss);
            for (double v : g.parameter_gradient) finite = finite && std::isfinite(v);
            if (!finite) {
                res.status = TrainStatus::Poisoned;
                res.message = "non-finite loss or gradient in epoch " + std::to_string(epoch);
                return res;
            }
            adam_step(params, g.parameter_gradient, adam);
            set_parameters(work, params);
            if (cfg.spectral) {
                for (std::size_t l = 0; l < work.layers.size(); ++l) {
                    FeatureShape s{work.layers[l].in_channels, 1, static_cast<int>(cfg.frames)};
                    work.layers[l] = spectral_normalize(work.layers[l], s, 1.0, 3, cfg.seed + l, &warm[l]);
                }
                params = get_parameters(work);
            }
            epoch_loss += g.loss;
            ++batches;
        }
        const double vl = validate_now();
        record({epoch, epoch_loss / static_cast<double>(batches), vl});
        if (!std::isfinite(vl)) {
            res.status = TrainStatus::Poisoned;
            res.message = "non-finite validation loss in epoch " + std::to_string(epoch);
            return res;
        }
        if (vl < res.best_val_loss) {
            res.best_val_loss = vl;
            res.best_epoch = epoch;
            res.net = work;
        }
    }
    if (cfg.spectral) {
        // Tighten the certificate on the returned checkpoint.
        spectral_normalize_all(res.net, 1, static_cast<int>(cfg.frames), 1.0, 300, cfg.seed);
    }
    return res;
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvaluationRow {
    double input_snr = 0.0;
    double output_snr = 0.0;     // mean over items
    double output_si_snr = 0.0;  // mean over items
    std::size_t items = 0;
};

/// Mean output SNR / SI-SNR per input SNR. A zero output has SI-SNR at the
/// -300 dB sentinel.
inline std::vector<EvaluationRow> evaluate_denoiser(const ModifierArchitecture& arch,
                                                    const std::vector<TimeSignal>& items,
                                                    std::span<const double> snr_levels, const StftConfig& stft,
                                                    std::uint64_t seed) {
    require(!items.empty(), ErrorKind::Usage, "no evaluation items");
    std::vector<EvaluationRow> rows;
    for (std::size_t s = 0; s < snr_levels.size(); ++s) {
        EvaluationRow row;
        row.input_snr = snr_levels[s];
        for (std::size_t i = 0; i < items.size(); ++i) {
            const auto noisy = add_noise_at_snr(items[i], snr_levels[s], trial_rng(seed, s * 100003 + i)());
            const auto out = istft(arch.apply(lipsam::stft(noisy, stft)), stft, noisy.sample_rate());
            row.output_snr += snr_db(out, items[i]);
            row.output_si_snr += si_snr(out, items[i]);
        }
        row.items = items.size();
        row.output_snr /= static_cast<double>(items.size());
        row.output_si_snr /= static_cast<double>(items.size());
        rows.push_back(row);
    }
    return rows;
}

}  // namespace lipsam
