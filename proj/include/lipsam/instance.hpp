#pragma once

// The synthetic dereverberation instance used by tests, demos and the CLI:
// a speech-like clean signal through a decaying random room response plus
// white noise at a fixed SNR.

#include <cstdint>

#include "pnp.hpp"
#include "signal.hpp"
#include "trainer.hpp"

namespace lipsam {

struct InstanceConfig {
    std::size_t length = 4096;
    std::size_t rir_taps = 512;
    double rir_decay_seconds = 0.02;
    double noise_snr_db = 30.0;
    double sample_rate = 8000.0;
    std::uint64_t seed = 7;
};

struct SyntheticInstance {
    TimeSignal clean;
    TimeSignal rir;
    Observation observation;
};

inline SyntheticInstance make_instance(const InstanceConfig& cfg = {}) {
    SynthCorpusConfig corpus;
    corpus.seed = cfg.seed;
    corpus.sample_rate = cfg.sample_rate;
    corpus.duration_seconds = static_cast<double>(cfg.length) / cfg.sample_rate;
    corpus.silence_probability = 0.1;
    auto clean = synth_speechlike(corpus, 0);
    const auto rir = synth_rir(cfg.rir_taps, cfg.rir_decay_seconds, cfg.seed + 1, cfg.sample_rate);
    const auto reverberant = circular_convolve(clean, zero_pad(rir, cfg.length));
    auto y = add_noise_at_snr(reverberant, cfg.noise_snr_db, cfg.seed + 2);
    return {std::move(clean), rir, Observation(std::move(y), rir)};
}

}  // namespace lipsam
