#pragma once

// Plug-and-Play ADMM for y = h (*) s + n with a spectrogram denoiser:
//
//   x  <- (H^T H + G^H G)^-1 (H^T (u - xi1) + G^H (v - xi2))
//   u  <- lambda / (1 + lambda) (H x + xi1 - y) + y
//   v  <- D(G x + xi2)
//   xi <- xi + (H x - u, G x - v)
//
// G is the tight STFT, so G^H G = I and the x-update is one FFT division.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "csv.hpp"
#include "error.hpp"
#include "fft.hpp"
#include "modifier.hpp"
#include "signal.hpp"

namespace lipsam {

struct Observation {
    TimeSignal y;
    TimeSignal h;  // zero-padded to y.size()

    Observation(TimeSignal observed, const TimeSignal& impulse_response)
        : y(std::move(observed)), h(zero_pad(impulse_response, y.size())) {
        require(std::any_of(h.samples().begin(), h.samples().end(), [](double v) { return v != 0.0; }),
                ErrorKind::Domain, "impulse response is all zero");
    }

    std::size_t length() const noexcept { return y.size(); }
};

struct SolverConfig {
    double lambda = 1.0;
    int max_iterations = 500;
    StftConfig stft;
    int log_every = 0;  // 0 disables progress callbacks

    void validate() const {
        require(lambda > 0.0 && std::isfinite(lambda), ErrorKind::Domain, "lambda must be positive");
        require(max_iterations >= 0, ErrorKind::Usage, "max_iterations must be non-negative");
        stft.validate();
    }
};

struct AdmmState {
    TimeSignal x;
    TimeSignal u;
    Spectrogram v;
    TimeSignal xi1;
    Spectrogram xi2;
    int iteration = 0;
    std::vector<double> delta_x_history;
    std::vector<double> si_snr_history;

    static AdmmState initial(const Observation& obs, const StftConfig& stft) {
        const std::size_t T = obs.length();
        const double sr = obs.y.sample_rate();
        const auto zero = TimeSignal::zeros(T, sr);
        const auto zspec = lipsam::stft(zero, stft);
        return {zero, obs.y, zspec, zero, zspec, 0, {}, {}};
    }
};

/// 1 / (|FFT h|^2 + 1), the diagonal of (H^T H + I)^-1 in the Fourier basis.
inline std::vector<double> precompute_inverse_filter(const TimeSignal& h, std::size_t length) {
    require(h.size() == length, ErrorKind::Shape, "impulse response must be padded to the signal length");
    const auto Hf = fft::forward(detail::to_complex(h.samples()));
    std::vector<double> filter(length);
    for (std::size_t k = 0; k < length; ++k) filter[k] = 1.0 / (std::norm(Hf[k]) + 1.0);
    return filter;
}

inline TimeSignal apply_inverse_filter(const TimeSignal& r, std::span<const double> filter) {
    require(r.size() == filter.size(), ErrorKind::Shape, "filter length mismatch");
    auto R = fft::forward(detail::to_complex(r.samples()));
    for (std::size_t k = 0; k < R.size(); ++k) R[k] *= filter[k];
    return TimeSignal(detail::real_part(fft::inverse(R)), r.sample_rate());
}

inline TimeSignal x_update(const AdmmState& s, const Observation& obs, std::span<const double> filter,
                           const StftConfig& stft) {
    const TimeSignal a(subtract(s.u.samples(), s.xi1.samples()), obs.y.sample_rate());
    const auto ht = circular_correlate(a, obs.h);
    const auto gt = istft(s.v - s.xi2, stft, obs.y.sample_rate());
    const TimeSignal r(add(ht.samples(), gt.samples()), obs.y.sample_rate());
    return apply_inverse_filter(r, filter);
}

inline TimeSignal u_update(const AdmmState& s, const Observation& obs, double lambda) {
    require(lambda > 0.0, ErrorKind::Domain, "lambda must be positive");
    const auto hx = circular_convolve(s.x, obs.h);
    const double c = lambda / (1.0 + lambda);
    std::vector<double> u(obs.length());
    for (std::size_t t = 0; t < u.size(); ++t) u[t] = c * (hx[t] + s.xi1[t] - obs.y[t]) + obs.y[t];
    return TimeSignal(std::move(u), obs.y.sample_rate());
}

template <class Denoiser>
Spectrogram v_update(const AdmmState& s, const Denoiser& denoiser, const StftConfig& stft) {
    return denoiser(lipsam::stft(s.x, stft) + s.xi2);
}

inline Spectrogram v_update(const AdmmState& s, const ModifierArchitecture& denoiser, const StftConfig& stft) {
    return denoiser.apply(lipsam::stft(s.x, stft) + s.xi2);
}

inline std::pair<TimeSignal, Spectrogram> dual_update(const AdmmState& s, const Observation& obs,
                                                      const StftConfig& stft) {
    const auto hx = circular_convolve(s.x, obs.h);
    std::vector<double> xi1(obs.length());
    for (std::size_t t = 0; t < xi1.size(); ++t) xi1[t] = s.xi1[t] + hx[t] - s.u[t];
    Spectrogram xi2 = s.xi2 + (lipsam::stft(s.x, stft) - s.v);
    return {TimeSignal(std::move(xi1), obs.y.sample_rate()), std::move(xi2)};
}

enum class RunStatus { Completed, Diverged };

struct RunResult {
    std::vector<double> x_hat;  // last finite iterate
    std::vector<double> delta_x_trace;
    std::vector<double> si_snr_trace;
    RunStatus status = RunStatus::Completed;
    int diverged_at = 0;  // 1-based iteration index when diverged
    std::string message;
    int iterations = 0;

    bool diverged() const noexcept { return status == RunStatus::Diverged; }
};

namespace detail {

inline bool finite_signal(const std::vector<double>& v) { return all_finite(std::span<const double>(v)); }

// Builds a TimeSignal from raw samples, reporting non-finite values instead of throwing.
inline std::optional<TimeSignal> finite_or_none(std::vector<double> v, double sr) {
    if (!finite_signal(v)) return std::nullopt;
    return TimeSignal(std::move(v), sr);
}

inline std::vector<double> raw_x_update(const AdmmState& s, const Observation& obs, std::span<const double> filter,
                                        const StftConfig& stft) {
    return x_update(s, obs, filter, stft).vector();
}

}  // namespace detail

/// Runs the recursion from x = 0, u = y, v = 0, xi = 0. A non-finite value
/// anywhere stops the run with status Diverged; traces up to the previous
/// iteration are kept.
template <class Denoiser>
RunResult run(const Observation& obs, const Denoiser& denoiser, const SolverConfig& config,
              const std::optional<TimeSignal>& reference = std::nullopt) {
    config.validate();
    const auto& stft = config.stft;
    require(obs.length() % stft.hop == 0, ErrorKind::Shape, "signal length must be a multiple of the hop");
    if (reference) require(reference->size() == obs.length(), ErrorKind::Shape, "reference length mismatch");
    const double sr = obs.y.sample_rate();
    const auto filter = precompute_inverse_filter(obs.h, obs.length());

    AdmmState s = AdmmState::initial(obs, stft);
    RunResult res;
    res.x_hat = s.x.vector();
    auto diverge = [&](int k, const std::string& what) {
        res.status = RunStatus::Diverged;
        res.diverged_at = k;
        res.message = what + " became non-finite at iteration " + std::to_string(k);
    };

    for (int k = 1; k <= config.max_iterations; ++k) {
        try {
            // The modules below throw Poisoned on non-finite inputs; the
            // explicit checks keep the diagnosis specific.
            auto xr = detail::raw_x_update(s, obs, filter, stft);
            auto x = detail::finite_or_none(std::move(xr), sr);
            if (!x) {
                diverge(k, "x");
                break;
            }
            const double dx = norm2(subtract(x->samples(), s.x.samples()));
            s.x = std::move(*x);
            s.u = u_update(s, obs, config.lambda);
            Spectrogram v = v_update(s, denoiser, stft);
            if (!all_finite(std::span<const cd>(v.values))) {
                diverge(k, "v (denoiser output)");
                break;
            }
            s.v = std::move(v);
            auto [xi1, xi2] = dual_update(s, obs, stft);
            if (!all_finite(std::span<const cd>(xi2.values))) {
                diverge(k, "xi2");
                break;
            }
            s.xi1 = std::move(xi1);
            s.xi2 = std::move(xi2);
            s.iteration = k;
            res.delta_x_trace.push_back(dx);
            if (reference) res.si_snr_trace.push_back(si_snr(s.x, *reference));
            res.x_hat = s.x.vector();
            res.iterations = k;
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::Poisoned) throw;
            diverge(k, std::string("state (") + e.what() + ")");
            break;
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Lambda sweep

/// Parses "lo:hi:Nlog", "lo:hi:Nlin" or a comma list.
inline std::vector<double> parse_lambda_grid(const std::string& spec) {
    auto number = [&](const std::string& s) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &used);
        } catch (const std::exception&) {
            throw Error(ErrorKind::Usage, "bad number '" + s + "' in grid '" + spec + "'");
        }
        require(used == s.size(), ErrorKind::Usage, "bad number '" + s + "' in grid '" + spec + "'");
        return v;
    };
    std::vector<double> grid;
    if (spec.find(':') != std::string::npos) {
        const auto p1 = spec.find(':');
        const auto p2 = spec.find(':', p1 + 1);
        require(p2 != std::string::npos, ErrorKind::Usage, "grid must look like lo:hi:Nlog");
        const double lo = number(spec.substr(0, p1));
        const double hi = number(spec.substr(p1 + 1, p2 - p1 - 1));
        std::string tail = spec.substr(p2 + 1);
        bool log = true;
        if (tail.size() > 3 && tail.ends_with("log")) tail.resize(tail.size() - 3);
        else if (tail.size() > 3 && tail.ends_with("lin")) {
            tail.resize(tail.size() - 3);
            log = false;
        } else {
            throw Error(ErrorKind::Usage, "grid spacing must be 'log' or 'lin' in '" + spec + "'");
        }
        int count = 0;
        const auto [ptr, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), count);
        require(ec == std::errc() && ptr == tail.data() + tail.size() && count >= 1, ErrorKind::Usage,
                "bad point count in grid '" + spec + "'");
        if (log) require(lo > 0.0 && hi > 0.0, ErrorKind::Usage, "log grid bounds must be positive");
        for (int i = 0; i < count; ++i) {
            const double t = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
            if (i == 0) grid.push_back(lo);
            else if (i == count - 1) grid.push_back(hi);
            else grid.push_back(log ? std::pow(10.0, std::log10(lo) + t * (std::log10(hi) - std::log10(lo)))
                                    : lo + t * (hi - lo));
        }
    } else {
        std::stringstream ss(spec);
        std::string item;
        while (std::getline(ss, item, ',')) grid.push_back(number(item));
    }
    require(!grid.empty(), ErrorKind::Usage, "lambda grid is empty");
    for (double l : grid) require(l > 0.0 && std::isfinite(l), ErrorKind::Usage, "lambda values must be positive");
    return grid;
}

inline std::vector<double> default_lambda_grid() { return parse_lambda_grid("1e-3:1e2:26log"); }

struct SweepRow {
    double lambda = 0.0;
    double si_snr = std::numeric_limits<double>::quiet_NaN();  // NaN when diverged
    RunStatus status = RunStatus::Completed;
    int iterations = 0;
    bool best = false;
};

template <class Denoiser>
std::vector<SweepRow> lambda_sweep(const Observation& obs, const Denoiser& denoiser, std::span<const double> grid,
                                   SolverConfig config, const TimeSignal& reference) {
    require(!grid.empty(), ErrorKind::Usage, "lambda grid is empty");
    std::vector<SweepRow> rows;
    for (double lambda : grid) {
        config.lambda = lambda;
        const auto r = run(obs, denoiser, config);
        SweepRow row;
        row.lambda = lambda;
        row.status = r.status;
        row.iterations = r.iterations;
        if (!r.diverged()) row.si_snr = si_snr(TimeSignal(r.x_hat, obs.y.sample_rate()), reference);
        rows.push_back(row);
    }
    std::size_t best = rows.size();
    for (std::size_t i = 0; i < rows.size(); ++i)
        if (!std::isnan(rows[i].si_snr) && (best == rows.size() || rows[i].si_snr > rows[best].si_snr)) best = i;
    if (best < rows.size()) rows[best].best = true;
    return rows;
}

// ---------------------------------------------------------------------------
// CSV

inline const char* to_string(RunStatus s) { return s == RunStatus::Completed ? "completed" : "diverged"; }

inline void write_trace_csv(std::ostream& os, const RunResult& r) {
    const bool with_snr = !r.si_snr_trace.empty();
    os << "iteration,delta_x" << (with_snr ? ",si_snr" : "") << '\n';
    for (std::size_t i = 0; i < r.delta_x_trace.size(); ++i) {
        os << (i + 1) << ',' << csv_number(r.delta_x_trace[i]);
        if (with_snr) os << ',' << csv_number(r.si_snr_trace[i]);
        os << '\n';
    }
}

inline void write_sweep_csv(std::ostream& os, std::span<const SweepRow> rows, const std::string& denoiser_name) {
    os << "denoiser,lambda,si_snr,status,iterations,best\n";
    for (const auto& r : rows)
        os << denoiser_name << ',' << csv_number(r.lambda) << ',' << csv_number(r.si_snr) << ',' << to_string(r.status)
           << ',' << r.iterations << ',' << (r.best ? 1 : 0) << '\n';
}

}  // namespace lipsam
