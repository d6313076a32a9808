#pragma once

// Thin FFTW3 front end. Plans are created once per (kind, size) under a
// mutex and executed through the new-array interface, which FFTW documents
// as thread-safe.

#include <complex>
#include <cstddef>
#include <map>
#include <mutex>
#include <span>
#include <utility>
#include <vector>

#include <fftw3.h>

#include "error.hpp"

namespace lipsam::fft {

using cd = std::complex<double>;

namespace detail {

enum class PlanKind { Forward, Backward, RealForward, RealBackward };

class PlanCache {
public:
    static PlanCache& instance() {
        static PlanCache cache;
        return cache;
    }

    fftw_plan get(PlanKind kind, int n) {
        std::lock_guard<std::mutex> lock(mutex_);
        auto key = std::make_pair(kind, n);
        if (auto it = plans_.find(key); it != plans_.end()) return it->second;

        const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
        auto* cin = fftw_alloc_complex(static_cast<std::size_t>(n));
        auto* cout = fftw_alloc_complex(static_cast<std::size_t>(n));
        auto* rbuf = fftw_alloc_real(static_cast<std::size_t>(n));
        fftw_plan plan = nullptr;
        switch (kind) {
            case PlanKind::Forward:
                plan = fftw_plan_dft_1d(n, cin, cout, FFTW_FORWARD, flags);
                break;
            case PlanKind::Backward:
                plan = fftw_plan_dft_1d(n, cin, cout, FFTW_BACKWARD, flags);
                break;
            case PlanKind::RealForward:
                plan = fftw_plan_dft_r2c_1d(n, rbuf, cout, flags);
                break;
            case PlanKind::RealBackward:
                plan = fftw_plan_dft_c2r_1d(n, cin, rbuf, flags);
                break;
        }
        fftw_free(cin);
        fftw_free(cout);
        fftw_free(rbuf);
        if (plan == nullptr) throw Error(ErrorKind::Shape, "FFTW could not plan size " + std::to_string(n));
        plans_.emplace(key, plan);
        return plan;
    }

    PlanCache(const PlanCache&) = delete;
    PlanCache& operator=(const PlanCache&) = delete;

    ~PlanCache() {
        for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
    }

private:
    PlanCache() = default;

    std::mutex mutex_;
    std::map<std::pair<PlanKind, int>, fftw_plan> plans_;
};

inline fftw_complex* as_fftw(cd* p) { return reinterpret_cast<fftw_complex*>(p); }

}  // namespace detail

/// Unnormalized forward DFT, X[k] = sum_n x[n] e^{-i 2 pi k n / N}.
inline std::vector<cd> forward(std::span<const cd> x) {
    const int n = static_cast<int>(x.size());
    require(n > 0, ErrorKind::Shape, "fft of empty sequence");
    std::vector<cd> in(x.begin(), x.end());
    std::vector<cd> out(x.size());
    auto plan = detail::PlanCache::instance().get(detail::PlanKind::Forward, n);
    fftw_execute_dft(plan, detail::as_fftw(in.data()), detail::as_fftw(out.data()));
    return out;
}

/// Inverse DFT including the 1/N factor.
inline std::vector<cd> inverse(std::span<const cd> x) {
    const int n = static_cast<int>(x.size());
    require(n > 0, ErrorKind::Shape, "ifft of empty sequence");
    std::vector<cd> in(x.begin(), x.end());
    std::vector<cd> out(x.size());
    auto plan = detail::PlanCache::instance().get(detail::PlanKind::Backward, n);
    fftw_execute_dft(plan, detail::as_fftw(in.data()), detail::as_fftw(out.data()));
    const double scale = 1.0 / n;
    for (auto& v : out) v *= scale;
    return out;
}

/// Real-input forward DFT; returns the n/2+1 non-negative frequency bins.
inline std::vector<cd> real_forward(std::span<const double> x) {
    const int n = static_cast<int>(x.size());
    require(n > 0, ErrorKind::Shape, "rfft of empty sequence");
    std::vector<double> in(x.begin(), x.end());
    std::vector<cd> out(static_cast<std::size_t>(n / 2 + 1));
    auto plan = detail::PlanCache::instance().get(detail::PlanKind::RealForward, n);
    fftw_execute_dft_r2c(plan, in.data(), detail::as_fftw(out.data()));
    return out;
}

/// Unnormalized half-spectrum synthesis:
/// out[m] = X0 + X_{n/2}(-1)^m + 2 Re sum_{0<k<n/2} X_k e^{i 2 pi k m / n}
/// (imaginary parts of the DC and Nyquist bins are ignored).
inline void real_backward_raw(std::span<const cd> half, std::span<double> out) {
    const int n = static_cast<int>(out.size());
    require(n > 0 && half.size() == static_cast<std::size_t>(n / 2 + 1), ErrorKind::Shape,
            "irfft size mismatch");
    std::vector<cd> in(half.begin(), half.end());
    auto plan = detail::PlanCache::instance().get(detail::PlanKind::RealBackward, n);
    fftw_execute_dft_c2r(plan, detail::as_fftw(in.data()), out.data());
}

}  // namespace lipsam::fft
