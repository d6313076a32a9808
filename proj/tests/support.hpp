#pragma once

// Test-side oracles: dense matrices built from definitions, with no calls
// into the FFT paths they check.

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "lipsam/lipsam.hpp"

namespace oracle {

using cd = std::complex<double>;

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double sd = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, sd);
    std::vector<double> v(n);
    for (auto& x : v) x = normal(rng);
    return v;
}

inline std::vector<cd> random_complex(std::size_t n, std::uint64_t seed, double sd = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, sd);
    std::vector<cd> v(n);
    for (auto& x : v) x = cd(normal(rng), normal(rng));
    return v;
}

inline lipsam::TimeSignal random_signal(std::size_t n, std::uint64_t seed) {
    return lipsam::TimeSignal(random_vector(n, seed));
}

/// Explicit circulant H with H[i][j] = h[(i - j) mod T].
inline Eigen::MatrixXd circulant(const std::vector<double>& h) {
    const auto T = static_cast<Eigen::Index>(h.size());
    Eigen::MatrixXd H(T, T);
    for (Eigen::Index i = 0; i < T; ++i)
        for (Eigen::Index j = 0; j < T; ++j) H(i, j) = h[static_cast<std::size_t>(((i - j) % T + T) % T)];
    return H;
}

/// Explicit STFT matrix (rows ordered bin-major, like Spectrogram::values),
/// built by direct DFT sums from the window.
inline Eigen::MatrixXcd stft_matrix(const lipsam::StftConfig& cfg, std::size_t T) {
    const std::size_t L = cfg.window_length, K = L / 2 + 1, F = T / cfg.hop;
    Eigen::MatrixXcd G = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(K * F), static_cast<Eigen::Index>(T));
    for (std::size_t k = 0; k < K; ++k) {
        const double c = (k == 0 || 2 * k == L) ? 1.0 : std::sqrt(2.0);
        for (std::size_t f = 0; f < F; ++f)
            for (std::size_t n = 0; n < L; ++n) {
                const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * n) / static_cast<double>(L);
                G(static_cast<Eigen::Index>(k * F + f), static_cast<Eigen::Index>((f * cfg.hop + n) % T)) +=
                    c / std::sqrt(static_cast<double>(L)) * cfg.window[n] * cd(std::cos(ang), std::sin(ang));
            }
    }
    return G;
}

/// Real-linear adjoint: x = Re(G^H v).
inline Eigen::VectorXd stft_adjoint(const Eigen::MatrixXcd& G, const std::vector<cd>& v) {
    Eigen::VectorXcd vv(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) vv(static_cast<Eigen::Index>(i)) = v[i];
    return (G.adjoint() * vv).real();
}

inline Eigen::VectorXd to_eigen(std::span<const double> v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
    return out;
}

inline std::vector<cd> to_std(const Eigen::VectorXcd& v) { return {v.data(), v.data() + v.size()}; }

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline double max_abs_diff(std::span<const cd> a, std::span<const cd> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline double rel_err(double got, double want) { return std::abs(got - want) / std::max(std::abs(want), 1e-300); }

}  // namespace oracle
