#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"

namespace lipsam {

inline constexpr int kPowerBlockSize = 4;

/// Largest singular value of a linear map A: R^n -> R^m, given A and A^T as
/// callables (in, out). Block power iteration on A^T A (block of up to four
/// vectors, re-orthonormalized every step) read out by Rayleigh-Ritz, so
/// near-equal leading singular values do not stall convergence.
/// `warm_start` seeds the block when its size matches and receives the final block.
template <class Apply, class ApplyT>
double block_power_norm(Apply&& apply, ApplyT&& apply_t, std::size_t n, std::size_t m, int iterations,
                        std::uint64_t seed, std::vector<double>* warm_start = nullptr) {
    require(iterations >= 1, ErrorKind::Domain, "power iteration needs at least one iteration");
    if (n == 0 || m == 0) return 0.0;
    const auto rows = static_cast<Eigen::Index>(n);
    const auto b = static_cast<Eigen::Index>(std::min<std::size_t>(kPowerBlockSize, n));
    Eigen::MatrixXd V(rows, b);
    if (warm_start && warm_start->size() == n * static_cast<std::size_t>(b)) {
        V = Eigen::Map<const Eigen::MatrixXd>(warm_start->data(), rows, b);
    } else {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        for (Eigen::Index j = 0; j < b; ++j)
            for (Eigen::Index i = 0; i < rows; ++i) V(i, j) = normal(rng);
    }
    Eigen::MatrixXd Y(rows, b);
    Eigen::MatrixXd AV(static_cast<Eigen::Index>(m), b);

    auto orthonormalize = [&](Eigen::MatrixXd& M) {
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(M);
        M = qr.householderQ() * Eigen::MatrixXd::Identity(rows, b);
    };
    auto apply_block = [&](const Eigen::MatrixXd& in) {
        for (Eigen::Index j = 0; j < b; ++j)
            apply(std::span<const double>(in.col(j).data(), n), std::span<double>(AV.col(j).data(), m));
    };

    orthonormalize(V);
    for (int it = 0; it < iterations; ++it) {
        apply_block(V);
        for (Eigen::Index j = 0; j < b; ++j)
            apply_t(std::span<const double>(AV.col(j).data(), m), std::span<double>(Y.col(j).data(), n));
        if (Y.norm() == 0.0) return 0.0;
        V = Y;
        orthonormalize(V);
    }
    apply_block(V);
    const Eigen::MatrixXd gram = AV.transpose() * AV;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram, Eigen::EigenvaluesOnly);
    if (warm_start) warm_start->assign(V.data(), V.data() + V.size());
    return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

}  // namespace lipsam
