#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "support.hpp"

using namespace lipsam;
using Catch::Approx;
using oracle::cd;

namespace {

constexpr ModifierKind kAllKinds[] = {ModifierKind::AM_SE, ModifierKind::AM_RE, ModifierKind::LipsAM_SE,
                                      ModifierKind::LipsAM_RE};

Spectrogram spec_from(const std::vector<cd>& v, std::size_t bins, std::size_t frames) {
    Spectrogram s(bins, frames);
    s.values = v;
    return s;
}

// Small certified Conv1D inner map over a bins x frames grid; bias on so outputs can go negative.
AmplitudeMap certified_net(std::size_t bins, double target, std::uint64_t seed) {
    auto net = make_conv1d_net(static_cast<int>(bins), 6, static_cast<int>(bins), 3, 2, Activation::leaky_relu(0.1),
                               true);
    std::mt19937_64 rng(seed);
    randomize(net, rng, 1.5, 0.7);
    spectral_normalize_all(net, 1, 8, target, 300, seed);
    return AmplitudeMap(NetMap{net, InputLayout::ChannelsAreBins});
}

double quotient(const ModifierArchitecture& arch, const Spectrogram& z, const Spectrogram& w) {
    const auto dz = arch.apply(z), dw = arch.apply(w);
    double num = 0.0, den = 0.0;
    for (std::size_t n = 0; n < z.size(); ++n) {
        num += std::norm(dz.values[n] - dw.values[n]);
        den += std::norm(z.values[n] - w.values[n]);
    }
    return std::sqrt(num / den);
}

}  // namespace

TEST_CASE("complex sign") {
    const auto a = complex_sign(cd(3, 4));
    CHECK(a.real() == Approx(0.6).margin(1e-15));
    CHECK(a.imag() == Approx(0.8).margin(1e-15));
    const auto z = complex_sign(cd(0, 0));
    CHECK(z.real() == 0.0);
    CHECK(z.imag() == 0.0);
    CHECK(complex_sign(cd(-2, 0)) == cd(-1, 0));
    for (const auto& v : oracle::random_complex(200, 3)) CHECK(std::abs(complex_sign(v)) == Approx(1.0).epsilon(1e-14));
}

TEST_CASE("apply: closed-form examples") {
    const auto z = oracle::random_complex(12, 11);
    const auto s = spec_from(z, 3, 4);

    SECTION("LipsAM-SE with identity inner is the identity") {
        const auto out = ModifierArchitecture(ModifierKind::LipsAM_SE, AmplitudeMap(IdentityMap{})).apply(s);
        CHECK(oracle::max_abs_diff(out.values, s.values) < 1e-14);
    }
    SECTION("LipsAM-RE with zero inner is the identity") {
        const auto out = ModifierArchitecture(ModifierKind::LipsAM_RE, AmplitudeMap(ZeroMap{})).apply(s);
        CHECK(oracle::max_abs_diff(out.values, s.values) < 1e-14);
        CHECK(oracle::max_abs_diff(ModifierArchitecture::identity().apply(s).values, s.values) < 1e-14);
    }
    SECTION("soft threshold") {
        const auto out = ModifierArchitecture::soft_threshold(1.0).apply(spec_from({cd(3, 4)}, 1, 1));
        CHECK(out.values[0].real() == Approx(2.4).epsilon(1e-14));
        CHECK(out.values[0].imag() == Approx(3.2).epsilon(1e-14));
        const auto small = ModifierArchitecture::soft_threshold(1.0).apply(spec_from({cd(0.3, -0.4)}, 1, 1));
        CHECK(small.values[0] == cd(0, 0));
    }
    SECTION("bias-add pair near the origin") {
        const double eps = 1e-3;
        const ModifierArchitecture arch(ModifierKind::AM_SE, AmplitudeMap(BiasAdd{1.0}));
        const auto a = spec_from({cd(eps, 0)}, 1, 1), b = spec_from({cd(-eps, 0)}, 1, 1);
        const double diff = std::abs(arch.apply(a).values[0] - arch.apply(b).values[0]);
        CHECK(diff == Approx(2.0 * (1.0 + eps)).epsilon(1e-12));
        CHECK(quotient(arch, a, b) == Approx(1001.0).epsilon(1e-9));
    }
}

TEST_CASE("apply: zero coordinates map to exactly zero for every kind") {
    auto z = oracle::random_complex(8, 5);
    z[2] = cd(0, 0);
    z[5] = cd(0, 0);
    for (auto kind : kAllKinds) {
        for (const auto& inner : {AmplitudeMap(BiasAdd{2.0}), AmplitudeMap(IdentityMap{}), AmplitudeMap(ZeroMap{})}) {
            const auto out = ModifierArchitecture(kind, inner).apply(spec_from(z, 2, 4));
            CHECK(out.values[2] == cd(0, 0));
            CHECK(out.values[5] == cd(0, 0));
        }
    }
}

TEST_CASE("apply: errors") {
    const auto inner = certified_net(3, 1.0, 4);
    const ModifierArchitecture arch(ModifierKind::LipsAM_SE, inner);
    CHECK_THROWS_AS(arch.apply(spec_from(oracle::random_complex(8, 1), 2, 4)), Error);

    auto poisoned = arch;
    poisoned.mutable_inner().net()->layers[0].weights[0] = std::numeric_limits<double>::quiet_NaN();
    try {
        poisoned.apply(spec_from(oracle::random_complex(24, 2), 3, 8));
        FAIL("expected a poisoned-output error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Poisoned);
    }

    const ModifierArchitecture perm(ModifierKind::AM_SE, AmplitudeMap(Permutation{{1, 0}}));
    CHECK_THROWS_AS(perm.apply(spec_from(oracle::random_complex(3, 1), 1, 3)), Error);
    CHECK_THROWS_AS(AmplitudeMap(Permutation{{0, 0}}), Error);
    CHECK_THROWS_AS(AmplitudeMap(Permutation{{0, 2}}), Error);
    CHECK_THROWS_AS(AmplitudeMap(SoftThreshConstant{-0.1}), Error);
}

TEST_CASE("amplitude part: examples") {
    const std::vector<double> x{1.0, 2.0};
    auto a = ModifierArchitecture(ModifierKind::LipsAM_SE, AmplitudeMap(BiasAdd{10.0})).amplitude_part(x);
    CHECK(a == std::vector<double>{1.0, 2.0});

    // Residual R(x) = -5 realized by a single-layer net with zero weights and bias -5.
    auto net = make_conv1d_net(1, 1, 1, 1, 1, Activation::identity(), true);
    net.layers[0].bias[0] = -5.0;
    a = ModifierArchitecture(ModifierKind::LipsAM_RE, AmplitudeMap(NetMap{net, InputLayout::ChannelsAreBins}))
            .amplitude_part(x, Grid{1, 2});
    CHECK(a == std::vector<double>{1.0, 2.0});

    a = ModifierArchitecture(ModifierKind::AM_SE, AmplitudeMap(BiasAdd{1.0})).amplitude_part(std::vector<double>{0, 0});
    CHECK(a == std::vector<double>{1.0, 1.0});

    CHECK_THROWS_AS(ModifierArchitecture(ModifierKind::AM_RE, AmplitudeMap(ZeroMap{}))
                        .amplitude_part(std::vector<double>{1.0, -1e-12}),
                    Error);
}

TEST_CASE("amplitude part: formulas against a direct evaluation") {
    const auto inner = certified_net(3, 2.0, 9);
    const Grid grid{3, 8};
    for (int trial = 0; trial < 50; ++trial) {
        auto x = oracle::random_vector(grid.size(), 100 + trial);
        for (auto& v : x) v = std::abs(v);
        const auto s = inner.evaluate(x, grid);
        for (auto kind : kAllKinds) {
            const auto a = ModifierArchitecture(kind, inner).amplitude_part(x, grid);
            for (std::size_t n = 0; n < x.size(); ++n) {
                double want = 0.0;
                switch (kind) {
                    case ModifierKind::AM_SE: want = s[n] > 0 ? s[n] : 0.0; break;
                    case ModifierKind::AM_RE: want = x[n] - s[n] > 0 ? x[n] - s[n] : 0.0; break;
                    case ModifierKind::LipsAM_SE: {
                        const double m = s[n] < x[n] ? s[n] : x[n];
                        want = m > 0 ? m : 0.0;
                        break;
                    }
                    case ModifierKind::LipsAM_RE: {
                        const double r = s[n] > 0 ? s[n] : 0.0;
                        want = x[n] - r > 0 ? x[n] - r : 0.0;
                        break;
                    }
                }
                CHECK(a[n] == want);
                CHECK(a[n] >= 0.0);
            }
        }
    }
}

TEST_CASE("safeguard dominance: Lips variants never exceed their input") {
    const auto inner = certified_net(4, 4.0, 21);
    const Grid grid{4, 8};
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> uni(0.0, 3.0);
    for (int trial = 0; trial < 400; ++trial) {
        std::vector<double> x(grid.size());
        for (auto& v : x) v = trial % 4 == 0 ? 1e-6 * uni(rng) : uni(rng);
        for (auto kind : {ModifierKind::LipsAM_SE, ModifierKind::LipsAM_RE}) {
            const auto a = ModifierArchitecture(kind, inner).amplitude_part(x, grid);
            for (std::size_t n = 0; n < x.size(); ++n) REQUIRE(a[n] <= x[n]);
        }
    }
}

TEST_CASE("phase preservation") {
    const auto inner = certified_net(3, 2.0, 31);
    for (int trial = 0; trial < 30; ++trial) {
        const auto z = spec_from(oracle::random_complex(24, 500 + trial), 3, 8);
        for (auto kind : kAllKinds) {
            const auto out = ModifierArchitecture(kind, inner).apply(z);
            for (std::size_t n = 0; n < z.size(); ++n) {
                if (std::abs(out.values[n]) == 0.0) continue;
                double d = std::arg(out.values[n]) - std::arg(z.values[n]);
                d = std::remainder(d, 2.0 * std::numbers::pi);
                CHECK(std::abs(d) < 1e-12);
            }
        }
    }
}

TEST_CASE("polar expansion of the output difference") {
    const auto inner = certified_net(3, 3.0, 41);
    for (int trial = 0; trial < 100; ++trial) {
        const auto z = spec_from(oracle::random_complex(24, 900 + trial), 3, 8);
        const auto w = spec_from(oracle::random_complex(24, 2900 + trial), 3, 8);
        for (auto kind : kAllKinds) {
            const ModifierArchitecture arch(kind, inner);
            const auto dz = arch.apply(z), dw = arch.apply(w);
            std::vector<double> x(24), y(24);
            for (std::size_t n = 0; n < 24; ++n) {
                x[n] = std::abs(z.values[n]);
                y[n] = std::abs(w.values[n]);
            }
            const auto ax = arch.amplitude_part(x, Grid{3, 8}), ay = arch.amplitude_part(y, Grid{3, 8});
            double lhs = 0.0, rhs = 0.0;
            for (std::size_t n = 0; n < 24; ++n) {
                lhs += std::norm(dz.values[n] - dw.values[n]);
                const double dphi = std::arg(z.values[n]) - std::arg(w.values[n]);
                rhs += (ax[n] - ay[n]) * (ax[n] - ay[n]) + 2.0 * ax[n] * ay[n] * (1.0 - std::cos(dphi));
            }
            CHECK(lhs == Approx(rhs).epsilon(1e-9));
        }
    }
}

TEST_CASE("assumption check") {
    const auto inner = certified_net(2, 5.0, 51);
    for (auto kind : {ModifierKind::LipsAM_SE, ModifierKind::LipsAM_RE}) {
        for (const auto& m : {inner, AmplitudeMap(BiasAdd{3.0}), AmplitudeMap(BiasAdd{-3.0}), AmplitudeMap(ZeroMap{})}) {
            const auto rep = check_assumption1(ModifierArchitecture(kind, m), 1.0, 200, 7, Grid{2, 8});
            CHECK(rep.cond2_holds);
            CHECK(rep.worst_ratio <= 1.0);
        }
    }
    const auto bad = check_assumption1(ModifierArchitecture(ModifierKind::AM_SE, AmplitudeMap(BiasAdd{1.0})), 1e6,
                                       100, 7);
    CHECK_FALSE(bad.cond2_holds);
    REQUIRE_FALSE(bad.witnesses.empty());
    bool near_zero = false;
    for (double v : bad.witnesses.back()) near_zero = near_zero || v < 1e-6 * 1e6;
    CHECK(near_zero);

    // Empirical L1 of an identity-like map is 1.
    const auto id = check_assumption1(ModifierArchitecture::identity(), 1.0, 50, 3);
    CHECK(id.cond1_empirical_L == Approx(1.0).epsilon(1e-9));
    CHECK_THROWS_AS(check_assumption1(ModifierArchitecture::identity(), -1.0, 5, 1), Error);
    CHECK_THROWS_AS(check_assumption1(ModifierArchitecture::identity(), 1.0, 0, 1), Error);
}

TEST_CASE("theoretical bound") {
    auto with_cert = [](ModifierKind kind, double c) {
        auto net = make_conv1d_net(1, 1, 1, 1, 1, Activation::identity(), false);
        net.layers[0].weights[0] = c;
        net.layers[0].norm_certificate = c;
        return theoretical_bound(ModifierArchitecture(kind, AmplitudeMap(NetMap{net, InputLayout::ChannelsAreBins})));
    };
    CHECK(with_cert(ModifierKind::LipsAM_SE, 1.0) == Approx(1.41421356).epsilon(1e-8));
    CHECK(with_cert(ModifierKind::LipsAM_RE, 1.0) == Approx(2.0).epsilon(1e-12));
    CHECK(with_cert(ModifierKind::LipsAM_SE, 2.0) == Approx(2.23606798).epsilon(1e-8));
    CHECK(with_cert(ModifierKind::LipsAM_RE, 4.0) == Approx(5.0).epsilon(1e-12));

    for (auto kind : {ModifierKind::AM_SE, ModifierKind::AM_RE}) {
        try {
            theoretical_bound(ModifierArchitecture(kind, AmplitudeMap(IdentityMap{})));
            FAIL("expected an unbounded error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Unbounded);
        }
    }
    auto uncert = make_conv1d_net(1, 1, 1, 1, 1, Activation::identity(), false);
    CHECK_THROWS_AS(theoretical_bound(ModifierArchitecture(ModifierKind::LipsAM_SE,
                                                           AmplitudeMap(NetMap{uncert, InputLayout::ChannelsAreBins}))),
                    Error);
    CHECK(theorem1_bound(1.5, 1.0) == 1.5);
}

TEST_CASE("bound soundness on random pairs") {
    for (double target : {0.5, 1.0, 2.0, 4.0}) {
        const auto inner = certified_net(3, target, static_cast<std::uint64_t>(target * 10));
        for (auto kind : {ModifierKind::LipsAM_SE, ModifierKind::LipsAM_RE}) {
            const ModifierArchitecture arch(kind, inner);
            const double bound = theoretical_bound(arch);
            double worst = 0.0;
            for (int p = 0; p < 1000; ++p) {
                const auto z = spec_from(oracle::random_complex(24, 10000 + p), 3, 8);
                auto w = z;
                const double scale = p % 3 == 0 ? 1e-3 : 1.0;
                const auto d = oracle::random_complex(24, 20000 + p, scale);
                for (std::size_t n = 0; n < 24; ++n) w.values[n] += d[n];
                worst = std::max(worst, quotient(arch, z, w));
            }
            CHECK(worst <= bound + 1e-9);
        }
    }
}

TEST_CASE("unbounded witness for the bias-add modifier") {
    const ModifierArchitecture arch(ModifierKind::AM_SE, AmplitudeMap(BiasAdd{1.0}));
    for (double L : {10.0, 1e3, 1e6}) {
        const double eps = 0.5 / L;
        const double q = quotient(arch, spec_from({cd(eps, 0)}, 1, 1), spec_from({cd(-eps, 0)}, 1, 1));
        CHECK(q > L);
    }
}

TEST_CASE("swapping the wrapper keeps the inner map") {
    const auto inner = certified_net(3, 1.0, 61);
    const ModifierArchitecture se(ModifierKind::AM_SE, inner);
    const auto lips = se.with_kind(ModifierKind::LipsAM_SE);
    CHECK(lips.kind() == ModifierKind::LipsAM_SE);
    CHECK(fingerprint(*lips.inner().net()) == fingerprint(*se.inner().net()));
    CHECK(modifier_kind_from_string("LipsAM-RE") == ModifierKind::LipsAM_RE);
    CHECK(modifier_kind_from_string("am_se") == ModifierKind::AM_SE);
    CHECK_THROWS_AS(modifier_kind_from_string("mask"), Error);
}

TEST_CASE("amplitude jacobian against finite differences") {
    const auto inner = certified_net(3, 2.0, 71);
    const Grid grid{3, 8};
    for (int trial = 0; trial < 10; ++trial) {
        auto x = oracle::random_vector(grid.size(), 300 + trial);
        for (auto& v : x) v = 0.2 + std::abs(v);
        for (auto kind : kAllKinds) {
            const ModifierArchitecture arch(kind, inner);
            const auto J = arch.amplitude_jacobian(x, grid);
            const double h = 1e-6;
            Eigen::MatrixXd fd(24, 24);
            for (std::size_t j = 0; j < 24; ++j) {
                auto xp = x, xm = x;
                xp[j] += h;
                xm[j] -= h;
                const auto ap = arch.amplitude_part(xp, grid), am = arch.amplitude_part(xm, grid);
                for (std::size_t i = 0; i < 24; ++i)
                    fd(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (ap[i] - am[i]) / (2 * h);
            }
            // A kink inside the stencil can spoil a column; allow only a handful.
            int bad = 0;
            for (Eigen::Index j = 0; j < 24; ++j)
                if ((J.col(j) - fd.col(j)).lpNorm<Eigen::Infinity>() > 1e-5) ++bad;
            CHECK(bad <= 2);
        }
    }
}
