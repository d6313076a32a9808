#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "support.hpp"

using namespace lipsam;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected lipsam::Error");
    return ErrorKind::Usage;
}

}  // namespace

TEST_CASE("TimeSignal rejects empty and non-finite samples", "[signal]") {
    CHECK(kind_of([] { TimeSignal(std::vector<double>{}); }) == ErrorKind::Shape);
    CHECK(kind_of([] { TimeSignal({1.0, std::nan("")}); }) == ErrorKind::Poisoned);
    CHECK(kind_of([] { TimeSignal({1.0, INFINITY}); }) == ErrorKind::Poisoned);
    TimeSignal s({1.0, 2.0});
    CHECK(s.sample_rate() == 8000.0);
}

TEST_CASE("make_tight_window", "[signal]") {
    SECTION("rectangular length 4 hop 2 gives 1/sqrt2") {
        const auto w = make_tight_window(std::vector<double>(4, 1.0), 2);
        for (double v : w) CHECK_THAT(v, WithinAbs(1.0 / std::sqrt(2.0), 1e-15));
    }
    SECTION("Hann 512 / 256 shifted squares sum to one") {
        const auto cfg = StftConfig::tight_hann(512, 256);
        for (std::size_t n = 0; n < 256; ++n) {
            const double s = cfg.window[n] * cfg.window[n] + cfg.window[n + 256] * cfg.window[n + 256];
            CHECK_THAT(s, WithinAbs(1.0, 1e-12));
        }
    }
    SECTION("Hann without overlap vanishes at the edge") {
        CHECK(kind_of([] { StftConfig::tight_hann(512, 512); }) == ErrorKind::InvalidWindow);
    }
    SECTION("hop must divide the length") {
        CHECK(kind_of([] { make_tight_window(std::vector<double>(10, 1.0), 3); }) == ErrorKind::InvalidWindow);
    }
}

TEST_CASE("StftConfig validation", "[signal]") {
    auto cfg = StftConfig::tight_hann(16, 8);
    CHECK_NOTHROW(cfg.validate());
    cfg.window[3] *= 1.01;
    CHECK(kind_of([&] { cfg.validate(); }) == ErrorKind::InvalidWindow);
}

TEST_CASE("stft matches the dense definition", "[signal][oracle]") {
    const auto cfg = StftConfig::tight_hann(16, 8);
    const std::size_t T = 64;
    const auto G = oracle::stft_matrix(cfg, T);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto x = oracle::random_signal(T, seed);
        const auto spec = stft(x, cfg);
        REQUIRE(spec.bins == 9);
        REQUIRE(spec.frames == 8);
        const Eigen::VectorXcd ref = G * oracle::to_eigen(x.samples()).cast<std::complex<double>>();
        CHECK(oracle::max_abs_diff(std::span<const cd>(spec.values), std::span<const cd>(oracle::to_std(ref))) < 1e-12);

        const auto v = oracle::random_complex(spec.size(), 100 + seed);
        Spectrogram sv(spec.bins, spec.frames);
        sv.values = v;
        const auto back = istft(sv, cfg);
        const Eigen::VectorXd ref_back = oracle::stft_adjoint(G, v);
        CHECK(oracle::max_abs_diff(back.samples(), std::span<const double>(ref_back.data(), ref_back.size())) < 1e-12);
    }
}

TEST_CASE("stft basic cases", "[signal]") {
    const auto cfg = StftConfig::tight_hann(512, 256);
    SECTION("zero signal") {
        const auto s = stft(TimeSignal::zeros(1024), cfg);
        for (const auto& v : s.values) CHECK(v == cd(0.0, 0.0));
        const auto back = istft(s, cfg);
        for (double v : back.samples()) CHECK(v == 0.0);
    }
    SECTION("impulse under a rectangular tight window") {
        StftConfig rect{8, 4, make_tight_window(std::vector<double>(8, 1.0), 4)};
        std::vector<double> x(16, 0.0);
        x[0] = 1.0;
        const auto s = stft(TimeSignal(x), rect);
        // frame 0 sees delta at n = 0: every bin equals c_k w[0] / sqrt(L)
        for (std::size_t k = 0; k < s.bins; ++k) {
            const double c = (k == 0 || k == 4) ? 1.0 : std::sqrt(2.0);
            CHECK_THAT(s.at(k, 0).real(), WithinAbs(c * rect.window[0] / std::sqrt(8.0), 1e-15));
            CHECK_THAT(s.at(k, 0).imag(), WithinAbs(0.0, 1e-15));
        }
    }
    SECTION("length not a multiple of hop") {
        CHECK(kind_of([&] { stft(TimeSignal::zeros(1000), cfg); }) == ErrorKind::Shape);
        const auto s = stft(TimeSignal::zeros(1000), cfg, Padding::ZeroPad);
        CHECK(s.frames == 4);
    }
    SECTION("istft rejects a foreign spectrogram") {
        auto s = stft(TimeSignal::zeros(1024), cfg);
        const auto other = StftConfig::tight_hann(256, 128);
        CHECK(kind_of([&] { istft(s, other); }) == ErrorKind::Shape);
    }
}

TEST_CASE("tight frame: round trip and Parseval", "[signal][property]") {
    const auto cfg = StftConfig::tight_hann(512, 256);
    double worst = 0.0, worst_energy = 0.0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const std::size_t T = seed % 2 ? 1024 : 4096;
        const auto x = oracle::random_signal(T, seed);
        const auto s = stft(x, cfg);
        const auto y = istft(s, cfg);
        worst = std::max(worst, oracle::max_abs_diff(x.samples(), y.samples()));
        worst_energy = std::max(worst_energy, oracle::rel_err(norm2(std::span<const cd>(s.values)), norm2(x.samples())));
    }
    CHECK(worst < 1e-10);
    CHECK(worst_energy < 1e-9);
}

TEST_CASE("G G^H is a projection", "[signal][property]") {
    const auto cfg = StftConfig::tight_hann(512, 256);
    Spectrogram v(cfg.bins(), 8);
    v.values = oracle::random_complex(v.size(), 7);
    const auto p1 = stft(istft(v, cfg), cfg);
    const auto p2 = stft(istft(p1, cfg), cfg);
    CHECK(norm2(std::span<const cd>((p2 - p1).values)) < 1e-9);
}

TEST_CASE("stft is linear", "[signal][property]") {
    const auto cfg = StftConfig::tight_hann(512, 256);
    const auto x = oracle::random_signal(2048, 1), y = oracle::random_signal(2048, 2);
    const double a = 0.7, b = -2.3;
    std::vector<double> comb(2048);
    for (std::size_t i = 0; i < comb.size(); ++i) comb[i] = a * x[i] + b * y[i];
    const auto lhs = stft(TimeSignal(comb), cfg);
    const auto sx = stft(x, cfg), sy = stft(y, cfg);
    double err = 0.0;
    for (std::size_t i = 0; i < lhs.size(); ++i) err = std::max(err, std::abs(lhs.values[i] - (a * sx.values[i] + b * sy.values[i])));
    CHECK(err < 1e-10);
}

TEST_CASE("circular convolution", "[signal]") {
    SECTION("identity kernel and impulse input") {
        const auto x = oracle::random_signal(64, 3), h = oracle::random_signal(64, 4);
        std::vector<double> d(64, 0.0);
        d[0] = 1.0;
        CHECK(oracle::max_abs_diff(circular_convolve(x, TimeSignal(d)).samples(), x.samples()) < 1e-12);
        CHECK(oracle::max_abs_diff(circular_convolve(TimeSignal(d), h).samples(), h.samples()) < 1e-12);
    }
    SECTION("dense circulant oracle and commutativity") {
        for (std::size_t T : {16u, 64u, 128u}) {
            const auto x = oracle::random_signal(T, T), h = oracle::random_signal(T, T + 1);
            const Eigen::MatrixXd H = oracle::circulant(h.vector());
            const Eigen::VectorXd ref = H * oracle::to_eigen(x.samples());
            const auto got = circular_convolve(x, h);
            CHECK(oracle::max_abs_diff(got.samples(), std::span<const double>(ref.data(), ref.size())) < 1e-10);
            CHECK(oracle::max_abs_diff(got.samples(), circular_convolve(h, x).samples()) < 1e-10);
            const Eigen::VectorXd reft = H.transpose() * oracle::to_eigen(x.samples());
            CHECK(oracle::max_abs_diff(circular_correlate(x, h).samples(),
                                       std::span<const double>(reft.data(), reft.size())) < 1e-10);
        }
    }
    SECTION("length mismatch") {
        CHECK(kind_of([] { circular_convolve(TimeSignal::zeros(4), TimeSignal::zeros(5)); }) == ErrorKind::Shape);
    }
}

TEST_CASE("si_snr", "[signal]") {
    const auto r = oracle::random_signal(1000, 11);
    SECTION("exact and scaled copies saturate") {
        CHECK(si_snr(r, r) == kMetricCapDb);
        std::vector<double> twice(r.size());
        for (std::size_t i = 0; i < r.size(); ++i) twice[i] = 2.0 * r[i];
        CHECK(si_snr(TimeSignal(twice), r) == kMetricCapDb);
    }
    SECTION("orthogonal noise at one tenth the norm gives 20 dB") {
        auto n = oracle::random_vector(1000, 12);
        const double proj = dot(n, r.samples()) / energy(r.samples());
        for (std::size_t i = 0; i < n.size(); ++i) n[i] -= proj * r[i];
        const double scale = norm2(r.samples()) / 10.0 / norm2(n);
        std::vector<double> e(1000);
        for (std::size_t i = 0; i < e.size(); ++i) e[i] = r[i] + scale * n[i];
        CHECK_THAT(si_snr(TimeSignal(e), r), WithinAbs(20.0, 1e-6));
    }
    SECTION("invariant to reference scaling") {
        const auto e = oracle::random_signal(1000, 13);
        std::vector<double> cr(1000);
        for (std::size_t i = 0; i < cr.size(); ++i) cr[i] = -3.5 * r[i];
        CHECK(si_snr(e, r) == Catch::Approx(si_snr(e, TimeSignal(cr))).epsilon(1e-13));
    }
    SECTION("zero reference") {
        CHECK(kind_of([&] { si_snr(r, TimeSignal::zeros(1000)); }) == ErrorKind::UndefinedMetric);
    }
}

TEST_CASE("add_noise_at_snr", "[signal]") {
    const auto s = oracle::random_signal(4096, 21);
    const auto n0 = add_noise_at_snr(s, 0.0, 5);
    CHECK_THAT(norm2(subtract(n0.samples(), s.samples())), WithinRel(norm2(s.samples()), 1e-12));
    CHECK_THAT(snr_db(add_noise_at_snr(s, 30.0, 6), s), WithinAbs(30.0, 1e-9));
    CHECK(add_noise_at_snr(s, 25.0, 9).vector() == add_noise_at_snr(s, 25.0, 9).vector());
    CHECK(kind_of([] { add_noise_at_snr(TimeSignal::zeros(8), 10.0, 1); }) == ErrorKind::UndefinedMetric);
}

TEST_CASE("wav round trip", "[signal][wav]") {
    const auto dir = std::filesystem::temp_directory_path();
    std::vector<double> v(800);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.5 * std::sin(0.01 * static_cast<double>(i));
    const TimeSignal s(v, 16000.0);
    SECTION("float32") {
        const auto path = (dir / "lipsam_test_f32.wav").string();
        wav::write(path, s, wav::SampleFormat::Float32);
        const auto r = wav::read(path);
        CHECK(r.sample_rate() == 16000.0);
        CHECK(oracle::max_abs_diff(r.samples(), s.samples()) < 1e-7);
        std::filesystem::remove(path);
    }
    SECTION("pcm16") {
        const auto r = wav::decode(wav::encode(s));
        CHECK(oracle::max_abs_diff(r.samples(), s.samples()) < 1.0 / 32767.0);
    }
    SECTION("garbage is a format error") {
        CHECK(kind_of([] { wav::decode({'n', 'o', 'p', 'e'}); }) == ErrorKind::Format);
    }
}
