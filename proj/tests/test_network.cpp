#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstring>

#include <zlib.h>

#include "support.hpp"

using namespace lipsam;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// Direct-summation oracle for one layer, no shift tables.
std::vector<double> layer_oracle(const ConvLayer& l, const FeatureShape& s, const std::vector<double>& in) {
    const int H = s.height, W = s.width;
    std::vector<double> out(static_cast<std::size_t>(l.out_channels) * H * W, 0.0);
    for (int o = 0; o < l.out_channels; ++o)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                double acc = l.has_bias() ? l.bias[static_cast<std::size_t>(o)] : 0.0;
                for (int i = 0; i < l.in_channels; ++i)
                    for (int dy = 0; dy < l.kernel_h; ++dy)
                        for (int dx = 0; dx < l.kernel_w; ++dx) {
                            const int yy = ((y + dy - l.kernel_h / 2) % H + H) % H;
                            const int xx = ((x + dx - l.kernel_w / 2) % W + W) % W;
                            acc += l.w(o, i, dy, dx) * in[(static_cast<std::size_t>(i) * H + yy) * W + xx];
                        }
                out[(static_cast<std::size_t>(o) * H + y) * W + x] = l.activation(acc);
            }
    return out;
}

std::vector<double> net_oracle(const ConvNet& net, FeatureShape s, std::vector<double> x) {
    for (const auto& l : net.layers) {
        x = layer_oracle(l, s, x);
        s.channels = l.out_channels;
    }
    for (auto& v : x) v *= net.scale;
    return x;
}

ConvNet random_net(int dims, Activation act, bool bias, std::uint64_t seed, int in = 2, int hidden = 3, int out = 2) {
    auto net = dims == 1 ? make_conv1d_net(in, hidden, out, 3, 3, act, bias) : make_conv2d_net(in, hidden, out, 3, 2, act, bias);
    std::mt19937_64 rng(seed);
    randomize(net, rng, 1.0, bias ? 0.3 : 0.0);
    net.scale = 1.3;
    return net;
}

double min_abs_preactivation(const ForwardCache& c) {
    double m = INFINITY;
    for (std::size_t l = 0; l + 1 < c.pre.size(); ++l)
        for (double v : c.pre[l]) m = std::min(m, std::abs(v));
    return m;
}

}  // namespace

TEST_CASE("forward: delta kernel is the identity", "[network]") {
    ConvNet net;
    net.layers.push_back(ConvLayer::conv1d(1, 1, 5, Activation::identity(), false));
    net.layers[0].w(0, 0, 0, 2) = 1.0;
    const auto x = oracle::random_vector(9, 1);
    const auto r = forward(net, x, {1, 1, 9});
    CHECK(r.output == x);
}

TEST_CASE("forward: zero input through unbiased leaky net", "[network]") {
    auto net = random_net(1, Activation::leaky_relu(0.1), false, 3);
    const auto r = forward(net, std::vector<double>(2 * 7, 0.0), {2, 1, 7});
    for (double v : r.output) CHECK(v == 0.0);
}

TEST_CASE("forward matches the loop-nest oracle", "[network][oracle]") {
    for (int dims : {1, 2})
        for (auto act : {Activation::leaky_relu(0.1), Activation::softplus()}) {
            auto net = random_net(dims, act, true, 10 + dims);
            const FeatureShape s{2, dims == 1 ? 1 : 4, dims == 1 ? 11 : 5};
            const auto x = oracle::random_vector(s.size(), 5);
            const auto r = forward(net, x, s);
            CHECK(oracle::max_abs_diff(r.output, net_oracle(net, s, x)) < 1e-10);
        }
}

TEST_CASE("forward rejects channel mismatch", "[network]") {
    auto net = random_net(1, Activation::softplus(), false, 1);
    CHECK_THROWS_AS(forward(net, std::vector<double>(9, 0.0), {3, 1, 3}), Error);
}

TEST_CASE("backward matches central differences", "[network][gradient]") {
    int checked = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto act = seed % 2 ? Activation::softplus() : Activation::leaky_relu(0.1);
        const int dims = 1 + static_cast<int>(seed % 4 >= 2);
        auto net = random_net(dims, act, true, 100 + seed);
        const FeatureShape s{2, dims == 1 ? 1 : 3, dims == 1 ? 8 : 4};
        // Resample inputs until every hidden pre-activation is away from the kink.
        std::vector<double> x;
        ForwardResult fr;
        for (std::uint64_t attempt = 0;; ++attempt) {
            x = oracle::random_vector(s.size(), 1000 * seed + attempt);
            fr = forward(net, x, s);
            if (act.smooth() || min_abs_preactivation(fr.cache) > 1e-3) break;
        }
        const auto up = oracle::random_vector(fr.output.size(), 7 + seed);
        const auto g = backward(net, fr.cache, up);
        auto objective = [&](const ConvNet& n, const std::vector<double>& in) {
            return dot(forward(n, in, s).output, up);
        };
        const double eps = 1e-5;
        auto params = get_parameters(net);
        for (std::size_t j = 0; j < params.size(); ++j) {
            auto p = params;
            ConvNet np = net, nm = net;
            p[j] = params[j] + eps;
            set_parameters(np, p);
            p[j] = params[j] - eps;
            set_parameters(nm, p);
            const double fd = (objective(np, x) - objective(nm, x)) / (2 * eps);
            CHECK_THAT(g.parameters[j], WithinAbs(fd, 1e-4 * std::max(1.0, std::abs(fd))));
        }
        for (std::size_t j = 0; j < x.size(); ++j) {
            auto xp = x, xm = x;
            xp[j] += eps;
            xm[j] -= eps;
            const double fd = (objective(net, xp) - objective(net, xm)) / (2 * eps);
            CHECK_THAT(g.input[j], WithinAbs(fd, 1e-4 * std::max(1.0, std::abs(fd))));
        }
        ++checked;
    }
    CHECK(checked == 20);
}

TEST_CASE("backward special cases", "[network]") {
    SECTION("identity net passes the upstream gradient") {
        ConvNet net;
        net.layers.push_back(ConvLayer::conv1d(1, 1, 3, Activation::identity(), false));
        net.layers[0].w(0, 0, 0, 1) = 1.0;
        const auto x = oracle::random_vector(6, 1);
        const auto fr = forward(net, x, {1, 1, 6});
        const auto up = oracle::random_vector(6, 2);
        CHECK(oracle::max_abs_diff(backward(net, fr.cache, up).input, up) < 1e-15);
    }
    SECTION("zero upstream gives zero gradients") {
        auto net = random_net(1, Activation::softplus(), true, 4);
        const auto fr = forward(net, oracle::random_vector(16, 3), {2, 1, 8});
        const auto g = backward(net, fr.cache, std::vector<double>(fr.output.size(), 0.0));
        for (double v : g.parameters) CHECK(v == 0.0);
        for (double v : g.input) CHECK(v == 0.0);
    }
    SECTION("stale cache is a usage error") {
        auto net = random_net(1, Activation::softplus(), true, 4);
        const auto fr = forward(net, oracle::random_vector(16, 3), {2, 1, 8});
        net.layers[0].weights[0] += 1.0;
        try {
            backward(net, fr.cache, fr.output);
            FAIL("expected a stale-cache error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Usage);
        }
    }
}

TEST_CASE("input_jacobian agrees with backward rows", "[network][gradient]") {
    auto net = random_net(2, Activation::softplus(), true, 77, 1, 3, 1);
    const FeatureShape s{1, 4, 4};
    const auto x = oracle::random_vector(16, 8);
    const auto J = input_jacobian(net, x, s);
    const auto fr = forward(net, x, s);
    for (std::size_t i = 0; i < 16; ++i) {
        std::vector<double> e(16, 0.0);
        e[i] = 1.0;
        const auto row = backward(net, fr.cache, e).input;
        for (std::size_t j = 0; j < 16; ++j) CHECK_THAT(J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), WithinAbs(row[j], 1e-12));
    }
}

TEST_CASE("layer_operator_norm", "[network][norm]") {
    SECTION("1x1 scalar weight") {
        auto l = ConvLayer::conv1d(1, 1, 1, Activation::identity(), false);
        l.weights[0] = 2.0;
        CHECK_THAT(layer_operator_norm(l, {1, 1, 5}, 50, 0), WithinAbs(2.0, 1e-9));
    }
    SECTION("width-4 circulant against dense SVD") {
        auto l = ConvLayer::conv1d(1, 1, 3, Activation::identity(), false);
        l.weights = {0.3, -1.2, 0.7};
        const auto M = materialize_linear(l, {1, 1, 4});
        CHECK_THAT(layer_operator_norm(l, {1, 1, 4}, 200, 1), WithinAbs(operator_norm(M), 1e-6));
    }
    SECTION("orthogonal 1x1 conv") {
        Eigen::MatrixXd A = Eigen::MatrixXd::Random(4, 4);
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
        Eigen::MatrixXd Q = qr.householderQ();
        auto l = ConvLayer::conv1d(4, 4, 1, Activation::identity(), false);
        for (int o = 0; o < 4; ++o)
            for (int i = 0; i < 4; ++i) l.w(o, i, 0, 0) = Q(o, i);
        CHECK_THAT(layer_operator_norm(l, {4, 1, 6}, 100, 2), WithinAbs(1.0, 1e-9));
    }
    SECTION("zero weights") {
        auto l = ConvLayer::conv1d(2, 2, 3, Activation::identity(), false);
        CHECK(layer_operator_norm(l, {2, 1, 5}, 10, 0) == 0.0);
    }
    SECTION("all materializable layers match dense SVD") {
        for (std::uint64_t seed = 0; seed < 12; ++seed) {
            const int dims = 1 + static_cast<int>(seed % 2);
            auto l = dims == 1 ? ConvLayer::conv1d(3, 2, 3, Activation::identity(), false)
                               : ConvLayer::conv2d(3, 2, 3, Activation::identity(), false);
            std::mt19937_64 rng(seed);
            std::normal_distribution<double> n(0.0, 1.0);
            for (auto& w : l.weights) w = n(rng);
            for (int width = 3; width <= 8; width += 5 - dims * 2) {
                const FeatureShape s{2, dims == 1 ? 1 : width, width};
                const double ref = operator_norm(materialize_linear(l, s));
                CHECK_THAT(layer_operator_norm(l, s, 200, seed), WithinRel(ref, 1e-6));
            }
        }
    }
}

TEST_CASE("spectral_normalize", "[network][norm]") {
    const FeatureShape s{2, 1, 8};
    auto l = ConvLayer::conv1d(2, 2, 3, Activation::identity(), false);
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n(0.0, 1.0);
    for (auto& w : l.weights) w = n(rng);

    SECTION("sigma 2 to target 1") {
        const double sigma = operator_norm(materialize_linear(l, s));
        for (auto& w : l.weights) w *= 2.0 / sigma;
        const auto out = spectral_normalize(l, s, 1.0);
        CHECK_THAT(operator_norm(materialize_linear(out, s)), WithinAbs(1.0, 1e-6));
        CHECK(out.norm_certificate == 1.0);
    }
    SECTION("idempotent up to the margin") {
        const auto once = spectral_normalize(l, s, 1.0);
        const auto twice = spectral_normalize(once, s, 1.0);
        for (std::size_t i = 0; i < once.weights.size(); ++i)
            CHECK_THAT(twice.weights[i], WithinRel(once.weights[i], 1.1e-6));
    }
    SECTION("target 0.5 re-measures at or below 0.5") {
        const auto out = spectral_normalize(l, s, 0.5);
        CHECK(operator_norm(materialize_linear(out, s)) <= 0.5 + 1e-6);
    }
    SECTION("zero layer") {
        auto z = ConvLayer::conv1d(2, 2, 3, Activation::identity(), false);
        const auto out = spectral_normalize(z, s, 1.0);
        CHECK(out.norm_certificate == 0.0);
        CHECK(out.weights == z.weights);
    }
}

TEST_CASE("lipschitz_upper_bound", "[network][norm]") {
    auto net = make_conv1d_net(1, 2, 1, 3, 3, Activation::leaky_relu(0.1), false);
    CHECK_THROWS_AS(lipschitz_upper_bound(net), Error);
    for (auto& l : net.layers) l.norm_certificate = 1.0;
    net.scale = 2.0;
    CHECK(lipschitz_upper_bound(net) == 2.0);

    ConvNet two;
    two.layers.push_back(ConvLayer::conv1d(1, 1, 1, Activation::softplus(), false));
    two.layers.push_back(ConvLayer::conv1d(1, 1, 1, Activation::identity(), false));
    two.layers[0].norm_certificate = 0.5;
    two.layers[1].norm_certificate = 2.0;
    CHECK(lipschitz_upper_bound(two) == 1.0);

    ConvNet id;
    id.layers.push_back(ConvLayer::conv1d(1, 1, 1, Activation::identity(), false));
    id.layers[0].weights[0] = 1.0;
    id.layers[0].norm_certificate = 1.0;
    CHECK(lipschitz_upper_bound(id) == 1.0);
}

TEST_CASE("certified bound is sound on random pairs", "[network][property]") {
    for (auto act : {Activation::leaky_relu(0.1), Activation::softplus()}) {
        auto net = random_net(1, act, true, 31);
        spectral_normalize_all(net, 1, 10, 1.0, 300, 0);
        const double L = lipschitz_upper_bound(net);
        const FeatureShape s{2, 1, 10};
        for (std::uint64_t k = 0; k < 500; ++k) {
            const auto x = oracle::random_vector(s.size(), 2 * k), y = oracle::random_vector(s.size(), 2 * k + 1, 0.1 + k % 3);
            const auto fx = forward(net, x, s).output, fy = forward(net, y, s).output;
            CHECK(norm2(subtract(fx, fy)) <= L * norm2(subtract(x, y)) + 1e-9);
        }
    }
}

TEST_CASE("adam_step", "[network][adam]") {
    SECTION("zero gradient leaves parameters") {
        std::vector<double> p{1.0, -2.0};
        auto st = AdamState::for_parameters(2, 0.1);
        adam_step(p, std::vector<double>{0.0, 0.0}, st);
        CHECK(p == std::vector<double>{1.0, -2.0});
        CHECK(st.step_count == 1);
    }
    SECTION("constant gradient moves against its sign") {
        std::vector<double> p{0.0, 0.0};
        auto st = AdamState::for_parameters(2, 0.01);
        for (int i = 0; i < 50; ++i) adam_step(p, std::vector<double>{3.0, -0.5}, st);
        CHECK(p[0] < 0.0);
        CHECK(p[1] > 0.0);
    }
    SECTION("first step with unit gradient") {
        // m = 0.1, v = 0.001; bias-corrected mhat = 1, vhat = 1 -> step = 0.1 / (1 + 1e-8)
        std::vector<double> p{0.0};
        auto st = AdamState::for_parameters(1, 0.1);
        adam_step(p, std::vector<double>{1.0}, st);
        CHECK_THAT(p[0], WithinAbs(-0.1, 1e-6));
    }
    SECTION("NaN gradient is rejected before any mutation") {
        std::vector<double> p{1.0};
        auto st = AdamState::for_parameters(1, 0.1);
        CHECK_THROWS_AS(adam_step(p, std::vector<double>{std::nan("")}, st), Error);
        CHECK(p[0] == 1.0);
        CHECK(st.step_count == 0);
    }
}

TEST_CASE("weight files round trip", "[network][io]") {
    auto net = random_net(2, Activation::softplus(), true, 5);
    spectral_normalize_all(net, 4, 4, 1.0);
    const auto bytes = save_weights(net);
    const auto back = load_weights(bytes);
    CHECK(get_parameters(back) == get_parameters(net));
    CHECK(back.scale == net.scale);
    for (std::size_t l = 0; l < net.layers.size(); ++l) CHECK(back.layers[l].norm_certificate == net.layers[l].norm_certificate);
    const auto x = oracle::random_vector(2 * 16, 4);
    CHECK(forward(back, x, {2, 4, 4}).output == forward(net, x, {2, 4, 4}).output);

    SECTION("truncation") {
        auto t = bytes;
        t.resize(t.size() / 2);
        CHECK_THROWS_AS(load_weights(t), Error);
    }
    SECTION("bit flip") {
        auto t = bytes;
        t[40] ^= 0x10;
        CHECK_THROWS_AS(load_weights(t), Error);
    }
    SECTION("version bump") {
        auto t = bytes;
        t[8] = 2;
        const auto crc = static_cast<std::uint32_t>(::crc32(0L, t.data(), static_cast<uInt>(t.size() - 4)));
        std::memcpy(t.data() + t.size() - 4, &crc, 4);
        try {
            load_weights(t);
            FAIL("expected a format error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Format);
        }
    }
    SECTION("sidecar describes the architecture") {
        const auto j = architecture_json(net);
        CHECK(j["layers"].size() == net.layers.size());
        CHECK(j["lipschitz_bound"].get<double>() == Catch::Approx(1.3));
    }
}
