#pragma once

// Weight files: little-endian binary, CRC-32 trailer, plus a JSON sidecar
// describing the architecture.
//
//   "LPSMNET1" | u32 version | u32 layer_count | f64 scale
//   per layer: u32 spatial_dims, u32 out, u32 in, u32 kh, u32 kw,
//              u32 activation, f64 slope, u8 has_bias, u8 has_cert, f64 cert,
//              f64 weights[out*in*kh*kw], f64 bias[out if has_bias]
//   u32 crc32 of everything above

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "error.hpp"
#include "network.hpp"

namespace lipsam {

inline constexpr char kWeightMagic[8] = {'L', 'P', 'S', 'M', 'N', 'E', 'T', '1'};
inline constexpr std::uint32_t kWeightVersion = 1;

namespace detail {

class ByteWriter {
public:
    template <class T>
    void put(T v) {
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        bytes.insert(bytes.end(), b, b + sizeof(T));
    }
    std::vector<unsigned char> bytes;
};

class ByteReader {
public:
    ByteReader(const std::vector<unsigned char>& b, std::size_t end) : bytes_(b), end_(end) {}

    template <class T>
    T get() {
        require(pos_ + sizeof(T) <= end_, ErrorKind::Format, "weight stream is truncated");
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::size_t position() const { return pos_; }

private:
    const std::vector<unsigned char>& bytes_;
    std::size_t end_;
    std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(const unsigned char* data, std::size_t n) {
    return static_cast<std::uint32_t>(::crc32(0L, data, static_cast<uInt>(n)));
}

}  // namespace detail

inline std::vector<unsigned char> save_weights(const ConvNet& net) {
    net.validate();
    detail::ByteWriter w;
    w.bytes.insert(w.bytes.end(), kWeightMagic, kWeightMagic + 8);
    w.put<std::uint32_t>(kWeightVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(net.layers.size()));
    w.put<double>(net.scale);
    for (const auto& l : net.layers) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(l.spatial_dims));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(l.out_channels));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(l.in_channels));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(l.kernel_h));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(l.kernel_w));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(l.activation.kind));
        w.put<double>(l.activation.slope);
        w.put<std::uint8_t>(l.has_bias() ? 1 : 0);
        w.put<std::uint8_t>(l.norm_certificate ? 1 : 0);
        w.put<double>(l.norm_certificate.value_or(0.0));
        for (double v : l.weights) w.put<double>(v);
        for (double v : l.bias) w.put<double>(v);
    }
    w.put<std::uint32_t>(detail::crc32_of(w.bytes.data(), w.bytes.size()));
    return w.bytes;
}

inline ConvNet load_weights(const std::vector<unsigned char>& bytes) {
    require(bytes.size() >= 8 + 4 + 4 + 8 + 4, ErrorKind::Format, "weight stream is truncated");
    require(std::memcmp(bytes.data(), kWeightMagic, 8) == 0, ErrorKind::Format, "bad magic in weight stream");
    const std::size_t body = bytes.size() - 4;
    std::uint32_t stored_crc;
    std::memcpy(&stored_crc, bytes.data() + body, 4);
    require(stored_crc == detail::crc32_of(bytes.data(), body), ErrorKind::Format, "weight stream checksum mismatch");

    detail::ByteReader r(bytes, body);
    for (int i = 0; i < 8; ++i) r.get<char>();
    const auto version = r.get<std::uint32_t>();
    require(version == kWeightVersion, ErrorKind::Format, "unsupported weight file version " + std::to_string(version));
    const auto count = r.get<std::uint32_t>();
    ConvNet net;
    net.scale = r.get<double>();
    for (std::uint32_t li = 0; li < count; ++li) {
        ConvLayer l;
        l.spatial_dims = static_cast<int>(r.get<std::uint32_t>());
        l.out_channels = static_cast<int>(r.get<std::uint32_t>());
        l.in_channels = static_cast<int>(r.get<std::uint32_t>());
        l.kernel_h = static_cast<int>(r.get<std::uint32_t>());
        l.kernel_w = static_cast<int>(r.get<std::uint32_t>());
        const auto kind = r.get<std::uint32_t>();
        require(kind <= 2, ErrorKind::Format, "unknown activation id");
        l.activation.kind = static_cast<ActivationKind>(kind);
        l.activation.slope = r.get<double>();
        const bool has_bias = r.get<std::uint8_t>() != 0;
        const bool has_cert = r.get<std::uint8_t>() != 0;
        const double cert = r.get<double>();
        if (has_cert) l.norm_certificate = cert;
        const std::size_t nw = static_cast<std::size_t>(l.out_channels) * l.in_channels * l.kernel_h * l.kernel_w;
        require(nw * 8 <= body, ErrorKind::Format, "implausible layer size");
        l.weights.resize(nw);
        for (auto& v : l.weights) v = r.get<double>();
        if (has_bias) {
            l.bias.resize(static_cast<std::size_t>(l.out_channels));
            for (auto& v : l.bias) v = r.get<double>();
        }
        net.layers.push_back(std::move(l));
    }
    require(r.position() == body, ErrorKind::Format, "trailing bytes in weight stream");
    net.validate();
    return net;
}

inline nlohmann::json architecture_json(const ConvNet& net) {
    nlohmann::json j;
    j["format_version"] = kWeightVersion;
    j["scale"] = net.scale;
    j["parameter_count"] = net.parameter_count();
    j["input_channels"] = net.input_channels();
    j["output_channels"] = net.output_channels();
    if (auto b = net.certified_bound()) j["lipschitz_bound"] = *b;
    auto layers = nlohmann::json::array();
    for (const auto& l : net.layers) {
        nlohmann::json jl;
        jl["spatial_dims"] = l.spatial_dims;
        jl["out_channels"] = l.out_channels;
        jl["in_channels"] = l.in_channels;
        jl["kernel"] = {l.kernel_h, l.kernel_w};
        jl["activation"] = to_string(l.activation.kind);
        if (l.activation.kind == ActivationKind::LeakyReLU) jl["slope"] = l.activation.slope;
        jl["bias"] = l.has_bias();
        if (l.norm_certificate) jl["norm_certificate"] = *l.norm_certificate;
        layers.push_back(jl);
    }
    j["layers"] = layers;
    return j;
}

inline void write_weight_file(const std::string& path, const ConvNet& net) {
    const auto bytes = save_weights(net);
    {
        std::ofstream f(path, std::ios::binary);
        require(f.good(), ErrorKind::Usage, "cannot write " + path);
        f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    }
    std::ofstream side(path + ".json");
    require(side.good(), ErrorKind::Usage, "cannot write " + path + ".json");
    side << architecture_json(net).dump(2) << '\n';
}

inline ConvNet read_weight_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), ErrorKind::Usage, "cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return load_weights(bytes);
}

}  // namespace lipsam
