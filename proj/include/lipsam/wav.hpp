#pragma once

// Minimal RIFF/WAVE reader and writer: mono, 16-bit PCM or 32-bit IEEE float.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "error.hpp"
#include "signal.hpp"

namespace lipsam::wav {

enum class SampleFormat { Pcm16, Float32 };

namespace detail {

template <class T>
void put(std::vector<unsigned char>& out, T value) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    out.insert(out.end(), bytes, bytes + sizeof(T));
}

template <class T>
T get(const std::vector<unsigned char>& in, std::size_t offset) {
    require(offset + sizeof(T) <= in.size(), ErrorKind::Format, "truncated WAV data");
    T value;
    std::memcpy(&value, in.data() + offset, sizeof(T));
    return value;
}

inline void put_tag(std::vector<unsigned char>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

inline bool tag_is(const std::vector<unsigned char>& in, std::size_t offset, const char* tag) {
    return offset + 4 <= in.size() && std::memcmp(in.data() + offset, tag, 4) == 0;
}

}  // namespace detail

inline std::vector<unsigned char> encode(const TimeSignal& signal, SampleFormat format = SampleFormat::Pcm16) {
    const std::uint16_t bits = format == SampleFormat::Pcm16 ? 16 : 32;
    const std::uint16_t tag = format == SampleFormat::Pcm16 ? 1 : 3;
    const auto rate = static_cast<std::uint32_t>(std::lround(signal.sample_rate()));
    const std::uint32_t data_bytes = static_cast<std::uint32_t>(signal.size() * (bits / 8));

    std::vector<unsigned char> out;
    out.reserve(44 + data_bytes);
    detail::put_tag(out, "RIFF");
    detail::put<std::uint32_t>(out, 36 + data_bytes);
    detail::put_tag(out, "WAVE");
    detail::put_tag(out, "fmt ");
    detail::put<std::uint32_t>(out, 16);
    detail::put<std::uint16_t>(out, tag);
    detail::put<std::uint16_t>(out, 1);
    detail::put<std::uint32_t>(out, rate);
    detail::put<std::uint32_t>(out, rate * (bits / 8));
    detail::put<std::uint16_t>(out, static_cast<std::uint16_t>(bits / 8));
    detail::put<std::uint16_t>(out, bits);
    detail::put_tag(out, "data");
    detail::put<std::uint32_t>(out, data_bytes);
    for (double v : signal.samples()) {
        const double c = std::clamp(v, -1.0, 1.0);
        if (format == SampleFormat::Pcm16)
            detail::put<std::int16_t>(out, static_cast<std::int16_t>(std::lround(c * 32767.0)));
        else
            detail::put<float>(out, static_cast<float>(c));
    }
    return out;
}

inline TimeSignal decode(const std::vector<unsigned char>& in) {
    require(detail::tag_is(in, 0, "RIFF") && detail::tag_is(in, 8, "WAVE"), ErrorKind::Format,
            "not a RIFF/WAVE stream");
    std::size_t pos = 12;
    std::uint16_t tag = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    bool have_fmt = false;
    while (pos + 8 <= in.size()) {
        const auto chunk_size = detail::get<std::uint32_t>(in, pos + 4);
        const std::size_t body = pos + 8;
        if (detail::tag_is(in, pos, "fmt ")) {
            tag = detail::get<std::uint16_t>(in, body);
            channels = detail::get<std::uint16_t>(in, body + 2);
            rate = detail::get<std::uint32_t>(in, body + 4);
            bits = detail::get<std::uint16_t>(in, body + 14);
            have_fmt = true;
        } else if (detail::tag_is(in, pos, "data")) {
            require(have_fmt, ErrorKind::Format, "data chunk precedes fmt chunk");
            require(channels == 1, ErrorKind::Format, "only mono WAV files are supported");
            require(body + chunk_size <= in.size(), ErrorKind::Format, "truncated WAV data chunk");
            std::vector<double> samples;
            if (tag == 1 && bits == 16) {
                samples.resize(chunk_size / 2);
                for (std::size_t i = 0; i < samples.size(); ++i)
                    samples[i] = detail::get<std::int16_t>(in, body + 2 * i) / 32768.0;
            } else if (tag == 3 && bits == 32) {
                samples.resize(chunk_size / 4);
                for (std::size_t i = 0; i < samples.size(); ++i)
                    samples[i] = detail::get<float>(in, body + 4 * i);
            } else {
                throw Error(ErrorKind::Format, "unsupported sample format (need PCM16 or float32)");
            }
            return TimeSignal(std::move(samples), static_cast<double>(rate));
        }
        pos = body + chunk_size + (chunk_size & 1u);
    }
    throw Error(ErrorKind::Format, "WAV stream has no data chunk");
}

inline TimeSignal read(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    require(file.good(), ErrorKind::Usage, "cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
    return decode(bytes);
}

inline void write(const std::string& path, const TimeSignal& signal, SampleFormat format = SampleFormat::Pcm16) {
    const auto bytes = encode(signal, format);
    std::ofstream file(path, std::ios::binary);
    require(file.good(), ErrorKind::Usage, "cannot write " + path);
    file.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace lipsam::wav
