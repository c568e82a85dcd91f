#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "odekws/errors.hpp"

namespace odekws {

constexpr int kSampleRate = 16000;
constexpr int kClipSamples = 16000;  // every training clip is one second

namespace detail {

inline uint32_t read_u32(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
           static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
}

inline uint16_t read_u16(const unsigned char* p) {
    return static_cast<uint16_t>(p[0] | p[1] << 8);
}

}  // namespace detail

/// Load a RIFF/WAVE file holding 16-bit mono PCM at 16 kHz. Returns the
/// full clip scaled to [-1, 1); length is whatever the file holds.
inline std::vector<float> load_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::vector<unsigned char> raw((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed on " + path);

    if (raw.size() < 12 || std::memcmp(raw.data(), "RIFF", 4) != 0 ||
        std::memcmp(raw.data() + 8, "WAVE", 4) != 0)
        throw FormatError(path + " is not a RIFF/WAVE file");

    bool have_fmt = false;
    size_t data_off = 0, data_len = 0;
    size_t pos = 12;
    while (pos + 8 <= raw.size()) {
        const char* id = reinterpret_cast<const char*>(raw.data() + pos);
        const uint32_t len = detail::read_u32(raw.data() + pos + 4);
        const size_t body = pos + 8;
        if (body + len > raw.size())
            throw FormatError(path + ": chunk overruns the file");
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (len < 16) throw FormatError(path + ": fmt chunk too short");
            const uint16_t format = detail::read_u16(raw.data() + body);
            const uint16_t channels = detail::read_u16(raw.data() + body + 2);
            const uint32_t rate = detail::read_u32(raw.data() + body + 4);
            const uint16_t bits = detail::read_u16(raw.data() + body + 14);
            if (format != 1) throw FormatError(path + ": expected PCM data");
            if (channels != 1) throw FormatError(path + ": expected mono audio");
            if (rate != kSampleRate)
                throw FormatError(path + ": expected " + std::to_string(kSampleRate) +
                                  " Hz, got " + std::to_string(rate));
            if (bits != 16) throw FormatError(path + ": expected 16-bit samples");
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            data_off = body;
            data_len = len;
        }
        pos = body + len + (len & 1);  // chunks are word aligned
    }
    if (!have_fmt) throw FormatError(path + ": missing fmt chunk");
    if (data_off == 0) throw FormatError(path + ": missing data chunk");

    const size_t n = data_len / 2;
    std::vector<float> samples(n);
    for (size_t i = 0; i < n; ++i) {
        const auto u = detail::read_u16(raw.data() + data_off + 2 * i);
        samples[i] = static_cast<float>(static_cast<int16_t>(u)) / 32768.0f;
    }
    return samples;
}

/// Fix a clip to exactly one second: truncate long clips, zero-pad short
/// ones at the end.
inline std::vector<float> normalize_clip(std::vector<float> samples) {
    samples.resize(kClipSamples, 0.0f);
    return samples;
}

}  // namespace odekws
