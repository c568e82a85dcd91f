#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "odekws/errors.hpp"
#include "odekws/wav.hpp"

namespace odekws {

struct AugmentConfig {
    int timeshift_samples = 1600;  // +/- 100 ms
    double noise_prob = 0.8;
    double noise_scale_max = 0.1;
};

/// Shift a clip by `offset` samples (positive moves content later),
/// filling the vacated region with zeros.
inline std::vector<float> time_shift(const std::vector<float>& x, int offset) {
    std::vector<float> out(x.size(), 0.0f);
    const int n = static_cast<int>(x.size());
    for (int i = 0; i < n; ++i) {
        const int j = i - offset;
        if (j >= 0 && j < n) out[static_cast<size_t>(i)] = x[static_cast<size_t>(j)];
    }
    return out;
}

/// Training-time augmentation: random time shift, then with probability
/// noise_prob a random crop of a random background recording scaled by a
/// uniform factor, clamped back to [-1, 1]. Draw order is fixed so a seeded
/// generator reproduces the same stream.
inline std::vector<float> augment_clip(const std::vector<float>& clip,
                                       const std::vector<std::vector<float>>& noise_pool,
                                       std::mt19937_64& rng,
                                       const AugmentConfig& cfg = {}) {
    std::uniform_int_distribution<int> shift_d(-cfg.timeshift_samples, cfg.timeshift_samples);
    std::vector<float> out = time_shift(clip, shift_d(rng));

    if (cfg.noise_prob > 0.0) {
        std::bernoulli_distribution coin(cfg.noise_prob);
        if (coin(rng)) {
            if (noise_pool.empty())
                throw ConfigError("noise augmentation enabled but the noise pool is empty");
            std::uniform_int_distribution<size_t> pick(0, noise_pool.size() - 1);
            const std::vector<float>& noise = noise_pool[pick(rng)];
            if (static_cast<int>(noise.size()) < kClipSamples)
                throw ConfigError("background recording shorter than one clip");
            std::uniform_int_distribution<size_t> crop(0, noise.size() - kClipSamples);
            const size_t start = crop(rng);
            std::uniform_real_distribution<double> scale_d(0.0, cfg.noise_scale_max);
            const float scale = static_cast<float>(scale_d(rng));
            for (size_t i = 0; i < out.size(); ++i)
                out[i] = std::clamp(out[i] + scale * noise[start + i], -1.0f, 1.0f);
        }
    }
    return out;
}

/// A silence sample is a random crop of a background recording with a
/// uniform [0, 1] amplitude. The `salt` pins the draw so the same entry
/// always realizes the same waveform.
inline std::vector<float> realize_silence(const std::vector<std::vector<float>>& noise_pool,
                                          uint64_t salt) {
    if (noise_pool.empty())
        throw ConfigError("silence samples need at least one background recording");
    std::mt19937_64 rng(salt);
    std::uniform_int_distribution<size_t> pick(0, noise_pool.size() - 1);
    const std::vector<float>& noise = noise_pool[pick(rng)];
    if (static_cast<int>(noise.size()) < kClipSamples)
        throw ConfigError("background recording shorter than one clip");
    std::uniform_int_distribution<size_t> crop(0, noise.size() - kClipSamples);
    const size_t start = crop(rng);
    std::uniform_real_distribution<double> scale_d(0.0, 1.0);
    const float scale = static_cast<float>(scale_d(rng));
    std::vector<float> out(kClipSamples);
    for (int i = 0; i < kClipSamples; ++i)
        out[static_cast<size_t>(i)] = scale * noise[start + static_cast<size_t>(i)];
    return out;
}

}  // namespace odekws
