#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "odekws/errors.hpp"
#include "odekws/fft.hpp"
#include "odekws/wav.hpp"

namespace odekws {

/// Front-end settings. The defaults are the ones the models are sized for:
/// 30 ms windows every 10 ms over a one second clip make 101 frames, and 40
/// cepstral coefficients from 40 mel bands keep the DCT square.
struct MfccConfig {
    int window_samples = 480;   // 30 ms at 16 kHz
    int hop_samples = 160;      // 10 ms at 16 kHz
    int fft_size = 512;
    int n_mels = 40;
    int n_coeffs = 40;
    double fmin_hz = 20.0;
    double fmax_hz = 8000.0;
    double log_floor = 1e-10;

    int frames() const { return 1 + kClipSamples / hop_samples; }
};

namespace detail {

// Piecewise mel scale: linear below 1 kHz, logarithmic above.
inline double hz_to_mel(double f) {
    if (f < 1000.0) return f * 3.0 / 200.0;
    return 15.0 + std::log(f / 1000.0) * 27.0 / std::log(6.4);
}

inline double mel_to_hz(double m) {
    if (m < 15.0) return m * 200.0 / 3.0;
    return 1000.0 * std::exp(std::log(6.4) / 27.0 * (m - 15.0));
}

// Triangular filters with unit area on the hertz axis (height 2/(hi-lo)).
// Row i holds filter i's weight for each FFT bin.
inline std::vector<std::vector<double>> mel_bank(const MfccConfig& cfg,
                                                 std::vector<double>* centers) {
    const int bins = cfg.fft_size / 2 + 1;
    const double mel_lo = hz_to_mel(cfg.fmin_hz);
    const double mel_hi = hz_to_mel(cfg.fmax_hz);
    std::vector<double> pts(static_cast<size_t>(cfg.n_mels) + 2);
    for (size_t i = 0; i < pts.size(); ++i)
        pts[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                        static_cast<double>(cfg.n_mels + 1));
    if (centers) centers->assign(pts.begin() + 1, pts.end() - 1);

    std::vector<std::vector<double>> bank(static_cast<size_t>(cfg.n_mels),
                                          std::vector<double>(bins));
    for (int i = 0; i < cfg.n_mels; ++i) {
        const double lo = pts[static_cast<size_t>(i)];
        const double ctr = pts[static_cast<size_t>(i) + 1];
        const double hi = pts[static_cast<size_t>(i) + 2];
        const double gain = 2.0 / (hi - lo);
        for (int k = 0; k < bins; ++k) {
            const double f = static_cast<double>(k) * kSampleRate / cfg.fft_size;
            const double up = (f - lo) / (ctr - lo);
            const double down = (hi - f) / (hi - ctr);
            bank[static_cast<size_t>(i)][static_cast<size_t>(k)] =
                std::max(0.0, std::min(up, down)) * gain;
        }
    }
    return bank;
}

// Reflect padding (edge sample not repeated), half a window on each side.
inline std::vector<double> reflect_pad(const std::vector<float>& x, int pad) {
    const int n = static_cast<int>(x.size());
    std::vector<double> out(static_cast<size_t>(n) + 2 * static_cast<size_t>(pad));
    for (int i = 0; i < pad; ++i) out[static_cast<size_t>(i)] = x[static_cast<size_t>(pad - i)];
    for (int i = 0; i < n; ++i) out[static_cast<size_t>(pad + i)] = x[static_cast<size_t>(i)];
    for (int j = 0; j < pad; ++j)
        out[static_cast<size_t>(pad + n + j)] = x[static_cast<size_t>(n - 2 - j)];
    return out;
}

}  // namespace detail

/// Log mel spectrogram of a one second clip: frames() rows of n_mels values.
/// All arithmetic is double precision.
inline std::vector<double> log_mel_spectrogram(const std::vector<float>& samples,
                                               const MfccConfig& cfg = {}) {
    if (static_cast<int>(samples.size()) != kClipSamples)
        throw ShapeError("expected a clip of " + std::to_string(kClipSamples) +
                         " samples, got " + std::to_string(samples.size()));
    const int frames = cfg.frames();
    const auto bank = detail::mel_bank(cfg, nullptr);
    const auto padded = detail::reflect_pad(samples, cfg.window_samples / 2);

    std::vector<double> window(static_cast<size_t>(cfg.window_samples));
    for (int n = 0; n < cfg.window_samples; ++n)
        window[static_cast<size_t>(n)] =
            0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * n / cfg.window_samples));

    std::vector<double> out(static_cast<size_t>(frames) * cfg.n_mels);
    std::vector<double> frame(static_cast<size_t>(cfg.window_samples));
    for (int f = 0; f < frames; ++f) {
        const size_t start = static_cast<size_t>(f) * cfg.hop_samples;
        for (int n = 0; n < cfg.window_samples; ++n)
            frame[static_cast<size_t>(n)] =
                padded[start + static_cast<size_t>(n)] * window[static_cast<size_t>(n)];
        const auto power = power_spectrum(frame, static_cast<size_t>(cfg.fft_size));
        for (int i = 0; i < cfg.n_mels; ++i) {
            double acc = 0.0;
            const auto& filt = bank[static_cast<size_t>(i)];
            for (size_t k = 0; k < power.size(); ++k) acc += power[k] * filt[k];
            out[static_cast<size_t>(f) * cfg.n_mels + i] =
                std::log(std::max(acc, cfg.log_floor));
        }
    }
    return out;
}

/// MFCC features: orthonormal DCT-II of the log mel spectrogram, first
/// n_coeffs coefficients per frame. Row-major {frames, n_coeffs}, computed
/// in double and cast to float at the end.
inline std::vector<float> mfcc_features(const std::vector<float>& samples,
                                        const MfccConfig& cfg = {}) {
    const auto logmel = log_mel_spectrogram(samples, cfg);
    const int frames = cfg.frames();

    // dct[j][m] = s_j * cos(pi * j * (2m + 1) / (2 n_mels))
    std::vector<double> dct(static_cast<size_t>(cfg.n_coeffs) * cfg.n_mels);
    for (int j = 0; j < cfg.n_coeffs; ++j) {
        const double s = j == 0 ? std::sqrt(1.0 / cfg.n_mels) : std::sqrt(2.0 / cfg.n_mels);
        for (int m = 0; m < cfg.n_mels; ++m)
            dct[static_cast<size_t>(j) * cfg.n_mels + m] =
                s * std::cos(std::numbers::pi * j * (2 * m + 1) / (2.0 * cfg.n_mels));
    }

    std::vector<float> out(static_cast<size_t>(frames) * cfg.n_coeffs);
    for (int f = 0; f < frames; ++f) {
        const double* row = logmel.data() + static_cast<size_t>(f) * cfg.n_mels;
        for (int j = 0; j < cfg.n_coeffs; ++j) {
            const double* basis = dct.data() + static_cast<size_t>(j) * cfg.n_mels;
            double acc = 0.0;
            for (int m = 0; m < cfg.n_mels; ++m) acc += row[m] * basis[m];
            out[static_cast<size_t>(f) * cfg.n_coeffs + j] = static_cast<float>(acc);
        }
    }
    return out;
}

/// Center frequencies (Hz) of the mel filters, for diagnostics.
inline std::vector<double> mel_center_frequencies(const MfccConfig& cfg = {}) {
    std::vector<double> centers;
    detail::mel_bank(cfg, &centers);
    return centers;
}

}  // namespace odekws
