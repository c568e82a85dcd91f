#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "odekws/errors.hpp"

namespace odekws {

/// In-place iterative radix-2 FFT. Size must be a power of two.
inline void fft_radix2(std::vector<std::complex<double>>& a) {
    const size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0)
        throw ShapeError("FFT size must be a power of two, got " + std::to_string(n));

    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }

    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
        const std::complex<double> step(std::cos(ang), std::sin(ang));
        for (size_t base = 0; base < n; base += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[base + k];
                const std::complex<double> v = a[base + k + len / 2] * w;
                a[base + k] = u + v;
                a[base + k + len / 2] = u - v;
                w *= step;
            }
        }
    }
}

/// Power spectrum of a real signal zero-padded to `nfft`: |X[k]|^2 for
/// k = 0 .. nfft/2.
inline std::vector<double> power_spectrum(const std::vector<double>& x, size_t nfft) {
    if (x.size() > nfft)
        throw ShapeError("signal of " + std::to_string(x.size()) +
                         " samples does not fit a " + std::to_string(nfft) +
                         "-point transform");
    std::vector<std::complex<double>> buf(nfft);
    for (size_t i = 0; i < x.size(); ++i) buf[i] = x[i];
    fft_radix2(buf);
    std::vector<double> power(nfft / 2 + 1);
    for (size_t k = 0; k < power.size(); ++k) power[k] = std::norm(buf[k]);
    return power;
}

}  // namespace odekws
