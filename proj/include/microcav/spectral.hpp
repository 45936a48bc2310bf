#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "microcav/constants.hpp"

namespace microcav {

inline std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

/// In-place iterative radix-2 FFT (forward). Size must be a power of two.
inline void fft_inplace(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {  // bit reversal
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * pi / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t j = 0; j < len / 2; ++j) {
                const std::complex<double> u = a[i + j];
                const std::complex<double> v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

/// Symmetric Hann window of length n.
inline std::vector<double> hann_window(std::size_t n) {
    std::vector<double> w(n, 1.0);
    if (n < 2) return w;
    for (std::size_t i = 0; i < n; ++i)
        w[i] = 0.5 - 0.5 * std::cos(2.0 * pi * static_cast<double>(i) /
                                    static_cast<double>(n - 1));
    return w;
}

/// Centered moving average with zero padding at the edges (output length
/// equals input length; the divisor is always `win`).
inline std::vector<double> moving_average(const std::vector<double>& y, int win) {
    const int n = static_cast<int>(y.size());
    if (win <= 1 || n == 0) return y;
    std::vector<double> prefix(static_cast<std::size_t>(n) + 1, 0.0);
    for (int i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + y[i];
    std::vector<double> out(static_cast<std::size_t>(n));
    const int off = (win - 1) / 2;
    for (int i = 0; i < n; ++i) {
        const int lo = std::max(0, i - off);
        const int hi = std::min(n, i - off + win);
        out[i] = (prefix[hi] - prefix[lo]) / static_cast<double>(win);
    }
    return out;
}

struct SpectralPeak {
    double frequency = 0.0;  // Hz, refined by quadratic interpolation
    double ratio = 0.0;      // peak power over median power above fmin
};

/// Strongest periodogram line above fmin.
///
/// Hann-windowed, zero padded to at least 4x the record length so the
/// quadratic peak interpolation works on a dense grid. The ratio against the
/// median power is a robust significance measure: a genuine modulation line
/// stands two or more orders of magnitude above the noise floor.
inline SpectralPeak periodogram_peak(const std::vector<double>& y, double fs,
                                     double fmin) {
    const std::size_t n = y.size();
    SpectralPeak out;
    if (n < 4) return out;
    const std::size_t nfft = next_pow2(4 * n);
    std::vector<std::complex<double>> buf(nfft, std::complex<double>(0.0, 0.0));
    const std::vector<double> w = hann_window(n);
    for (std::size_t i = 0; i < n; ++i) buf[i] = y[i] * w[i];
    fft_inplace(buf);

    const std::size_t nhalf = nfft / 2 + 1;
    std::vector<double> p(nhalf);
    for (std::size_t i = 0; i < nhalf; ++i) p[i] = std::norm(buf[i]);
    const double df = fs / static_cast<double>(nfft);

    std::size_t i0 = static_cast<std::size_t>(std::ceil(fmin / df - 1e-9));
    i0 = std::max<std::size_t>(i0, 1);
    if (i0 >= nhalf - 1) return out;

    std::size_t ipk = i0;
    for (std::size_t i = i0 + 1; i < nhalf; ++i)
        if (p[i] > p[ipk]) ipk = i;

    double shift = 0.0;
    if (ipk > 0 && ipk < nhalf - 1) {
        const double den = p[ipk - 1] - 2.0 * p[ipk] + p[ipk + 1];
        if (den != 0.0) shift = 0.5 * (p[ipk - 1] - p[ipk + 1]) / den;
    }
    out.frequency = (static_cast<double>(ipk) + shift) * df;

    std::vector<double> tail(p.begin() + static_cast<std::ptrdiff_t>(i0), p.end());
    const std::size_t mid = tail.size() / 2;
    std::nth_element(tail.begin(), tail.begin() + static_cast<std::ptrdiff_t>(mid),
                     tail.end());
    double med = tail[mid];
    if (tail.size() % 2 == 0) {
        const double lower =
            *std::max_element(tail.begin(), tail.begin() + static_cast<std::ptrdiff_t>(mid));
        med = 0.5 * (med + lower);
    }
    out.ratio = p[ipk] / std::max(med, 1e-300);
    return out;
}

/// Phase of y against a complex exponential at frequency f (time origin t0).
inline double dft_phase(const std::vector<double>& y, const std::vector<double>& t,
                        double f, double t0) {
    double re = 0.0, im = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double a = -2.0 * pi * f * (t[i] - t0);
        re += y[i] * std::cos(a);
        im += y[i] * std::sin(a);
    }
    return std::atan2(im, re);
}

}  // namespace microcav
