#pragma once

#include <complex>
#include <vector>

#include "cuebench/common.hpp"

namespace cuebench::detail {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 Cooley-Tukey, in place. Power-of-two lengths only,
// which covers every size this library transforms (128 and 64 squares).
inline void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    if (!is_pow2(n)) throw invariant_error("fft: length must be a power of two");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    const double pi = 3.141592653589793238462643383279502884;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        double ang = 2.0 * pi / double(len) * (inverse ? 1.0 : -1.0);
        std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                std::complex<double> u = a[i + k];
                std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse)
        for (auto& x : a) x /= double(n);
}

// Row-column 2-D transform of a w x h row-major field.
inline void fft2_inplace(std::vector<std::complex<double>>& a, std::size_t w, std::size_t h,
                         bool inverse) {
    if (a.size() != w * h) throw invariant_error("fft2: size mismatch");
    std::vector<std::complex<double>> line;
    for (std::size_t y = 0; y < h; ++y) {
        line.assign(a.begin() + std::ptrdiff_t(y * w), a.begin() + std::ptrdiff_t((y + 1) * w));
        fft_inplace(line, inverse);
        std::copy(line.begin(), line.end(), a.begin() + std::ptrdiff_t(y * w));
    }
    line.resize(h);
    for (std::size_t x = 0; x < w; ++x) {
        for (std::size_t y = 0; y < h; ++y) line[y] = a[y * w + x];
        fft_inplace(line, inverse);
        for (std::size_t y = 0; y < h; ++y) a[y * w + x] = line[y];
    }
}

} // namespace cuebench::detail
