#pragma once

#include <complex>
#include <vector>

#include "tensor.hpp"

namespace flowguard {

using Complex = std::complex<double>;

namespace fft_detail {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 Cooley-Tukey with stride support.
inline void fft_radix2(Complex* data, std::size_t n, std::size_t stride, bool inverse) {
    // bit-reversal permutation
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(data[i * stride], data[j * stride]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * M_PI / static_cast<double>(len);
        const Complex wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            Complex w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                Complex u = data[(i + k) * stride];
                Complex v = data[(i + k + len / 2) * stride] * w;
                data[(i + k) * stride] = u + v;
                data[(i + k + len / 2) * stride] = u - v;
                w *= wlen;
            }
        }
    }
}

// O(n^2) DFT for non-power-of-two lengths; only tiny sizes go this way.
inline void dft_naive(Complex* data, std::size_t n, std::size_t stride, bool inverse) {
    std::vector<Complex> out(n);
    const double sign = inverse ? 2.0 : -2.0;
    for (std::size_t k = 0; k < n; ++k) {
        Complex acc(0.0, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            const double ang = sign * M_PI * static_cast<double>(k) * static_cast<double>(j) /
                               static_cast<double>(n);
            acc += data[j * stride] * Complex(std::cos(ang), std::sin(ang));
        }
        out[k] = acc;
    }
    for (std::size_t k = 0; k < n; ++k) data[k * stride] = out[k];
}

inline void fft_1d(Complex* data, std::size_t n, std::size_t stride, bool inverse) {
    if (n == 1) return;
    if (is_pow2(n)) {
        fft_radix2(data, n, stride, inverse);
    } else {
        dft_naive(data, n, stride, inverse);
    }
}

}  // namespace fft_detail

/// 2D DFT of a row-major H x W grid, in place. The inverse is unnormalized
/// by rows/cols separately; ifft2 applies the 1/(H*W) factor.
inline void fft2(std::vector<Complex>& grid, std::size_t h, std::size_t w) {
    if (grid.size() != h * w) throw ValidationError("fft2: size mismatch");
    for (std::size_t r = 0; r < h; ++r) fft_detail::fft_1d(grid.data() + r * w, w, 1, false);
    for (std::size_t c = 0; c < w; ++c) fft_detail::fft_1d(grid.data() + c, h, w, false);
}

inline void ifft2(std::vector<Complex>& grid, std::size_t h, std::size_t w) {
    if (grid.size() != h * w) throw ValidationError("ifft2: size mismatch");
    for (std::size_t r = 0; r < h; ++r) fft_detail::fft_1d(grid.data() + r * w, w, 1, true);
    for (std::size_t c = 0; c < w; ++c) fft_detail::fft_1d(grid.data() + c, h, w, true);
    const double scale = 1.0 / static_cast<double>(h * w);
    for (auto& v : grid) v *= scale;
}

}  // namespace flowguard
