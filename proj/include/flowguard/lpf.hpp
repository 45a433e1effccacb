#pragma once

#include <cmath>
#include <vector>

#include "fft.hpp"
#include "tensor.hpp"

namespace flowguard {

/// Binary low-pass mask on the DC-centered grid: 1 iff the Euclidean
/// distance to (floor(H/2), floor(W/2)) is <= r * min(H,W)/2.
inline Tensor build_mask(std::size_t h, std::size_t w, double r) {
    if (h < 1 || w < 1) throw ValidationError("build_mask: H,W must be >= 1");
    if (!(r > 0.0) || r > 1.0) throw ValidationError("build_mask: r must be in (0,1]");
    const double radius = r * static_cast<double>(std::min(h, w)) / 2.0;
    const double u0 = std::floor(static_cast<double>(h) / 2.0);
    const double v0 = std::floor(static_cast<double>(w) / 2.0);
    std::vector<float> mask(h * w, 0.0f);
    for (std::size_t u = 0; u < h; ++u) {
        for (std::size_t v = 0; v < w; ++v) {
            const double du = static_cast<double>(u) - u0;
            const double dv = static_cast<double>(v) - v0;
            if (std::sqrt(du * du + dv * dv) <= radius) mask[u * w + v] = 1.0f;
        }
    }
    return Tensor({h, w}, std::move(mask));
}

namespace lpf_detail {

// Filter one H x W channel with a DC-centered mask. Returns the largest
// imaginary residue seen after the inverse transform.
inline double filter_channel(const float* in, float* out, std::size_t h, std::size_t w,
                             const Tensor& mask) {
    std::vector<Complex> grid(h * w);
    for (std::size_t i = 0; i < h * w; ++i) grid[i] = Complex(static_cast<double>(in[i]), 0.0);
    fft2(grid, h, w);
    const std::size_t u0 = h / 2;
    const std::size_t v0 = w / 2;
    for (std::size_t ku = 0; ku < h; ++ku) {
        const std::size_t cu = (ku + u0) % h;  // centered row of this bin
        for (std::size_t kv = 0; kv < w; ++kv) {
            const std::size_t cv = (kv + v0) % w;
            grid[ku * w + kv] *= static_cast<double>(mask[cu * w + cv]);
        }
    }
    ifft2(grid, h, w);
    double max_imag = 0.0;
    for (std::size_t i = 0; i < h * w; ++i) {
        out[i] = static_cast<float>(grid[i].real());
        max_imag = std::max(max_imag, std::abs(grid[i].imag()));
    }
    return max_imag;
}

}  // namespace lpf_detail

/// Per-channel Fourier low-pass with an explicit centered mask. Accepts
/// (H,W) or (C,H,W) tensors.
inline Tensor apply_mask(const Tensor& x, const Tensor& mask, double* max_imag_out = nullptr) {
    std::size_t channels = 1, h = 0, w = 0;
    if (x.dims().size() == 2) {
        h = x.dims()[0];
        w = x.dims()[1];
    } else if (x.dims().size() == 3) {
        channels = x.dims()[0];
        h = x.dims()[1];
        w = x.dims()[2];
    } else {
        throw ValidationError("apply_lpf: expect (H,W) or (C,H,W)");
    }
    if (mask.dims() != std::vector<std::size_t>{h, w}) {
        throw ValidationError("apply_lpf: mask dims must be (H,W)");
    }
    std::vector<float> out(x.size());
    double max_imag = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
        max_imag = std::max(max_imag,
                            lpf_detail::filter_channel(x.data().data() + c * h * w,
                                                       out.data() + c * h * w, h, w, mask));
    }
    if (max_imag_out) *max_imag_out = max_imag;
    return Tensor(x.dims(), std::move(out));
}

inline Tensor apply_lpf(const Tensor& x, double r, double* max_imag_out = nullptr) {
    const std::size_t nd = x.dims().size();
    if (nd != 2 && nd != 3) throw ValidationError("apply_lpf: expect (H,W) or (C,H,W)");
    const std::size_t h = x.dims()[nd - 2];
    const std::size_t w = x.dims()[nd - 1];
    return apply_mask(x, build_mask(h, w, r), max_imag_out);
}

}  // namespace flowguard
