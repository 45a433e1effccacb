#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace flowguard {

/// Fixed nonlinear latent-to-image map standing in for a VAE decoder:
///
///   image = A2 . tanh(A1 . vec(z) + c1) + c2
///
/// The hidden layer is organized spatially as (hidden_channels, H', W').
/// A1 realizes a seeded random 3x3 convolution (wraparound, one filter per
/// hidden channel, upsampled to image resolution), so spatial structure in
/// the latent maps to spatial structure in the image the way a real
/// convolutional decoder's does. A2 is block sparse with one 3 x
/// hidden_channels mixing block per output pixel. Deterministic: the same
/// seed always yields the same parameters.
class ReferenceDecoder {
public:
    ReferenceDecoder(std::vector<std::size_t> latent_dims,
                     std::vector<std::size_t> image_dims,
                     std::uint64_t seed,
                     int hidden_channels = 8)
        : latent_dims_(std::move(latent_dims)),
          image_dims_(std::move(image_dims)),
          seed_(seed),
          hidden_channels_(hidden_channels) {
        if (image_dims_.size() != 3 || image_dims_[0] != 3) {
            throw ValidationError("ReferenceDecoder: image dims must be (3,H',W')");
        }
        if (latent_dims_.size() != 3) {
            throw ValidationError("ReferenceDecoder: latent dims must be (C,H,W)");
        }
        if (hidden_channels_ < 1) {
            throw ValidationError("ReferenceDecoder: hidden_channels must be >= 1");
        }
        d_z_ = Tensor::element_count(latent_dims_);
        d_x_ = Tensor::element_count(image_dims_);
        pixels_ = image_dims_[1] * image_dims_[2];
        h_ = static_cast<std::size_t>(hidden_channels_) * pixels_;

        Rng rng = Rng::derive(seed_, 0xdecdec);
        const std::size_t C = latent_dims_[0], H = latent_dims_[1], W = latent_dims_[2];
        const std::size_t Hp = image_dims_[1], Wp = image_dims_[2];
        const std::size_t K = static_cast<std::size_t>(hidden_channels_);

        // one 3x3xC filter + bias per hidden channel, applied with
        // wraparound at every image pixel's corresponding latent location
        // pre-activations land in tanh's gently-curved region: saturation
        // would bury small-amplitude latent structure under intermodulation
        const float s1 = 0.5f / std::sqrt(static_cast<float>(9 * C));
        std::vector<float> filters(K * C * 9);
        for (auto& v : filters) v = s1 * static_cast<float>(rng.normal());
        std::vector<float> hidden_bias(K);
        for (auto& v : hidden_bias) v = 0.2f * static_cast<float>(rng.normal());

        a1_ = Eigen::MatrixXf::Zero(static_cast<Eigen::Index>(h_),
                                    static_cast<Eigen::Index>(d_z_));
        c1_.resize(static_cast<Eigen::Index>(h_));
        for (std::size_t k = 0; k < K; ++k) {
            const float* filt = &filters[k * C * 9];
            for (std::size_t up = 0; up < Hp; ++up) {
                const std::size_t u = up * H / Hp;
                for (std::size_t vp = 0; vp < Wp; ++vp) {
                    const std::size_t v = vp * W / Wp;
                    const std::size_t row = k * pixels_ + up * Wp + vp;
                    c1_(static_cast<Eigen::Index>(row)) = hidden_bias[k];
                    for (std::size_t c = 0; c < C; ++c) {
                        for (int du = -1; du <= 1; ++du) {
                            for (int dv = -1; dv <= 1; ++dv) {
                                const std::size_t uu = (u + H + static_cast<std::size_t>(du + 1) - 1) % H;
                                const std::size_t vv = (v + W + static_cast<std::size_t>(dv + 1) - 1) % W;
                                const std::size_t col = c * H * W + uu * W + vv;
                                a1_(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)) +=
                                    filt[c * 9 + static_cast<std::size_t>(du + 1) * 3 +
                                         static_cast<std::size_t>(dv + 1)];
                            }
                        }
                    }
                }
            }
        }

        // shared 3xK channel-mixing block (a 1x1 convolution) and per-output
        // channel offset
        const float s2 = 2.0f / std::sqrt(static_cast<float>(hidden_channels_));
        std::vector<float> mix(3 * K);
        for (auto& v : mix) v = s2 * static_cast<float>(rng.normal());
        std::vector<float> out_bias(3);
        for (auto& v : out_bias) v = 0.5f * static_cast<float>(rng.normal());
        blocks_.resize(d_x_ * K);
        c2_.resize(d_x_);
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t px = 0; px < pixels_; ++px) {
                const std::size_t row = c * pixels_ + px;
                c2_[row] = out_bias[c];
                for (std::size_t k = 0; k < K; ++k) blocks_[row * K + k] = mix[c * K + k];
            }
        }
    }

    const std::vector<std::size_t>& latent_dims() const { return latent_dims_; }
    const std::vector<std::size_t>& image_dims() const { return image_dims_; }
    std::uint64_t seed() const { return seed_; }
    std::size_t latent_size() const { return d_z_; }
    std::size_t image_size() const { return d_x_; }
    std::size_t hidden_size() const { return h_; }
    int hidden_channels() const { return hidden_channels_; }

    /// Floats allocated in intermediate buffers per single decode
    /// (hidden activation + output), the analytic memory proxy.
    std::size_t floats_per_decode() const { return h_ + d_x_; }

    Tensor decode(const Tensor& z) const {
        if (z.dims() != latent_dims_) {
            throw ValidationError("reference_decode: latent dim mismatch");
        }
        Eigen::Map<const Eigen::VectorXf> zv(z.data().data(), static_cast<Eigen::Index>(d_z_));
        Eigen::VectorXf hidden = (a1_ * zv + c1_).array().tanh().matrix();
        std::vector<float> out(d_x_);
        apply_blocks(hidden.data(), out.data());
        return Tensor(image_dims_, std::move(out));
    }

    /// Batched decode; columns of Z are vectorized latents.
    Eigen::MatrixXf decode_batch(const Eigen::MatrixXf& z_cols) const {
        if (static_cast<std::size_t>(z_cols.rows()) != d_z_) {
            throw ValidationError("reference_decode: latent dim mismatch");
        }
        Eigen::MatrixXf hidden = ((a1_ * z_cols).colwise() + c1_).array().tanh().matrix();
        Eigen::MatrixXf out(static_cast<Eigen::Index>(d_x_), z_cols.cols());
        for (Eigen::Index c = 0; c < z_cols.cols(); ++c) {
            apply_blocks(hidden.col(c).data(), out.col(c).data());
        }
        return out;
    }

    /// Dense Jacobian at z: A2 . diag(1 - tanh^2) . A1. Desk dims only.
    Eigen::MatrixXd jacobian(const Tensor& z) const {
        if (z.dims() != latent_dims_) {
            throw ValidationError("jacobian: latent dim mismatch");
        }
        if (d_x_ * d_z_ > (1u << 24)) {
            throw ValidationError("jacobian: dims too large for dense Jacobian");
        }
        Eigen::Map<const Eigen::VectorXf> zv(z.data().data(), static_cast<Eigen::Index>(d_z_));
        Eigen::VectorXf pre = a1_ * zv + c1_;
        Eigen::VectorXd dtanh = (1.0 - pre.array().tanh().square().cast<double>()).matrix();
        Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d_x_),
                                                    static_cast<Eigen::Index>(d_z_));
        // row of A2 for output (c,u,v) touches hidden (k,u,v) only
        const std::size_t K = static_cast<std::size_t>(hidden_channels_);
        for (std::size_t px = 0; px < pixels_; ++px) {
            for (std::size_t c = 0; c < 3; ++c) {
                const std::size_t row = c * pixels_ + px;
                const float* blk = &blocks_[row * K];
                for (std::size_t k = 0; k < K; ++k) {
                    const std::size_t hidden_idx = k * pixels_ + px;
                    const double w = static_cast<double>(blk[k]) * dtanh(static_cast<Eigen::Index>(hidden_idx));
                    jac.row(static_cast<Eigen::Index>(row)) +=
                        w * a1_.row(static_cast<Eigen::Index>(hidden_idx)).cast<double>();
                }
            }
        }
        return jac;
    }

private:
    void apply_blocks(const float* hidden, float* out) const {
        const std::size_t K = static_cast<std::size_t>(hidden_channels_);
        for (std::size_t px = 0; px < pixels_; ++px) {
            for (std::size_t c = 0; c < 3; ++c) {
                const std::size_t row = c * pixels_ + px;
                const float* blk = &blocks_[row * K];
                float acc = c2_[row];
                for (std::size_t k = 0; k < K; ++k) {
                    acc += blk[k] * hidden[k * pixels_ + px];
                }
                out[row] = acc;
            }
        }
    }

    std::vector<std::size_t> latent_dims_;
    std::vector<std::size_t> image_dims_;
    std::uint64_t seed_;
    int hidden_channels_;
    std::size_t d_z_ = 0, d_x_ = 0, pixels_ = 0, h_ = 0;

    Eigen::MatrixXf a1_;
    Eigen::VectorXf c1_;
    std::vector<float> blocks_;  // d_x blocks of hidden_channels weights
    std::vector<float> c2_;
};

inline Tensor reference_decode(const ReferenceDecoder& dec, const Tensor& z) {
    return dec.decode(z);
}

}  // namespace flowguard
