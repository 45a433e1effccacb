#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "io.hpp"
#include "reference_decoder.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace flowguard {

using LatentImagePair = std::pair<Tensor, Tensor>;  // (z, x)

/// Affine latent-to-image projector x = W vec(z) + b.
struct AffineDecoder {
    Eigen::MatrixXf weight;  // d_x x d_z
    Eigen::VectorXf bias;    // d_x
    std::vector<std::size_t> latent_dims;
    std::vector<std::size_t> image_dims;

    std::string fit_method;
    double fit_ridge = 0.0;
    std::size_t fit_samples = 0;

    std::size_t latent_size() const { return static_cast<std::size_t>(weight.cols()); }
    std::size_t image_size() const { return static_cast<std::size_t>(weight.rows()); }
    std::size_t parameter_count() const {
        return image_size() * latent_size() + image_size();
    }

    Tensor decode(const Tensor& z) const {
        if (z.dims() != latent_dims) throw ValidationError("decode: latent dim mismatch");
        Eigen::Map<const Eigen::VectorXf> zv(z.data().data(),
                                             static_cast<Eigen::Index>(z.size()));
        Eigen::VectorXf x = weight * zv + bias;
        std::vector<float> out(x.data(), x.data() + x.size());
        return Tensor(image_dims, std::move(out));
    }

    Eigen::MatrixXf decode_batch(const Eigen::MatrixXf& z_cols) const {
        if (static_cast<std::size_t>(z_cols.rows()) != latent_size()) {
            throw ValidationError("decode: latent dim mismatch");
        }
        return (weight * z_cols).colwise() + bias;
    }
};

namespace detail {

inline void check_pairs(const std::vector<LatentImagePair>& pairs) {
    if (pairs.empty()) throw ValidationError("fit: need at least one pair");
    for (const auto& [z, x] : pairs) {
        if (z.dims() != pairs.front().first.dims() || x.dims() != pairs.front().second.dims()) {
            throw ValidationError("fit: inconsistent pair dims");
        }
    }
}

// Augmented design matrix [z; 1], one column per sample.
inline Eigen::MatrixXd augmented_design(const std::vector<LatentImagePair>& pairs) {
    const std::size_t d_z = pairs.front().first.size();
    Eigen::MatrixXd zbar(static_cast<Eigen::Index>(d_z + 1),
                         static_cast<Eigen::Index>(pairs.size()));
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        for (std::size_t j = 0; j < d_z; ++j) {
            zbar(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) =
                pairs[i].first[j];
        }
        zbar(static_cast<Eigen::Index>(d_z), static_cast<Eigen::Index>(i)) = 1.0;
    }
    return zbar;
}

inline Eigen::MatrixXd target_matrix(const std::vector<LatentImagePair>& pairs) {
    const std::size_t d_x = pairs.front().second.size();
    Eigen::MatrixXd x(static_cast<Eigen::Index>(d_x), static_cast<Eigen::Index>(pairs.size()));
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        for (std::size_t j = 0; j < d_x; ++j) {
            x(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) =
                pairs[i].second[j];
        }
    }
    return x;
}

inline AffineDecoder from_theta(const Eigen::MatrixXd& theta,
                                const std::vector<LatentImagePair>& pairs) {
    AffineDecoder dec;
    const Eigen::Index d_z = theta.cols() - 1;
    dec.weight = theta.leftCols(d_z).cast<float>();
    dec.bias = theta.col(d_z).cast<float>();
    dec.latent_dims = pairs.front().first.dims();
    dec.image_dims = pairs.front().second.dims();
    return dec;
}

}  // namespace detail

/// Mean squared fit objective (1/N) sum ||W z_i + b - x_i||^2.
inline double affine_fit_loss(const AffineDecoder& dec, const std::vector<LatentImagePair>& pairs) {
    detail::check_pairs(pairs);
    double total = 0.0;
    for (const auto& [z, x] : pairs) {
        const Tensor xhat = dec.decode(z);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double d = static_cast<double>(xhat[i]) - static_cast<double>(x[i]);
            total += d * d;
        }
    }
    return total / static_cast<double>(pairs.size());
}

/// Normal-equation solve: Theta = X Zbar^T (Zbar Zbar^T + ridge I)^-1.
inline AffineDecoder fit_closed_form(const std::vector<LatentImagePair>& pairs, double ridge) {
    detail::check_pairs(pairs);
    if (ridge < 0.0) throw ValidationError("fit_closed_form: ridge must be >= 0");
    const Eigen::MatrixXd zbar = detail::augmented_design(pairs);
    const Eigen::MatrixXd x = detail::target_matrix(pairs);

    Eigen::MatrixXd gram = zbar * zbar.transpose();
    gram.diagonal().array() += ridge;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    if (ridge == 0.0) {
        const auto d = ldlt.vectorD();
        const double dmax = d.cwiseAbs().maxCoeff();
        if (dmax <= 0.0 || d.cwiseAbs().minCoeff() < 1e-12 * dmax || ldlt.info() != Eigen::Success) {
            throw ValidationError(
                "fit_closed_form: rank-deficient design matrix; use ridge > 0");
        }
    }
    // Theta^T = gram^-1 (X Zbar^T)^T
    const Eigen::MatrixXd theta = ldlt.solve(zbar * x.transpose()).transpose();

    AffineDecoder dec = detail::from_theta(theta, pairs);
    dec.fit_method = "closed";
    dec.fit_ridge = ridge;
    dec.fit_samples = pairs.size();
    return dec;
}

/// Mini-batch gradient descent on the same objective, zero-initialized.
/// Deterministic for a fixed seed. batch >= N degenerates to full batch.
inline AffineDecoder fit_gradient(const std::vector<LatentImagePair>& pairs, double lr = 0.01,
                                  int epochs = 20, int batch = 128, std::uint64_t seed = 0) {
    detail::check_pairs(pairs);
    if (lr <= 0.0) throw ValidationError("fit_gradient: lr must be > 0");
    if (epochs < 0) throw ValidationError("fit_gradient: epochs must be >= 0");
    if (batch < 1) throw ValidationError("fit_gradient: batch must be >= 1");

    const Eigen::MatrixXd zbar = detail::augmented_design(pairs);
    const Eigen::MatrixXd x = detail::target_matrix(pairs);
    const auto n = static_cast<std::size_t>(zbar.cols());

    Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(x.rows(), zbar.rows());
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = Rng::derive(seed, 0xf17);

    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng.engine());
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch)) {
            const std::size_t count = std::min(static_cast<std::size_t>(batch), n - start);
            Eigen::MatrixXd zb(zbar.rows(), static_cast<Eigen::Index>(count));
            Eigen::MatrixXd xb(x.rows(), static_cast<Eigen::Index>(count));
            for (std::size_t k = 0; k < count; ++k) {
                zb.col(static_cast<Eigen::Index>(k)) =
                    zbar.col(static_cast<Eigen::Index>(order[start + k]));
                xb.col(static_cast<Eigen::Index>(k)) =
                    x.col(static_cast<Eigen::Index>(order[start + k]));
            }
            const Eigen::MatrixXd resid = theta * zb - xb;
            theta -= (2.0 * lr / static_cast<double>(count)) * (resid * zb.transpose());
            if (!theta.allFinite()) {
                throw ValidationError("fit_gradient: divergence; reduce the learning rate");
            }
        }
    }

    AffineDecoder dec = detail::from_theta(theta, pairs);
    dec.fit_method = "gradient";
    dec.fit_ridge = 0.0;
    dec.fit_samples = pairs.size();
    return dec;
}

/// Minimum eigenvalue of the Gram factor (1/N) sum zbar zbar^T of the fit
/// Hessian. Nonnegative up to roundoff.
inline double hessian_psd_check(const std::vector<LatentImagePair>& pairs) {
    detail::check_pairs(pairs);
    const Eigen::MatrixXd zbar = detail::augmented_design(pairs);
    const Eigen::MatrixXd gram =
        (zbar * zbar.transpose()) / static_cast<double>(pairs.size());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

struct ApproximationReport {
    double mean_residual = 0.0;
    double median_residual = 0.0;
    double max_residual = 0.0;
    double beta_hat = 0.0;            // Jacobian-Lipschitz estimate
    double taylor_ratio_median = 0.0; // median residual(2*delta)/residual(delta)
    double classifier_bound = 0.0;    // L_f * max residual, 0 if no L_f given
};

namespace detail {

inline Eigen::MatrixXd fd_jacobian(const ReferenceDecoder& dec, const Tensor& z, double step) {
    const std::size_t d_z = dec.latent_size();
    const std::size_t d_x = dec.image_size();
    if (d_x * d_z > (1u << 24)) {
        throw ValidationError("approximation_report: dims too large for finite-difference Jacobian");
    }
    Eigen::MatrixXd jac(static_cast<Eigen::Index>(d_x), static_cast<Eigen::Index>(d_z));
    Tensor zp = z, zm = z;
    for (std::size_t j = 0; j < d_z; ++j) {
        zp[j] = z[j] + static_cast<float>(step);
        zm[j] = z[j] - static_cast<float>(step);
        const Tensor fp = dec.decode(zp);
        const Tensor fm = dec.decode(zm);
        for (std::size_t i = 0; i < d_x; ++i) {
            jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                (static_cast<double>(fp[i]) - static_cast<double>(fm[i])) / (2.0 * step);
        }
        zp[j] = z[j];
        zm[j] = z[j];
    }
    return jac;
}

inline double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

/// Audit the affine fit against the reference decoder: residual statistics
/// over random probes, a Jacobian-Lipschitz estimate from finite-difference
/// Jacobians, and the quadratic-scaling ratio of the linearization residual
/// under radius doubling.
inline ApproximationReport approximation_report(const AffineDecoder& dec,
                                                const ReferenceDecoder& refdec, int probes,
                                                double radius, std::uint64_t seed,
                                                double classifier_lipschitz = 0.0) {
    if (probes < 10) throw ValidationError("approximation_report: need probes >= 10");
    if (dec.latent_dims != refdec.latent_dims() || dec.image_dims != refdec.image_dims()) {
        throw ValidationError("approximation_report: decoder dim mismatch");
    }
    Rng rng = Rng::derive(seed, 0xa99);
    const auto& ldims = refdec.latent_dims();

    ApproximationReport rep;
    std::vector<double> residuals;
    std::vector<Tensor> probe_latents;
    for (int p = 0; p < probes; ++p) {
        Tensor z = gaussian_tensor(ldims, rng);
        for (auto& v : z.data()) v *= static_cast<float>(radius);
        const Tensor approx = dec.decode(z);
        const Tensor exact = refdec.decode(z);
        double sq = 0.0;
        for (std::size_t i = 0; i < approx.size(); ++i) {
            const double d = static_cast<double>(approx[i]) - static_cast<double>(exact[i]);
            sq += d * d;
        }
        residuals.push_back(std::sqrt(sq));
        probe_latents.push_back(std::move(z));
    }
    rep.mean_residual = std::accumulate(residuals.begin(), residuals.end(), 0.0) /
                        static_cast<double>(residuals.size());
    rep.median_residual = detail::median_of(residuals);
    rep.max_residual = *std::max_element(residuals.begin(), residuals.end());
    if (classifier_lipschitz > 0.0) {
        rep.classifier_bound = classifier_lipschitz * rep.max_residual;
    }

    // beta-hat over a handful of probe pairs; Jacobians are dense, keep few
    const int jac_points = std::min(4, probes);
    const double fd_step = 1e-3;
    std::vector<Eigen::MatrixXd> jacs;
    for (int p = 0; p < jac_points; ++p) {
        jacs.push_back(detail::fd_jacobian(refdec, probe_latents[static_cast<std::size_t>(p)], fd_step));
    }
    for (int a = 0; a < jac_points; ++a) {
        for (int b = a + 1; b < jac_points; ++b) {
            double dist_sq = 0.0;
            const Tensor& za = probe_latents[static_cast<std::size_t>(a)];
            const Tensor& zb = probe_latents[static_cast<std::size_t>(b)];
            for (std::size_t i = 0; i < za.size(); ++i) {
                const double d = static_cast<double>(za[i]) - static_cast<double>(zb[i]);
                dist_sq += d * d;
            }
            const double dist = std::sqrt(dist_sq);
            if (dist > 0.0) {
                const double jdiff = (jacs[static_cast<std::size_t>(a)] -
                                      jacs[static_cast<std::size_t>(b)]).norm();
                rep.beta_hat = std::max(rep.beta_hat, jdiff / dist);
            }
        }
    }

    // Taylor scaling: linearization residual at delta vs 2*delta
    const double delta = 0.05 * radius;
    const Tensor zref = probe_latents.front();
    const Eigen::MatrixXd jac_ref = detail::fd_jacobian(refdec, zref, fd_step);
    const Tensor f_ref = refdec.decode(zref);
    std::vector<double> ratios;
    for (int p = 0; p < probes; ++p) {
        Tensor dir = gaussian_tensor(ldims, rng);
        double norm_sq = 0.0;
        for (float v : dir.data()) norm_sq += static_cast<double>(v) * v;
        const double inv = 1.0 / std::sqrt(norm_sq);

        auto lin_residual = [&](double scale) {
            Tensor z = zref;
            Eigen::VectorXd du(static_cast<Eigen::Index>(dir.size()));
            for (std::size_t i = 0; i < dir.size(); ++i) {
                const double d = scale * inv * static_cast<double>(dir[i]);
                z[i] = static_cast<float>(static_cast<double>(zref[i]) + d);
                du(static_cast<Eigen::Index>(i)) = d;
            }
            const Tensor f = refdec.decode(z);
            const Eigen::VectorXd lin = jac_ref * du;
            double sq = 0.0;
            for (std::size_t i = 0; i < f.size(); ++i) {
                const double r = static_cast<double>(f[i]) - static_cast<double>(f_ref[i]) -
                                 lin(static_cast<Eigen::Index>(i));
                sq += r * r;
            }
            return std::sqrt(sq);
        };

        const double r1 = lin_residual(delta);
        const double r2 = lin_residual(2.0 * delta);
        if (r1 > 1e-12) ratios.push_back(r2 / r1);
    }
    rep.taylor_ratio_median = ratios.empty() ? 0.0 : detail::median_of(ratios);
    return rep;
}

/// Pairs (z, D(z)) for decoder fitting, z drawn from an isotropic Gaussian
/// of the given spread.
inline std::vector<LatentImagePair> sample_fit_pairs(const ReferenceDecoder& refdec, int n,
                                                     std::uint64_t seed, double spread = 1.0) {
    if (n < 1) throw ValidationError("sample_fit_pairs: n must be >= 1");
    Rng rng = Rng::derive(seed, 0xbeef);
    std::vector<LatentImagePair> pairs;
    pairs.reserve(static_cast<std::size_t>(n));
    const Eigen::Index d_z = static_cast<Eigen::Index>(refdec.latent_size());
    const int chunk = 64;
    for (int start = 0; start < n; start += chunk) {
        const int count = std::min(chunk, n - start);
        Eigen::MatrixXf z_cols(d_z, count);
        std::vector<Tensor> zs;
        for (int i = 0; i < count; ++i) {
            Tensor z = gaussian_tensor(refdec.latent_dims(), rng);
            for (auto& v : z.data()) v *= static_cast<float>(spread);
            for (Eigen::Index j = 0; j < d_z; ++j) z_cols(j, i) = z[static_cast<std::size_t>(j)];
            zs.push_back(std::move(z));
        }
        const Eigen::MatrixXf x_cols = refdec.decode_batch(z_cols);
        for (int i = 0; i < count; ++i) {
            std::vector<float> xv(x_cols.col(i).data(), x_cols.col(i).data() + x_cols.rows());
            pairs.emplace_back(std::move(zs[static_cast<std::size_t>(i)]),
                               Tensor(refdec.image_dims(), std::move(xv)));
        }
    }
    return pairs;
}

inline void save_affine_decoder(const AffineDecoder& dec, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const std::size_t d_x = dec.image_size();
    const std::size_t d_z = dec.latent_size();
    std::vector<float> w(d_x * d_z);
    for (std::size_t i = 0; i < d_x; ++i) {
        for (std::size_t j = 0; j < d_z; ++j) {
            w[i * d_z + j] = dec.weight(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        }
    }
    write_tensor(Tensor({d_x, d_z}, std::move(w)), dir / "W.fgt");
    std::vector<float> b(dec.bias.data(), dec.bias.data() + dec.bias.size());
    write_tensor(Tensor({d_x}, std::move(b)), dir / "b.fgt");

    nlohmann::json meta;
    meta["latent_dims"] = dec.latent_dims;
    meta["image_dims"] = dec.image_dims;
    meta["fit_method"] = dec.fit_method;
    meta["fit_ridge"] = dec.fit_ridge;
    meta["fit_samples"] = dec.fit_samples;
    meta["parameter_count"] = dec.parameter_count();
    std::ofstream f(dir / "decoder.json", std::ios::trunc);
    if (!f) throw IoError("save_affine_decoder: cannot open sidecar");
    f << meta.dump(2) << "\n";
}

inline AffineDecoder load_affine_decoder(const std::filesystem::path& dir) {
    const Tensor w = read_tensor(dir / "W.fgt");
    const Tensor b = read_tensor(dir / "b.fgt");
    if (w.dims().size() != 2 || b.dims().size() != 1 || w.dims()[0] != b.dims()[0]) {
        throw ValidationError("load_affine_decoder: inconsistent W/b shapes");
    }
    std::ifstream f(dir / "decoder.json");
    if (!f) throw IoError("load_affine_decoder: missing sidecar " + (dir / "decoder.json").string());
    nlohmann::json meta;
    try {
        f >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("load_affine_decoder: bad sidecar: ") + e.what());
    }

    AffineDecoder dec;
    const std::size_t d_x = w.dims()[0];
    const std::size_t d_z = w.dims()[1];
    dec.weight.resize(static_cast<Eigen::Index>(d_x), static_cast<Eigen::Index>(d_z));
    for (std::size_t i = 0; i < d_x; ++i) {
        for (std::size_t j = 0; j < d_z; ++j) {
            dec.weight(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = w[i * d_z + j];
        }
    }
    dec.bias = Eigen::Map<const Eigen::VectorXf>(b.data().data(), static_cast<Eigen::Index>(d_x));
    dec.latent_dims = meta.at("latent_dims").get<std::vector<std::size_t>>();
    dec.image_dims = meta.at("image_dims").get<std::vector<std::size_t>>();
    dec.fit_method = meta.value("fit_method", "");
    dec.fit_ridge = meta.value("fit_ridge", 0.0);
    dec.fit_samples = meta.value("fit_samples", std::size_t{0});
    if (Tensor::element_count(dec.latent_dims) != d_z ||
        Tensor::element_count(dec.image_dims) != d_x) {
        throw ValidationError("load_affine_decoder: sidecar dims disagree with W shape");
    }
    return dec;
}

}  // namespace flowguard
