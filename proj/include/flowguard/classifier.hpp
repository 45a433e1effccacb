#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "io.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace flowguard {

constexpr double kProbClamp = 1e-7;

inline double bce_loss(double p, int y) {
    if (y != 0 && y != 1) throw ValidationError("bce_loss: label must be 0 or 1");
    const double pc = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
    return y ? -std::log(pc) : -std::log(1.0 - pc);
}

/// Mean over all ordered step pairs (t,t'), t=t' included, of (p_t - p_t')^2.
/// Equals twice the population variance of the predictions.
inline double consistency_loss(const std::vector<double>& preds) {
    if (preds.empty()) throw ValidationError("consistency_loss: need at least one prediction");
    const double n = static_cast<double>(preds.size());
    double acc = 0.0;
    for (double a : preds) {
        for (double b : preds) {
            acc += (a - b) * (a - b);
        }
    }
    return acc / (n * n);
}

/// Small NSFW scorer: adaptive 16x16 average pool per channel, flatten,
/// one tanh hidden layer, sigmoid output.
class Classifier {
public:
    static constexpr std::size_t kPool = 16;
    static constexpr std::size_t kHidden = 64;

    Classifier() = default;

    /// Zero parameters: predicts exactly 0.5 everywhere.
    static Classifier zero_init(std::vector<std::size_t> input_dims) {
        Classifier g;
        g.init_dims(std::move(input_dims));
        g.w1_.setZero(kHidden, static_cast<Eigen::Index>(g.feature_size_));
        g.b1_.setZero(kHidden);
        g.w2_.setZero(kHidden);
        g.b2_ = 0.0;
        return g;
    }

    static Classifier random_init(std::vector<std::size_t> input_dims, std::uint64_t seed) {
        Classifier g = zero_init(std::move(input_dims));
        g.seed_ = seed;
        Rng rng = Rng::derive(seed, 0xc1a55);
        const double s1 = 1.0 / std::sqrt(static_cast<double>(g.feature_size_));
        for (Eigen::Index i = 0; i < g.w1_.rows(); ++i) {
            for (Eigen::Index j = 0; j < g.w1_.cols(); ++j) {
                g.w1_(i, j) = s1 * rng.normal();
            }
        }
        const double s2 = 1.0 / std::sqrt(static_cast<double>(kHidden));
        for (Eigen::Index i = 0; i < g.w2_.size(); ++i) g.w2_(i) = s2 * rng.normal();
        return g;
    }

    const std::vector<std::size_t>& input_dims() const { return input_dims_; }
    std::size_t feature_size() const { return feature_size_; }
    std::uint64_t seed() const { return seed_; }

    /// Channel-wise adaptive average pooling to kPool x kPool, flattened.
    Eigen::VectorXd features(const Tensor& x) const {
        if (x.dims() != input_dims_) throw ValidationError("predict: input dim mismatch");
        const std::size_t C = input_dims_[0], H = input_dims_[1], W = input_dims_[2];
        Eigen::VectorXd f(static_cast<Eigen::Index>(feature_size_));
        for (std::size_t c = 0; c < C; ++c) {
            const float* ch = x.data().data() + c * H * W;
            for (std::size_t pu = 0; pu < kPool; ++pu) {
                const std::size_t u0 = pu * H / kPool, u1 = (pu + 1) * H / kPool;
                for (std::size_t pv = 0; pv < kPool; ++pv) {
                    const std::size_t v0 = pv * W / kPool, v1 = (pv + 1) * W / kPool;
                    double acc = 0.0;
                    for (std::size_t u = u0; u < u1; ++u) {
                        for (std::size_t v = v0; v < v1; ++v) acc += ch[u * W + v];
                    }
                    f(static_cast<Eigen::Index>(c * kPool * kPool + pu * kPool + pv)) =
                        acc / static_cast<double>((u1 - u0) * (v1 - v0));
                }
            }
        }
        return f;
    }

    double logit_from_features(const Eigen::VectorXd& f) const {
        const Eigen::VectorXd a = (w1_ * f + b1_).array().tanh().matrix();
        return w2_.dot(a) + b2_;
    }

    double predict_from_features(const Eigen::VectorXd& f) const {
        return sigmoid(logit_from_features(f));
    }

    double predict(const Tensor& x) const { return predict_from_features(features(x)); }

    static double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

    // --- parameter access (flat layout: W1 row-major, b1, w2, b2) ---

    std::size_t parameter_count() const {
        return kHidden * feature_size_ + kHidden + kHidden + 1;
    }

    std::vector<double> parameters() const {
        std::vector<double> p;
        p.reserve(parameter_count());
        for (Eigen::Index i = 0; i < w1_.rows(); ++i) {
            for (Eigen::Index j = 0; j < w1_.cols(); ++j) p.push_back(w1_(i, j));
        }
        for (Eigen::Index i = 0; i < b1_.size(); ++i) p.push_back(b1_(i));
        for (Eigen::Index i = 0; i < w2_.size(); ++i) p.push_back(w2_(i));
        p.push_back(b2_);
        return p;
    }

    void set_parameters(const std::vector<double>& p) {
        if (p.size() != parameter_count()) {
            throw ValidationError("set_parameters: wrong parameter count");
        }
        std::size_t k = 0;
        for (Eigen::Index i = 0; i < w1_.rows(); ++i) {
            for (Eigen::Index j = 0; j < w1_.cols(); ++j) w1_(i, j) = p[k++];
        }
        for (Eigen::Index i = 0; i < b1_.size(); ++i) b1_(i) = p[k++];
        for (Eigen::Index i = 0; i < w2_.size(); ++i) w2_(i) = p[k++];
        b2_ = p[k];
    }

    /// Forward pass with hidden activation kept for backprop.
    struct ForwardCache {
        Eigen::VectorXd f;
        Eigen::VectorXd a;  // tanh activations
        double p = 0.0;
    };

    ForwardCache forward(const Eigen::VectorXd& f) const {
        ForwardCache c;
        c.f = f;
        c.a = (w1_ * f + b1_).array().tanh().matrix();
        c.p = sigmoid(w2_.dot(c.a) + b2_);
        return c;
    }

    /// Accumulate parameter gradients for dL/dlogit = g at a cached forward.
    void accumulate_grad(const ForwardCache& c, double g, std::vector<double>& grad) const {
        const Eigen::Index hid = w1_.rows();
        const Eigen::Index feat = w1_.cols();
        const Eigen::VectorXd dh =
            (g * w2_.array() * (1.0 - c.a.array().square())).matrix();
        std::size_t k = 0;
        for (Eigen::Index i = 0; i < hid; ++i) {
            const double dhi = dh(i);
            for (Eigen::Index j = 0; j < feat; ++j) grad[k++] += dhi * c.f(j);
        }
        for (Eigen::Index i = 0; i < hid; ++i) grad[k++] += dh(i);
        for (Eigen::Index i = 0; i < hid; ++i) grad[k++] += g * c.a(i);
        grad[k] += g;
    }

    void save(const std::filesystem::path& dir, const nlohmann::json& extra = {}) const {
        std::filesystem::create_directories(dir);
        const auto p = parameters();
        std::vector<float> pf(p.begin(), p.end());
        const std::size_t n = pf.size();
        write_tensor(Tensor({n}, std::move(pf)), dir / "params.fgt");
        nlohmann::json meta;
        meta["architecture"] = "pool16-tanh64-sigmoid";
        meta["input_dims"] = input_dims_;
        meta["seed"] = seed_;
        for (auto it = extra.begin(); it != extra.end(); ++it) meta[it.key()] = it.value();
        std::ofstream f(dir / "classifier.json", std::ios::trunc);
        if (!f) throw IoError("classifier save: cannot open sidecar");
        f << meta.dump(2) << "\n";
    }

    static Classifier load(const std::filesystem::path& dir) {
        std::ifstream f(dir / "classifier.json");
        if (!f) throw IoError("classifier load: missing sidecar in " + dir.string());
        nlohmann::json meta;
        try {
            f >> meta;
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(std::string("classifier load: bad sidecar: ") + e.what());
        }
        Classifier g = zero_init(meta.at("input_dims").get<std::vector<std::size_t>>());
        g.seed_ = meta.value("seed", std::uint64_t{0});
        const Tensor params = read_tensor(dir / "params.fgt");
        g.set_parameters(std::vector<double>(params.data().begin(), params.data().end()));
        return g;
    }

private:
    void init_dims(std::vector<std::size_t> input_dims) {
        if (input_dims.size() != 3) throw ValidationError("Classifier: input dims must be (C,H,W)");
        if (input_dims[1] < kPool || input_dims[2] < kPool) {
            throw ValidationError("Classifier: spatial dims must be >= 16");
        }
        input_dims_ = std::move(input_dims);
        feature_size_ = input_dims_[0] * kPool * kPool;
    }

    std::vector<std::size_t> input_dims_;
    std::size_t feature_size_ = 0;
    std::uint64_t seed_ = 0;

    Eigen::MatrixXd w1_;
    Eigen::VectorXd b1_;
    Eigen::VectorXd w2_;
    double b2_ = 0.0;
};

inline double predict(const Classifier& g, const Tensor& x) { return g.predict(x); }

/// One training instance inside a curriculum stage: the filtered
/// reconstructions for every step of the stage's index set, plus the label.
struct StageInstance {
    std::vector<Eigen::VectorXd> step_features;  // pooled features, one per step
    int label = 0;
};

/// Stage objective: mean BCE over (instances x steps) plus lambda times the
/// mean per-instance consistency loss.
inline double stage_loss_from_features(const Classifier& g,
                                       const std::vector<StageInstance>& batch, double lambda) {
    if (batch.empty()) throw ValidationError("stage_loss: empty batch");
    if (lambda < 0.0) throw ValidationError("stage_loss: lambda must be >= 0");
    double bce_acc = 0.0, consis_acc = 0.0;
    std::size_t pred_count = 0;
    for (const auto& inst : batch) {
        std::vector<double> preds;
        for (const auto& f : inst.step_features) {
            const double p = g.predict_from_features(f);
            bce_acc += bce_loss(p, inst.label);
            preds.push_back(p);
            ++pred_count;
        }
        consis_acc += consistency_loss(preds);
    }
    return bce_acc / static_cast<double>(pred_count) +
           lambda * consis_acc / static_cast<double>(batch.size());
}

inline double stage_loss(const Classifier& g,
                         const std::vector<std::pair<std::vector<Tensor>, int>>& batch,
                         double lambda) {
    std::vector<StageInstance> feats;
    feats.reserve(batch.size());
    for (const auto& [images, label] : batch) {
        StageInstance inst;
        inst.label = label;
        for (const auto& x : images) inst.step_features.push_back(g.features(x));
        feats.push_back(std::move(inst));
    }
    return stage_loss_from_features(g, feats, lambda);
}

/// Analytic gradient of stage_loss_from_features in the flat parameter
/// layout. Returns the loss value.
inline double stage_loss_grad(const Classifier& g, const std::vector<StageInstance>& batch,
                              double lambda, std::vector<double>& grad) {
    if (batch.empty()) throw ValidationError("stage_loss_grad: empty batch");
    grad.assign(g.parameter_count(), 0.0);
    std::size_t pred_count = 0;
    for (const auto& inst : batch) pred_count += inst.step_features.size();
    const double n_inst = static_cast<double>(batch.size());

    double bce_acc = 0.0, consis_acc = 0.0;
    for (const auto& inst : batch) {
        std::vector<Classifier::ForwardCache> caches;
        std::vector<double> preds;
        for (const auto& f : inst.step_features) {
            caches.push_back(g.forward(f));
            preds.push_back(caches.back().p);
            bce_acc += bce_loss(preds.back(), inst.label);
        }
        consis_acc += consistency_loss(preds);

        const double t_count = static_cast<double>(preds.size());
        const double mean_p =
            std::accumulate(preds.begin(), preds.end(), 0.0) / t_count;
        for (std::size_t t = 0; t < preds.size(); ++t) {
            const double p = preds[t];
            // BCE through the logit; zero once the clamp is active
            double g_logit = 0.0;
            if (p > kProbClamp && p < 1.0 - kProbClamp) {
                g_logit += (p - static_cast<double>(inst.label)) /
                           static_cast<double>(pred_count);
            }
            // consistency: dC/dp_t = (4/T)(p_t - mean), through sigmoid
            g_logit += lambda / n_inst * (4.0 / t_count) * (p - mean_p) * p * (1.0 - p);
            g.accumulate_grad(caches[t], g_logit, grad);
        }
    }
    return bce_acc / static_cast<double>(pred_count) + lambda * consis_acc / n_inst;
}

}  // namespace flowguard
