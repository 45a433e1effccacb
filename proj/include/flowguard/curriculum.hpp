#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "classifier.hpp"
#include "linear_decoder.hpp"
#include "lpf.hpp"
#include "manifest.hpp"
#include "rng.hpp"
#include "synth.hpp"
#include "tensor.hpp"

namespace flowguard {

struct CurriculumPlan {
    std::vector<std::vector<int>> stages;
    int epochs_per_stage = 4;
    double learning_rate = 1e-4;
    double lambda = 0.01;
    int batch = 128;
    std::uint64_t seed = 0;
    // "fixed" or "cosine_warmup" (cosine decay with 10% linear warmup)
    std::string lr_schedule = "fixed";

    void validate(int total_steps) const {
        if (stages.empty()) throw ValidationError("plan: stages must be nonempty");
        for (const auto& stage : stages) {
            if (stage.empty()) throw ValidationError("plan: empty stage");
            for (int s : stage) {
                if (s < 0 || s >= total_steps) {
                    throw ValidationError("plan: step index out of [0,T-1]");
                }
            }
        }
        if (epochs_per_stage < 0) throw ValidationError("plan: epochs_per_stage must be >= 0");
        if (batch < 1) throw ValidationError("plan: batch must be >= 1");
        if (lambda < 0.0) throw ValidationError("plan: lambda must be >= 0");
        if (learning_rate <= 0.0) throw ValidationError("plan: learning_rate must be > 0");
    }
};

/// Four-stage default over generation steps, moving from late (near-clean)
/// into earlier, noisier steps.
inline CurriculumPlan make_default_plan(int T = 50) {
    CurriculumPlan plan;
    plan.stages = {{49, 45, 40, 35, 30},
                   {45, 40, 35, 30, 25},
                   {40, 35, 30, 25, 20},
                   {30, 27, 24, 22, 20}};
    plan.epochs_per_stage = 4;
    plan.learning_rate = 1e-4;
    plan.lambda = 0.01;
    plan.batch = 128;
    plan.validate(T);
    return plan;
}

struct TrainReport {
    // mean mini-batch loss per epoch, one series per stage
    std::vector<std::vector<double>> stage_losses;
    // training-set accuracy per generation step after the final stage
    std::map<int, double> step_accuracy;
};

/// Pooled classifier features per record and step; the cached form the
/// trainer and evaluator run on.
struct FeatureRecord {
    std::string model_id;
    int label = 0;
    std::map<int, Eigen::VectorXd> features;  // step -> pooled feature vector
};

struct FeatureDataset {
    std::vector<std::size_t> image_dims;
    std::vector<FeatureRecord> records;
};

/// Decode latents with the per-model affine decoder, low-pass filter, and
/// pool into classifier features.
inline FeatureDataset build_feature_dataset(
    const std::vector<Trajectory>& trajectories,
    const std::map<std::string, AffineDecoder>& decoders, double lpf_r) {
    if (trajectories.empty()) throw ValidationError("build_feature_dataset: no records");
    FeatureDataset ds;
    const AffineDecoder* first = nullptr;
    for (const auto& traj : trajectories) {
        auto it = decoders.find(traj.model_id);
        if (it == decoders.end()) {
            throw ValidationError("train: no decoder for model " + traj.model_id);
        }
        if (!first) {
            first = &it->second;
            ds.image_dims = first->image_dims;
        }
        const Classifier pool = Classifier::zero_init(ds.image_dims);
        const Tensor mask = build_mask(ds.image_dims[1], ds.image_dims[2], lpf_r);
        FeatureRecord rec;
        rec.model_id = traj.model_id;
        rec.label = traj.label;
        for (std::size_t si = 0; si < traj.steps.size(); ++si) {
            const Tensor image = it->second.decode(traj.latents[si]);
            rec.features[traj.steps[si]] = pool.features(apply_mask(image, mask));
        }
        ds.records.push_back(std::move(rec));
    }
    return ds;
}

/// Load stored trajectories back from a dataset directory, optionally
/// restricted to the steps a consumer actually needs.
inline std::vector<Trajectory> load_trajectories(const DatasetManifest& manifest,
                                                 const std::filesystem::path& base_dir,
                                                 const std::vector<int>* steps_needed = nullptr) {
    std::vector<Trajectory> trajectories;
    trajectories.reserve(manifest.records.size());
    for (const auto& rec : manifest.records) {
        Trajectory traj;
        traj.model_id = rec.model_id;
        traj.label = rec.label;
        for (std::size_t si = 0; si < rec.steps.size(); ++si) {
            const int s = rec.steps[si];
            if (steps_needed &&
                std::find(steps_needed->begin(), steps_needed->end(), s) == steps_needed->end()) {
                continue;
            }
            traj.steps.push_back(s);
            traj.latents.push_back(read_tensor(base_dir / rec.latent_paths[si]));
        }
        trajectories.push_back(std::move(traj));
    }
    return trajectories;
}

/// Same, reading latents from a dataset directory via its manifest.
inline FeatureDataset build_feature_dataset(
    const DatasetManifest& manifest, const std::filesystem::path& base_dir,
    const std::map<std::string, AffineDecoder>& decoders, double lpf_r,
    const std::vector<int>* steps_needed = nullptr) {
    return build_feature_dataset(load_trajectories(manifest, base_dir, steps_needed), decoders,
                                 lpf_r);
}

namespace detail {

struct Adam {
    std::vector<double> m, v;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::uint64_t t = 0;

    explicit Adam(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

    void step(std::vector<double>& params, const std::vector<double>& grad, double lr) {
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
            params[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
        }
    }
};

// Inverse-frequency weights per (model, class); epoch sampling is a
// deterministic function of (seed, stage, epoch).
inline std::vector<std::size_t> weighted_epoch_sample(const FeatureDataset& ds,
                                                      std::uint64_t seed, int stage, int epoch) {
    std::map<std::pair<std::string, int>, std::size_t> counts;
    for (const auto& r : ds.records) counts[{r.model_id, r.label}]++;
    std::vector<double> cumulative;
    cumulative.reserve(ds.records.size());
    double total = 0.0;
    for (const auto& r : ds.records) {
        total += 1.0 / static_cast<double>(counts[{r.model_id, r.label}]);
        cumulative.push_back(total);
    }
    Rng rng = Rng::derive(seed, 0x5a3ull + (static_cast<std::uint64_t>(stage) << 20) +
                                    static_cast<std::uint64_t>(epoch));
    std::vector<std::size_t> sample(ds.records.size());
    for (auto& idx : sample) {
        const double u = rng.uniform() * total;
        idx = static_cast<std::size_t>(
            std::lower_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
        if (idx >= ds.records.size()) idx = ds.records.size() - 1;
    }
    return sample;
}

}  // namespace detail

/// Staged curriculum training on cached features. Deterministic in
/// (dataset, plan). Returns the trained classifier and per-stage losses.
inline std::pair<Classifier, TrainReport> train_on_features(const FeatureDataset& ds,
                                                            const CurriculumPlan& plan) {
    if (ds.records.empty()) throw ValidationError("train: empty dataset");
    int max_step = 0;
    for (const auto& stage : plan.stages) {
        for (int s : stage) max_step = std::max(max_step, s);
    }
    plan.validate(max_step + 1);

    Classifier g = Classifier::random_init(ds.image_dims, plan.seed);
    auto params = g.parameters();
    detail::Adam opt(params.size());
    TrainReport report;

    const std::size_t n = ds.records.size();
    const std::size_t batches_per_epoch =
        (n + static_cast<std::size_t>(plan.batch) - 1) / static_cast<std::size_t>(plan.batch);
    const std::size_t total_updates = plan.stages.size() *
                                      static_cast<std::size_t>(plan.epochs_per_stage) *
                                      batches_per_epoch;
    std::size_t update = 0;

    for (std::size_t k = 0; k < plan.stages.size(); ++k) {
        const auto& stage_steps = plan.stages[k];
        for (const auto& rec : ds.records) {
            for (int s : stage_steps) {
                if (!rec.features.count(s)) {
                    throw ValidationError("train: record for model " + rec.model_id +
                                          " lacks step " + std::to_string(s));
                }
            }
        }
        std::vector<double> epoch_losses;
        for (int epoch = 0; epoch < plan.epochs_per_stage; ++epoch) {
            const auto order =
                detail::weighted_epoch_sample(ds, plan.seed, static_cast<int>(k), epoch);
            double loss_acc = 0.0;
            std::size_t batch_count = 0;
            for (std::size_t start = 0; start < order.size();
                 start += static_cast<std::size_t>(plan.batch)) {
                const std::size_t end =
                    std::min(order.size(), start + static_cast<std::size_t>(plan.batch));
                std::vector<StageInstance> batch;
                batch.reserve(end - start);
                for (std::size_t i = start; i < end; ++i) {
                    const FeatureRecord& rec = ds.records[order[i]];
                    StageInstance inst;
                    inst.label = rec.label;
                    for (int s : stage_steps) inst.step_features.push_back(rec.features.at(s));
                    batch.push_back(std::move(inst));
                }
                std::vector<double> grad;
                const double loss = stage_loss_grad(g, batch, plan.lambda, grad);
                if (!std::isfinite(loss)) {
                    throw ValidationError("train: divergence (non-finite loss)");
                }
                double lr = plan.learning_rate;
                if (plan.lr_schedule == "cosine_warmup") {
                    const double progress =
                        static_cast<double>(update) / static_cast<double>(total_updates);
                    lr *= progress < 0.1 ? progress / 0.1
                                         : 0.5 * (1.0 + std::cos(M_PI * (progress - 0.1) / 0.9));
                }
                opt.step(params, grad, lr);
                g.set_parameters(params);
                loss_acc += loss;
                ++batch_count;
                ++update;
            }
            epoch_losses.push_back(loss_acc / static_cast<double>(batch_count));
        }
        report.stage_losses.push_back(std::move(epoch_losses));
    }

    // per-step accuracy on the training features, all steps present everywhere
    std::map<int, std::pair<std::size_t, std::size_t>> counts;  // step -> (correct, total)
    for (const auto& rec : ds.records) {
        for (const auto& [s, f] : rec.features) {
            const int pred = g.predict_from_features(f) >= 0.5 ? 1 : 0;
            auto& [correct, total_count] = counts[s];
            if (pred == rec.label) ++correct;
            ++total_count;
        }
    }
    for (const auto& [s, c] : counts) {
        report.step_accuracy[s] =
            static_cast<double>(c.first) / static_cast<double>(c.second);
    }
    return {std::move(g), std::move(report)};
}

inline std::pair<Classifier, TrainReport> train_curriculum(
    const std::vector<Trajectory>& trajectories,
    const std::map<std::string, AffineDecoder>& decoders, double lpf_r,
    const CurriculumPlan& plan) {
    return train_on_features(build_feature_dataset(trajectories, decoders, lpf_r), plan);
}

inline std::pair<Classifier, TrainReport> train_curriculum(
    const DatasetManifest& manifest, const std::filesystem::path& base_dir,
    const std::map<std::string, AffineDecoder>& decoders, double lpf_r,
    const CurriculumPlan& plan) {
    std::vector<int> needed;
    for (const auto& stage : plan.stages) {
        for (int s : stage) {
            if (std::find(needed.begin(), needed.end(), s) == needed.end()) needed.push_back(s);
        }
    }
    return train_on_features(
        build_feature_dataset(manifest, base_dir, decoders, lpf_r, &needed), plan);
}

/// Accuracy of thresholded predictions at one generation step.
inline double accuracy_at_step(const Classifier& g, const FeatureDataset& ds, int step,
                               double threshold = 0.5) {
    std::size_t correct = 0, total = 0;
    for (const auto& rec : ds.records) {
        auto it = rec.features.find(step);
        if (it == rec.features.end()) continue;
        const int pred = g.predict_from_features(it->second) >= threshold ? 1 : 0;
        if (pred == rec.label) ++correct;
        ++total;
    }
    if (total == 0) throw ValidationError("accuracy_at_step: no records carry that step");
    return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace flowguard
