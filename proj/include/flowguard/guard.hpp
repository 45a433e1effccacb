#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "classifier.hpp"
#include "linear_decoder.hpp"
#include "lpf.hpp"
#include "reference_decoder.hpp"
#include "synth.hpp"
#include "tensor.hpp"

namespace flowguard {

struct GuardConfig {
    std::vector<int> steps;  // generation-step indices to inspect, increasing
    double threshold = 0.5;  // > 1 means "never trigger"
    AffineDecoder decoder;
    double lpf_r = 0.2;
    Classifier classifier;

    void validate() const {
        if (steps.empty()) throw ValidationError("guard: selected step set is empty");
        for (std::size_t i = 1; i < steps.size(); ++i) {
            if (steps[i] <= steps[i - 1]) {
                throw ValidationError("guard: steps must be strictly increasing");
            }
        }
        if (threshold < 0.0) throw ValidationError("guard: threshold must be >= 0");
    }
};

struct GuardDecision {
    int label = 0;
    std::optional<int> trigger_step;
    std::vector<std::pair<int, double>> scores;  // steps actually visited, in order
    std::optional<Tensor> final_image;
    int reference_decodes = 0;
};

struct MetricsReport {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0;
};

/// Score one latent: decode, low-pass, classify.
inline double guard_step(const GuardConfig& cfg, const Tensor& z) {
    return cfg.classifier.predict(apply_lpf(cfg.decoder.decode(z), cfg.lpf_r));
}

inline double aggregate_max(const std::vector<double>& scores) {
    if (scores.empty()) throw ValidationError("aggregate_max: empty score list");
    return *std::max_element(scores.begin(), scores.end());
}

/// Inclusive at the boundary: p == threshold flags.
inline int threshold_decision(double p, double threshold) { return p >= threshold ? 1 : 0; }

/// Early-exit guard over a latent stream in generation order. Flags on the
/// first inspected step whose score clears the threshold; otherwise decodes
/// the last latent once with the reference decoder (when one is supplied).
inline GuardDecision run_guard(const GuardConfig& cfg,
                               const std::vector<std::pair<int, Tensor>>& stream,
                               const ReferenceDecoder* final_decoder = nullptr) {
    cfg.validate();
    if (stream.empty()) throw ValidationError("guard: insufficient trajectory (empty stream)");
    GuardDecision decision;
    std::size_t covered = 0;
    for (const auto& [step, z] : stream) {
        if (covered < cfg.steps.size() && step == cfg.steps[covered]) {
            const double p = guard_step(cfg, z);
            decision.scores.emplace_back(step, p);
            ++covered;
            if (threshold_decision(p, cfg.threshold)) {
                decision.label = 1;
                decision.trigger_step = step;
                return decision;
            }
        }
    }
    if (covered < cfg.steps.size()) {
        throw ValidationError("guard: insufficient trajectory (stream ends before step " +
                              std::to_string(cfg.steps[covered]) + ")");
    }
    decision.label = 0;
    if (final_decoder) {
        decision.final_image = final_decoder->decode(stream.back().second);
        decision.reference_decodes = 1;
    }
    return decision;
}

inline GuardDecision run_guard(const GuardConfig& cfg, const Trajectory& traj,
                               const ReferenceDecoder* final_decoder = nullptr) {
    std::vector<std::pair<int, Tensor>> stream;
    stream.reserve(traj.steps.size());
    for (std::size_t i = 0; i < traj.steps.size(); ++i) {
        stream.emplace_back(traj.steps[i], traj.latents[i]);
    }
    return run_guard(cfg, stream, final_decoder);
}

/// Fill in the derived metrics; empty denominators resolve to 0.
inline MetricsReport metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t tn,
                                         std::size_t fn) {
    MetricsReport m;
    m.tp = tp;
    m.fp = fp;
    m.tn = tn;
    m.fn = fn;
    const std::size_t n = tp + fp + tn + fn;
    m.accuracy = n ? static_cast<double>(tp + tn) / static_cast<double>(n) : 0.0;
    m.precision = (tp + fp) ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    m.recall = (tp + fn) ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    m.f1 = (m.precision + m.recall > 0.0)
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
    return m;
}

/// Run the guard (no final decode) on every labeled trajectory and tally
/// the confusion matrix.
inline MetricsReport evaluate(const GuardConfig& cfg, const std::vector<Trajectory>& dataset) {
    cfg.validate();
    std::string missing;
    for (const auto& traj : dataset) {
        for (int s : cfg.steps) {
            if (std::find(traj.steps.begin(), traj.steps.end(), s) == traj.steps.end()) {
                if (!missing.empty()) missing += ", ";
                missing += traj.model_id + "/seed" + std::to_string(traj.seed);
                break;
            }
        }
    }
    if (!missing.empty()) {
        throw ValidationError("evaluate: records missing selected steps: " + missing);
    }
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (const auto& traj : dataset) {
        const int pred = run_guard(cfg, traj, nullptr).label;
        if (pred == 1) {
            (traj.label == 1 ? tp : fp)++;
        } else {
            (traj.label == 0 ? tn : fn)++;
        }
    }
    return metrics_from_counts(tp, fp, tn, fn);
}

inline nlohmann::json metrics_to_json(const MetricsReport& m) {
    return nlohmann::json{{"tp", m.tp},           {"fp", m.fp},
                          {"tn", m.tn},           {"fn", m.fn},
                          {"accuracy", m.accuracy}, {"precision", m.precision},
                          {"recall", m.recall},   {"f1", m.f1}};
}

}  // namespace flowguard
