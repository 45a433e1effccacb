#pragma once

#include <cmath>
#include <vector>

#include "tensor.hpp"

namespace flowguard {

/// beta/alpha/alpha-bar sequences driving forward noising. Indexing is
/// 1-based in the math; beta(t) below takes t in [1, T].
struct VarianceSchedule {
    std::vector<double> betas;       // beta_t, t = 1..T
    std::vector<double> alphas;      // 1 - beta_t
    std::vector<double> alpha_bars;  // prod_{s<=t} alpha_s

    int steps() const { return static_cast<int>(betas.size()); }

    double beta(int t) const { check(t); return betas[static_cast<std::size_t>(t - 1)]; }
    double alpha(int t) const { check(t); return alphas[static_cast<std::size_t>(t - 1)]; }
    double alpha_bar(int t) const { check(t); return alpha_bars[static_cast<std::size_t>(t - 1)]; }

private:
    void check(int t) const {
        if (t < 1 || t > steps()) {
            throw ValidationError("VarianceSchedule: t out of [1,T]");
        }
    }
};

inline VarianceSchedule schedule_from_betas(std::vector<double> betas) {
    VarianceSchedule s;
    s.betas = std::move(betas);
    double prod = 1.0;
    for (double b : s.betas) {
        if (b < 0.0 || b >= 1.0) throw ValidationError("schedule: beta_t out of [0,1)");
        s.alphas.push_back(1.0 - b);
        prod *= 1.0 - b;
        s.alpha_bars.push_back(prod);
    }
    return s;
}

inline VarianceSchedule make_linear_beta_schedule(int T, double beta_min, double beta_max) {
    if (T < 1) throw ValidationError("make_linear_beta_schedule: T must be >= 1");
    if (!(beta_min > 0.0) || !(beta_min <= beta_max) || !(beta_max < 1.0)) {
        throw ValidationError("make_linear_beta_schedule: need 0 < beta_min <= beta_max < 1");
    }
    std::vector<double> betas(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
        betas[static_cast<std::size_t>(t)] =
            T == 1 ? beta_min
                   : beta_min + (beta_max - beta_min) * static_cast<double>(t) / (T - 1);
    }
    return schedule_from_betas(std::move(betas));
}

inline VarianceSchedule default_schedule(int T = 50) {
    return make_linear_beta_schedule(T, 1e-4, 0.02);
}

/// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps
inline Tensor forward_noise(const Tensor& z0, const VarianceSchedule& sched, int t,
                            const Tensor& eps) {
    require_same_dims(z0, eps, "forward_noise");
    const double abar = sched.alpha_bar(t);
    const float a = static_cast<float>(std::sqrt(abar));
    const float b = static_cast<float>(std::sqrt(1.0 - abar));
    std::vector<float> out(z0.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a * z0[i] + b * eps[i];
    }
    return Tensor(z0.dims(), std::move(out));
}

/// Generation step s (0-based, increasing as noise decreases) to diffusion
/// time t (1-based, t = T is pure noise). s = T-1 maps to t = 1.
inline int gen_step_to_diffusion_time(int s, int T) {
    if (s < 0 || s > T - 1) throw ValidationError("gen_step_to_diffusion_time: s out of [0,T-1]");
    return T - s;
}

}  // namespace flowguard
