#pragma once

#include <algorithm>
#include <chrono>
#include <vector>

#include <json.hpp>

#include "linear_decoder.hpp"
#include "reference_decoder.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace flowguard {

struct BenchEntry {
    std::size_t batch = 0;
    double linear_seconds_per_decode = 0.0;
    double reference_seconds_per_decode = 0.0;
    double speedup = 0.0;
    // analytic intermediate-buffer sizes, in floats per decoded sample
    std::size_t linear_floats_per_decode = 0;
    std::size_t reference_floats_per_decode = 0;
    double memory_reduction = 0.0;
};

struct BenchReport {
    std::vector<std::size_t> latent_dims;
    std::vector<std::size_t> image_dims;
    std::size_t hidden_channels = 0;
    std::size_t repetitions = 0;
    std::vector<BenchEntry> entries;
};

namespace bench_detail {

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace bench_detail

/// Time the affine decoder against the reference decoder on identical
/// random latent batches. Wall times are medians over `repetitions`;
/// buffer sizes are counted analytically so they do not depend on the
/// allocator or machine.
inline BenchReport bench_decoders(const std::vector<std::size_t>& latent_dims,
                                  const std::vector<std::size_t>& image_dims,
                                  const std::vector<std::size_t>& batch_sizes,
                                  std::size_t repetitions, std::uint64_t seed,
                                  std::size_t hidden_channels = 32) {
    if (batch_sizes.empty()) throw ValidationError("bench: batch_sizes must be nonempty");
    if (repetitions < 1) throw ValidationError("bench: repetitions must be >= 1");

    const ReferenceDecoder ref(latent_dims, image_dims, Rng::derive(seed, 1).next_u64(),
                               static_cast<int>(hidden_channels));
    const std::size_t d_z = Tensor::element_count(latent_dims);
    const std::size_t d_x = Tensor::element_count(image_dims);

    AffineDecoder lin;
    lin.latent_dims = latent_dims;
    lin.image_dims = image_dims;
    lin.fit_method = "random";
    {
        Rng rng = Rng::derive(seed, 2);
        lin.weight.resize(static_cast<Eigen::Index>(d_x), static_cast<Eigen::Index>(d_z));
        lin.bias.resize(static_cast<Eigen::Index>(d_x));
        for (Eigen::Index j = 0; j < lin.weight.cols(); ++j) {
            for (Eigen::Index i = 0; i < lin.weight.rows(); ++i) {
                lin.weight(i, j) = static_cast<float>(rng.normal() / std::sqrt(double(d_z)));
            }
        }
        for (Eigen::Index i = 0; i < lin.bias.size(); ++i) {
            lin.bias(i) = static_cast<float>(rng.normal());
        }
    }

    BenchReport report;
    report.latent_dims = latent_dims;
    report.image_dims = image_dims;
    report.hidden_channels = hidden_channels;
    report.repetitions = repetitions;

    using clock = std::chrono::steady_clock;
    Rng rng = Rng::derive(seed, 3);
    for (std::size_t batch : batch_sizes) {
        if (batch < 1) throw ValidationError("bench: batch size must be >= 1");
        Eigen::MatrixXf z(static_cast<Eigen::Index>(d_z), static_cast<Eigen::Index>(batch));
        for (Eigen::Index j = 0; j < z.cols(); ++j) {
            for (Eigen::Index i = 0; i < z.rows(); ++i) {
                z(i, j) = static_cast<float>(rng.normal());
            }
        }
        // one untimed warm pass each, so lazy page faults do not skew rep 0
        volatile float sink = lin.decode_batch(z).sum() + ref.decode_batch(z).sum();
        (void)sink;

        std::vector<double> lin_times, ref_times;
        for (std::size_t rep = 0; rep < repetitions; ++rep) {
            auto t0 = clock::now();
            volatile float s1 = lin.decode_batch(z).sum();
            auto t1 = clock::now();
            volatile float s2 = ref.decode_batch(z).sum();
            auto t2 = clock::now();
            (void)s1;
            (void)s2;
            lin_times.push_back(std::chrono::duration<double>(t1 - t0).count() /
                                static_cast<double>(batch));
            ref_times.push_back(std::chrono::duration<double>(t2 - t1).count() /
                                static_cast<double>(batch));
        }

        BenchEntry e;
        e.batch = batch;
        e.linear_seconds_per_decode = bench_detail::median(lin_times);
        e.reference_seconds_per_decode = bench_detail::median(ref_times);
        e.speedup = e.reference_seconds_per_decode /
                    std::max(e.linear_seconds_per_decode, 1e-12);
        e.linear_floats_per_decode = d_x;
        e.reference_floats_per_decode = ref.floats_per_decode();
        e.memory_reduction = 1.0 - static_cast<double>(e.linear_floats_per_decode) /
                                       static_cast<double>(e.reference_floats_per_decode);
        report.entries.push_back(e);
    }
    return report;
}

inline nlohmann::json bench_to_json(const BenchReport& r) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : r.entries) {
        entries.push_back({{"batch", e.batch},
                           {"linear_floats_per_decode", e.linear_floats_per_decode},
                           {"reference_floats_per_decode", e.reference_floats_per_decode},
                           {"memory_reduction", e.memory_reduction},
                           {"timing",
                            {{"linear_seconds_per_decode", e.linear_seconds_per_decode},
                             {"reference_seconds_per_decode", e.reference_seconds_per_decode},
                             {"speedup", e.speedup}}}});
    }
    return nlohmann::json{{"latent_dims", r.latent_dims},
                          {"image_dims", r.image_dims},
                          {"hidden_channels", r.hidden_channels},
                          {"repetitions", r.repetitions},
                          {"entries", entries}};
}

}  // namespace flowguard
