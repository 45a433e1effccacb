#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "manifest.hpp"
#include "io.hpp"
#include "reference_decoder.hpp"
#include "rng.hpp"
#include "schedule.hpp"
#include "tensor.hpp"

namespace flowguard {

/// One generation instance kept in memory: the clean latent, its noised
/// latents over the requested generation steps, and the trajectory label.
struct Trajectory {
    std::string model_id;
    Tensor z0;
    std::vector<int> steps;      // generation-step indices, strictly increasing
    std::vector<Tensor> latents; // one per step
    int label = 0;
    std::uint64_t seed = 0;
};

/// Tuning knobs of the synthetic latent generator. The class signal is a
/// fixed low-spatial-frequency pattern split over two latent modes: one
/// sharing a mode with heavy clutter, one nearly clutter-free. Both live
/// inside the lowest frequency ring so the signal survives low-pass
/// filtering while diffusion noise stays broadband.
struct SynthParams {
    double pattern_amp_cluttered = 2.2;  // amplitude on the clutter-heavy mode
    double pattern_amp_clean = 2.5;      // amplitude on the near-clean mode
    double clutter_heavy = 1.2;          // clutter std on the cluttered signal mode
    double clutter_clean = 0.02;         // clutter std on the clean signal mode
    double clutter_dc = 0.3;             // clutter std on per-channel DC
    double clutter_other = 0.1;          // clutter std on remaining low-freq modes
};

namespace detail {

// Unit-normalized cosine mode cos(2*pi*(ku*u/H + kv*v/W)) on one channel.
inline void add_mode(std::vector<float>& z, std::size_t C, std::size_t H, std::size_t W,
                     std::size_t channel, int ku, int kv, double coeff) {
    (void)C;
    std::vector<double> vals(H * W);
    double norm_sq = 0.0;
    for (std::size_t u = 0; u < H; ++u) {
        for (std::size_t v = 0; v < W; ++v) {
            const double phase = 2.0 * M_PI * (static_cast<double>(ku) * static_cast<double>(u) / static_cast<double>(H) +
                                               static_cast<double>(kv) * static_cast<double>(v) / static_cast<double>(W));
            const double x = std::cos(phase);
            vals[u * W + v] = x;
            norm_sq += x * x;
        }
    }
    const double inv_norm = 1.0 / std::sqrt(norm_sq);
    float* base = z.data() + channel * H * W;
    for (std::size_t i = 0; i < H * W; ++i) {
        base[i] += static_cast<float>(coeff * vals[i] * inv_norm);
    }
}

struct Mode { int ku, kv; };

inline const std::vector<Mode>& low_freq_modes() {
    // one representative per conjugate pair, |k| <= 2 per axis
    static const std::vector<Mode> modes = [] {
        std::vector<Mode> m;
        for (int ku = 0; ku <= 2; ++ku) {
            for (int kv = -2; kv <= 2; ++kv) {
                if (ku == 0 && kv < 0) continue;
                m.push_back({ku, kv});
            }
        }
        return m;
    }();
    return modes;
}

}  // namespace detail

/// The injected label pattern on its own (what separates label 1 from
/// label 0 at identical seed).
inline Tensor synth_label_pattern(const std::vector<std::size_t>& dims,
                                  const SynthParams& params = {}) {
    if (dims.size() != 3) throw ValidationError("synth: latent dims must be (C,H,W)");
    const std::size_t C = dims[0], H = dims[1], W = dims[2];
    std::vector<float> z(C * H * W, 0.0f);
    const std::size_t clean_channel = C > 1 ? 1 : 0;
    detail::add_mode(z, C, H, W, 0, 1, 0, params.pattern_amp_cluttered);
    detail::add_mode(z, C, H, W, clean_channel, 0, 1, params.pattern_amp_clean);
    return Tensor(dims, std::move(z));
}

/// Clean latent: smooth random low-frequency field plus, for label 1, the
/// fixed label pattern. Deterministic in (seed, label, dims).
inline Tensor synth_instance(std::uint64_t seed, int label,
                             const std::vector<std::size_t>& dims,
                             const SynthParams& params = {}) {
    if (label != 0 && label != 1) throw ValidationError("synth_instance: label must be 0 or 1");
    if (dims.size() != 3) throw ValidationError("synth_instance: latent dims must be (C,H,W)");
    const std::size_t C = dims[0], H = dims[1], W = dims[2];
    const std::size_t clean_channel = C > 1 ? 1 : 0;

    Rng rng = Rng::derive(seed, 0x5f1e1d);
    std::vector<float> z(C * H * W, 0.0f);
    for (std::size_t c = 0; c < C; ++c) {
        for (const auto& mode : detail::low_freq_modes()) {
            double sigma = params.clutter_other;
            if (mode.ku == 0 && mode.kv == 0) sigma = params.clutter_dc;
            if (c == 0 && mode.ku == 1 && mode.kv == 0) sigma = params.clutter_heavy;
            // the clean mode's frequency stays near clutter-free on every
            // channel: decoders mix channels, so per-channel cleanliness
            // alone would not survive decoding
            if (mode.ku == 0 && mode.kv == 1) sigma = params.clutter_clean;
            const double coeff = sigma * rng.normal();
            detail::add_mode(z, C, H, W, c, mode.ku, mode.kv, coeff);
        }
    }
    Tensor out(dims, std::move(z));
    if (label == 1) {
        const Tensor pattern = synth_label_pattern(dims, params);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += pattern[i];
    }
    return out;
}

/// Noise z0 to every requested generation step. Each step draws fresh noise
/// from the trajectory's own stream.
inline Trajectory make_trajectory(const std::string& model_id, std::uint64_t seed, int label,
                                  const std::vector<std::size_t>& latent_dims,
                                  const VarianceSchedule& sched, const std::vector<int>& steps,
                                  const SynthParams& params = {}) {
    Trajectory traj;
    traj.model_id = model_id;
    traj.seed = seed;
    traj.label = label;
    traj.steps = steps;
    traj.z0 = synth_instance(seed, label, latent_dims, params);
    Rng noise_rng = Rng::derive(seed, 0x701e5);
    for (int s : steps) {
        const int t = gen_step_to_diffusion_time(s, sched.steps());
        const Tensor eps = gaussian_tensor(latent_dims, noise_rng);
        traj.latents.push_back(forward_noise(traj.z0, sched, t, eps));
    }
    return traj;
}

/// n trajectories per model id, balanced labels, deterministic in all
/// arguments. Per-record RNG streams derive from (seed, model index, record
/// index) so generation order never matters.
inline std::vector<Trajectory> build_synthetic_trajectories(
    int n, const std::vector<std::string>& models, const VarianceSchedule& sched,
    const std::vector<int>& steps, std::uint64_t seed,
    const std::vector<std::size_t>& latent_dims, const SynthParams& params = {}) {
    if (n < 1) throw ValidationError("build_synthetic_dataset: n must be >= 1");
    if (models.empty()) throw ValidationError("build_synthetic_dataset: no model ids");
    std::vector<Trajectory> out;
    out.reserve(static_cast<std::size_t>(n) * models.size());
    for (std::size_t mi = 0; mi < models.size(); ++mi) {
        for (int i = 0; i < n; ++i) {
            const std::uint64_t rec_seed =
                Rng::derive(seed, (mi << 32) | static_cast<std::uint64_t>(i)).next_u64();
            const int label = i % 2;  // balanced by construction
            out.push_back(make_trajectory(models[mi], rec_seed, label, latent_dims, sched,
                                          steps, params));
        }
    }
    return out;
}

inline std::uint64_t model_decoder_seed(std::uint64_t dataset_seed, const std::string& model_id) {
    // FNV-1a over the id, folded with the dataset seed
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : model_id) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return Rng::derive(dataset_seed, h).next_u64();
}

/// Write a full dataset directory:
///   out_dir/manifest.json
///   out_dir/<model>/<record>/z_<step>.fgt, final.fgt
/// Each model id gets its own reference decoder seed.
inline DatasetManifest build_synthetic_dataset(
    int n, const std::vector<std::string>& models, const VarianceSchedule& sched,
    const std::vector<int>& steps, std::uint64_t seed, const std::filesystem::path& out_dir,
    const std::vector<std::size_t>& latent_dims, const std::vector<std::size_t>& image_dims,
    int decoder_hidden_channels = 8, const SynthParams& params = {}) {
    const auto trajectories =
        build_synthetic_trajectories(n, models, sched, steps, seed, latent_dims, params);

    DatasetManifest manifest;
    manifest.total_steps = sched.steps();

    std::filesystem::create_directories(out_dir);
    std::size_t idx = 0;
    for (std::size_t mi = 0; mi < models.size(); ++mi) {
        const ReferenceDecoder refdec(latent_dims, image_dims,
                                      model_decoder_seed(seed, models[mi]),
                                      decoder_hidden_channels);
        for (int i = 0; i < n; ++i, ++idx) {
            const Trajectory& traj = trajectories[idx];
            const std::filesystem::path rec_dir =
                out_dir / models[mi] / ("rec_" + std::to_string(i));
            std::filesystem::create_directories(rec_dir);

            ManifestRecord rec;
            rec.model_id = traj.model_id;
            rec.prompt = "synthetic prompt " + std::to_string(traj.seed);
            rec.label = traj.label;
            rec.steps = traj.steps;
            for (std::size_t si = 0; si < traj.steps.size(); ++si) {
                const auto rel = std::filesystem::path(models[mi]) /
                                 ("rec_" + std::to_string(i)) /
                                 ("z_" + std::to_string(traj.steps[si]) + ".fgt");
                write_tensor(traj.latents[si], out_dir / rel);
                rec.latent_paths.push_back(rel.generic_string());
            }
            const auto final_rel = std::filesystem::path(models[mi]) /
                                   ("rec_" + std::to_string(i)) / "final.fgt";
            write_tensor(refdec.decode(traj.z0), out_dir / final_rel);
            rec.final_image_path = final_rel.generic_string();
            manifest.records.push_back(std::move(rec));
        }
    }
    write_manifest(manifest, out_dir / "manifest.json");
    return manifest;
}

}  // namespace flowguard
