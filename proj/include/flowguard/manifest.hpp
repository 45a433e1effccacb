#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tensor.hpp"

namespace flowguard {

/// One generation instance: which model produced it, which generation steps
/// were stored, where the per-step latent files live, and the single
/// trajectory-level label shared by every step.
struct ManifestRecord {
    std::string model_id;
    std::string prompt;
    int label = 0;  // 0 safe, 1 unsafe
    std::vector<int> steps;               // index set J, strictly increasing
    std::vector<std::string> latent_paths; // one per step
    std::vector<std::string> recon_paths;  // optional, empty or one per step
    std::string final_image_path;          // optional

    void validate(int total_steps) const {
        if (label != 0 && label != 1) {
            throw ValidationError("manifest: label must be 0 or 1, got " + std::to_string(label));
        }
        if (latent_paths.size() != steps.size()) {
            throw ValidationError("manifest: |latent_paths| != |J| for model " + model_id);
        }
        if (!recon_paths.empty() && recon_paths.size() != steps.size()) {
            throw ValidationError("manifest: |recon_paths| != |J| for model " + model_id);
        }
        for (std::size_t i = 0; i < steps.size(); ++i) {
            if (steps[i] < 0 || steps[i] >= total_steps) {
                throw ValidationError("manifest: step index out of [0,T-1]");
            }
            if (i > 0 && steps[i] <= steps[i - 1]) {
                throw ValidationError("manifest: step index set J not strictly increasing");
            }
        }
    }
};

struct DatasetManifest {
    int total_steps = 0;  // T
    std::vector<ManifestRecord> records;

    void validate() const {
        if (total_steps < 1) throw ValidationError("manifest: total_steps must be >= 1");
        for (const auto& r : records) r.validate(total_steps);
    }
};

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
    m.validate();
    nlohmann::json j;
    j["total_steps"] = m.total_steps;
    j["records"] = nlohmann::json::array();
    for (const auto& r : m.records) {
        nlohmann::json jr;
        jr["model_id"] = r.model_id;
        jr["prompt"] = r.prompt;
        jr["label"] = r.label;
        jr["steps"] = r.steps;
        jr["latent_paths"] = r.latent_paths;
        if (!r.recon_paths.empty()) jr["recon_paths"] = r.recon_paths;
        if (!r.final_image_path.empty()) jr["final_image_path"] = r.final_image_path;
        j["records"].push_back(std::move(jr));
    }
    return j;
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
    DatasetManifest m;
    try {
        m.total_steps = j.at("total_steps").get<int>();
        for (const auto& jr : j.at("records")) {
            ManifestRecord r;
            r.model_id = jr.at("model_id").get<std::string>();
            r.prompt = jr.at("prompt").get<std::string>();
            r.label = jr.at("label").get<int>();
            r.steps = jr.at("steps").get<std::vector<int>>();
            r.latent_paths = jr.at("latent_paths").get<std::vector<std::string>>();
            if (jr.contains("recon_paths")) {
                r.recon_paths = jr.at("recon_paths").get<std::vector<std::string>>();
            }
            if (jr.contains("final_image_path")) {
                r.final_image_path = jr.at("final_image_path").get<std::string>();
            }
            m.records.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("manifest: missing or malformed field: ") + e.what());
    }
    m.validate();
    return m;
}

inline void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("write_manifest: cannot open " + path.string());
    f << manifest_to_json(m).dump(2) << "\n";
    if (!f) throw IoError("write_manifest: write failed on " + path.string());
}

inline DatasetManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("read_manifest: cannot open " + path.string());
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("read_manifest: invalid JSON: ") + e.what());
    }
    return manifest_from_json(j);
}

}  // namespace flowguard
