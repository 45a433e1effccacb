#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace flowguard {

class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// Dense row-major float32 array. The single value type carried between
/// every stage of the pipeline (latents, images, spectra, parameters).
class Tensor {
public:
    Tensor() = default;

    Tensor(std::vector<std::size_t> dims, std::vector<float> data)
        : dims_(std::move(dims)), data_(std::move(data)) {
        validate_shape();
        for (float v : data_) {
            if (!std::isfinite(v)) {
                throw ValidationError("Tensor: non-finite element");
            }
        }
    }

    /// Zero-filled tensor.
    explicit Tensor(std::vector<std::size_t> dims)
        : dims_(std::move(dims)) {
        for (std::size_t d : dims_) {
            if (d == 0) throw ValidationError("Tensor: zero dimension");
        }
        data_.assign(element_count(dims_), 0.0f);
    }

    /// Skips the finiteness check. Intended for intermediate spectra where
    /// transient values are not asserted finite element by element.
    static Tensor unchecked(std::vector<std::size_t> dims, std::vector<float> data) {
        Tensor t;
        t.dims_ = std::move(dims);
        t.data_ = std::move(data);
        t.validate_shape();
        return t;
    }

    static std::size_t element_count(const std::vector<std::size_t>& dims) {
        std::size_t n = 1;
        for (std::size_t d : dims) n *= d;
        return n;
    }

    const std::vector<std::size_t>& dims() const { return dims_; }
    std::size_t size() const { return data_.size(); }
    const std::vector<float>& data() const { return data_; }
    std::vector<float>& data() { return data_; }

    float operator[](std::size_t i) const { return data_[i]; }
    float& operator[](std::size_t i) { return data_[i]; }

    bool same_dims(const Tensor& other) const { return dims_ == other.dims_; }

    bool operator==(const Tensor& other) const {
        return dims_ == other.dims_ && data_ == other.data_;
    }

private:
    void validate_shape() const {
        for (std::size_t d : dims_) {
            if (d == 0) throw ValidationError("Tensor: zero dimension");
        }
        if (element_count(dims_) != data_.size()) {
            throw ValidationError("Tensor: dims product does not match data length");
        }
    }

    std::vector<std::size_t> dims_;
    std::vector<float> data_;
};

inline std::string dims_to_string(const std::vector<std::size_t>& dims) {
    std::string s = "(";
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(dims[i]);
    }
    return s + ")";
}

inline void require_same_dims(const Tensor& a, const Tensor& b, const char* ctx) {
    if (!a.same_dims(b)) {
        throw ValidationError(std::string(ctx) + ": dim mismatch " +
                              dims_to_string(a.dims()) + " vs " + dims_to_string(b.dims()));
    }
}

}  // namespace flowguard
