#pragma once

// FGT1 tensor file format.
//
// Header (little-endian):
//   bytes 0..3   magic "FGT1"
//   byte  4      dtype code, 0 = float32 LE
//   byte  5      ndim
//   bytes 6..7   reserved, zero
//   then ndim x uint32 dims
// Payload: row-major float32 LE, 4 * prod(dims) bytes.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "tensor.hpp"

namespace flowguard {

class FgtFormatError : public IoError {
public:
    explicit FgtFormatError(const std::string& what) : IoError(what) {}
};
class BadMagicError : public FgtFormatError {
public:
    explicit BadMagicError(const std::string& what) : FgtFormatError(what) {}
};
class BadDtypeError : public FgtFormatError {
public:
    explicit BadDtypeError(const std::string& what) : FgtFormatError(what) {}
};
class TruncatedError : public FgtFormatError {
public:
    explicit TruncatedError(const std::string& what) : FgtFormatError(what) {}
};

namespace detail {

inline void put_u32_le(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) |
           (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) |
           (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

inline std::string encode_tensor(const Tensor& t) {
    const auto& dims = t.dims();
    if (dims.size() > 255) throw ValidationError("write_tensor: too many dims");
    for (std::size_t d : dims) {
        if (d > std::numeric_limits<std::uint32_t>::max()) {
            throw ValidationError("write_tensor: dim exceeds 2^32-1");
        }
    }
    std::string bytes;
    bytes.reserve(8 + 4 * dims.size() + 4 * t.size());
    bytes += "FGT1";
    bytes.push_back('\0');  // dtype 0 = float32 LE
    bytes.push_back(static_cast<char>(dims.size()));
    bytes.push_back('\0');
    bytes.push_back('\0');
    for (std::size_t d : dims) detail::put_u32_le(bytes, static_cast<std::uint32_t>(d));
    static_assert(sizeof(float) == 4);
    for (float v : t.data()) {
        std::uint32_t u;
        std::memcpy(&u, &v, 4);
        detail::put_u32_le(bytes, u);
    }
    return bytes;
}

inline Tensor decode_tensor(const std::string& bytes) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    if (bytes.size() < 8) throw TruncatedError("read_tensor: truncated header");
    if (std::memcmp(p, "FGT1", 4) != 0) throw BadMagicError("read_tensor: bad magic");
    if (p[4] != 0) throw BadDtypeError("read_tensor: unknown dtype code " + std::to_string(p[4]));
    const std::size_t ndim = p[5];
    if (bytes.size() < 8 + 4 * ndim) throw TruncatedError("read_tensor: truncated dims");
    std::vector<std::size_t> dims(ndim);
    std::size_t count = 1;
    for (std::size_t i = 0; i < ndim; ++i) {
        dims[i] = detail::get_u32_le(p + 8 + 4 * i);
        count *= dims[i];
    }
    const std::size_t payload_off = 8 + 4 * ndim;
    if (bytes.size() < payload_off + 4 * count) {
        throw TruncatedError("read_tensor: truncated payload");
    }
    std::vector<float> data(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t u = detail::get_u32_le(p + payload_off + 4 * i);
        std::memcpy(&data[i], &u, 4);
    }
    return Tensor::unchecked(std::move(dims), std::move(data));
}

inline void write_tensor(const Tensor& t, const std::filesystem::path& path) {
    std::string bytes = encode_tensor(t);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("write_tensor: cannot open " + path.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write_tensor: write failed on " + path.string());
}

inline Tensor read_tensor(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("read_tensor: cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_tensor(bytes);
}

}  // namespace flowguard
