#pragma once

#include <filesystem>
#include <vector>

#include <json.hpp>

#include "gradleak/tensor.hpp"

namespace gradleak {

class IoError : public Error {
public:
    using Error::Error;
};

/// Tensor container file: 8-byte magic, u64 LE header length, JSON header
/// with named entries (name, shape, dtype "f64", byte offset into the
/// payload), then the raw little-endian f64 payload.
struct Container {
    std::vector<NamedTensor> entries;
    nlohmann::json meta;  // free-form, stored in the header
};

void save_container(const std::filesystem::path& path, const Container& container);
Container load_container(const std::filesystem::path& path);

/// FNV-1a over the concatenated little-endian f64 bytes of the tensors, in
/// order. Links snapshots to the exact weights they were captured from.
uint64_t tensor_bytes_checksum(const std::vector<NamedTensor>& tensors);

}  // namespace gradleak
