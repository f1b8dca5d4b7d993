// Copyright 2026 The nullora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nullora/matrix.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nullora {

// NLRT container, version 1:
//
//   offset 0   "NLRT"                      4 bytes
//   offset 4   version (u32 LE) = 1
//   offset 8   header length H (u64 LE)
//   offset 16  header: compact UTF-8 JSON, H bytes
//              { "<name>": {"dtype": "f32"|"f64", "shape": [rows, cols],
//                           "offset": o, "length": n}, ...,
//                "__meta__": <any JSON> }             (optional)
//   zero padding up to the next multiple of 64
//   payload: raw little-endian row-major tensors; "offset" is relative to
//   the payload start. Tensors are laid out contiguously in name order.
//
// Keys are emitted sorted and numbers in shortest round-trip form, so equal
// logical content always yields identical bytes.

inline constexpr std::uint32_t kTensorFileVersion = 1;
inline constexpr std::string_view kMetaKey = "__meta__";

enum class DType { f32, f64 };

std::string_view to_string(DType t) noexcept;
std::size_t dtype_size(DType t) noexcept;

/// A 2-D tensor. Values are always held in double precision; `dtype` is the
/// on-disk type, so an f32 entry is flagged as upcast after loading.
struct Tensor {
    DType dtype = DType::f64;
    Matrix values;

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

struct TensorFile {
    std::map<std::string, Tensor> entries;
    std::optional<nlohmann::json> metadata;

    friend bool operator==(const TensorFile&, const TensorFile&) = default;
};

/// Name rules: non-empty, no control characters, not the reserved meta key.
bool valid_tensor_name(std::string_view name) noexcept;

std::string serialize_tensor_file(const TensorFile& file);
TensorFile parse_tensor_file(std::string_view bytes);

/// Writes to a sibling temporary file and renames it into place.
void write_tensor_file(const std::filesystem::path& path, const TensorFile& file);
TensorFile read_tensor_file(const std::filesystem::path& path);

} // namespace nullora
