// Copyright 2026 The nullora Authors
// SPDX-License-Identifier: Apache-2.0

#include "nullora/tensor_file.hpp"

#include "nullora/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <system_error>
#include <unistd.h>

namespace nullora {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'N', 'L', 'R', 'T'};
constexpr std::size_t kFixedPrefix = 16;
constexpr std::size_t kAlignment = 64;

std::size_t align_up(std::size_t n) { return (n + kAlignment - 1) / kAlignment * kAlignment; }

template <typename T>
void put_le(std::string& out, T value) {
    static_assert(std::is_unsigned_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(std::string_view in, std::size_t at) {
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
        value |= static_cast<T>(static_cast<unsigned char>(in[at + i])) << (8 * i);
    return value;
}

template <typename Word, typename Float>
void put_float(std::string& out, Float v) {
    put_le<Word>(out, std::bit_cast<Word>(v));
}

DType parse_dtype(const json& j, const std::string& name) {
    if (j == "f64") return DType::f64;
    if (j == "f32") return DType::f32;
    throw FormatError(FormatErrc::bad_header, "tensor '" + name + "' has unsupported dtype " + j.dump());
}

std::uint64_t header_uint(const json& entry, const char* field, const std::string& name) {
    auto it = entry.find(field);
    if (it == entry.end() || !it->is_number_unsigned()) {
        throw FormatError(FormatErrc::bad_header, "tensor '" + name + "' lacks unsigned field '" + field + "'");
    }
    return it->get<std::uint64_t>();
}

// Parses the header while rejecting duplicate keys in any object, which
// nlohmann::json would otherwise silently collapse.
json parse_header(std::string_view text) {
    std::vector<std::set<std::string>> seen;
    std::string duplicate;
    json::parser_callback_t cb = [&](int, json::parse_event_t event, json& parsed) {
        switch (event) {
        case json::parse_event_t::object_start: seen.emplace_back(); break;
        case json::parse_event_t::object_end: seen.pop_back(); break;
        case json::parse_event_t::key:
            if (!seen.back().insert(parsed.get<std::string>()).second && duplicate.empty()) {
                duplicate = parsed.get<std::string>();
            }
            break;
        default: break;
        }
        return true;
    };
    json header;
    try {
        header = json::parse(text.begin(), text.end(), cb);
    } catch (const json::exception& e) {
        throw FormatError(FormatErrc::bad_header, std::string("header is not valid JSON: ") + e.what());
    }
    if (!duplicate.empty()) throw FormatError(FormatErrc::duplicate_name, "'" + duplicate + "' appears twice in header");
    if (!header.is_object()) throw FormatError(FormatErrc::bad_header, "header must be a JSON object");
    return header;
}

} // namespace

std::string_view to_string(DType t) noexcept { return t == DType::f32 ? "f32" : "f64"; }
std::size_t dtype_size(DType t) noexcept { return t == DType::f32 ? 4 : 8; }

bool valid_tensor_name(std::string_view name) noexcept {
    if (name.empty() || name == kMetaKey) return false;
    return std::none_of(name.begin(), name.end(), [](char c) {
        const auto u = static_cast<unsigned char>(c);
        return u < 0x20 || u == 0x7f;
    });
}

std::string serialize_tensor_file(const TensorFile& file) {
    json header = json::object();
    std::uint64_t offset = 0;
    for (const auto& [name, tensor] : file.entries) {
        if (!valid_tensor_name(name)) throw FormatError(FormatErrc::invalid_name, "cannot write tensor named '" + name + "'");
        if (!tensor.values.all_finite()) throw FormatError(FormatErrc::non_finite, "tensor '" + name + "' has non-finite values");
        const std::uint64_t length = tensor.values.size() * dtype_size(tensor.dtype);
        header[name] = {{"dtype", to_string(tensor.dtype)},
                        {"shape", {tensor.values.rows(), tensor.values.cols()}},
                        {"offset", offset},
                        {"length", length}};
        offset += length;
    }
    if (file.metadata) header[std::string(kMetaKey)] = *file.metadata;

    const std::string text = header.dump();
    std::string out;
    const std::size_t payload_start = align_up(kFixedPrefix + text.size());
    out.reserve(payload_start + offset);
    out.append(kMagic, 4);
    put_le<std::uint32_t>(out, kTensorFileVersion);
    put_le<std::uint64_t>(out, text.size());
    out += text;
    out.resize(payload_start, '\0');
    for (const auto& [name, tensor] : file.entries) {
        for (double v : tensor.values.data()) {
            if (tensor.dtype == DType::f64) {
                put_float<std::uint64_t>(out, v);
            } else {
                put_float<std::uint32_t>(out, static_cast<float>(v));
            }
        }
    }
    return out;
}

TensorFile parse_tensor_file(std::string_view bytes) {
    if (bytes.size() < kFixedPrefix) {
        if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) != 0) {
            throw FormatError(FormatErrc::bad_magic, "file does not start with NLRT");
        }
        throw FormatError(FormatErrc::truncated, "file is shorter than the 16-byte prefix");
    }
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError(FormatErrc::bad_magic, "file does not start with NLRT");
    const auto version = get_le<std::uint32_t>(bytes, 4);
    if (version != kTensorFileVersion) {
        throw FormatError(FormatErrc::unsupported_version, "version " + std::to_string(version) + " (expected 1)");
    }
    const auto header_len = get_le<std::uint64_t>(bytes, 8);
    if (header_len > bytes.size() - kFixedPrefix) {
        throw FormatError(FormatErrc::truncated, "header length " + std::to_string(header_len) + " exceeds file size");
    }
    const json header = parse_header(bytes.substr(kFixedPrefix, header_len));
    const std::size_t payload_start = align_up(kFixedPrefix + header_len);
    const std::size_t payload_size = bytes.size() >= payload_start ? bytes.size() - payload_start : 0;

    TensorFile file;
    for (const auto& [name, entry] : header.items()) {
        if (name == kMetaKey) {
            file.metadata = entry;
            continue;
        }
        if (!valid_tensor_name(name)) throw FormatError(FormatErrc::invalid_name, "header names an invalid tensor");
        if (!entry.is_object()) throw FormatError(FormatErrc::bad_header, "entry for '" + name + "' is not an object");
        const DType dtype = parse_dtype(entry.value("dtype", json()), name);
        const auto shape = entry.find("shape");
        if (shape == entry.end() || !shape->is_array() || shape->size() != 2 || !(*shape)[0].is_number_unsigned() ||
            !(*shape)[1].is_number_unsigned()) {
            throw FormatError(FormatErrc::bad_header, "tensor '" + name + "' needs a 2-element shape");
        }
        const auto rows = (*shape)[0].get<std::uint64_t>();
        const auto cols = (*shape)[1].get<std::uint64_t>();
        const std::uint64_t offset = header_uint(entry, "offset", name);
        const std::uint64_t length = header_uint(entry, "length", name);
        if (cols != 0 && rows > (std::uint64_t{1} << 40) / cols) {
            throw FormatError(FormatErrc::shape_mismatch, "tensor '" + name + "' shape is implausibly large");
        }
        if (length != rows * cols * dtype_size(dtype)) {
            throw FormatError(FormatErrc::shape_mismatch, "tensor '" + name + "' declares " + std::to_string(length) +
                                                              " bytes for shape [" + std::to_string(rows) + ", " +
                                                              std::to_string(cols) + "] " + std::string(to_string(dtype)));
        }
        if (offset > payload_size || length > payload_size - offset) {
            throw FormatError(FormatErrc::truncated, "tensor '" + name + "' extends past end of file");
        }

        std::vector<double> values(rows * cols);
        const std::size_t base = payload_start + offset;
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (dtype == DType::f64) {
                values[i] = std::bit_cast<double>(get_le<std::uint64_t>(bytes, base + 8 * i));
            } else {
                values[i] = static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(bytes, base + 4 * i)));
            }
            if (!std::isfinite(values[i])) {
                throw FormatError(FormatErrc::non_finite, "tensor '" + name + "' has a non-finite value at index " +
                                                              std::to_string(i));
            }
        }
        file.entries.emplace(name, Tensor{dtype, Matrix(rows, cols, std::move(values))});
    }
    return file;
}

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file) {
    const std::string bytes = serialize_tensor_file(file);
    std::filesystem::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError(FormatErrc::io, "cannot open '" + tmp.string() + "' for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw FormatError(FormatErrc::io, "write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw FormatError(FormatErrc::io, "cannot rename into '" + path.string() + "': " + ec.message());
    }
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(FormatErrc::io, "cannot open '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_tensor_file(buf.str());
    } catch (const FormatError& e) {
        throw FormatError(e.code(), path.string() + ": " + std::string(e.what()).substr(std::strlen(to_string(e.code())) + 2));
    }
}

} // namespace nullora
