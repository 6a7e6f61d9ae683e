#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "lcz/common.hpp"

#include "json.hpp"

namespace lcz {

using json = nlohmann::json;

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorKind::io, "cannot open file: " + path);
    in.seekg(0, std::ios::end);
    const auto n = static_cast<std::size_t>(in.tellg());
    in.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> bytes(n);
    if (n > 0) in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
    require(in.good(), ErrorKind::io, "short read: " + path);
    return bytes;
}

/// Write via temp file + rename so readers never observe a half-written file.
inline void write_file_atomic(const std::string& path, const void* data, std::size_t size) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(out.good(), ErrorKind::io, "cannot open for writing: " + tmp.string());
        if (size > 0) out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
        out.flush();
        require(out.good(), ErrorKind::io, "write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    require(!ec, ErrorKind::io, "rename failed: " + target.string() + ": " + ec.message());
}

inline void write_file_atomic(const std::string& path, const std::string& text) {
    write_file_atomic(path, text.data(), text.size());
}

inline void write_file_atomic(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    write_file_atomic(path, bytes.data(), bytes.size());
}

inline json load_json_file(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), ErrorKind::io, "cannot open file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        fail(ErrorKind::malformed, "invalid JSON in " + path + ": " + e.what());
    }
    return j;
}

/// Little-endian scalar append/read, spelled out byte-wise so the on-disk
/// formats hold on any host.
template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
    static_assert(std::is_trivially_copyable_v<T> && sizeof(T) <= 8);
    std::uint64_t bits = 0;
    std::memcpy(&bits, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T); ++i)
        out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const std::uint8_t* p) {
    static_assert(std::is_trivially_copyable_v<T> && sizeof(T) <= 8);
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
        bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    T value;
    std::memcpy(&value, &bits, sizeof(T));
    return value;
}

/// Rejects keys outside `allowed`; catches config typos instead of ignoring them.
inline void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed,
                                const std::string& context) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* key : allowed)
            if (it.key() == key) { known = true; break; }
        require(known, ErrorKind::invalid_argument, "unknown key \"" + it.key() + "\" in " + context);
    }
}

} // namespace lcz
