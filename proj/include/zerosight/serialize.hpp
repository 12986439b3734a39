#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

#include "zerosight/layers.hpp"

namespace zerosight {

// Tensor archive (.ten): magic "ZSTEN1", u8 dtype (0=f32, 1=f64), u8 rank,
// rank x u32 little-endian extents, row-major payload little-endian.
// Checkpoint (.ckpt): magic "ZSCKPT1", u32 entry count, then per entry a u16
// name length, the UTF-8 name, and a full .ten record.

namespace io {

inline void write_bytes(std::ostream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void write_u16_le(std::ostream& os, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>(v >> 8)};
    write_bytes(os, b, 2);
}

inline void write_u32_le(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    write_bytes(os, b, 4);
}

inline void write_u64_le(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    write_bytes(os, b, 8);
}

inline std::uint16_t read_u16_le(std::istream& is) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline std::uint32_t read_u32_le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

inline std::uint64_t read_u64_le(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace io

inline constexpr char kTenMagic[6] = {'Z', 'S', 'T', 'E', 'N', '1'};
inline constexpr char kCkptMagic[7] = {'Z', 'S', 'C', 'K', 'P', 'T', '1'};

template <class T>
constexpr std::uint8_t dtype_code() {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>,
                  "only f32/f64 tensors serialize");
    return std::is_same_v<T, float> ? 0 : 1;
}

template <class T>
void write_ten(std::ostream& os, const Shape& shape, const T* data) {
    io::write_bytes(os, kTenMagic, 6);
    std::uint8_t code = dtype_code<T>();
    io::write_bytes(os, &code, 1);
    std::uint8_t rank = static_cast<std::uint8_t>(shape.size());
    io::write_bytes(os, &rank, 1);
    for (std::size_t d : shape) io::write_u32_le(os, static_cast<std::uint32_t>(d));
    std::size_t n = numel(shape);
    if constexpr (std::is_same_v<T, float>) {
        for (std::size_t i = 0; i < n; ++i) {
            std::uint32_t bits;
            std::memcpy(&bits, &data[i], 4);
            io::write_u32_le(os, bits);
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            std::uint64_t bits;
            std::memcpy(&bits, &data[i], 8);
            io::write_u64_le(os, bits);
        }
    }
}

template <class T>
void write_ten(const std::string& path, const Tensor<T>& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("cannot open for writing: " + path);
    write_ten(os, t.shape(), t.data().data());
    if (!os) throw ConfigError("write failed: " + path);
}

// Decoded archive; payload widened to double (exact for f32 inputs).
struct TenRecord {
    std::uint8_t dtype = 0;
    Shape shape;
    std::vector<double> values;
};

inline TenRecord read_ten_record(std::istream& is, const std::string& what) {
    char magic[6];
    is.read(magic, 6);
    if (!is || std::memcmp(magic, kTenMagic, 6) != 0)
        throw ConfigError(what + ": not a ZSTEN1 tensor archive");
    TenRecord r;
    std::uint8_t code = 0, rank = 0;
    is.read(reinterpret_cast<char*>(&code), 1);
    is.read(reinterpret_cast<char*>(&rank), 1);
    if (code > 1) throw ConfigError(what + ": unknown dtype code " + std::to_string(code));
    r.dtype = code;
    r.shape.resize(rank);
    for (auto& d : r.shape) d = io::read_u32_le(is);
    std::size_t n = numel(r.shape);
    r.values.resize(n);
    if (code == 0) {
        for (std::size_t i = 0; i < n; ++i) {
            std::uint32_t bits = io::read_u32_le(is);
            float f;
            std::memcpy(&f, &bits, 4);
            r.values[i] = static_cast<double>(f);
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            std::uint64_t bits = io::read_u64_le(is);
            double d;
            std::memcpy(&d, &bits, 8);
            r.values[i] = d;
        }
    }
    if (!is) throw ConfigError(what + ": truncated tensor payload");
    return r;
}

inline TenRecord read_ten_record(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open: " + path);
    return read_ten_record(is, path);
}

template <class T>
Tensor<T> read_ten(const std::string& path) {
    TenRecord r = read_ten_record(path);
    std::vector<T> data(r.values.size());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<T>(r.values[i]);
    return Tensor<T>::from(r.shape, std::move(data));
}

// The config hash rides inside the checkpoint as four 16-bit words in an f64
// tensor named meta.config_hash; every word is an exactly representable
// integer, so the value survives the format unchanged.
inline const char* kConfigHashEntry = "meta.config_hash";

inline std::vector<double> config_hash_words(std::uint64_t hash) {
    return {static_cast<double>(hash & 0xffff), static_cast<double>((hash >> 16) & 0xffff),
            static_cast<double>((hash >> 32) & 0xffff),
            static_cast<double>((hash >> 48) & 0xffff)};
}

inline std::uint64_t config_hash_from_words(const std::vector<double>& w) {
    if (w.size() != 4) throw ConfigError("checkpoint: malformed meta.config_hash entry");
    std::uint64_t h = 0;
    for (int i = 3; i >= 0; --i)
        h = (h << 16) | (static_cast<std::uint64_t>(w[static_cast<std::size_t>(i)]) & 0xffff);
    return h;
}

template <class T>
void save_checkpoint(const std::string& path, std::vector<ParamRef<T>>& params,
                     std::vector<BufferRef<T>>& buffers, std::uint64_t config_hash) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("cannot open for writing: " + path);
    io::write_bytes(os, kCkptMagic, 7);
    io::write_u32_le(os, static_cast<std::uint32_t>(1 + params.size() + buffers.size()));
    auto write_entry = [&os](const std::string& name, const Shape& shape, const auto* data) {
        io::write_u16_le(os, static_cast<std::uint16_t>(name.size()));
        io::write_bytes(os, name.data(), name.size());
        write_ten(os, shape, data);
    };
    auto words = config_hash_words(config_hash);
    write_entry(kConfigHashEntry, Shape{4}, words.data());
    for (auto& p : params) write_entry(p.name, p.tensor.shape(), p.tensor.data().data());
    for (auto& b : buffers) write_entry(b.name, Shape{b.data->size()}, b.data->data());
    if (!os) throw ConfigError("write failed: " + path);
}

inline std::map<std::string, TenRecord> read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open: " + path);
    char magic[7];
    is.read(magic, 7);
    if (!is || std::memcmp(magic, kCkptMagic, 7) != 0)
        throw ConfigError(path + ": not a ZSCKPT1 checkpoint");
    std::uint32_t count = io::read_u32_le(is);
    std::map<std::string, TenRecord> entries;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::uint16_t len = io::read_u16_le(is);
        std::string name(len, '\0');
        is.read(name.data(), len);
        if (!is) throw ConfigError(path + ": truncated entry name");
        entries[name] = read_ten_record(is, path + ":" + name);
    }
    return entries;
}

inline std::uint64_t checkpoint_config_hash(const std::map<std::string, TenRecord>& entries) {
    auto it = entries.find(kConfigHashEntry);
    if (it == entries.end()) throw ConfigError("checkpoint carries no meta.config_hash");
    return config_hash_from_words(it->second.values);
}

// Restores every collected parameter and buffer by name. Entries present in
// the file but not collected (e.g. head parameters when only the backbone is
// rebuilt) are ignored.
template <class T>
void load_checkpoint_into(const std::map<std::string, TenRecord>& entries,
                          std::vector<ParamRef<T>>& params, std::vector<BufferRef<T>>& buffers) {
    for (auto& p : params) {
        auto it = entries.find(p.name);
        if (it == entries.end())
            throw ConfigError("checkpoint is missing parameter '" + p.name + "'");
        if (it->second.shape != p.tensor.shape())
            throw ConfigError("checkpoint parameter '" + p.name + "' has shape " +
                              shape_str(it->second.shape) + ", model expects " +
                              shape_str(p.tensor.shape()));
        for (std::size_t i = 0; i < p.tensor.size(); ++i)
            p.tensor.at(i) = static_cast<T>(it->second.values[i]);
    }
    for (auto& b : buffers) {
        auto it = entries.find(b.name);
        if (it == entries.end())
            throw ConfigError("checkpoint is missing buffer '" + b.name + "'");
        b.data->resize(it->second.values.size());
        for (std::size_t i = 0; i < b.data->size(); ++i)
            (*b.data)[i] = static_cast<T>(it->second.values[i]);
        if (b.loaded_flag) *b.loaded_flag = true;
    }
}

}  // namespace zerosight
