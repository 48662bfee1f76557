#pragma once

// Binary value-function cache ("HJRS"), little-endian:
//   magic "HJRS" | version u32 | dim_count u32
//   per dim: min f64 | max f64 | node_count u32 | periodic u8
//   frame_count u32 | per frame: time f64 | data f64 x N
// A static value function is one frame at time 0.

#include "reachguard/errors.hpp"
#include "reachguard/grid.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <type_traits>
#include <vector>

namespace reachguard {

inline constexpr std::uint32_t kCacheFormatVersion = 1;

namespace detail {

template <typename T>
void put_le(std::vector<char>& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
              std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
    const U bits = std::bit_cast<U>(value);
    for (std::size_t b = 0; b < sizeof(T); ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFFu));
}

class LeReader {
public:
    LeReader(const std::vector<char>& buf, std::size_t start) : buf_(buf), pos_(start) {}

    template <typename T>
    T get() {
        using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                  std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
        if (pos_ + sizeof(T) > buf_.size()) throw IoError("cache: truncated file");
        U bits = 0;
        for (std::size_t b = 0; b < sizeof(T); ++b)
            bits |= static_cast<U>(static_cast<unsigned char>(buf_[pos_ + b])) << (8 * b);
        pos_ += sizeof(T);
        return std::bit_cast<T>(bits);
    }

    bool at_end() const { return pos_ == buf_.size(); }

private:
    const std::vector<char>& buf_;
    std::size_t pos_;
};

}  // namespace detail

inline std::vector<char> encode_cache(const TimeIndexedValueFunction& v) {
    std::vector<char> out;
    const Grid& g = v.grid();
    out.reserve(16 + g.dims() * 21 + v.frame_count() * (8 + 8 * g.size()));
    for (char c : {'H', 'J', 'R', 'S'}) out.push_back(c);
    detail::put_le<std::uint32_t>(out, kCacheFormatVersion);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(g.dims()));
    for (const Axis& a : g.axes()) {
        detail::put_le<double>(out, a.min);
        detail::put_le<double>(out, a.max);
        detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(a.nodes));
        detail::put_le<std::uint8_t>(out, a.periodic ? 1 : 0);
    }
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(v.frame_count()));
    for (std::size_t f = 0; f < v.frame_count(); ++f) {
        detail::put_le<double>(out, v.times()[f]);
        for (double d : v.frame(f).data()) detail::put_le<double>(out, d);
    }
    return out;
}

inline TimeIndexedValueFunction decode_cache(const std::vector<char>& buf) {
    if (buf.size() < 4 || std::memcmp(buf.data(), "HJRS", 4) != 0) throw IoError("cache: bad magic");
    detail::LeReader r(buf, 4);
    const auto version = r.get<std::uint32_t>();
    if (version != kCacheFormatVersion) throw IoError("cache: unsupported version " + std::to_string(version));
    const auto dims = r.get<std::uint32_t>();
    if (dims == 0 || dims > kMaxDims) throw IoError("cache: bad dimension count");
    std::vector<Axis> axes(dims);
    for (auto& a : axes) {
        a.min = r.get<double>();
        a.max = r.get<double>();
        a.nodes = r.get<std::uint32_t>();
        a.periodic = r.get<std::uint8_t>() != 0;
    }
    Grid grid(std::move(axes));
    const auto frames = r.get<std::uint32_t>();
    std::vector<double> times;
    std::vector<ValueFunction> values;
    for (std::uint32_t f = 0; f < frames; ++f) {
        times.push_back(r.get<double>());
        std::vector<double> data(grid.size());
        for (double& d : data) d = r.get<double>();
        values.emplace_back(grid, std::move(data));
    }
    if (!r.at_end()) throw IoError("cache: trailing bytes");
    return TimeIndexedValueFunction(std::move(times), std::move(values));
}

inline void write_cache(const std::filesystem::path& path, const TimeIndexedValueFunction& v) {
    const auto bytes = encode_cache(v);
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cache: cannot open " + tmp + " for writing");
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!f) throw IoError("cache: write failed for " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cache: cannot move " + tmp + " to " + path.string() + ": " + ec.message());
}

inline void write_cache(const std::filesystem::path& path, const ValueFunction& v) {
    write_cache(path, TimeIndexedValueFunction({0.0}, {v}));
}

inline TimeIndexedValueFunction read_cache(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cache: cannot open " + path.string());
    std::vector<char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_cache(buf);
}

/// Solver metadata sidecar: one key=value per line, keys sorted.
inline void write_sidecar(const std::filesystem::path& path, const std::map<std::string, std::string>& meta) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cache: cannot write sidecar " + path.string());
    for (const auto& [k, v] : meta) f << k << '=' << v << '\n';
}

inline std::map<std::string, std::string> read_sidecar(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cache: cannot read sidecar " + path.string());
    std::map<std::string, std::string> meta;
    std::string line;
    while (std::getline(f, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        meta[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return meta;
}

}  // namespace reachguard
