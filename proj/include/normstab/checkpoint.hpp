#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "normstab/tensor.hpp"

namespace normstab {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Versioned binary container: header (version, epoch, learning rate, seed,
// RNG counter) followed by named tensors as little-endian 64-bit floats,
// row-major, each preceded by name length, name bytes, rank and dimensions.
// Round-trips bit-exactly.
struct Checkpoint {
    std::uint32_t version = 1;
    std::uint32_t epoch = 0;
    double learning_rate = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t rng_counter = 0;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor* find(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) return &t;
        return nullptr;
    }
};

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

template <class T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw IoError("checkpoint truncated");
    return v;
}

inline constexpr char kMagic[8] = {'N', 'S', 'C', 'K', 'P', 'T', '0', '\n'};

} // namespace detail

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open checkpoint for writing: " + path);
    os.write(detail::kMagic, sizeof(detail::kMagic));
    detail::put(os, ck.version);
    detail::put(os, ck.epoch);
    detail::put(os, ck.learning_rate);
    detail::put(os, ck.seed);
    detail::put(os, ck.rng_counter);
    detail::put(os, static_cast<std::uint32_t>(ck.tensors.size()));
    for (const auto& [name, t] : ck.tensors) {
        detail::put(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::put(os, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t i = 0; i < t.rank(); ++i)
            detail::put(os, static_cast<std::uint64_t>(t.dim(i)));
        os.write(reinterpret_cast<const char*>(t.data()),
                 static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!os) throw IoError("write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, detail::kMagic, sizeof(magic)) != 0)
        throw IoError("not a checkpoint file: " + path);
    Checkpoint ck;
    ck.version = detail::get<std::uint32_t>(is);
    if (ck.version != 1)
        throw IoError("unsupported checkpoint version in " + path);
    ck.epoch = detail::get<std::uint32_t>(is);
    ck.learning_rate = detail::get<double>(is);
    ck.seed = detail::get<std::uint64_t>(is);
    ck.rng_counter = detail::get<std::uint64_t>(is);
    const auto count = detail::get<std::uint32_t>(is);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = detail::get<std::uint32_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const auto rank = detail::get<std::uint32_t>(is);
        if (rank < 1 || rank > 3) throw IoError("bad tensor rank in " + path);
        std::vector<std::size_t> shape;
        std::size_t total = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            shape.push_back(static_cast<std::size_t>(detail::get<std::uint64_t>(is)));
            total *= shape.back();
        }
        Tensor t(shape);
        is.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(total * sizeof(double)));
        if (!is) throw IoError("checkpoint truncated: " + path);
        ck.tensors.emplace_back(std::move(name), std::move(t));
    }
    return ck;
}

} // namespace normstab
