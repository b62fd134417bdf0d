// SPDX-License-Identifier: Apache-2.0

#include "sfl/num/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace sfl::num {

namespace {

constexpr char kMagic[4] = {'S', 'P', 'F', 'L'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void write_u64(std::ostream& os, uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }

uint32_t read_u32(std::istream& is) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}

uint64_t read_u64(std::istream& is) {
    uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    return v;
}

}  // namespace

void write_checkpoint(const std::string& path, const NamedTensors& tensors) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    for (const auto& [name, t] : tensors) {
        write_u32(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(os, t.dtype() == DType::F32 ? 0u : 1u);
        write_u32(os, static_cast<uint32_t>(t.rank()));
        for (int64_t e : t.shape()) write_u64(os, static_cast<uint64_t>(e));
        dispatch(t.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto d = t.data<T>();
            os.write(reinterpret_cast<const char*>(d.data()), static_cast<std::streamsize>(d.size() * sizeof(T)));
        });
    }
    if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

NamedTensors read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error("checkpoint: bad magic in " + path);
    }
    uint32_t version = read_u32(is);
    if (version != kVersion) {
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    }
    NamedTensors out;
    while (true) {
        uint32_t name_len = read_u32(is);
        if (is.eof()) break;
        if (!is) throw std::runtime_error("checkpoint: truncated header in " + path);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        uint32_t dtype_tag = read_u32(is);
        uint32_t rank = read_u32(is);
        std::vector<int64_t> shape(rank);
        for (uint32_t i = 0; i < rank; ++i) shape[i] = static_cast<int64_t>(read_u64(is));
        if (!is) throw std::runtime_error("checkpoint: truncated tensor header in " + path);
        DType dt = dtype_tag == 0 ? DType::F32 : DType::F64;
        Tensor t = Tensor::zeros(shape, dt);
        dispatch(dt, [&](auto tag) {
            using T = decltype(tag);
            auto d = t.data<T>();
            is.read(reinterpret_cast<char*>(d.data()), static_cast<std::streamsize>(d.size() * sizeof(T)));
        });
        if (!is) throw std::runtime_error("checkpoint: truncated tensor data for '" + name + "' in " + path);
        out.emplace_back(std::move(name), std::move(t));
    }
    return out;
}

}  // namespace sfl::num
