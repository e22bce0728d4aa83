#include "stsan/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "stsan/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace stsan {

namespace {

constexpr char kMagic[4] = {'S', 'T', 'S', 'N'};

void write_u32(std::ostream& os, uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& os, uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
uint32_t read_u32(std::istream& is, const std::string& path) {
    uint32_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(v)))
        throw IoError("truncated checkpoint: " + path);
    return v;
}
uint64_t read_u64(std::istream& is, const std::string& path) {
    uint64_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(v)))
        throw IoError("truncated checkpoint: " + path);
    return v;
}

}  // namespace

template <typename T>
void save_checkpoint(const std::string& path, const ParamStoreT<T>& params) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open checkpoint for writing: " + path);
    os.write(kMagic, 4);
    write_u32(os, kCheckpointVersion);
    write_u32(os, static_cast<uint32_t>(params.size()));
    std::vector<float> buf;
    for (int i = 0; i < params.size(); ++i) {
        const auto& p = params.at(i);
        write_u32(os, static_cast<uint32_t>(p.name.size()));
        os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        write_u32(os, static_cast<uint32_t>(p.value.shape.size()));
        for (int64_t e : p.value.shape) write_u64(os, static_cast<uint64_t>(e));
        buf.resize(p.value.data.size());
        for (size_t j = 0; j < buf.size(); ++j) buf[j] = static_cast<float>(p.value.data[j]);
        os.write(reinterpret_cast<const char*>(buf.data()),
                 static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!os) throw IoError("failed writing checkpoint: " + path);
}

std::vector<CheckpointEntry> read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("not a checkpoint file (bad magic): " + path);
    const uint32_t version = read_u32(is, path);
    if (version != kCheckpointVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
    const uint32_t count = read_u32(is, path);
    std::vector<CheckpointEntry> entries;
    entries.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        CheckpointEntry e;
        const uint32_t name_len = read_u32(is, path);
        e.name.resize(name_len);
        if (!is.read(e.name.data(), name_len)) throw IoError("truncated checkpoint: " + path);
        const uint32_t rank = read_u32(is, path);
        if (rank > static_cast<uint32_t>(kMaxRank))
            throw DataError("checkpoint entry rank " + std::to_string(rank) + " too large: " +
                            path);
        int64_t numel = 1;
        for (uint32_t r = 0; r < rank; ++r) {
            const uint64_t ext = read_u64(is, path);
            e.shape.push_back(static_cast<int64_t>(ext));
            numel *= static_cast<int64_t>(ext);
        }
        e.values.resize(static_cast<size_t>(numel));
        if (!is.read(reinterpret_cast<char*>(e.values.data()),
                     static_cast<std::streamsize>(e.values.size() * sizeof(float))))
            throw IoError("truncated checkpoint: " + path);
        entries.push_back(std::move(e));
    }
    return entries;
}

template <typename T>
void load_checkpoint(const std::string& path, ParamStoreT<T>& params) {
    auto entries = read_checkpoint(path);
    if (static_cast<int>(entries.size()) != params.size())
        throw DataError("checkpoint holds " + std::to_string(entries.size()) +
                        " parameters, model expects " + std::to_string(params.size()));
    for (const auto& e : entries) {
        const int idx = params.index_of(e.name);
        if (idx < 0) throw DataError("checkpoint parameter not in model: " + e.name);
        auto& p = params.at(idx);
        if (p.value.shape != e.shape)
            throw DataError("shape mismatch for " + e.name + ": checkpoint " +
                            shape_str(e.shape) + ", model " + shape_str(p.value.shape));
        for (size_t j = 0; j < e.values.size(); ++j) p.value.data[j] = static_cast<T>(e.values[j]);
    }
}

template void save_checkpoint<float>(const std::string&, const ParamStoreT<float>&);
template void save_checkpoint<double>(const std::string&, const ParamStoreT<double>&);
template void load_checkpoint<float>(const std::string&, ParamStoreT<float>&);
template void load_checkpoint<double>(const std::string&, ParamStoreT<double>&);

}  // namespace stsan
