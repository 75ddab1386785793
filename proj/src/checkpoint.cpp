#include "ctnorm/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <numeric>

#include "ctnorm/errors.hpp"

namespace ctnorm::nn {

namespace {

void put_u32(std::string& buf, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    buf.append(b, 4);
}

void put_u64(std::string& buf, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    buf.append(b, 8);
}

class Reader {
public:
    Reader(const std::string& buf, const std::string& what) : buf_(buf), what_(what) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }

    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    void floats(float* dst, std::size_t count) {
        need(count * 4);
        for (std::size_t i = 0; i < count; ++i) {
            std::uint32_t v = 0;
            for (int b = 0; b < 4; ++b)
                v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + i * 4 + b])) << (8 * b);
            std::memcpy(&dst[i], &v, 4);
        }
        pos_ += count * 4;
    }

    bool done() const { return pos_ == buf_.size(); }

private:
    void need(std::size_t n) {
        if (pos_ + n > buf_.size()) throw DataError(what_ + ": truncated checkpoint file");
    }

    const std::string& buf_;
    std::string what_;
    std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TensorMap& tensors) {
    std::string buf;
    buf.append("STCT", 4);
    put_u32(buf, kCheckpointVersion);
    put_u32(buf, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, blob] : tensors) {
        const std::int64_t n =
            std::accumulate(blob.dims.begin(), blob.dims.end(), std::int64_t{1}, std::multiplies<>());
        if (n != static_cast<std::int64_t>(blob.values.size())) {
            throw DataError("checkpoint: tensor '" + name + "' dims do not match value count");
        }
        put_u32(buf, static_cast<std::uint32_t>(name.size()));
        buf.append(name);
        put_u32(buf, static_cast<std::uint32_t>(blob.dims.size()));
        for (std::int64_t d : blob.dims) put_u64(buf, static_cast<std::uint64_t>(d));
        for (float v : blob.values) {
            std::uint32_t bits;
            std::memcpy(&bits, &v, 4);
            put_u32(buf, bits);
        }
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("checkpoint: cannot open '" + path.string() + "' for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw DataError("checkpoint: write failed for '" + path.string() + "'");
}

TensorMap load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("checkpoint: cannot open '" + path.string() + "'");
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r(buf, path.string());
    if (r.bytes(4) != "STCT") throw DataError(path.string() + ": bad checkpoint magic, expected STCT");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
    }
    const std::uint32_t count = r.u32();
    TensorMap tensors;
    for (std::uint32_t t = 0; t < count; ++t) {
        const std::uint32_t name_len = r.u32();
        std::string name = r.bytes(name_len);
        const std::uint32_t rank = r.u32();
        TensorBlob blob;
        std::int64_t n = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            blob.dims.push_back(static_cast<std::int64_t>(r.u64()));
            n *= blob.dims.back();
        }
        if (n < 0 || n > (1ll << 32)) throw DataError(path.string() + ": implausible tensor size");
        blob.values.resize(static_cast<std::size_t>(n));
        r.floats(blob.values.data(), blob.values.size());
        tensors.emplace(std::move(name), std::move(blob));
    }
    return tensors;
}

}  // namespace ctnorm::nn
