#include "vitsem/tensor.hpp"

#include <cstring>
#include <fstream>
#include <limits>

#include "vitsem/errors.hpp"

namespace vitsem {

namespace {

constexpr char kMagic[4] = {'V', 'S', 'L', 'T'};
constexpr uint32_t kVersion = 1;
constexpr int kMaxRank = 8;

// All multi-byte fields are little-endian; the writer/reader below spell the
// bytes out so the format is identical on any host.
void put_u16(std::string& out, uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f32(std::string& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

struct Reader {
    const unsigned char* bytes;
    size_t size;
    size_t pos = 0;

    void need(size_t n, const char* what) const {
        if (size - pos < n) {
            throw FormatError(std::string("tensor file: truncated ") + what,
                              static_cast<long long>(pos));
        }
    }
    uint16_t u16(const char* what) {
        need(2, what);
        const uint16_t v = static_cast<uint16_t>(bytes[pos]) |
                           (static_cast<uint16_t>(bytes[pos + 1]) << 8);
        pos += 2;
        return v;
    }
    uint32_t u32(const char* what) {
        need(4, what);
        const uint32_t v = static_cast<uint32_t>(bytes[pos]) |
                           (static_cast<uint32_t>(bytes[pos + 1]) << 8) |
                           (static_cast<uint32_t>(bytes[pos + 2]) << 16) |
                           (static_cast<uint32_t>(bytes[pos + 3]) << 24);
        pos += 4;
        return v;
    }
    uint8_t u8(const char* what) {
        need(1, what);
        return bytes[pos++];
    }
};

}  // namespace

Tensor::Tensor(std::vector<uint32_t> s) : shape(std::move(s)) {
    data.assign(element_count(), 0.0f);
}

size_t Tensor::element_count() const {
    size_t n = 1;
    for (uint32_t d : shape) n *= d;
    return shape.empty() ? 0 : n;
}

void save_tensor_file(const std::string& path, const TensorFile& file) {
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kVersion);
    const uint32_t count = static_cast<uint32_t>(file.entries.size()) +
                           (file.meta_json.empty() ? 0u : 1u);
    put_u32(out, count);

    auto put_name = [&out](const std::string& name) {
        if (name.size() > std::numeric_limits<uint16_t>::max()) {
            throw ConfigError("tensor file: entry name too long: " + name);
        }
        put_u16(out, static_cast<uint16_t>(name.size()));
        out.append(name);
    };

    for (const auto& [name, tensor] : file.entries) {
        if (name == "meta") {
            throw ConfigError("tensor file: \"meta\" is reserved for the JSON manifest");
        }
        if (tensor.shape.size() > kMaxRank) {
            throw ConfigError("tensor file: rank above " + std::to_string(kMaxRank) + ": " + name);
        }
        if (tensor.data.size() != tensor.element_count()) {
            throw ConfigError("tensor file: shape/data mismatch in entry: " + name);
        }
        put_name(name);
        out.push_back(static_cast<char>(tensor.shape.size()));
        for (uint32_t d : tensor.shape) put_u32(out, d);
        for (float v : tensor.data) put_f32(out, v);
    }
    if (!file.meta_json.empty()) {
        put_name("meta");
        out.push_back(1);  // rank
        put_u32(out, static_cast<uint32_t>(file.meta_json.size()));
        out.append(file.meta_json);
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw IoError("cannot open for writing: " + path);
    }
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) {
        throw IoError("write failure: " + path);
    }
}

TensorFile load_tensor_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot open file: " + path);
    }
    std::string raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (f.bad()) {
        throw IoError("read failure: " + path);
    }

    Reader r{reinterpret_cast<const unsigned char*>(raw.data()), raw.size()};
    r.need(4, "magic");
    if (std::memcmp(raw.data(), kMagic, 4) != 0) {
        throw FormatError("tensor file: bad magic", 0);
    }
    r.pos = 4;
    const size_t version_pos = r.pos;
    const uint32_t version = r.u32("version");
    if (version != kVersion) {
        throw FormatError("tensor file: unsupported version " + std::to_string(version),
                          static_cast<long long>(version_pos));
    }
    const uint32_t count = r.u32("entry count");

    TensorFile file;
    for (uint32_t e = 0; e < count; ++e) {
        const uint16_t name_len = r.u16("entry name length");
        r.need(name_len, "entry name");
        std::string name(raw.data() + r.pos, name_len);
        r.pos += name_len;

        const size_t rank_pos = r.pos;
        const uint8_t rank = r.u8("entry rank");
        if (rank > kMaxRank) {
            throw FormatError("tensor file: rank above " + std::to_string(kMaxRank),
                              static_cast<long long>(rank_pos));
        }
        std::vector<uint32_t> shape(rank);
        uint64_t elems = 1;
        for (int d = 0; d < rank; ++d) {
            const size_t dim_pos = r.pos;
            shape[d] = r.u32("dimension");
            elems *= shape[d];
            if (elems > (1ull << 32)) {
                throw FormatError("tensor file: dimension overflow",
                                  static_cast<long long>(dim_pos));
            }
        }
        if (rank == 0) elems = 0;

        if (name == "meta") {
            // u8 JSON payload
            r.need(elems, "meta payload");
            file.meta_json.assign(raw.data() + r.pos, elems);
            r.pos += elems;
            continue;
        }
        const uint64_t payload_bytes = elems * 4;
        if (raw.size() - r.pos < payload_bytes) {
            throw FormatError("tensor file: payload exceeds file size",
                              static_cast<long long>(r.pos));
        }
        Tensor t;
        t.shape = std::move(shape);
        t.data.resize(elems);
        for (uint64_t i = 0; i < elems; ++i) {
            uint32_t bits = static_cast<uint32_t>(r.bytes[r.pos]) |
                            (static_cast<uint32_t>(r.bytes[r.pos + 1]) << 8) |
                            (static_cast<uint32_t>(r.bytes[r.pos + 2]) << 16) |
                            (static_cast<uint32_t>(r.bytes[r.pos + 3]) << 24);
            r.pos += 4;
            std::memcpy(&t.data[i], &bits, 4);
        }
        file.entries.emplace(std::move(name), std::move(t));
    }
    return file;
}

}  // namespace vitsem
