#include "vitsem/image_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <vector>

#include "vitsem/errors.hpp"

namespace vitsem {

namespace {

constexpr unsigned char kPngSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

uint32_t read_be32(const unsigned char* p) {
    return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open file: " + path);
    }
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (in.bad()) {
        throw IoError("read failure: " + path);
    }
    return bytes;
}

unsigned char paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a);
    const int pb = std::abs(p - b);
    const int pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return static_cast<unsigned char>(a);
    if (pb <= pc) return static_cast<unsigned char>(b);
    return static_cast<unsigned char>(c);
}

unsigned char quantize(float v) {
    float c = std::min(std::max(v, 0.0f), 1.0f);
    return static_cast<unsigned char>(std::lround(c * 255.0f));
}

}  // namespace

// ============================================================================
// PNG decoding
// ============================================================================

RgbImage decode_png(const unsigned char* bytes, size_t size) {
    if (size < 8 || std::memcmp(bytes, kPngSignature, 8) != 0) {
        throw FormatError("png: bad signature", 0);
    }

    uint32_t width = 0;
    uint32_t height = 0;
    int channels = 0;
    bool saw_ihdr = false;
    bool saw_iend = false;
    std::vector<unsigned char> idat;
    size_t idat_offset = 0;

    size_t pos = 8;
    while (!saw_iend) {
        if (pos + 8 > size) {
            throw FormatError("png: truncated chunk header", static_cast<long long>(pos));
        }
        const uint32_t len = read_be32(bytes + pos);
        const char* type = reinterpret_cast<const char*>(bytes + pos + 4);
        const size_t data_pos = pos + 8;
        if (len > size || data_pos + len + 4 > size) {
            throw FormatError("png: truncated chunk body", static_cast<long long>(data_pos));
        }
        const uint32_t stored_crc = read_be32(bytes + data_pos + len);
        uLong crc = crc32(0L, Z_NULL, 0);
        crc = crc32(crc, bytes + pos + 4, len + 4);
        if (static_cast<uint32_t>(crc) != stored_crc) {
            throw FormatError("png: chunk crc mismatch", static_cast<long long>(data_pos + len));
        }

        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) {
                throw FormatError("png: bad IHDR length", static_cast<long long>(pos));
            }
            width = read_be32(bytes + data_pos);
            height = read_be32(bytes + data_pos + 4);
            const unsigned char bit_depth = bytes[data_pos + 8];
            const unsigned char color_type = bytes[data_pos + 9];
            const unsigned char compression = bytes[data_pos + 10];
            const unsigned char filter = bytes[data_pos + 11];
            const unsigned char interlace = bytes[data_pos + 12];
            if (width == 0 || height == 0 || width > (1u << 24) || height > (1u << 24)) {
                throw FormatError("png: bad dimensions", static_cast<long long>(data_pos));
            }
            if (bit_depth != 8) {
                throw FormatError("png: unsupported bit depth", static_cast<long long>(data_pos + 8));
            }
            switch (color_type) {
                case 0: channels = 1; break;
                case 2: channels = 3; break;
                case 4: channels = 2; break;
                case 6: channels = 4; break;
                default:
                    throw FormatError("png: unsupported color type",
                                      static_cast<long long>(data_pos + 9));
            }
            if (compression != 0) {
                throw FormatError("png: unsupported compression method",
                                  static_cast<long long>(data_pos + 10));
            }
            if (filter != 0) {
                throw FormatError("png: unsupported filter method",
                                  static_cast<long long>(data_pos + 11));
            }
            if (interlace != 0) {
                throw FormatError("png: interlaced images unsupported",
                                  static_cast<long long>(data_pos + 12));
            }
            saw_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            if (!saw_ihdr) {
                throw FormatError("png: IDAT before IHDR", static_cast<long long>(pos));
            }
            if (idat.empty()) idat_offset = data_pos;
            idat.insert(idat.end(), bytes + data_pos, bytes + data_pos + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            saw_iend = true;
        }
        // Ancillary chunks (PLTE would matter only for color type 3) are skipped.
        pos = data_pos + len + 4;
    }

    if (!saw_ihdr) {
        throw FormatError("png: missing IHDR", 8);
    }
    if (idat.empty()) {
        throw FormatError("png: missing IDAT", static_cast<long long>(pos));
    }

    const size_t stride = static_cast<size_t>(width) * channels;
    std::vector<unsigned char> raw(static_cast<size_t>(height) * (stride + 1));

    z_stream zs;
    std::memset(&zs, 0, sizeof(zs));
    if (inflateInit(&zs) != Z_OK) {
        throw IoError("png: inflate initialization failed");
    }
    zs.next_in = idat.data();
    zs.avail_in = static_cast<uInt>(idat.size());
    zs.next_out = raw.data();
    zs.avail_out = static_cast<uInt>(raw.size());
    const int rc = inflate(&zs, Z_FINISH);
    const uLong produced = zs.total_out;
    inflateEnd(&zs);
    if (rc != Z_STREAM_END || produced != raw.size()) {
        throw FormatError("png: corrupt or truncated image data",
                          static_cast<long long>(idat_offset));
    }

    // Undo per-row filters in place (bytes shift left by the filter byte).
    const int bpp = channels;
    std::vector<unsigned char> prev(stride, 0);
    std::vector<unsigned char> cur(stride);
    RgbImage out(static_cast<int>(width), static_cast<int>(height));
    for (uint32_t y = 0; y < height; ++y) {
        const unsigned char* row = raw.data() + static_cast<size_t>(y) * (stride + 1);
        const unsigned char ftype = row[0];
        const unsigned char* src = row + 1;
        switch (ftype) {
            case 0:  // None
                std::copy(src, src + stride, cur.begin());
                break;
            case 1:  // Sub
                for (size_t i = 0; i < stride; ++i) {
                    const int left = i >= static_cast<size_t>(bpp) ? cur[i - bpp] : 0;
                    cur[i] = static_cast<unsigned char>(src[i] + left);
                }
                break;
            case 2:  // Up
                for (size_t i = 0; i < stride; ++i) {
                    cur[i] = static_cast<unsigned char>(src[i] + prev[i]);
                }
                break;
            case 3:  // Average
                for (size_t i = 0; i < stride; ++i) {
                    const int left = i >= static_cast<size_t>(bpp) ? cur[i - bpp] : 0;
                    cur[i] = static_cast<unsigned char>(src[i] + ((left + prev[i]) >> 1));
                }
                break;
            case 4:  // Paeth
                for (size_t i = 0; i < stride; ++i) {
                    const int left = i >= static_cast<size_t>(bpp) ? cur[i - bpp] : 0;
                    const int upleft = i >= static_cast<size_t>(bpp) ? prev[i - bpp] : 0;
                    cur[i] = static_cast<unsigned char>(src[i] + paeth(left, prev[i], upleft));
                }
                break;
            default:
                throw FormatError("png: unknown row filter type",
                                  static_cast<long long>(idat_offset));
        }

        float* dst = out.pixel(0, static_cast<int>(y));
        for (uint32_t x = 0; x < width; ++x) {
            const unsigned char* px = cur.data() + static_cast<size_t>(x) * channels;
            float r, g, b;
            if (channels <= 2) {
                r = g = b = px[0] / 255.0f;
            } else {
                r = px[0] / 255.0f;
                g = px[1] / 255.0f;
                b = px[2] / 255.0f;
            }
            dst[x * 3 + 0] = r;
            dst[x * 3 + 1] = g;
            dst[x * 3 + 2] = b;
        }
        std::swap(prev, cur);
    }
    return out;
}

// ============================================================================
// PPM (P6) decoding
// ============================================================================

namespace {

// Cursor over the PPM header that skips whitespace and '#' comments while
// remembering the byte offset of everything it reads.
struct PpmCursor {
    const unsigned char* bytes;
    size_t size;
    size_t pos = 0;

    void skip_space() {
        while (pos < size) {
            const unsigned char c = bytes[pos];
            if (c == '#') {
                while (pos < size && bytes[pos] != '\n') ++pos;
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                ++pos;
            } else {
                break;
            }
        }
    }

    long parse_int(const char* what) {
        skip_space();
        const size_t start = pos;
        long value = 0;
        while (pos < size && bytes[pos] >= '0' && bytes[pos] <= '9') {
            value = value * 10 + (bytes[pos] - '0');
            if (value > 1'000'000'000L) {
                throw FormatError(std::string("ppm: ") + what + " out of range",
                                  static_cast<long long>(start));
            }
            ++pos;
        }
        if (pos == start) {
            throw FormatError(std::string("ppm: expected ") + what,
                              static_cast<long long>(pos));
        }
        return value;
    }
};

}  // namespace

RgbImage decode_ppm(const unsigned char* bytes, size_t size) {
    if (size < 2 || bytes[0] != 'P' || bytes[1] != '6') {
        throw FormatError("ppm: bad magic", 0);
    }
    PpmCursor cur{bytes, size, 2};
    const long w = cur.parse_int("width");
    const long h = cur.parse_int("height");
    const size_t maxval_pos = (cur.skip_space(), cur.pos);
    const long maxval = cur.parse_int("maxval");
    if (w < 1 || h < 1) {
        throw FormatError("ppm: bad dimensions", 2);
    }
    if (maxval != 255) {
        throw FormatError("ppm: only maxval 255 supported",
                          static_cast<long long>(maxval_pos));
    }
    if (cur.pos >= size) {
        throw FormatError("ppm: missing pixel data", static_cast<long long>(cur.pos));
    }
    ++cur.pos;  // single whitespace byte after maxval

    const size_t need = static_cast<size_t>(w) * h * 3;
    if (size - cur.pos < need) {
        throw FormatError("ppm: truncated pixel data", static_cast<long long>(size));
    }
    RgbImage out(static_cast<int>(w), static_cast<int>(h));
    const unsigned char* p = bytes + cur.pos;
    for (size_t i = 0; i < need; ++i) {
        out.data[i] = p[i] / 255.0f;
    }
    return out;
}

RgbImage load_image(const std::string& path) {
    const std::vector<unsigned char> bytes = read_file(path);
    if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSignature, 8) == 0) {
        return decode_png(bytes.data(), bytes.size());
    }
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') {
        return decode_ppm(bytes.data(), bytes.size());
    }
    throw FormatError("unsupported image format (expected PNG or binary PPM): " + path, 0);
}

// ============================================================================
// Writers
// ============================================================================

namespace {

void write_file(const std::string& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open for writing: " + path);
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("write failure: " + path);
    }
}

void append_be32(std::vector<unsigned char>& v, uint32_t x) {
    v.push_back(static_cast<unsigned char>(x >> 24));
    v.push_back(static_cast<unsigned char>(x >> 16));
    v.push_back(static_cast<unsigned char>(x >> 8));
    v.push_back(static_cast<unsigned char>(x));
}

void append_chunk(std::vector<unsigned char>& v, const char type[4],
                  const unsigned char* data, size_t len) {
    append_be32(v, static_cast<uint32_t>(len));
    const size_t type_pos = v.size();
    v.insert(v.end(), type, type + 4);
    if (len > 0) v.insert(v.end(), data, data + len);
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, v.data() + type_pos, static_cast<uInt>(len + 4));
    append_be32(v, static_cast<uint32_t>(crc));
}

}  // namespace

void write_pgm(const GrayImage& img, const std::string& path) {
    std::vector<unsigned char> bytes;
    char header[64];
    const int n = std::snprintf(header, sizeof(header), "P5\n%d %d\n255\n", img.width, img.height);
    bytes.insert(bytes.end(), header, header + n);
    bytes.reserve(bytes.size() + img.size());
    for (float v : img.data) {
        bytes.push_back(quantize(v));
    }
    write_file(path, bytes);
}

void write_ppm(const RgbImage& img, const std::string& path) {
    std::vector<unsigned char> bytes;
    char header[64];
    const int n = std::snprintf(header, sizeof(header), "P6\n%d %d\n255\n", img.width, img.height);
    bytes.insert(bytes.end(), header, header + n);
    bytes.reserve(bytes.size() + img.data.size());
    for (float v : img.data) {
        bytes.push_back(quantize(v));
    }
    write_file(path, bytes);
}

void write_png(const RgbImage& img, const std::string& path) {
    const size_t stride = static_cast<size_t>(img.width) * 3;
    std::vector<unsigned char> raw(static_cast<size_t>(img.height) * (stride + 1));
    for (int y = 0; y < img.height; ++y) {
        unsigned char* row = raw.data() + static_cast<size_t>(y) * (stride + 1);
        row[0] = 0;  // filter: None
        const float* src = img.pixel(0, y);
        for (size_t i = 0; i < stride; ++i) {
            row[1 + i] = quantize(src[i]);
        }
    }

    uLongf comp_size = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> comp(comp_size);
    if (compress2(comp.data(), &comp_size, raw.data(), static_cast<uLong>(raw.size()),
                  Z_DEFAULT_COMPRESSION) != Z_OK) {
        throw IoError("png: compression failed: " + path);
    }
    comp.resize(comp_size);

    std::vector<unsigned char> bytes(kPngSignature, kPngSignature + 8);
    unsigned char ihdr[13];
    ihdr[0] = static_cast<unsigned char>(static_cast<uint32_t>(img.width) >> 24);
    ihdr[1] = static_cast<unsigned char>(static_cast<uint32_t>(img.width) >> 16);
    ihdr[2] = static_cast<unsigned char>(static_cast<uint32_t>(img.width) >> 8);
    ihdr[3] = static_cast<unsigned char>(img.width);
    ihdr[4] = static_cast<unsigned char>(static_cast<uint32_t>(img.height) >> 24);
    ihdr[5] = static_cast<unsigned char>(static_cast<uint32_t>(img.height) >> 16);
    ihdr[6] = static_cast<unsigned char>(static_cast<uint32_t>(img.height) >> 8);
    ihdr[7] = static_cast<unsigned char>(img.height);
    ihdr[8] = 8;   // bit depth
    ihdr[9] = 2;   // color type: RGB
    ihdr[10] = 0;  // compression
    ihdr[11] = 0;  // filter
    ihdr[12] = 0;  // interlace
    append_chunk(bytes, "IHDR", ihdr, sizeof(ihdr));
    append_chunk(bytes, "IDAT", comp.data(), comp.size());
    append_chunk(bytes, "IEND", nullptr, 0);
    write_file(path, bytes);
}

}  // namespace vitsem
