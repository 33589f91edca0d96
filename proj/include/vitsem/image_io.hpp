#pragma once

#include <string>

#include "vitsem/image.hpp"

namespace vitsem {

// Decodes a PNG (8-bit gray / gray+alpha / RGB / RGBA, non-interlaced) or a
// binary PPM (P6, maxval 255) into an RgbImage with values in [0,1]. Alpha is
// dropped; gray is replicated across channels. Unreadable files raise
// IoError; malformed content raises FormatError carrying the byte offset.
RgbImage load_image(const std::string& path);

// In-memory decoders, exposed for tests that probe malformed inputs.
RgbImage decode_png(const unsigned char* bytes, size_t size);
RgbImage decode_ppm(const unsigned char* bytes, size_t size);

// Writers quantize with round(v * 255) after clamping to [0,1].
void write_pgm(const GrayImage& img, const std::string& path);
void write_ppm(const RgbImage& img, const std::string& path);
void write_png(const RgbImage& img, const std::string& path);

}  // namespace vitsem
