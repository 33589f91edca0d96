#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace vitsem {

// Row-major f32 tensor.
struct Tensor {
    std::vector<uint32_t> shape;
    std::vector<float> data;

    Tensor() = default;
    Tensor(std::vector<uint32_t> s);

    size_t element_count() const;
    // Rank-2 accessors (row, col).
    float at(size_t r, size_t c) const { return data[r * shape[1] + c]; }
    float& at(size_t r, size_t c) { return data[r * shape[1] + c]; }
};

// Named-tensor container serialized as a VSLT file:
//   magic "VSLT" | version u32 LE | entry count u32 LE
//   per entry: name len u16 LE | name bytes | rank u8 | dims u32 LE each |
//              payload f32 LE (row-major)
// The entry named "meta" is the one exception: its payload is rank-1 u8
// holding JSON text (image size, patch size, layer/head counts, CLS flag).
struct TensorFile {
    std::map<std::string, Tensor> entries;  // deterministic (sorted) order
    std::string meta_json;                  // empty = no meta entry
};

void save_tensor_file(const std::string& path, const TensorFile& file);

// Throws FormatError with the byte offset on bad magic, bad version,
// dimension overflow, or truncation; IoError when the file cannot be read.
TensorFile load_tensor_file(const std::string& path);

}  // namespace vitsem
