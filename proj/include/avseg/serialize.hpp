#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "avseg/tensor.hpp"

namespace avseg {

// Flat binary tensor container, all header fields 64-bit little-endian:
//   magic ("AVTENSR\0"), dtype code, rank, dims[rank], then row-major data.
// Dtype codes: 1 = float64, 2 = float32, 3 = int32, 4 = uint8.
enum class Dtype : uint64_t { F64 = 1, F32 = 2, I32 = 3, U8 = 4 };

constexpr uint64_t kTensorMagic = 0x0052534E4554'5641ULL;  // "AVTENSR\0" LE

void write_tensor(std::ostream& os, const Tensor& t, Dtype storage);
void write_tensor(std::ostream& os, const IntTensor& t, Dtype storage);
void write_tensor_file(const std::filesystem::path& path, const Tensor& t, Dtype storage);
void write_tensor_file(const std::filesystem::path& path, const IntTensor& t, Dtype storage);

// Values stored as f32 come back exactly as written (the in-memory doubles
// must already sit on the f32 grid for round-trips to be bit-exact).
Tensor read_tensor(std::istream& is);
IntTensor read_int_tensor(std::istream& is);
Tensor read_tensor_file(const std::filesystem::path& path);
IntTensor read_int_tensor_file(const std::filesystem::path& path);

// Named-tensor archive used by checkpoints: u64 entry count, then per entry
// a u64 name length, the name bytes, and one tensor container record.
constexpr uint64_t kArchiveMagic = 0x0048435241'5641ULL;  // "AVARCH\0\0" LE

void write_archive(const std::filesystem::path& path, const std::map<std::string, Tensor>& entries);
std::map<std::string, Tensor> read_archive(const std::filesystem::path& path);

// Quantize a double tensor onto the float32 grid (used by the scene
// generator so dataset round-trips are bit-exact).
Tensor round_to_f32(const Tensor& t);

}  // namespace avseg
