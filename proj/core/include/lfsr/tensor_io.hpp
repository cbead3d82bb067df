#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "lfsr/adam.hpp"
#include "lfsr/tensor.hpp"

namespace lfsr {

// Named-tensor container, little-endian throughout:
//
//   "LFTB"            4 bytes magic
//   version           u32 (= 1)
//   repeated until EOF:
//     name_len        u32
//     name            name_len ASCII bytes
//     rank            u32
//     dims            rank x u64
//     payload         prod(dims) x f64
//
// A rank-0 record holds one value.
inline constexpr std::uint32_t kTensorFileVersion = 1;

void save_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_tensors(const std::filesystem::path& path);
std::map<std::string, Tensor> load_tensor_map(const std::filesystem::path& path);

// In-memory encode/decode used by the file functions.
std::string encode_tensors(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_tensors(const std::string& bytes);

struct PgmStats {
  std::size_t clipped = 0;
};

// Binary 16-bit PGM; values map linearly from [lo, hi] to [0, 65535] with
// floor rounding and clipping.
PgmStats export_pgm(const Tensor& image, const std::filesystem::path& path, double lo = -1.0,
                    double hi = 1.0);

// Tab-separated record file with a header row.
struct RecordTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

void write_records(const std::filesystem::path& path, const RecordTable& table);
RecordTable read_records(const std::filesystem::path& path);

}  // namespace lfsr
