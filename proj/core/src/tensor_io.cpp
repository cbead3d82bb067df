#include "lfsr/tensor_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "lfsr/error.hpp"

namespace lfsr {
namespace {

constexpr char kMagic[4] = {'L', 'F', 'T', 'B'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }
  std::size_t offset() const { return pos_; }

  std::uint64_t uint(std::size_t width, const char* what) {
    if (bytes_.size() - pos_ < width) {
      throw DataError(std::string("tensor file truncated reading ") + what + " at offset " +
                      std::to_string(pos_));
    }
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += width;
    return v;
  }

  std::string take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw DataError(std::string("tensor file truncated reading ") + what + " at offset " +
                      std::to_string(pos_));
    }
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

void validate_name(const std::string& name) {
  if (name.empty()) throw DataError("tensor names must be non-empty");
  for (unsigned char ch : name) {
    if (ch < 0x20 || ch > 0x7e) throw DataError("tensor name '" + name + "' is not printable ASCII");
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace

std::string encode_tensors(const std::vector<NamedTensor>& tensors) {
  std::string out(kMagic, 4);
  put_u32(out, kTensorFileVersion);
  for (const auto& [name, t] : tensors) {
    validate_name(name);
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_u64(out, d);
    for (double v : t.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

std::vector<NamedTensor> decode_tensors(const std::string& bytes) {
  Reader r(bytes);
  const std::string magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw DataError("bad tensor file magic at offset 0 (expected LFTB)");
  }
  const auto version = r.uint(4, "version");
  if (version != kTensorFileVersion) {
    throw DataError("unsupported tensor file version " + std::to_string(version) + " at offset 4");
  }
  std::vector<NamedTensor> out;
  while (!r.done()) {
    const std::size_t record = r.offset();
    const auto name_len = r.uint(4, "name length");
    std::string name = r.take(name_len, "name");
    try {
      validate_name(name);
    } catch (const DataError& e) {
      throw DataError(std::string(e.what()) + " at offset " + std::to_string(record));
    }
    const auto rank = r.uint(4, "rank");
    if (rank > 16) throw DataError("implausible rank " + std::to_string(rank) + " at offset " + std::to_string(record));
    Shape shape;
    for (std::uint64_t i = 0; i < rank; ++i) {
      const auto d = r.uint(8, "dims");
      if (d == 0) throw DataError("zero dimension in '" + name + "' at offset " + std::to_string(record));
      shape.push_back(static_cast<std::size_t>(d));
    }
    const std::size_t n = shape_numel(shape);
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) data[i] = std::bit_cast<double>(r.uint(8, "payload"));
    out.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  return out;
}

void save_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  write_file(path, encode_tensors(tensors));
}

std::vector<NamedTensor> load_tensors(const std::filesystem::path& path) {
  try {
    return decode_tensors(read_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::map<std::string, Tensor> load_tensor_map(const std::filesystem::path& path) {
  std::map<std::string, Tensor> out;
  for (auto& [name, t] : load_tensors(path)) out.emplace(name, t);
  return out;
}

PgmStats export_pgm(const Tensor& image, const std::filesystem::path& path, double lo, double hi) {
  if (!image.defined() || image.rank() != 2) throw ShapeError("export_pgm: expected a 2-D image");
  if (!(hi > lo)) throw ShapeError("export_pgm: empty intensity range");
  PgmStats stats;
  std::string bytes = "P5\n" + std::to_string(image.dim(1)) + " " + std::to_string(image.dim(0)) +
                      "\n65535\n";
  for (double v : image.data()) {
    double level = std::floor((v - lo) / (hi - lo) * 65535.0);
    if (level < 0.0 || level > 65535.0 || !std::isfinite(level)) {
      ++stats.clipped;
      level = std::isfinite(level) ? std::clamp(level, 0.0, 65535.0) : 0.0;
    }
    const auto q = static_cast<std::uint16_t>(level);
    bytes.push_back(static_cast<char>(q >> 8));
    bytes.push_back(static_cast<char>(q & 0xff));
  }
  write_file(path, bytes);
  return stats;
}

void write_records(const std::filesystem::path& path, const RecordTable& table) {
  std::string out;
  auto line = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += '\t';
      out += cells[i];
    }
    out += '\n';
  };
  line(table.columns);
  for (const auto& row : table.rows) {
    if (row.size() != table.columns.size()) throw DataError("record row width does not match header");
    line(row);
  }
  write_file(path, out);
}

RecordTable read_records(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  RecordTable table;
  std::string text;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
      if (i == s.size() || s[i] == '\t') {
        cells.push_back(s.substr(start, i - start));
        start = i + 1;
      }
    }
    return cells;
  };
  if (!std::getline(in, text)) throw DataError(path.string() + ": empty record file");
  table.columns = split(text);
  while (std::getline(in, text)) {
    if (text.empty()) continue;
    auto cells = split(text);
    if (cells.size() != table.columns.size()) {
      throw DataError(path.string() + ": record width mismatch on row " +
                      std::to_string(table.rows.size() + 1));
    }
    table.rows.push_back(std::move(cells));
  }
  return table;
}

}  // namespace lfsr
