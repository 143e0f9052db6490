#include "edr/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "edr/errors.hpp"

namespace edr {

namespace {

constexpr char kMagic[8] = {'E', 'D', 'R', 'N', 'M', 'T', '0', '1'};
constexpr std::uint32_t kMaxNameLen = 4096;
constexpr std::uint32_t kMaxRank = 2;

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

void write_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  write_u64(out, bits);
}

std::uint32_t read_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw CheckpointError(path + ": truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t read_u64(std::istream& in, const std::string& path) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw CheckpointError(path + ": truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double read_f64(std::istream& in, const std::string& path) {
  const std::uint64_t bits = read_u64(in, path);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParameterMap& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, tensor] : params) {
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t e : tensor.shape()) write_u64(out, e);
  }
  for (const auto& [name, tensor] : params) {
    for (std::size_t i = 0; i < tensor.size(); ++i) write_f64(out, tensor[i]);
  }
  if (!out) throw CheckpointError("failed writing checkpoint: " + path);
}

ParameterMap load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw CheckpointError(path + ": not a checkpoint file (bad magic)");
  }
  const std::uint32_t count = read_u32(in, path);
  std::vector<std::pair<std::string, std::vector<std::size_t>>> manifest;
  manifest.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = read_u32(in, path);
    if (name_len == 0 || name_len > kMaxNameLen) {
      throw CheckpointError(path + ": malformed tensor name length");
    }
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw CheckpointError(path + ": truncated file");
    const std::uint32_t rank = read_u32(in, path);
    if (rank == 0 || rank > kMaxRank) {
      throw CheckpointError(path + ": unsupported tensor rank " + std::to_string(rank));
    }
    std::vector<std::size_t> shape(rank);
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint64_t extent = read_u64(in, path);
      if (extent == 0 || extent > (1ULL << 32)) {
        throw CheckpointError(path + ": malformed tensor extent");
      }
      shape[d] = static_cast<std::size_t>(extent);
    }
    manifest.emplace_back(std::move(name), std::move(shape));
  }
  ParameterMap params;
  for (auto& [name, shape] : manifest) {
    if (params.count(name)) throw CheckpointError(path + ": duplicate tensor '" + name + "'");
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = read_f64(in, path);
    params[name] = std::move(t);
  }
  return params;
}

}  // namespace edr
