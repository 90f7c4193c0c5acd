#include "gdvig/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include "gdvig/error.hpp"

namespace gdvig {
namespace {

constexpr char kMagic[4] = {'G', 'D', 'V', 'T'};
constexpr std::uint8_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  if (t.rank() == 0 || t.rank() > 255) throw FormatError("GDVT: unsupported rank " + std::to_string(t.rank()));
  std::vector<std::uint8_t> out;
  out.reserve(6 + 4 * t.rank() + 4 * t.size());
  out.insert(out.end(), kMagic, kMagic + 4);
  out.push_back(kVersion);
  out.push_back(static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.shape()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw FormatError("GDVT: dim exceeds u32");
    put_u32(out, static_cast<std::uint32_t>(d));
  }
  for (double v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

Tensor decode_tensor(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 6 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("GDVT: bad magic");
  if (bytes[4] != kVersion) throw FormatError("GDVT: unsupported version " + std::to_string(bytes[4]));
  const std::size_t rank = bytes[5];
  if (rank == 0) throw FormatError("GDVT: rank 0");
  const std::size_t header = 6 + 4 * rank;
  if (bytes.size() < header) throw FormatError("GDVT: truncated header");
  Shape shape(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    shape[i] = get_u32(bytes.data() + 6 + 4 * i);
    if (shape[i] == 0) throw FormatError("GDVT: zero dim");
  }
  const std::size_t n = shape_numel(shape);
  if (bytes.size() != header + 4 * n) {
    throw FormatError("GDVT: payload holds " + std::to_string(bytes.size() - header) + " bytes, expected " +
                      std::to_string(4 * n));
  }
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    data[i] = static_cast<double>(std::bit_cast<float>(get_u32(bytes.data() + header + 4 * i)));
  }
  return Tensor(std::move(shape), std::move(data));
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_tensor(const std::filesystem::path& path, const Tensor& t) { write_bytes(path, encode_tensor(t)); }

Tensor read_tensor(const std::filesystem::path& path) {
  try {
    return decode_tensor(read_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Tensor narrow_to_float(Tensor t) {
  for (double& v : t.data()) v = static_cast<double>(static_cast<float>(v));
  return t;
}

std::uint64_t fnv1a64(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace gdvig
