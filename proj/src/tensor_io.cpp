#include "xmadapt/tensor_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "xmadapt/error.hpp"

namespace xmadapt {

namespace {

constexpr unsigned char kMagic[4] = {0x4D, 0x4D, 0x52, 0x49};  // "MMRI"
constexpr unsigned char kVersion = 0x01;

void put_u32(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

uint32_t get_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
         static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
}

void put_f32(std::string& out, float f) {
  uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

float get_f32(const unsigned char* p) {
  uint32_t bits = get_u32(p);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

}  // namespace

void save_tensor(const std::string& path, const Tensor& t) {
  std::string buf;
  buf.reserve(6 + 4 * t.shape().size() + 4 * static_cast<size_t>(t.numel()));
  buf.append(reinterpret_cast<const char*>(kMagic), 4);
  buf.push_back(static_cast<char>(kVersion));
  buf.push_back(static_cast<char>(t.shape().size()));
  for (int64_t d : t.shape()) {
    if (d > UINT32_MAX) throw FormatError("tensor dimension too large for file format");
    put_u32(buf, static_cast<uint32_t>(d));
  }
  for (float v : t.data()) put_f32(buf, v);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw IoError("write failed: " + path);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for reading: " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)),
                                 std::istreambuf_iterator<char>());
  if (f.bad()) throw IoError("read failed: " + path);

  if (buf.size() < 6 || std::memcmp(buf.data(), kMagic, 4) != 0)
    throw FormatError("bad magic in tensor file: " + path);
  if (buf[4] != kVersion)
    throw FormatError("unsupported tensor file version in " + path);
  size_t ndim = buf[5];
  if (ndim == 0) throw FormatError("zero-rank tensor in " + path);
  size_t off = 6;
  if (buf.size() < off + 4 * ndim) throw FormatError("truncated dims in " + path);
  Shape shape;
  int64_t count = 1;
  for (size_t i = 0; i < ndim; ++i) {
    uint32_t d = get_u32(buf.data() + off);
    off += 4;
    if (d == 0) throw FormatError("zero dimension in " + path);
    shape.push_back(static_cast<int64_t>(d));
    count *= d;
  }
  if (buf.size() != off + 4 * static_cast<size_t>(count))
    throw FormatError("payload size mismatch in " + path);
  std::vector<float> data(static_cast<size_t>(count));
  for (int64_t i = 0; i < count; ++i) data[static_cast<size_t>(i)] = get_f32(buf.data() + off + 4 * i);
  return Tensor::from_data(std::move(shape), std::move(data));
}

}  // namespace xmadapt
