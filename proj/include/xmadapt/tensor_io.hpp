#pragma once

#include <string>

#include "xmadapt/tensor.hpp"

namespace xmadapt {

// Binary tensor file format ("MMRI"):
//   bytes 0-3  magic 0x4D 0x4D 0x52 0x49
//   byte  4    version, 0x01
//   byte  5    ndim
//   then ndim little-endian uint32 dims
//   then row-major float32 little-endian data
//
// save overwrites; load validates magic/version/size and rejects trailing
// bytes. I/O failures raise IoError, malformed content raises FormatError.
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

}  // namespace xmadapt
