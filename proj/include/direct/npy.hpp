#pragma once

// Reader for NumPy .npy arrays (little-endian f4/f8, C order, rank 1 or 2).
// Rank-1 arrays load as a single row.

#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

#include "direct/autograd.hpp"
#include "direct/common.hpp"

namespace direct {

inline ag::Matrix parse_npy(std::string_view bytes, const std::string& what = "array") {
  auto fail = [&](const std::string& why) { return DataError("npy " + what + ": " + why); };
  if (bytes.size() < 10 || bytes.substr(0, 6) != "\x93NUMPY") throw fail("bad magic");
  const auto major = static_cast<unsigned char>(bytes[6]);
  std::size_t header_len = 0, offset = 0;
  if (major == 1) {
    header_len = static_cast<unsigned char>(bytes[8]) | (static_cast<std::size_t>(static_cast<unsigned char>(bytes[9])) << 8);
    offset = 10;
  } else {
    if (bytes.size() < 12) throw fail("truncated header");
    for (int i = 0; i < 4; ++i)
      header_len |= static_cast<std::size_t>(static_cast<unsigned char>(bytes[8 + static_cast<std::size_t>(i)])) << (8 * i);
    offset = 12;
  }
  if (offset + header_len > bytes.size()) throw fail("truncated header");
  const std::string header(bytes.substr(offset, header_len));
  const std::size_t data_off = offset + header_len;

  auto field = [&](const std::string& key) {
    auto k = header.find("'" + key + "'");
    if (k == std::string::npos) throw fail("header lacks " + key);
    return header.substr(header.find(':', k) + 1);
  };
  std::string descr = field("descr");
  descr = descr.substr(descr.find('\'') + 1);
  descr = descr.substr(0, descr.find('\''));
  std::string order = field("fortran_order");
  order.erase(0, order.find_first_not_of(' '));
  if (order.rfind("True", 0) == 0) throw fail("fortran order unsupported");
  std::string shape = field("shape");
  shape = shape.substr(shape.find('(') + 1, shape.find(')') - shape.find('(') - 1);
  std::vector<long> dims;
  std::size_t pos = 0;
  while (pos < shape.size()) {
    while (pos < shape.size() && (shape[pos] == ' ' || shape[pos] == ',')) ++pos;
    if (pos >= shape.size()) break;
    std::size_t end = pos;
    while (end < shape.size() && shape[end] != ',') ++end;
    dims.push_back(std::stol(shape.substr(pos, end - pos)));
    pos = end;
  }
  if (dims.empty() || dims.size() > 2) throw fail("only rank 1 and 2 arrays are supported");
  const Eigen::Index rows = dims.size() == 1 ? 1 : dims[0];
  const Eigen::Index cols = dims.size() == 1 ? dims[0] : dims[1];

  std::size_t width = 0;
  if (descr == "<f4") width = 4;
  else if (descr == "<f8") width = 8;
  else throw fail("unsupported dtype " + descr);
  const auto count = static_cast<std::size_t>(rows * cols);
  if (data_off + count * width > bytes.size()) throw fail("truncated data");

  ag::Matrix m(rows, cols);
  const char* p = bytes.data() + data_off;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const std::size_t i = static_cast<std::size_t>(r * cols + c);
      if (width == 4) {
        float f;
        std::memcpy(&f, p + i * 4, 4);
        m(r, c) = f;
      } else {
        double d;
        std::memcpy(&d, p + i * 8, 8);
        m(r, c) = d;
      }
    }
  }
  return m;
}

inline ag::Matrix load_npy(const std::string& path) { return parse_npy(read_file(path), path); }

}  // namespace direct
