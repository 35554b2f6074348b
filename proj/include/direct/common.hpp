#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace direct {

/// The three cascade sub-tasks: subject extraction, object extraction,
/// relation classification.
enum class Task : std::uint8_t { kSubject = 0, kObject = 1, kRelation = 2 };

inline constexpr Task kAllTasks[] = {Task::kSubject, Task::kObject, Task::kRelation};

inline constexpr std::string_view task_name(Task t) {
  switch (t) {
    case Task::kSubject: return "s";
    case Task::kObject: return "o";
    case Task::kRelation: return "r";
  }
  return "?";
}

inline constexpr std::size_t task_index(Task t) { return static_cast<std::size_t>(t); }

inline Task parse_task(std::string_view s) {
  if (s == "s") return Task::kSubject;
  if (s == "o") return Task::kObject;
  if (s == "r") return Task::kRelation;
  throw std::invalid_argument("unknown task '" + std::string(s) + "'");
}

// Error hierarchy. The CLI maps each kind to an exit code:
// usage 1, data 2, numeric/runtime 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const { return 3; }
};

class UsageError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 1; }
};

class DataError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 2; }
};

class NumericError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 3; }
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write file '" + path + "'");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

// 64-bit FNV-1a, used for dataset checksums in run manifests.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = kDigits[v & 0xf];
    v >>= 4;
  }
  return s;
}

}  // namespace direct
