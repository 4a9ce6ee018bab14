#pragma once

// Shared error type and small shape utilities used across the library.

#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace alto {

using Shape = std::vector<std::size_t>;

enum class ErrorKind { Dimension, Config, Contract, Numeric, Io };

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ", ";
    os << s[i];
  }
  os << ']';
  return os.str();
}

inline void require(bool ok, ErrorKind kind, const std::string& msg) {
  if (!ok) fail(kind, msg);
}

}  // namespace alto
