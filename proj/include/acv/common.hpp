#ifndef ACV_COMMON_HPP_
#define ACV_COMMON_HPP_

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace acv {

// Error taxonomy. Subcommands map these onto distinct exit codes.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad shapes, bad knobs, inconsistent geometry.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// A caller broke a documented precondition.
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& msg) : Error(msg) {}
};

// Filesystem-level failures (missing file, short read, unwritable path).
class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

// Undecodable bitstream contents.
class CorruptStreamError : public Error {
 public:
  explicit CorruptStreamError(const std::string& msg) : Error(msg) {}
};

namespace detail {
inline std::string format_msg(const char* what) { return what; }

template <typename... Args>
std::string format_msg(Args&&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}
}  // namespace detail

#define ACV_CHECK_IMPL(cond, extype, ...)                         \
  do {                                                            \
    if (!(cond)) {                                                \
      throw extype(::acv::detail::format_msg(__VA_ARGS__));       \
    }                                                             \
  } while (0)

#define ACV_CHECK(cond, ...) ACV_CHECK_IMPL(cond, ::acv::ContractError, __VA_ARGS__)
#define ACV_CHECK_CFG(cond, ...) ACV_CHECK_IMPL(cond, ::acv::ConfigError, __VA_ARGS__)
#define ACV_CHECK_IO(cond, ...) ACV_CHECK_IMPL(cond, ::acv::IoError, __VA_ARGS__)
#define ACV_CHECK_STREAM(cond, ...) \
  ACV_CHECK_IMPL(cond, ::acv::CorruptStreamError, __VA_ARGS__)

// Shape of a 4-D tensor in (batch, channel, height, width) order.
struct Shape4 {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  Shape4() = default;
  Shape4(int n_, int c_, int h_, int w_) : n(n_), c(c_), h(h_), w(w_) {}

  std::int64_t count() const {
    return std::int64_t(n) * c * h * w;
  }
  bool operator==(const Shape4& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  bool operator!=(const Shape4& o) const { return !(*this == o); }

  int dim(int i) const {
    switch (i) {
      case 0: return n;
      case 1: return c;
      case 2: return h;
      default: return w;
    }
  }
  void set_dim(int i, int v) {
    switch (i) {
      case 0: n = v; break;
      case 1: c = v; break;
      case 2: h = v; break;
      default: w = v; break;
    }
  }

  std::string str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << h << "," << w << ")";
    return os.str();
  }
};

inline std::ostream& operator<<(std::ostream& os, const Shape4& s) {
  return os << s.str();
}

}  // namespace acv

#endif  // ACV_COMMON_HPP_
