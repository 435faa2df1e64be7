// voxlab/common.h

// Copyright 2026  The voxlab authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef VOXLAB_COMMON_H_
#define VOXLAB_COMMON_H_

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace voxlab {

// Error hierarchy. The CLI maps ConfigError to exit code 2, everything else
// to exit code 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DimensionError : Error {
  using Error::Error;
};
struct ContractError : Error {
  using Error::Error;
};
struct NumericError : Error {
  using Error::Error;
};
struct IndexError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};

#define VOXLAB_THROW(ExcType, msg_expr)       \
  do {                                        \
    std::ostringstream vl_os_;                \
    vl_os_ << msg_expr;                       \
    throw ::voxlab::ExcType(vl_os_.str());    \
  } while (0)

#define VOXLAB_REQUIRE(cond, ExcType, msg_expr) \
  do {                                          \
    if (!(cond)) VOXLAB_THROW(ExcType, msg_expr); \
  } while (0)

// Dense row-major matrix, the plain-value sibling of the autodiff tensors.
template <class T>
struct Mat {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<T> v;

  Mat() = default;
  Mat(int64_t r, int64_t c) : rows(r), cols(c), v(static_cast<size_t>(r * c)) {}
  Mat(int64_t r, int64_t c, std::vector<T> data)
      : rows(r), cols(c), v(std::move(data)) {
    VOXLAB_REQUIRE(static_cast<int64_t>(v.size()) == rows * cols, DimensionError,
                   "Mat: buffer size " << v.size() << " does not match " << rows
                                       << "x" << cols);
  }

  T& at(int64_t r, int64_t c) { return v[static_cast<size_t>(r * cols + c)]; }
  const T& at(int64_t r, int64_t c) const {
    return v[static_cast<size_t>(r * cols + c)];
  }
  T* row(int64_t r) { return v.data() + r * cols; }
  const T* row(int64_t r) const { return v.data() + r * cols; }
  int64_t size() const { return rows * cols; }
};

inline std::string shape_str(int64_t r, int64_t c) {
  std::ostringstream os;
  os << r << "x" << c;
  return os.str();
}

}  // namespace voxlab

#endif  // VOXLAB_COMMON_H_
