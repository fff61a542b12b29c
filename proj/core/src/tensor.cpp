// SPDX-FileCopyrightText: © 2026 The GraftedNet Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "gnet/tensor.hpp"

#include <numeric>

namespace gnet {

std::string shape_to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "×";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::size_t shape_volume(const Shape& shape) {
  if (shape.empty()) return 0;
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

DimensionError::DimensionError(std::string op, std::string axis, const std::string& detail)
    : std::invalid_argument(op + ": dimension error on " + axis + ": " + detail),
      op_(std::move(op)),
      axis_(std::move(axis)) {}

}  // namespace gnet
