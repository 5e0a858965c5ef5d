#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <utility>
#include <vector>

#include "actionkit/errors.hpp"

namespace actionkit {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

// Dense row-major N-d array. Scalar type selects the precision: float for
// training paths, double for every verification path.
template <typename S>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    validate_shape();
    data_.assign(shape_numel(shape_), S(0));
  }

  Tensor(Shape shape, std::vector<S> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape();
    if (data_.size() != shape_numel(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(shape_));
    }
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, S v) {
    Tensor t(std::move(shape));
    for (S& e : t.data_) e = v;
    return t;
  }

  static Tensor scalar(S v) { return Tensor({1}, {v}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }
  std::vector<S>& vec() { return data_; }
  const std::vector<S>& vec() const { return data_; }

  S& operator[](std::size_t i) { return data_[i]; }
  S operator[](std::size_t i) const { return data_[i]; }

  std::size_t offset(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != shape_.size()) {
      throw ShapeError("index rank mismatch for shape " + shape_str(shape_));
    }
    std::size_t off = 0;
    std::size_t axis = 0;
    for (std::size_t i : idx) {
      if (i >= shape_[axis]) throw ShapeError("index out of range");
      off = off * shape_[axis] + i;
      ++axis;
    }
    return off;
  }

  template <typename... I>
  S& at(I... idx) {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }
  template <typename... I>
  S at(I... idx) const {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }

  // Row-major reshape: same flat data, new extents.
  Tensor reshaped(Shape new_shape) const {
    if (shape_numel(new_shape) != data_.size()) {
      throw ShapeError("reshape " + shape_str(shape_) + " -> " +
                       shape_str(new_shape) + " changes element count");
    }
    for (std::size_t e : new_shape) {
      if (e == 0) throw ShapeError("zero extent in reshape target");
    }
    return Tensor(std::move(new_shape), data_);
  }

  template <typename T>
  Tensor<T> cast() const {
    std::vector<T> out(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<T>(data_[i]);
    return Tensor<T>(shape_, std::move(out));
  }

 private:
  void validate_shape() const {
    for (std::size_t e : shape_) {
      if (e == 0) throw ShapeError("tensor extents must be >= 1, got " + shape_str(shape_));
    }
  }

  Shape shape_;
  std::vector<S> data_;
};

inline std::vector<std::size_t> row_major_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

// Axis permutation with data movement; out(i_p0, i_p1, ...) = in(i_0, i_1, ...).
template <typename S>
Tensor<S> permuted(const Tensor<S>& t, const std::vector<std::size_t>& order) {
  const std::size_t r = t.rank();
  if (order.size() != r) throw ShapeError("permutation rank mismatch");
  std::vector<bool> seen(r, false);
  for (std::size_t a : order) {
    if (a >= r || seen[a]) throw ShapeError("invalid axis permutation");
    seen[a] = true;
  }
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = t.shape()[order[i]];
  Tensor<S> out(out_shape);
  const auto in_strides = row_major_strides(t.shape());
  std::vector<std::size_t> out_stride_of_in_axis(r, 0);
  {
    const auto out_strides = row_major_strides(out_shape);
    for (std::size_t i = 0; i < r; ++i) out_stride_of_in_axis[order[i]] = out_strides[i];
  }
  std::vector<std::size_t> idx(r, 0);
  const std::size_t n = t.size();
  std::size_t out_off = 0;
  for (std::size_t flat = 0; flat < n; ++flat) {
    out[out_off] = t[flat];
    for (std::size_t axis = r; axis-- > 0;) {
      ++idx[axis];
      out_off += out_stride_of_in_axis[axis];
      if (idx[axis] < t.shape()[axis]) break;
      out_off -= out_stride_of_in_axis[axis] * t.shape()[axis];
      idx[axis] = 0;
    }
  }
  return out;
}

inline std::vector<std::size_t> inverse_permutation(const std::vector<std::size_t>& order) {
  std::vector<std::size_t> inv(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) inv[order[i]] = i;
  return inv;
}

}  // namespace actionkit
