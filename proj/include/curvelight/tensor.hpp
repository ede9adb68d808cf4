#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace curvelight {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

/// Dense row-major tensor of real values. 4-D data is laid out [N, C, H, W].
template <typename T>
struct TensorT {
  std::vector<int> shape;
  std::vector<T> data;

  TensorT() = default;
  explicit TensorT(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(checked_numel(shape)), T(0));
  }
  TensorT(std::vector<int> s, T fill) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(checked_numel(shape)), fill);
  }
  TensorT(std::vector<int> s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
    require(checked_numel(shape) == static_cast<int64_t>(data.size()),
            "tensor data length does not match shape");
  }

  static int64_t checked_numel(const std::vector<int>& s) {
    require(!s.empty(), "tensor shape must be non-empty");
    int64_t n = 1;
    for (int e : s) {
      require(e > 0, "tensor extent must be positive");
      n *= e;
    }
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  // 4-D accessors; valid only for rank-4 tensors.
  T& at(int n, int c, int y, int x) {
    assert(shape.size() == 4);
    return data[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + y) * shape[3] + x];
  }
  const T& at(int n, int c, int y, int x) const {
    assert(shape.size() == 4);
    return data[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + y) * shape[3] + x];
  }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

using Tensor = TensorT<float>;

template <typename T>
std::string shape_str(const TensorT<T>& t) {
  std::string s = "[";
  for (int i = 0; i < t.rank(); ++i) {
    if (i) s += ",";
    s += std::to_string(t.dim(i));
  }
  return s + "]";
}

template <typename T>
void require_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* what) {
  require(a.shape == b.shape,
          std::string(what) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

// Reductions accumulate in double regardless of T; summation order is fixed
// (flat index order) so results are reproducible.
template <typename T>
double sum(const TensorT<T>& t) {
  double acc = 0.0;
  for (const T v : t.data) acc += static_cast<double>(v);
  return acc;
}

template <typename T>
double mean(const TensorT<T>& t) {
  return sum(t) / static_cast<double>(t.numel());
}

template <typename T>
T min_value(const TensorT<T>& t) {
  return *std::min_element(t.data.begin(), t.data.end());
}

template <typename T>
T max_value(const TensorT<T>& t) {
  return *std::max_element(t.data.begin(), t.data.end());
}

template <typename T>
bool all_finite(const TensorT<T>& t) {
  for (const T v : t.data)
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  require_same_shape(a, b, "add");
  TensorT<T> out;
  out.shape = a.shape;
  out.data.resize(a.data.size());
  for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] + b.data[i];
  return out;
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
  require_same_shape(a, b, "sub");
  TensorT<T> out;
  out.shape = a.shape;
  out.data.resize(a.data.size());
  for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] - b.data[i];
  return out;
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  require_same_shape(a, b, "mul");
  TensorT<T> out;
  out.shape = a.shape;
  out.data.resize(a.data.size());
  for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] * b.data[i];
  return out;
}

template <typename T>
TensorT<T> scale(const TensorT<T>& a, T s) {
  TensorT<T> out;
  out.shape = a.shape;
  out.data.resize(a.data.size());
  for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] * s;
  return out;
}

template <typename T>
void add_inplace(TensorT<T>& dst, const TensorT<T>& src) {
  require_same_shape(dst, src, "add_inplace");
  for (size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

template <typename T>
void axpy_inplace(TensorT<T>& dst, T alpha, const TensorT<T>& src) {
  require_same_shape(dst, src, "axpy_inplace");
  for (size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += alpha * src.data[i];
}

template <typename T>
double max_abs_diff(const TensorT<T>& a, const TensorT<T>& b) {
  require_same_shape(a, b, "max_abs_diff");
  double worst = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i)
    worst = std::max(worst, std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i])));
  return worst;
}

}  // namespace curvelight
