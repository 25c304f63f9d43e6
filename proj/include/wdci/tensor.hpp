#pragma once

#include <span>
#include <string>
#include <vector>

#include "wdci/common.hpp"

WDCI_NAMESPACE_BEGIN

/// Rank-4 shape in (batch, channel, height, width) order.
///
/// Every array in the library is rank 4. Pooled vectors use (N, C, 1, 1),
/// scalars (1, 1, 1, 1) and per-row attention stacks (N, H, W, W).
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) *
           static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  std::size_t plane() const {
    return static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;
};

/// Dense row-major NCHW array of `real`. Value semantics.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, real fill = 0);
  Tensor(Shape shape, std::vector<real> values);

  static Tensor scalar(real v) { return Tensor({1, 1, 1, 1}, v); }

  const Shape& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  real* data() { return data_.data(); }
  const real* data() const { return data_.data(); }
  std::span<real> values() { return data_; }
  std::span<const real> values() const { return data_; }

  std::size_t index(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  real& at(int n, int c, int h, int w) { return data_[index(n, c, h, w)]; }
  real at(int n, int c, int h, int w) const { return data_[index(n, c, h, w)]; }

  /// Pointer to the contiguous H*W plane of (n, c).
  real* plane(int n, int c) { return data_.data() + index(n, c, 0, 0); }
  const real* plane(int n, int c) const { return data_.data() + index(n, c, 0, 0); }

  real item() const;
  void fill(real v);
  bool all_finite() const;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(real s);

 private:
  Shape shape_;
  std::vector<real> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, real s);

double sum_squares(const Tensor& t);
double max_abs_diff(const Tensor& a, const Tensor& b);

/// Sub-batch [begin, begin + count).
Tensor slice_batch(const Tensor& t, int begin, int count);
/// Concatenate along the batch axis.
Tensor concat_batch(const std::vector<Tensor>& parts);
/// Spatial window of size (h, w) starting at (y0, x0).
Tensor crop(const Tensor& t, int y0, int x0, int h, int w);
/// Reflect-pad on the bottom and right edges.
Tensor pad_reflect(const Tensor& t, int pad_bottom, int pad_right);

/// Mirror index into [0, n) without repeating the edge sample.
int reflect_index(int i, int n);

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

WDCI_NAMESPACE_END
