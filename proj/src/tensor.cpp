#include "wdci/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "wdci/errors.hpp"

WDCI_NAMESPACE_BEGIN

std::string Shape::str() const {
  return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " + std::to_string(h) + ", " +
         std::to_string(w) + ")";
}

Tensor::Tensor(Shape shape, real fill) : shape_(shape), data_(shape.numel(), fill) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw ShapeError("negative tensor dimension in " + shape.str());
  }
}

Tensor::Tensor(Shape shape, std::vector<real> values) : shape_(shape), data_(std::move(values)) {
  if (data_.size() != shape.numel()) {
    throw ShapeError("tensor of shape " + shape.str() + " needs " + std::to_string(shape.numel()) +
                     " values, got " + std::to_string(data_.size()));
  }
}

real Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_.str());
  return data_[0];
}

void Tensor::fill(real v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](real v) { return std::isfinite(v); });
}

Tensor& Tensor::operator+=(const Tensor& other) {
  require_same_shape(*this, other, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  require_same_shape(*this, other, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(real s) {
  for (auto& v : data_) v *= s;
  return *this;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(Tensor a, real s) { return a *= s; }

double sum_squares(const Tensor& t) {
  double acc = 0.0;
  for (real v : t.values()) acc += static_cast<double>(v) * v;
  return acc;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a.data()[i]) - b.data()[i]));
  }
  return m;
}

Tensor slice_batch(const Tensor& t, int begin, int count) {
  if (begin < 0 || count < 0 || begin + count > t.n()) {
    throw ShapeError("batch slice [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of range for " + t.shape().str());
  }
  Shape s = t.shape();
  s.n = count;
  std::size_t per = static_cast<std::size_t>(s.c) * s.plane();
  std::vector<real> v(t.data() + begin * per, t.data() + (begin + count) * per);
  return Tensor(s, std::move(v));
}

Tensor concat_batch(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_batch of zero tensors");
  Shape s = parts.front().shape();
  s.n = 0;
  for (const auto& p : parts) {
    if (p.c() != s.c || p.h() != s.h || p.w() != s.w) {
      throw ShapeError("concat_batch shape mismatch: " + parts.front().shape().str() + " vs " +
                       p.shape().str());
    }
    s.n += p.n();
  }
  std::vector<real> v;
  v.reserve(s.numel());
  for (const auto& p : parts) v.insert(v.end(), p.values().begin(), p.values().end());
  return Tensor(s, std::move(v));
}

Tensor crop(const Tensor& t, int y0, int x0, int h, int w) {
  if (y0 < 0 || x0 < 0 || h < 0 || w < 0 || y0 + h > t.h() || x0 + w > t.w()) {
    throw ShapeError("crop window (" + std::to_string(y0) + ", " + std::to_string(x0) + ", " +
                     std::to_string(h) + ", " + std::to_string(w) + ") exceeds " + t.shape().str());
  }
  Tensor out({t.n(), t.c(), h, w});
  for (int n = 0; n < t.n(); ++n)
    for (int c = 0; c < t.c(); ++c)
      for (int y = 0; y < h; ++y) {
        const real* src = t.plane(n, c) + static_cast<std::size_t>(y0 + y) * t.w() + x0;
        std::copy(src, src + w, out.plane(n, c) + static_cast<std::size_t>(y) * w);
      }
  return out;
}

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

Tensor pad_reflect(const Tensor& t, int pad_bottom, int pad_right) {
  if (pad_bottom < 0 || pad_right < 0) throw ArgumentError("negative padding");
  if (pad_bottom == 0 && pad_right == 0) return t;
  const int H = t.h() + pad_bottom;
  const int W = t.w() + pad_right;
  Tensor out({t.n(), t.c(), H, W});
  for (int n = 0; n < t.n(); ++n)
    for (int c = 0; c < t.c(); ++c) {
      const real* src = t.plane(n, c);
      real* dst = out.plane(n, c);
      for (int y = 0; y < H; ++y) {
        const int sy = reflect_index(y, t.h());
        for (int x = 0; x < W; ++x) {
          dst[static_cast<std::size_t>(y) * W + x] =
              src[static_cast<std::size_t>(sy) * t.w() + reflect_index(x, t.w())];
        }
      }
    }
  return out;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
  }
}

WDCI_NAMESPACE_END
