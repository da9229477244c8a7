#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace oasr {

/// Extents of a dense tensor, rank 1..4. Rank-4 order is (N, C, H, W).
class Shape {
 public:
  static constexpr std::size_t kMaxRank = 4;

  Shape() = default;

  Shape(std::initializer_list<std::size_t> dims) { assign(dims.begin(), dims.end()); }

  explicit Shape(std::span<const std::size_t> dims) { assign(dims.begin(), dims.end()); }

  std::size_t rank() const { return rank_; }
  std::size_t operator[](std::size_t i) const { return dims_[i]; }
  std::span<const std::size_t> dims() const { return {dims_.data(), rank_}; }

  std::size_t numel() const {
    std::size_t n = 1;
    for (std::size_t i = 0; i < rank_; ++i) n *= dims_[i];
    return n;
  }

  // Rank-4 accessors.
  std::size_t n() const { return dims_[0]; }
  std::size_t c() const { return dims_[1]; }
  std::size_t h() const { return dims_[2]; }
  std::size_t w() const { return dims_[3]; }

  bool operator==(const Shape& o) const {
    return rank_ == o.rank_ && std::equal(dims_.begin(), dims_.begin() + rank_, o.dims_.begin());
  }

  std::string str() const {
    std::string s = "(";
    for (std::size_t i = 0; i < rank_; ++i) {
      if (i) s += ",";
      s += std::to_string(dims_[i]);
    }
    return s + ")";
  }

 private:
  template <class It>
  void assign(It first, It last) {
    const auto r = static_cast<std::size_t>(std::distance(first, last));
    if (r < 1 || r > kMaxRank) throw std::invalid_argument("Shape: rank must be 1..4");
    std::size_t total = 1;
    rank_ = r;
    for (std::size_t i = 0; first != last; ++first, ++i) {
      if (*first < 1) throw std::invalid_argument("Shape: extents must be >= 1");
      if (total > std::numeric_limits<std::size_t>::max() / *first)
        throw std::overflow_error("Shape: element count overflows");
      total *= *first;
      dims_[i] = *first;
    }
  }

  std::array<std::size_t, kMaxRank> dims_{1, 1, 1, 1};
  std::size_t rank_ = 1;
};

/// Dense row-major tensor (last dimension fastest).
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(shape), data_(shape.numel(), T(0)) {}
  Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.numel())
      throw std::invalid_argument("Tensor: data length " + std::to_string(data_.size()) +
                                  " does not match shape " + shape_.str());
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_.c() + c) * shape_.h() + h) * shape_.w() + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_.c() + c) * shape_.h() + h) * shape_.w() + w];
  }
  T& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  T sum() const { return std::accumulate(data_.begin(), data_.end(), T(0)); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  Tensor& operator+=(const Tensor& o) {
    if (!(shape_ == o.shape_))
      throw std::invalid_argument("Tensor +=: shape mismatch " + shape_.str() + " vs " +
                                  o.shape_.str());
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

template <class T>
Tensor<T> zeros(const Shape& shape) {
  return Tensor<T>(shape);
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> out = a;
  out += b;
  return out;
}

namespace detail {
inline void require_rank4(const Shape& s, const char* what) {
  if (s.rank() != 4) throw std::invalid_argument(std::string(what) + ": expected rank-4 tensor, got " + s.str());
}
}  // namespace detail

/// Stacks rank-4 tensors along the channel axis, in argument order.
template <class T>
Tensor<T> concat_channels(std::span<const Tensor<T>* const> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_channels: no inputs");
  const Shape& s0 = parts.front()->shape();
  detail::require_rank4(s0, "concat_channels");
  std::size_t channels = 0;
  for (const auto* p : parts) {
    const Shape& s = p->shape();
    detail::require_rank4(s, "concat_channels");
    if (s.n() != s0.n() || s.h() != s0.h() || s.w() != s0.w())
      throw std::invalid_argument("concat_channels: mismatched batch or spatial dims " + s.str() +
                                  " vs " + s0.str());
    channels += s.c();
  }
  Tensor<T> out(Shape{s0.n(), channels, s0.h(), s0.w()});
  const std::size_t plane = s0.h() * s0.w();
  auto dst = out.data();
  for (std::size_t n = 0; n < s0.n(); ++n) {
    std::size_t offset = n * channels * plane;
    for (const auto* p : parts) {
      const std::size_t slab = p->shape().c() * plane;
      auto src = p->data().subspan(n * slab, slab);
      std::copy(src.begin(), src.end(), dst.begin() + static_cast<std::ptrdiff_t>(offset));
      offset += slab;
    }
  }
  return out;
}

template <class T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  std::vector<const Tensor<T>*> ptrs;
  ptrs.reserve(parts.size());
  for (const auto& p : parts) ptrs.push_back(&p);
  return concat_channels<T>(std::span<const Tensor<T>* const>(ptrs));
}

/// Copies channels [lo, hi) of a rank-4 tensor.
template <class T>
Tensor<T> channel_slice(const Tensor<T>& t, std::size_t lo, std::size_t hi) {
  const Shape& s = t.shape();
  detail::require_rank4(s, "channel_slice");
  if (!(lo < hi && hi <= s.c()))
    throw std::out_of_range("channel_slice: range [" + std::to_string(lo) + "," + std::to_string(hi) +
                            ") outside " + std::to_string(s.c()) + " channels");
  const std::size_t plane = s.h() * s.w();
  Tensor<T> out(Shape{s.n(), hi - lo, s.h(), s.w()});
  auto dst = out.data().begin();
  for (std::size_t n = 0; n < s.n(); ++n) {
    auto src = t.data().subspan((n * s.c() + lo) * plane, (hi - lo) * plane);
    dst = std::copy(src.begin(), src.end(), dst);
  }
  return out;
}

}  // namespace oasr
