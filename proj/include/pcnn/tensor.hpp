#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcnn/errors.hpp"

namespace pcnn {

// Dense row-major N-d array. Scalar is float for training, double for the
// verification suites (finite differences need 64-bit).
template <typename S>
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<S> data;

  Tensor() = default;

  Tensor(std::vector<int64_t> shp, S fill = S(0)) : shape(std::move(shp)) {
    data.assign(check_shape(shape), fill);
  }

  static int64_t check_shape(const std::vector<int64_t>& shp) {
    if (shp.empty()) throw ShapeError("tensor shape must have at least one extent");
    int64_t n = 1;
    for (int64_t e : shp) {
      if (e < 1) throw ShapeError("tensor extent must be >= 1, got " + std::to_string(e));
      n *= e;
    }
    return n;
  }

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  int64_t extent(size_t i) const { return shape.at(i); }
  int64_t ndim() const { return static_cast<int64_t>(shape.size()); }

  S* ptr() { return data.data(); }
  const S* ptr() const { return data.data(); }

  S& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  const S& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  // flat index for 4-d [n,c,h,w] access
  S& at4(int64_t n, int64_t c, int64_t h, int64_t w) {
    return data[static_cast<size_t>(((n * shape[1] + c) * shape[2] + h) * shape[3] + w)];
  }
  const S& at4(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return data[static_cast<size_t>(((n * shape[1] + c) * shape[2] + h) * shape[3] + w)];
  }
  S& at2(int64_t i, int64_t j) { return data[static_cast<size_t>(i * shape[1] + j)]; }
  const S& at2(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * shape[1] + j)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (S v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  void require_finite(const char* what) const {
    if (!all_finite()) throw NumericError(std::string(what) + ": non-finite value produced");
  }
};

template <typename S>
Tensor<S> tensor_new(std::vector<int64_t> shape, S fill) {
  return Tensor<S>(std::move(shape), fill);
}

inline std::string shape_str(const std::vector<int64_t>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// Deterministic generator. Algorithm is fixed to std::mt19937_64, whose output
// sequence is specified by the standard, so the same seed gives the same draws
// on every platform. Distribution mappings are hand-rolled below because the
// std::*_distribution adapters are implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // uniform in [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // integer in [0, n)
  uint64_t below(uint64_t n) {
    // modulo rejection keeps the draw unbiased
    uint64_t threshold = (0 - n) % n;
    for (;;) {
      uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  bool bernoulli(double p) { return uniform() < p; }

  // standard normal via Box-Muller on the portable uniform
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Pure substream derivation: same (seed, epoch, index) -> same stream.
  static Rng substream(uint64_t seed, uint64_t epoch, uint64_t index) {
    uint64_t s = mix(mix(mix(seed) ^ epoch) ^ index);
    return Rng(s);
  }

  // splitmix64 finalizer
  static uint64_t mix(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace pcnn
