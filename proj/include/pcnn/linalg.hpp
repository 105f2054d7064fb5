#pragma once

#include <cstring>

#include "pcnn/tensor.hpp"

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#define PCNN_HAVE_AVX2 1
#endif

namespace pcnn {

namespace detail {

// Reference nest (i, k, j): inner loop streams rows of B and vectorizes;
// per-element summation over k is left-to-right.
template <typename S>
void gemm(int64_t m, int64_t k, int64_t n, const S* pa, const S* pb, S* pc) {
  for (int64_t i = 0; i < m; ++i) {
    const S* arow = pa + i * k;
    S* crow = pc + i * n;
    for (int64_t kk = 0; kk < k; ++kk) {
      const S aik = arow[kk];
      const S* brow = pb + kk * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
}

#ifdef PCNN_HAVE_AVX2
// 6x16 register tile over a packed B panel (16 columns, k-major). Each output
// element still accumulates over k left-to-right (one fma per k, in order),
// so the result is bitwise the same as the reference nest built with fma.
inline void gemm_kern6x16(const float* ar6, int64_t k, const float* bp, float* cr6, int64_t n) {
  __m256 acc[6][2];
  for (auto& row : acc) row[0] = row[1] = _mm256_setzero_ps();
  for (int64_t kk = 0; kk < k; ++kk) {
    __m256 b0 = _mm256_loadu_ps(bp), b1 = _mm256_loadu_ps(bp + 8);
    for (int r = 0; r < 6; ++r) {
      __m256 av = _mm256_set1_ps(ar6[r * k + kk]);
      acc[r][0] = _mm256_fmadd_ps(av, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_ps(av, b1, acc[r][1]);
    }
    bp += 16;
  }
  for (int r = 0; r < 6; ++r) {
    _mm256_storeu_ps(cr6 + r * n, acc[r][0]);
    _mm256_storeu_ps(cr6 + r * n + 8, acc[r][1]);
  }
}

inline void gemm_kern1x16(const float* ar, int64_t k, const float* bp, float* cr) {
  __m256 a0 = _mm256_setzero_ps(), a1 = _mm256_setzero_ps();
  for (int64_t kk = 0; kk < k; ++kk) {
    __m256 av = _mm256_set1_ps(ar[kk]);
    a0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(bp), a0);
    a1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(bp + 8), a1);
    bp += 16;
  }
  _mm256_storeu_ps(cr, a0);
  _mm256_storeu_ps(cr + 8, a1);
}

// float fast path. Two loop orders with identical per-element fma sequences:
// tile-outer packs one B panel at a time and streams A per panel (cheap when
// A is the smaller operand); row-outer packs all panels once and streams them
// per A block (cheap when C is tall and B fits cache, e.g. weight gradients).
inline void gemm(int64_t m, int64_t k, int64_t n, const float* pa, const float* pb, float* pc) {
  const int64_t ntiles = n / 16;
  if (m > n && ntiles > 0) {
    std::vector<float> panels(static_cast<size_t>(k) * ntiles * 16);
    for (int64_t kk = 0; kk < k; ++kk) {
      const float* brow = pb + kk * n;
      for (int64_t t = 0; t < ntiles; ++t)
        std::memcpy(panels.data() + (t * k + kk) * 16, brow + t * 16, 16 * sizeof(float));
    }
    int64_t i = 0;
    for (; i + 6 <= m; i += 6)
      for (int64_t t = 0; t < ntiles; ++t)
        gemm_kern6x16(pa + i * k, k, panels.data() + t * k * 16, pc + i * n + t * 16, n);
    for (; i < m; ++i)
      for (int64_t t = 0; t < ntiles; ++t)
        gemm_kern1x16(pa + i * k, k, panels.data() + t * k * 16, pc + i * n + t * 16);
  } else {
    std::vector<float> panel(static_cast<size_t>(k) * 16);
    for (int64_t t = 0; t < ntiles; ++t) {
      const int64_t j = t * 16;
      for (int64_t kk = 0; kk < k; ++kk)
        std::memcpy(panel.data() + kk * 16, pb + kk * n + j, 16 * sizeof(float));
      int64_t i = 0;
      for (; i + 6 <= m; i += 6) gemm_kern6x16(pa + i * k, k, panel.data(), pc + i * n + j, n);
      for (; i < m; ++i) gemm_kern1x16(pa + i * k, k, panel.data(), pc + i * n + j);
    }
  }
  for (int64_t j = ntiles * 16; j < n; ++j)
    for (int64_t i = 0; i < m; ++i) {
      float s = 0;
      const float* ar = pa + i * k;
      for (int64_t kk = 0; kk < k; ++kk) s = std::fma(ar[kk], pb[kk * n + j], s);
      pc[i * n + j] = s;
    }
}
#endif

// C[m,n] += A[m,k] * B[n,k]^T on raw buffers; summation order is not
// contractual (used for tolerance-checked weight gradients only).
template <typename S>
void gemm_nt_acc(int64_t m, int64_t k, int64_t n, const S* pa, const S* pb, S* pc) {
  int64_t j0 = 0;
#ifdef PCNN_HAVE_AVX2
  // 2x4 register tile of dot products, B tile outermost so its four rows stay
  // in L1 while the A rows stream past once per tile.
  if constexpr (std::is_same_v<S, float>) {
    for (; j0 + 4 <= n; j0 += 4) {
      const float* br[4] = {pb + j0 * k, pb + (j0 + 1) * k, pb + (j0 + 2) * k, pb + (j0 + 3) * k};
      int64_t i = 0;
      for (; i + 2 <= m; i += 2) {
        const float* a0 = pa + i * k;
        const float* a1 = a0 + k;
        __m256 acc[2][4];
        for (auto& row : acc) row[0] = row[1] = row[2] = row[3] = _mm256_setzero_ps();
        int64_t kk = 0;
        for (; kk + 8 <= k; kk += 8) {
          __m256 av0 = _mm256_loadu_ps(a0 + kk), av1 = _mm256_loadu_ps(a1 + kk);
          for (int t = 0; t < 4; ++t) {
            __m256 bv = _mm256_loadu_ps(br[t] + kk);
            acc[0][t] = _mm256_fmadd_ps(av0, bv, acc[0][t]);
            acc[1][t] = _mm256_fmadd_ps(av1, bv, acc[1][t]);
          }
        }
        alignas(32) float lanes[8];
        for (int r = 0; r < 2; ++r) {
          const float* ar = r ? a1 : a0;
          float* cr = pc + (i + r) * n;
          for (int t = 0; t < 4; ++t) {
            _mm256_store_ps(lanes, acc[r][t]);
            float s = 0;
            for (float lane : lanes) s += lane;
            for (int64_t kt = kk; kt < k; ++kt) s += ar[kt] * br[t][kt];
            cr[j0 + t] += s;
          }
        }
      }
      for (; i < m; ++i) {
        const float* arow = pa + i * k;
        float* crow = pc + i * n;
        for (int t = 0; t < 4; ++t) {
          float s = 0;
          for (int64_t kk = 0; kk < k; ++kk) s += arow[kk] * br[t][kk];
          crow[j0 + t] += s;
        }
      }
    }
  }
#endif
  for (; j0 < n; ++j0) {
    const S* brow = pb + j0 * k;
    for (int64_t i = 0; i < m; ++i) {
      const S* arow = pa + i * k;
      S s = 0;
      for (int64_t kk = 0; kk < k; ++kk) s += arow[kk] * brow[kk];
      pc[i * n + j0] += s;
    }
  }
}

// Single-image patch extraction: writes the 9*c patch rows of one [c,h,w]
// image at dst + row_index * row_stride, leaving padded entries untouched
// (callers zero the destination first).
template <typename S>
void im2col_rows(const S* img, int64_t c, int64_t h, int64_t w, S* dst0, int64_t row_stride) {
  for (int64_t ci = 0; ci < c; ++ci)
    for (int64_t ku = 0; ku < 3; ++ku)
      for (int64_t kv = 0; kv < 3; ++kv) {
        S* dst = dst0 + (ci * 9 + ku * 3 + kv) * row_stride;
        const S* chan = img + ci * h * w;
        for (int64_t i = 0; i < h; ++i) {
          const int64_t si = i + ku - 1;
          if (si < 0 || si >= h) {
            dst += w;
            continue;
          }
          const S* srow = chan + si * w;
          const int64_t dj = kv - 1;
          int64_t j0 = dj < 0 ? 1 : 0;
          int64_t j1 = dj > 0 ? w - 1 : w;
          for (int64_t j = j0; j < j1; ++j) dst[j] = srow[j + dj];
          dst += w;
        }
      }
}

// Adjoint of im2col_rows: scatter-adds patch rows back into one image.
template <typename S>
void col2im_rows(const S* src0, int64_t c, int64_t h, int64_t w, S* img, int64_t row_stride) {
  for (int64_t ci = 0; ci < c; ++ci)
    for (int64_t ku = 0; ku < 3; ++ku)
      for (int64_t kv = 0; kv < 3; ++kv) {
        const S* src = src0 + (ci * 9 + ku * 3 + kv) * row_stride;
        S* chan = img + ci * h * w;
        for (int64_t i = 0; i < h; ++i) {
          const int64_t si = i + ku - 1;
          if (si < 0 || si >= h) {
            src += w;
            continue;
          }
          S* drow = chan + si * w;
          const int64_t dj = kv - 1;
          int64_t j0 = dj < 0 ? 1 : 0;
          int64_t j1 = dj > 0 ? w - 1 : w;
          for (int64_t j = j0; j < j1; ++j) drow[j + dj] += src[j];
          src += w;
        }
      }
}

}  // namespace detail

// C[m,n] = A[m,k] * B[k,n]. Accumulation over k is fixed left-to-right for
// every output element, so results are bit-reproducible and agree exactly
// with a scalar triple loop.
template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.ndim() != 2 || b.ndim() != 2)
    throw ShapeError("matmul: operands must be 2-d, got " + shape_str(a.shape) + " x " +
                     shape_str(b.shape));
  const int64_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  if (b.shape[0] != k)
    throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape) + " x " +
                     shape_str(b.shape));
  Tensor<S> c({m, n}, S(0));
  detail::gemm(m, k, n, a.ptr(), b.ptr(), c.ptr());
  return c;
}

// C[m,n] = A[m,k] * B[n,k]^T. Internal helper for weight gradients where both
// operands are row-major over the contracted axis; summation order per element
// is not part of the matmul contract here (gradients are tolerance-checked).
template <typename S>
Tensor<S> matmul_nt(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.shape[1] != b.shape[1])
    throw ShapeError("matmul_nt: shapes " + shape_str(a.shape) + " x " + shape_str(b.shape));
  const int64_t m = a.shape[0], k = a.shape[1], n = b.shape[0];
  Tensor<S> c({m, n});
  for (int64_t i = 0; i < m; ++i) {
    const S* arow = a.ptr() + i * k;
    S* crow = c.ptr() + i * n;
    int64_t j = 0;
#ifdef PCNN_HAVE_AVX2
    if constexpr (std::is_same_v<S, float>) {
      for (; j + 4 <= n; j += 4) {
        const float* b0 = b.ptr() + j * k;
        const float* b1 = b0 + k;
        const float* b2 = b1 + k;
        const float* b3 = b2 + k;
        __m256 acc0 = _mm256_setzero_ps(), acc1 = acc0, acc2 = acc0, acc3 = acc0;
        int64_t kk = 0;
        for (; kk + 8 <= k; kk += 8) {
          __m256 av = _mm256_loadu_ps(arow + kk);
          acc0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b0 + kk), acc0);
          acc1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b1 + kk), acc1);
          acc2 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b2 + kk), acc2);
          acc3 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b3 + kk), acc3);
        }
        alignas(32) float lanes[8];
        float sums[4];
        const __m256 accs[4] = {acc0, acc1, acc2, acc3};
        for (int t = 0; t < 4; ++t) {
          _mm256_store_ps(lanes, accs[t]);
          float s = 0;
          for (float lane : lanes) s += lane;
          sums[t] = s;
        }
        for (; kk < k; ++kk) {
          const float av = arow[kk];
          sums[0] += av * b0[kk];
          sums[1] += av * b1[kk];
          sums[2] += av * b2[kk];
          sums[3] += av * b3[kk];
        }
        crow[j] = sums[0];
        crow[j + 1] = sums[1];
        crow[j + 2] = sums[2];
        crow[j + 3] = sums[3];
      }
    }
#endif
    for (; j < n; ++j) {
      const S* brow = b.ptr() + j * k;
      S s = 0;
      for (int64_t kk = 0; kk < k; ++kk) s += arow[kk] * brow[kk];
      crow[j] = s;
    }
  }
  return c;
}

template <typename S>
Tensor<S> transpose(const Tensor<S>& a) {
  if (a.ndim() != 2) throw ShapeError("transpose: need 2-d tensor");
  const int64_t m = a.shape[0], n = a.shape[1];
  Tensor<S> t({n, m});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) t.at2(j, i) = a.at2(i, j);
  return t;
}

// 3x3/stride-1/pad-1 patch extraction. Output [c*9, n*h*w]: column j is the
// zero-padded receptive field of output position j, columns ordered (n, h, w)
// row-major, rows ordered (c, kernel row, kernel col).
template <typename S>
Tensor<S> im2col(const Tensor<S>& x) {
  if (x.ndim() != 4) throw ShapeError("im2col: need [n,c,h,w], got " + shape_str(x.shape));
  const int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
  Tensor<S> cols({c * 9, n * h * w}, S(0));
  const int64_t ncols = n * h * w;
  for (int64_t ni = 0; ni < n; ++ni)
    detail::im2col_rows(x.ptr() + ni * c * h * w, c, h, w, cols.ptr() + ni * h * w, ncols);
  return cols;
}

// Adjoint of im2col: scatter-adds each column entry back to its source pixel,
// so <im2col(x), y> == <x, col2im(y)> holds exactly up to rounding.
template <typename S>
Tensor<S> col2im(const Tensor<S>& cols, const std::vector<int64_t>& out_shape) {
  if (out_shape.size() != 4) throw ShapeError("col2im: out_shape must be [n,c,h,w]");
  const int64_t n = out_shape[0], c = out_shape[1], h = out_shape[2], w = out_shape[3];
  if (cols.ndim() != 2 || cols.shape[0] != c * 9 || cols.shape[1] != n * h * w)
    throw ShapeError("col2im: cols " + shape_str(cols.shape) + " inconsistent with out " +
                     shape_str(out_shape));
  Tensor<S> x(out_shape, S(0));
  const int64_t ncols = n * h * w;
  for (int64_t ni = 0; ni < n; ++ni)
    detail::col2im_rows(cols.ptr() + ni * h * w, c, h, w, x.ptr() + ni * c * h * w, ncols);
  return x;
}

}  // namespace pcnn
