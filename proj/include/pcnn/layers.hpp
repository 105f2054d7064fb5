#pragma once

#include <algorithm>
#include <cmath>
#include <utility>

#include "pcnn/linalg.hpp"
#include "pcnn/tensor.hpp"

namespace pcnn {

// Cross-correlation, 3x3 / stride 1 / same padding, via im2col + matmul.
// x [n,c,h,w], w [oc,c,3,3] (row-major, so already an [oc, c*9] matrix), b [oc].
template <typename S>
Tensor<S> conv2d_forward(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
  if (x.ndim() != 4 || w.ndim() != 4 || w.shape[2] != 3 || w.shape[3] != 3)
    throw ShapeError("conv2d: need x [n,c,h,w], w [oc,c,3,3]");
  if (w.shape[1] != x.shape[1])
    throw ShapeError("conv2d: channel mismatch, x " + shape_str(x.shape) + " w " +
                     shape_str(w.shape));
  const int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2], ww = x.shape[3];
  const int64_t oc = w.shape[0];
  if (b.size() != oc) throw ShapeError("conv2d: bias length != out channels");

  // One image at a time: the [c*9, h*w] patch matrix stays cache-resident
  // instead of materializing [c*9, n*h*w] for the whole batch.
  const int64_t hw = h * ww, kdim = c * 9;
  Tensor<S> y({n, oc, h, ww});
  std::vector<S> cols(static_cast<size_t>(kdim) * hw);
  std::vector<S> prod(static_cast<size_t>(oc) * hw);
  for (int64_t ni = 0; ni < n; ++ni) {
    std::fill(cols.begin(), cols.end(), S(0));
    detail::im2col_rows(x.ptr() + ni * c * hw, c, h, ww, cols.data(), hw);
    std::fill(prod.begin(), prod.end(), S(0));
    detail::gemm(oc, kdim, hw, w.ptr(), cols.data(), prod.data());
    for (int64_t o = 0; o < oc; ++o) {
      const S bias = b[o];
      const S* src = prod.data() + o * hw;
      S* dst = y.ptr() + (ni * oc + o) * hw;
      for (int64_t i = 0; i < hw; ++i) dst[i] = src[i] + bias;
    }
  }
  return y;
}

template <typename S>
struct ConvGrads {
  Tensor<S> dx, dw, db;
};

template <typename S>
ConvGrads<S> conv2d_backward(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& dy) {
  const int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2], ww = x.shape[3];
  const int64_t oc = w.shape[0];
  if (dy.shape != std::vector<int64_t>({n, oc, h, ww}))
    throw ShapeError("conv2d_backward: dy shape " + shape_str(dy.shape));
  const int64_t hw = h * ww;

  const int64_t kdim = c * 9;
  ConvGrads<S> g;
  g.db = Tensor<S>({oc}, S(0));
  for (int64_t ni = 0; ni < n; ++ni)
    for (int64_t o = 0; o < oc; ++o) {
      S s = 0;
      const S* row = dy.ptr() + (ni * oc + o) * hw;
      for (int64_t i = 0; i < hw; ++i) s += row[i];
      g.db[o] += s;
    }

  Tensor<S> wmat = w;
  wmat.shape = {oc, kdim};
  Tensor<S> wt = transpose(wmat);                   // [c*9, oc]
  g.dw = Tensor<S>({oc, c, 3, 3}, S(0));
  g.dx = Tensor<S>({n, c, h, ww}, S(0));
  std::vector<S> cols(static_cast<size_t>(kdim) * hw);
  std::vector<S> dcols(static_cast<size_t>(kdim) * hw);
  for (int64_t ni = 0; ni < n; ++ni) {
    const S* dyslab = dy.ptr() + ni * oc * hw;      // already [oc, h*w]
    std::fill(cols.begin(), cols.end(), S(0));
    detail::im2col_rows(x.ptr() + ni * c * hw, c, h, ww, cols.data(), hw);
    detail::gemm_nt_acc(oc, hw, kdim, dyslab, cols.data(), g.dw.ptr());
    std::fill(dcols.begin(), dcols.end(), S(0));
    detail::gemm(kdim, oc, hw, wt.ptr(), dyslab, dcols.data());
    detail::col2im_rows(dcols.data(), c, h, ww, g.dx.ptr() + ni * c * hw, hw);
  }
  return g;
}

template <typename S>
struct PoolOut {
  Tensor<S> y;
  std::vector<int64_t> idx;  // flat input position of each output's max
};

// Disjoint 2x2/stride-2 max pooling; ties break to the first maximum in
// row-major scan order.
template <typename S>
PoolOut<S> maxpool2x2_forward(const Tensor<S>& x) {
  if (x.ndim() != 4) throw ShapeError("maxpool: need [n,c,h,w]");
  const int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
  if (h % 2 || w % 2)
    throw ShapeError("maxpool: spatial extents must be even, got " + shape_str(x.shape));
  PoolOut<S> out;
  out.y = Tensor<S>({n, c, h / 2, w / 2});
  out.idx.resize(static_cast<size_t>(out.y.size()));
  int64_t oi = 0;
  for (int64_t ni = 0; ni < n; ++ni)
    for (int64_t ci = 0; ci < c; ++ci) {
      const int64_t base = (ni * c + ci) * h * w;
      for (int64_t i = 0; i < h; i += 2)
        for (int64_t j = 0; j < w; j += 2) {
          int64_t best = base + i * w + j;
          S bv = x[best];
          const int64_t cands[3] = {base + i * w + j + 1, base + (i + 1) * w + j,
                                    base + (i + 1) * w + j + 1};
          for (int64_t cand : cands)
            if (x[cand] > bv) {
              bv = x[cand];
              best = cand;
            }
          out.y[oi] = bv;
          out.idx[static_cast<size_t>(oi)] = best;
          ++oi;
        }
    }
  return out;
}

template <typename S>
Tensor<S> maxpool2x2_backward(const Tensor<S>& dy, const std::vector<int64_t>& idx,
                              const std::vector<int64_t>& in_shape) {
  if (static_cast<size_t>(dy.size()) != idx.size())
    throw ShapeError("maxpool_backward: dy/idx size mismatch");
  Tensor<S> dx(in_shape, S(0));
  for (int64_t i = 0; i < dy.size(); ++i) {
    int64_t p = idx[static_cast<size_t>(i)];
    if (p < 0 || p >= dx.size()) throw ShapeError("maxpool_backward: index out of range");
    dx[p] += dy[i];
  }
  return dx;
}

template <typename S>
Tensor<S> relu_forward(const Tensor<S>& x) {
  Tensor<S> y = x;
  for (S& v : y.data) v = v > S(0) ? v : S(0);
  return y;
}

// gradient at exactly 0 is defined as 0
template <typename S>
Tensor<S> relu_backward(const Tensor<S>& dy, const Tensor<S>& x) {
  if (!dy.same_shape(x)) throw ShapeError("relu_backward: shape mismatch");
  Tensor<S> dx = dy;
  for (int64_t i = 0; i < dx.size(); ++i)
    if (!(x[i] > S(0))) dx[i] = S(0);
  return dx;
}

enum class DropoutMode { Regular, Spatial };

template <typename S>
struct DropoutOut {
  Tensor<S> y;
  Tensor<S> mask;  // {0, 1/(1-p)} valued; channel-constant in Spatial mode
};

// Inverted dropout: kept activations are scaled by 1/(1-p) at training time,
// inference is the identity. Spatial mode draws one keep/zero decision per
// (batch, channel) pair.
template <typename S>
DropoutOut<S> dropout_forward(const Tensor<S>& x, double p, DropoutMode mode, Rng& rng,
                              bool training) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: rate must be in [0,1)");
  if (mode == DropoutMode::Spatial && x.ndim() != 4)
    throw ShapeError("spatial dropout: need a 4-d activation");
  DropoutOut<S> out;
  out.mask = Tensor<S>(x.shape, S(1));
  if (!training || p == 0.0) {
    out.y = x;
    return out;
  }
  const S scale = static_cast<S>(1.0 / (1.0 - p));
  if (mode == DropoutMode::Regular) {
    for (int64_t i = 0; i < out.mask.size(); ++i)
      out.mask[i] = rng.bernoulli(p) ? S(0) : scale;
  } else {
    const int64_t n = x.shape[0], c = x.shape[1], hw = x.shape[2] * x.shape[3];
    for (int64_t ni = 0; ni < n; ++ni)
      for (int64_t ci = 0; ci < c; ++ci) {
        const S v = rng.bernoulli(p) ? S(0) : scale;
        S* m = out.mask.ptr() + (ni * c + ci) * hw;
        for (int64_t i = 0; i < hw; ++i) m[i] = v;
      }
  }
  out.y = x;
  for (int64_t i = 0; i < out.y.size(); ++i) out.y[i] *= out.mask[i];
  return out;
}

template <typename S>
Tensor<S> dropout_backward(const Tensor<S>& dy, const Tensor<S>& mask) {
  if (!dy.same_shape(mask)) throw ShapeError("dropout_backward: shape mismatch");
  Tensor<S> dx = dy;
  for (int64_t i = 0; i < dx.size(); ++i) dx[i] *= mask[i];
  return dx;
}

template <typename S>
Tensor<S> dense_forward(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
  if (x.ndim() != 2 || w.ndim() != 2 || x.shape[1] != w.shape[0])
    throw ShapeError("dense: x " + shape_str(x.shape) + " w " + shape_str(w.shape));
  if (b.size() != w.shape[1]) throw ShapeError("dense: bias length != out units");
  Tensor<S> y = matmul(x, w);
  for (int64_t i = 0; i < y.shape[0]; ++i)
    for (int64_t j = 0; j < y.shape[1]; ++j) y.at2(i, j) += b[j];
  return y;
}

template <typename S>
struct DenseGrads {
  Tensor<S> dx, dw, db;
};

template <typename S>
DenseGrads<S> dense_backward(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& dy) {
  if (dy.shape != std::vector<int64_t>({x.shape[0], w.shape[1]}))
    throw ShapeError("dense_backward: dy shape " + shape_str(dy.shape));
  DenseGrads<S> g;
  g.dx = matmul(dy, transpose(w));
  g.dw = matmul(transpose(x), dy);
  g.db = Tensor<S>({w.shape[1]}, S(0));
  for (int64_t i = 0; i < dy.shape[0]; ++i)
    for (int64_t j = 0; j < dy.shape[1]; ++j) g.db[j] += dy.at2(i, j);
  return g;
}

template <typename S>
struct SoftmaxOut {
  S loss;            // mean over the batch
  Tensor<S> probs;   // [n,K]
};

// Row-wise softmax with max subtraction; loss = mean(-log p[label]).
template <typename S>
SoftmaxOut<S> softmax_cross_entropy(const Tensor<S>& logits, const std::vector<int>& labels) {
  if (logits.ndim() != 2) throw ShapeError("softmax: logits must be [n,K]");
  const int64_t n = logits.shape[0], k = logits.shape[1];
  if (static_cast<int64_t>(labels.size()) != n)
    throw ShapeError("softmax: label count != batch size");
  SoftmaxOut<S> out;
  out.probs = Tensor<S>({n, k});
  double total = 0;
  for (int64_t i = 0; i < n; ++i) {
    const int lab = labels[static_cast<size_t>(i)];
    if (lab < 0 || lab >= k) throw ShapeError("softmax: label out of range");
    const S* row = logits.ptr() + i * k;
    S mx = row[0];
    for (int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double denom = 0;
    for (int64_t j = 0; j < k; ++j) denom += std::exp(static_cast<double>(row[j] - mx));
    S* prow = out.probs.ptr() + i * k;
    for (int64_t j = 0; j < k; ++j)
      prow[j] = static_cast<S>(std::exp(static_cast<double>(row[j] - mx)) / denom);
    total += -(static_cast<double>(row[lab] - mx) - std::log(denom));
  }
  out.loss = static_cast<S>(total / static_cast<double>(n));
  return out;
}

template <typename S>
Tensor<S> softmax_cross_entropy_backward(const Tensor<S>& probs, const std::vector<int>& labels) {
  const int64_t n = probs.shape[0], k = probs.shape[1];
  if (static_cast<int64_t>(labels.size()) != n)
    throw ShapeError("softmax_backward: label count != batch size");
  Tensor<S> d = probs;
  const S inv_n = static_cast<S>(1.0 / static_cast<double>(n));
  for (int64_t i = 0; i < n; ++i) {
    d.at2(i, labels[static_cast<size_t>(i)]) -= S(1);
    for (int64_t j = 0; j < k; ++j) d.at2(i, j) *= inv_n;
  }
  return d;
}

}  // namespace pcnn
