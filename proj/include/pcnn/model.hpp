#pragma once

#include <charconv>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pcnn/layers.hpp"

namespace pcnn {

enum class LayerKind { Conv3x3, MaxPool2x2, Relu, Dropout, Flatten, Dense, SoftmaxClassifier };

struct LayerDesc {
  LayerKind kind;
  int64_t units = 0;        // Conv3x3: out channels; Dense: units; classifier: classes
  double rate = 0.0;        // Dropout only
  DropoutMode mode = DropoutMode::Regular;

  static LayerDesc conv(int64_t oc) {
    if (oc < 1) throw ConfigError("conv: out_channels must be >= 1");
    return {LayerKind::Conv3x3, oc};
  }
  static LayerDesc pool() { return {LayerKind::MaxPool2x2}; }
  static LayerDesc relu() { return {LayerKind::Relu}; }
  static LayerDesc dropout(double p, DropoutMode m) {
    if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: rate must be in [0,1)");
    return {LayerKind::Dropout, 0, p, m};
  }
  static LayerDesc flatten() { return {LayerKind::Flatten}; }
  static LayerDesc dense(int64_t units) {
    if (units < 1) throw ConfigError("dense: units must be >= 1");
    return {LayerKind::Dense, units};
  }
  static LayerDesc classifier(int64_t classes) {
    if (classes < 2) throw ConfigError("classifier: classes must be >= 2");
    return {LayerKind::SoftmaxClassifier, classes};
  }
};

struct ArchitectureSpec {
  std::string name;
  std::vector<int64_t> input_shape;  // [channels, height, width]
  std::vector<LayerDesc> layers;

  void validate() const;
  int64_t classes() const { return layers.back().units; }
};

enum class PoolPlacement { BeforePool, AfterPool };

// Where dropout lives in the network: after the FC layers, at the pooling
// stages, or both. conv_rate 0 means no dropout in the convolutional part.
struct DropoutParadigm {
  double conv_rate = 0.0;
  DropoutMode conv_mode = DropoutMode::Regular;
  PoolPlacement placement = PoolPlacement::AfterPool;
  double fc_rate = 0.0;

  static DropoutParadigm regular_after_fc(double pr) { return {0.0, DropoutMode::Regular, PoolPlacement::AfterPool, pr}; }
  static DropoutParadigm spatial_at_pools(double ps, PoolPlacement pl = PoolPlacement::BeforePool) {
    return {ps, DropoutMode::Spatial, pl, 0.0};
  }
  static DropoutParadigm combined(double ps, double pr, PoolPlacement pl = PoolPlacement::BeforePool) {
    return {ps, DropoutMode::Spatial, pl, pr};
  }
};

struct PresetInfo {
  std::vector<int64_t> input_shape;
  std::vector<int64_t> conv_widths;
  int64_t fc_width;
  int64_t classes;
  DropoutParadigm default_paradigm;
  int64_t default_batch_size;
  double default_baseline_acc;
};

const PresetInfo& preset_info(const std::string& name);

ArchitectureSpec build_preset(const std::string& name,
                              std::optional<DropoutParadigm> paradigm = std::nullopt,
                              std::optional<int64_t> fc_width = std::nullopt,
                              std::optional<std::vector<int64_t>> conv_widths = std::nullopt);

// -------- shape propagation --------

struct LayerShape {
  std::vector<int64_t> in;   // without batch dim
  std::vector<int64_t> out;
};

std::vector<LayerShape> propagate_shapes(const ArchitectureSpec& spec);

int64_t count_parameters(const ArchitectureSpec& spec);

// -------- text serialization --------

std::string spec_to_text(const ArchitectureSpec& spec);
ArchitectureSpec spec_from_text(const std::string& text);

// -------- parameters --------

template <typename S>
struct Parameters {
  // aligned with spec.layers; empty tensors for parameterless layers
  std::vector<Tensor<S>> weights;
  std::vector<Tensor<S>> biases;

  template <typename T>
  Parameters<T> cast() const {
    Parameters<T> out;
    out.weights.resize(weights.size());
    out.biases.resize(biases.size());
    for (size_t i = 0; i < weights.size(); ++i) {
      if (!weights[i].shape.empty()) {
        out.weights[i].shape = weights[i].shape;
        out.weights[i].data.assign(weights[i].data.begin(), weights[i].data.end());
        out.biases[i].shape = biases[i].shape;
        out.biases[i].data.assign(biases[i].data.begin(), biases[i].data.end());
      }
    }
    return out;
  }
};

// He-scaled normal init, std = sqrt(2 / fan_in); biases zero.
template <typename S>
Parameters<S> init_parameters(const ArchitectureSpec& spec, Rng& rng) {
  spec.validate();
  auto shapes = propagate_shapes(spec);
  Parameters<S> p;
  p.weights.resize(spec.layers.size());
  p.biases.resize(spec.layers.size());
  for (size_t li = 0; li < spec.layers.size(); ++li) {
    const LayerDesc& d = spec.layers[li];
    if (d.kind == LayerKind::Conv3x3) {
      const int64_t in_c = shapes[li].in[0];
      const double std_dev = std::sqrt(2.0 / static_cast<double>(9 * in_c));
      p.weights[li] = Tensor<S>({d.units, in_c, 3, 3});
      for (S& v : p.weights[li].data) v = static_cast<S>(rng.normal() * std_dev);
      p.biases[li] = Tensor<S>({d.units}, S(0));
    } else if (d.kind == LayerKind::Dense || d.kind == LayerKind::SoftmaxClassifier) {
      const int64_t fan_in = shapes[li].in[0];
      const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
      p.weights[li] = Tensor<S>({fan_in, d.units});
      for (S& v : p.weights[li].data) v = static_cast<S>(rng.normal() * std_dev);
      p.biases[li] = Tensor<S>({d.units}, S(0));
    }
  }
  return p;
}

// -------- whole-model forward/backward --------

template <typename S>
struct ForwardCache {
  std::vector<Tensor<S>> inputs;             // per layer, input as seen by that layer
  std::vector<std::vector<int64_t>> pool_idx;
  std::vector<Tensor<S>> masks;              // dropout masks
  bool training = false;
};

template <typename S>
Tensor<S> model_forward(const ArchitectureSpec& spec, const Parameters<S>& params,
                        const Tensor<S>& x, bool training, Rng& rng,
                        ForwardCache<S>* cache = nullptr) {
  if (x.ndim() != 4 || x.shape[1] != spec.input_shape[0] || x.shape[2] != spec.input_shape[1] ||
      x.shape[3] != spec.input_shape[2])
    throw ShapeError("model_forward: input " + shape_str(x.shape) + " does not match spec input " +
                     shape_str(spec.input_shape));
  if (cache) {
    cache->inputs.assign(spec.layers.size(), {});
    cache->pool_idx.assign(spec.layers.size(), {});
    cache->masks.assign(spec.layers.size(), {});
    cache->training = training;
  }
  Tensor<S> cur = x;
  for (size_t li = 0; li < spec.layers.size(); ++li) {
    const LayerDesc& d = spec.layers[li];
    switch (d.kind) {
      case LayerKind::Conv3x3: {
        if (cache) cache->inputs[li] = cur;
        cur = conv2d_forward(cur, params.weights[li], params.biases[li]);
        break;
      }
      case LayerKind::MaxPool2x2: {
        auto out = maxpool2x2_forward(cur);
        if (cache) {
          cache->inputs[li].shape = cur.shape;  // only the shape is needed
          cache->pool_idx[li] = std::move(out.idx);
        }
        cur = std::move(out.y);
        break;
      }
      case LayerKind::Relu: {
        if (cache) cache->inputs[li] = cur;
        cur = relu_forward(cur);
        break;
      }
      case LayerKind::Dropout: {
        auto out = dropout_forward(cur, d.rate, d.mode, rng, training);
        if (cache) cache->masks[li] = std::move(out.mask);
        cur = std::move(out.y);
        break;
      }
      case LayerKind::Flatten: {
        if (cache) cache->inputs[li].shape = cur.shape;
        int64_t n = cur.shape[0];
        cur.shape = {n, cur.size() / n};
        break;
      }
      case LayerKind::Dense:
      case LayerKind::SoftmaxClassifier: {
        if (cache) cache->inputs[li] = cur;
        cur = dense_forward(cur, params.weights[li], params.biases[li]);
        break;
      }
    }
  }
  cur.require_finite("model_forward");
  return cur;
}

template <typename S>
struct Gradients {
  std::vector<Tensor<S>> dw;
  std::vector<Tensor<S>> db;
};

template <typename S>
Gradients<S> model_backward(const ArchitectureSpec& spec, const Parameters<S>& params,
                            const ForwardCache<S>& cache, const Tensor<S>& upstream) {
  if (!cache.training || cache.inputs.size() != spec.layers.size())
    throw ConfigError("model_backward: cache missing or not from a training-mode forward");
  Gradients<S> g;
  g.dw.resize(spec.layers.size());
  g.db.resize(spec.layers.size());
  Tensor<S> cur = upstream;
  for (size_t ri = spec.layers.size(); ri-- > 0;) {
    const LayerDesc& d = spec.layers[ri];
    switch (d.kind) {
      case LayerKind::Conv3x3: {
        auto cg = conv2d_backward(cache.inputs[ri], params.weights[ri], cur);
        g.dw[ri] = std::move(cg.dw);
        g.db[ri] = std::move(cg.db);
        cur = std::move(cg.dx);
        break;
      }
      case LayerKind::MaxPool2x2:
        cur = maxpool2x2_backward(cur, cache.pool_idx[ri], cache.inputs[ri].shape);
        break;
      case LayerKind::Relu:
        cur = relu_backward(cur, cache.inputs[ri]);
        break;
      case LayerKind::Dropout:
        cur = dropout_backward(cur, cache.masks[ri]);
        break;
      case LayerKind::Flatten:
        cur.shape = cache.inputs[ri].shape;
        break;
      case LayerKind::Dense:
      case LayerKind::SoftmaxClassifier: {
        auto dg = dense_backward(cache.inputs[ri], params.weights[ri], cur);
        g.dw[ri] = std::move(dg.dw);
        g.db[ri] = std::move(dg.db);
        cur = std::move(dg.dx);
        break;
      }
    }
  }
  return g;
}

}  // namespace pcnn
