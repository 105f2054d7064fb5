#include "pcnn/train.hpp"

#include <charconv>
#include <chrono>
#include <cstring>
#include <fstream>

namespace pcnn {

namespace {
constexpr uint64_t kDropoutStream = 0x44524F50ULL;  // "DROP"
constexpr uint64_t kInitStream = 0x494E4954ULL;     // "INIT"
constexpr uint64_t kAugmentStream = 0x415547ULL;    // "AUG"
}  // namespace

StopDecision early_stop_update(EarlyStopState& state, const EarlyStopConfig& config, int64_t epoch,
                               double val_acc) {
  config.validate();
  if (epoch != state.last_epoch + 1)
    throw ConfigError("early_stop_update: epochs must increment by 1, got " +
                      std::to_string(epoch) + " after " + std::to_string(state.last_epoch));
  state.last_epoch = epoch;
  if (val_acc > state.best_val_acc) {
    state.best_val_acc = val_acc;
    state.best_epoch = epoch;
  }
  state.epochs_since_best = epoch - state.best_epoch;
  if (val_acc >= config.baseline_acc) state.baseline_passed = true;
  const bool stop = epoch >= config.min_epochs && state.baseline_passed &&
                    state.epochs_since_best >= config.patience;
  return stop ? StopDecision::Stop : StopDecision::Continue;
}

void sgd_step(Parameters<float>& params, const Gradients<float>& grads, double lr,
              std::vector<Tensor<float>>* velocity, double momentum) {
  if (grads.dw.size() != params.weights.size())
    throw ShapeError("sgd_step: gradient/parameter layer count mismatch");
  const float flr = static_cast<float>(lr);
  const float mom = static_cast<float>(momentum);
  for (size_t li = 0; li < params.weights.size(); ++li) {
    auto update = [&](Tensor<float>& w, const Tensor<float>& g, Tensor<float>* vel) {
      if (w.shape.empty()) return;
      if (g.shape != w.shape)
        throw ShapeError("sgd_step: gradient shape " + shape_str(g.shape) +
                         " != parameter shape " + shape_str(w.shape) + " at layer " +
                         std::to_string(li));
      g.require_finite("sgd_step gradient");
      if (mom > 0 && vel) {
        if (vel->shape != w.shape) *vel = Tensor<float>(w.shape, 0.f);
        for (int64_t i = 0; i < w.size(); ++i) {
          (*vel)[i] = mom * (*vel)[i] + g[i];
          w[i] -= flr * (*vel)[i];
        }
      } else {
        for (int64_t i = 0; i < w.size(); ++i) w[i] -= flr * g[i];
      }
    };
    Tensor<float>* vw = nullptr;
    Tensor<float>* vb = nullptr;
    if (velocity) {
      if (velocity->size() != 2 * params.weights.size())
        velocity->assign(2 * params.weights.size(), {});
      vw = &(*velocity)[2 * li];
      vb = &(*velocity)[2 * li + 1];
    }
    update(params.weights[li], grads.dw[li], vw);
    update(params.biases[li], grads.db[li], vb);
  }
}

namespace {

// sequential fixed-order batches for evaluation
std::vector<Batch> ordered_batches(const Dataset& ds, int64_t batch_size) {
  std::vector<Batch> out;
  const int64_t n = ds.size();
  const int64_t chw = ds.images.shape[1] * ds.images.shape[2] * ds.images.shape[3];
  for (int64_t start = 0; start < n; start += batch_size) {
    const int64_t b = std::min(batch_size, n - start);
    Batch batch;
    batch.images =
        Tensor<float>({b, ds.images.shape[1], ds.images.shape[2], ds.images.shape[3]});
    std::memcpy(batch.images.ptr(), ds.images.ptr() + start * chw,
                static_cast<size_t>(b * chw) * 4);
    batch.labels.assign(ds.labels.begin() + start, ds.labels.begin() + start + b);
    out.push_back(std::move(batch));
  }
  return out;
}

int64_t count_correct(const Tensor<float>& probs, const std::vector<int>& labels) {
  int64_t correct = 0;
  const int64_t n = probs.shape[0], k = probs.shape[1];
  for (int64_t i = 0; i < n; ++i) {
    const float* row = probs.ptr() + i * k;
    int best = 0;
    for (int64_t j = 1; j < k; ++j)
      if (row[j] > row[best]) best = static_cast<int>(j);
    if (best == labels[static_cast<size_t>(i)]) ++correct;
  }
  return correct;
}

}  // namespace

EvalResult evaluate(const ArchitectureSpec& spec, const Parameters<float>& params,
                    const Dataset& ds, int64_t batch_size) {
  Rng rng(0);  // eval mode consumes no randomness
  double total_loss = 0;
  int64_t correct = 0;
  for (const Batch& b : ordered_batches(ds, batch_size)) {
    Tensor<float> logits = model_forward(spec, params, b.images, /*training=*/false, rng);
    auto sm = softmax_cross_entropy(logits, b.labels);
    total_loss += static_cast<double>(sm.loss) * static_cast<double>(b.images.shape[0]);
    correct += count_correct(sm.probs, b.labels);
  }
  const double n = static_cast<double>(ds.size());
  return {total_loss / n, static_cast<double>(correct) / n};
}

TrainResult train(const TrainConfig& config, const ArchitectureSpec& spec,
                  const Dataset& train_ds, const Dataset& val_ds,
                  const AugmentConfig& augment_config, const EpochCallback& on_epoch) {
  config.validate();
  spec.validate();
  augment_config.validate();
  if (config.batch_size > train_ds.size())
    throw ConfigError("train: batch_size exceeds training set size");

  Rng init_rng = Rng::substream(config.seed, 0, kInitStream);
  Parameters<float> params = init_parameters<float>(spec, init_rng);
  Parameters<float> best_params = params;
  std::vector<Tensor<float>> velocity;

  TrainResult result;
  EarlyStopState es;
  const int64_t chw = train_ds.images.shape[1] * train_ds.images.shape[2] *
                      train_ds.images.shape[3];

  for (int64_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng drop_rng = Rng::substream(config.seed, static_cast<uint64_t>(epoch), kDropoutStream);
    double loss_sum = 0;
    int64_t correct = 0, seen = 0;
    int64_t batch_no = 0;
    bool aborted = false;
    for (Batch& batch : shuffled_batches(train_ds, config.batch_size, config.seed,
                                         static_cast<uint64_t>(epoch))) {
      ++batch_no;
      const int64_t b = batch.images.shape[0];
      // fresh per-sample augmentation, keyed by (seed, epoch, source index)
      for (int64_t i = 0; i < b; ++i) {
        Tensor<float> img({train_ds.images.shape[1], train_ds.images.shape[2],
                           train_ds.images.shape[3]});
        std::memcpy(img.ptr(), batch.images.ptr() + i * chw, static_cast<size_t>(chw) * 4);
        Rng arng = Rng::substream(config.seed ^ kAugmentStream, static_cast<uint64_t>(epoch),
                                  static_cast<uint64_t>(batch.indices[i]));
        Tensor<float> out = random_augment(img, augment_config, arng);
        std::memcpy(batch.images.ptr() + i * chw, out.ptr(), static_cast<size_t>(chw) * 4);
      }

      ForwardCache<float> cache;
      Tensor<float> logits;
      SoftmaxOut<float> sm;
      try {
        logits = model_forward(spec, params, batch.images, /*training=*/true, drop_rng, &cache);
        sm = softmax_cross_entropy(logits, batch.labels);
        if (!std::isfinite(static_cast<double>(sm.loss))) throw NumericError("non-finite loss");
      } catch (const NumericError& e) {
        result.history.abort_reason = "epoch " + std::to_string(epoch) + " batch " +
                                      std::to_string(batch_no) + ": " + e.what();
        aborted = true;
        break;
      }
      loss_sum += static_cast<double>(sm.loss) * static_cast<double>(b);
      correct += count_correct(sm.probs, batch.labels);
      seen += b;

      Tensor<float> dlogits = softmax_cross_entropy_backward(sm.probs, batch.labels);
      Gradients<float> grads = model_backward(spec, params, cache, dlogits);
      sgd_step(params, grads, config.learning_rate, &velocity, config.momentum);
    }
    if (aborted) break;

    EvalResult val = evaluate(spec, params, val_ds, config.batch_size);
    const auto t1 = std::chrono::steady_clock::now();
    EpochRow row{epoch, loss_sum / static_cast<double>(seen),
                 static_cast<double>(correct) / static_cast<double>(seen), val.mean_loss,
                 val.accuracy, std::chrono::duration<double>(t1 - t0).count()};
    result.history.rows.push_back(row);
    if (on_epoch) on_epoch(row);

    const double prev_best = es.best_val_acc;
    StopDecision decision = early_stop_update(es, config.early_stop, epoch, val.accuracy);
    if (val.accuracy > prev_best) best_params = params;
    result.history.stopped_epoch = epoch;
    result.history.best_epoch = es.best_epoch;
    if (decision == StopDecision::Stop) break;
  }

  result.best_params = result.history.rows.empty() ? params : std::move(best_params);
  return result;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

void write_metrics_csv(const History& history, const std::string& path, bool record_wall_time) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << "epoch,train_loss,train_acc,val_loss,val_acc,seconds\n";
  for (const EpochRow& r : history.rows)
    os << r.epoch << "," << fmt(r.train_loss) << "," << fmt(r.train_acc) << ","
       << fmt(r.val_loss) << "," << fmt(r.val_acc) << ","
       << (record_wall_time ? fmt(r.wall_seconds) : "0") << "\n";
  if (!os) throw IoError("write failed for " + path);
}

namespace {

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<char*>(b), 4);
}

uint32_t get_u32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError(path + ": truncated checkpoint");
  return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) | (uint32_t(b[3]) << 24);
}

constexpr uint32_t kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const ArchitectureSpec& spec, const Parameters<float>& params,
                     const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os.write("PCNN", 4);
  put_u32(os, kCheckpointVersion);
  const std::string text = spec_to_text(spec);
  put_u32(os, static_cast<uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (size_t li = 0; li < params.weights.size(); ++li) {
    for (const Tensor<float>* t : {&params.weights[li], &params.biases[li]}) {
      if (t->shape.empty()) continue;
      put_u32(os, static_cast<uint32_t>(t->shape.size()));
      for (int64_t e : t->shape) put_u32(os, static_cast<uint32_t>(e));
      os.write(reinterpret_cast<const char*>(t->ptr()),
               static_cast<std::streamsize>(t->data.size() * 4));
    }
  }
  if (!os) throw IoError("write failed for " + path);
}

std::pair<ArchitectureSpec, Parameters<float>> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "PCNN", 4) != 0)
    throw FormatError(path + ": bad checkpoint magic, expected PCNN");
  const uint32_t version = get_u32(is, path);
  if (version != kCheckpointVersion)
    throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
  const uint32_t text_len = get_u32(is, path);
  std::string text(text_len, '\0');
  if (!is.read(text.data(), text_len)) throw FormatError(path + ": truncated spec text");
  ArchitectureSpec spec = spec_from_text(text);

  // expected tensor shapes come from the spec itself
  auto shapes = propagate_shapes(spec);
  Parameters<float> params;
  params.weights.resize(spec.layers.size());
  params.biases.resize(spec.layers.size());
  for (size_t li = 0; li < spec.layers.size(); ++li) {
    const LayerDesc& d = spec.layers[li];
    std::vector<std::vector<int64_t>> expected;
    if (d.kind == LayerKind::Conv3x3)
      expected = {{d.units, shapes[li].in[0], 3, 3}, {d.units}};
    else if (d.kind == LayerKind::Dense || d.kind == LayerKind::SoftmaxClassifier)
      expected = {{shapes[li].in[0], d.units}, {d.units}};
    else
      continue;
    for (int which = 0; which < 2; ++which) {
      const uint32_t rank = get_u32(is, path);
      if (rank != expected[which].size())
        throw ConsistencyError(path + ": tensor rank mismatch at layer " + std::to_string(li));
      std::vector<int64_t> shp(rank);
      for (uint32_t i = 0; i < rank; ++i) shp[i] = get_u32(is, path);
      if (shp != expected[which])
        throw ConsistencyError(path + ": tensor shape " + shape_str(shp) + " != expected " +
                               shape_str(expected[which]) + " at layer " + std::to_string(li));
      Tensor<float> t(shp);
      if (!is.read(reinterpret_cast<char*>(t.ptr()),
                   static_cast<std::streamsize>(t.data.size() * 4)))
        throw FormatError(path + ": truncated tensor data at layer " + std::to_string(li));
      (which == 0 ? params.weights[li] : params.biases[li]) = std::move(t);
    }
  }
  char extra;
  if (is.read(&extra, 1))
    throw ConsistencyError(path + ": trailing bytes after expected tensors");
  return {std::move(spec), std::move(params)};
}

}  // namespace pcnn
