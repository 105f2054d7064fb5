#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pcnn/train.hpp"

using namespace pcnn;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir() {
  auto dir = fs::temp_directory_path() / "pcnn_train_fixtures";
  fs::create_directories(dir);
  return dir;
}

Parameters<float> one_tensor_params(const Tensor<float>& w) {
  Parameters<float> p;
  p.weights = {w};
  p.biases = {Tensor<float>({w.shape[0]}, 0.f)};
  return p;
}

Gradients<float> one_tensor_grads(const Tensor<float>& g) {
  Gradients<float> out;
  out.dw = {g};
  out.db = {Tensor<float>({g.shape[0]}, 0.f)};
  return out;
}

}  // namespace

TEST_CASE("sgd step: zero lr is a no-op, one step subtracts lr*g") {
  Tensor<float> w({2, 2});
  w.data = {1.f, 2.f, 3.f, 4.f};
  Tensor<float> g({2, 2});
  g.data = {0.5f, -0.5f, 1.f, 0.f};

  auto p = one_tensor_params(w);
  sgd_step(p, one_tensor_grads(g), 0.0);
  CHECK(p.weights[0].data == w.data);

  sgd_step(p, one_tensor_grads(g), 0.1);
  CHECK(p.weights[0][0] == doctest::Approx(0.95).epsilon(1e-6));
  CHECK(p.weights[0][1] == doctest::Approx(2.05).epsilon(1e-6));
  CHECK(p.weights[0][3] == 4.0f);

  Tensor<float> bad = g;
  bad[2] = std::nanf("");
  CHECK_THROWS_AS(sgd_step(p, one_tensor_grads(bad), 0.1), NumericError);

  Tensor<float> wrong({2, 3}, 0.f);
  CHECK_THROWS_AS(sgd_step(p, one_tensor_grads(wrong), 0.1), ShapeError);
}

TEST_CASE("sgd descends a quadratic") {
  Tensor<float> w({1, 4});
  w.data = {2.f, -3.f, 1.f, 4.f};
  auto p = one_tensor_params(w);
  // f(w) = 0.5 ||w||^2, grad = w; each step multiplies w by (1 - lr)
  for (int step = 0; step < 100; ++step) {
    Tensor<float> g = p.weights[0];
    sgd_step(p, one_tensor_grads(g), 0.1);
  }
  for (float v : p.weights[0].data) CHECK(std::abs(v) < 1e-3f);
}

TEST_CASE("momentum accumulates velocity") {
  Tensor<float> w({1, 1}, 0.f);
  Tensor<float> g({1, 1}, 1.f);
  auto p = one_tensor_params(w);
  std::vector<Tensor<float>> vel;
  sgd_step(p, one_tensor_grads(g), 1.0, &vel, 0.5);
  CHECK(p.weights[0][0] == -1.0f);  // v = 1
  sgd_step(p, one_tensor_grads(g), 1.0, &vel, 0.5);
  CHECK(p.weights[0][0] == -2.5f);  // v = 1.5
}

namespace {

// two linearly separable classes on a 1x1x2 grid; the classifier weights can
// read the answer straight off the pixels
ArchitectureSpec readout_spec() {
  ArchitectureSpec spec;
  spec.name = "readout";
  spec.input_shape = {1, 1, 2};
  spec.layers = {LayerDesc::flatten(), LayerDesc::classifier(2)};
  spec.validate();
  return spec;
}

Parameters<float> readout_params() {
  Parameters<float> p;
  p.weights.resize(2);
  p.biases.resize(2);
  p.weights[1] = Tensor<float>({2, 2}, 0.f);
  p.weights[1].at2(0, 0) = 1.f;
  p.weights[1].at2(1, 1) = 1.f;
  p.biases[1] = Tensor<float>({2}, 0.f);
  return p;
}

Dataset readout_dataset(int64_t n) {
  Dataset ds;
  ds.name = "readout";
  ds.classes = 2;
  ds.images = Tensor<float>({n, 1, 1, 2});
  ds.labels.resize(size_t(n));
  for (int64_t i = 0; i < n; ++i) {
    const int lab = int(i % 2);
    ds.labels[size_t(i)] = lab;
    ds.images[i * 2 + lab] = 1.f;
  }
  return ds;
}

}  // namespace

TEST_CASE("evaluate: perfect predictor, batching invariance, tie rule") {
  auto spec = readout_spec();
  auto params = readout_params();
  auto ds = readout_dataset(10);
  auto r = evaluate(spec, params, ds, 4);
  CHECK(r.accuracy == 1.0);
  for (int64_t bs : {1, 3, 10}) {
    auto rb = evaluate(spec, params, ds, bs);
    CHECK(rb.accuracy == 1.0);
    CHECK(rb.mean_loss == doctest::Approx(r.mean_loss).epsilon(1e-6));
  }

  // equal logits tie toward the lowest class index
  Dataset tied;
  tied.name = "tied";
  tied.classes = 2;
  tied.images = Tensor<float>({2, 1, 1, 2}, 0.5f);
  tied.labels = {0, 1};
  auto rt = evaluate(spec, params, tied, 2);
  CHECK(rt.accuracy == 0.5);
}

TEST_CASE("early stopping: improvement keeps training alive") {
  EarlyStopConfig cfg;
  cfg.baseline_acc = 0.5;
  cfg.patience = 3;
  EarlyStopState st;
  for (int64_t e = 1; e <= 50; ++e)
    CHECK(early_stop_update(st, cfg, e, 0.5 + 0.009 * double(e)) == StopDecision::Continue);
  CHECK(st.best_epoch == 50);
  CHECK(st.baseline_passed);
}

TEST_CASE("early stopping: never fires before the baseline is reached") {
  EarlyStopConfig cfg;
  cfg.baseline_acc = 0.9;
  cfg.patience = 2;
  EarlyStopState st;
  // plateaus far below baseline for many epochs: patience alone must not stop
  for (int64_t e = 1; e <= 40; ++e)
    CHECK(early_stop_update(st, cfg, e, 0.5) == StopDecision::Continue);
  CHECK_FALSE(st.baseline_passed);
}

TEST_CASE("early stopping: baseline then plateau stops after patience") {
  EarlyStopConfig cfg;
  cfg.baseline_acc = 0.9;
  cfg.patience = 3;
  cfg.min_epochs = 0;
  EarlyStopState st;
  CHECK(early_stop_update(st, cfg, 1, 0.95) == StopDecision::Continue);  // best, baseline latched
  CHECK(early_stop_update(st, cfg, 2, 0.94) == StopDecision::Continue);
  CHECK(early_stop_update(st, cfg, 3, 0.93) == StopDecision::Continue);
  CHECK(early_stop_update(st, cfg, 4, 0.92) == StopDecision::Stop);
  CHECK(st.best_epoch == 1);

  // the latch survives later sub-baseline epochs
  EarlyStopState st2;
  CHECK(early_stop_update(st2, cfg, 1, 0.95) == StopDecision::Continue);
  CHECK(early_stop_update(st2, cfg, 2, 0.10) == StopDecision::Continue);
  CHECK(st2.baseline_passed);

  // min_epochs delays the decision
  EarlyStopConfig late = cfg;
  late.min_epochs = 6;
  EarlyStopState st3;
  CHECK(early_stop_update(st3, late, 1, 0.95) == StopDecision::Continue);
  CHECK(early_stop_update(st3, late, 2, 0.94) == StopDecision::Continue);
  CHECK(early_stop_update(st3, late, 3, 0.94) == StopDecision::Continue);
  CHECK(early_stop_update(st3, late, 4, 0.94) == StopDecision::Continue);
  CHECK(early_stop_update(st3, late, 5, 0.94) == StopDecision::Continue);
  CHECK(early_stop_update(st3, late, 6, 0.94) == StopDecision::Stop);

  // epoch numbers must increase one at a time
  CHECK_THROWS_AS(early_stop_update(st3, late, 8, 0.94), ConfigError);
}

TEST_CASE("checkpoint round-trips bitwise") {
  ArchitectureSpec spec;
  spec.name = "toy";
  spec.input_shape = {1, 4, 4};
  spec.layers = {LayerDesc::conv(3), LayerDesc::relu(),   LayerDesc::pool(),
                 LayerDesc::flatten(), LayerDesc::dense(5), LayerDesc::relu(),
                 LayerDesc::classifier(2)};
  spec.validate();
  Rng rng(77);
  auto params = init_parameters<float>(spec, rng);
  const auto path = (tmp_dir() / "toy.ckpt").string();
  save_checkpoint(spec, params, path);

  auto [spec2, params2] = load_checkpoint(path);
  CHECK(spec_to_text(spec2) == spec_to_text(spec));
  for (size_t li = 0; li < params.weights.size(); ++li) {
    CHECK(params2.weights[li].shape == params.weights[li].shape);
    CHECK(params2.weights[li].data == params.weights[li].data);
    CHECK(params2.biases[li].data == params.biases[li].data);
  }

  // saving again produces identical bytes
  const auto path2 = (tmp_dir() / "toy2.ckpt").string();
  save_checkpoint(spec, params, path2);
  std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
  std::stringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  CHECK(sa.str() == sb.str());
}

TEST_CASE("checkpoint rejects bad magic and trailing bytes") {
  const auto good = (tmp_dir() / "good.ckpt").string();
  ArchitectureSpec spec;
  spec.name = "t";
  spec.input_shape = {1, 2, 2};
  spec.layers = {LayerDesc::flatten(), LayerDesc::classifier(2)};
  spec.validate();
  Rng rng(5);
  auto params = init_parameters<float>(spec, rng);
  save_checkpoint(spec, params, good);

  std::ifstream is(good, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  std::string bytes = ss.str();

  std::string bad = bytes;
  bad.replace(0, 4, "XXXX");
  const auto bad_path = (tmp_dir() / "bad.ckpt").string();
  std::ofstream(bad_path, std::ios::binary) << bad;
  CHECK_THROWS_AS(load_checkpoint(bad_path), FormatError);

  const auto trailing_path = (tmp_dir() / "trailing.ckpt").string();
  std::ofstream(trailing_path, std::ios::binary) << bytes << '\0';
  CHECK_THROWS_AS(load_checkpoint(trailing_path), ConsistencyError);

  const auto short_path = (tmp_dir() / "short.ckpt").string();
  std::ofstream(short_path, std::ios::binary) << bytes.substr(0, bytes.size() - 8);
  CHECK_THROWS_AS(load_checkpoint(short_path), FormatError);
}

TEST_CASE("metrics csv layout and the timing column") {
  History h;
  h.rows = {{1, 0.5, 0.6, 0.4, 0.7, 1.25}, {2, 0.25, 0.8, 0.3, 0.75, 1.5},
            {3, 0.125, 0.9, 0.2, 0.8, 1.75}};
  const auto path = (tmp_dir() / "metrics.csv").string();
  write_metrics_csv(h, path);
  std::ifstream is(path);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(is, line)) lines.push_back(line);
  REQUIRE(lines.size() == 4);
  CHECK(lines[0] == "epoch,train_loss,train_acc,val_loss,val_acc,seconds");
  CHECK(lines[1] == "1,0.5,0.6,0.4,0.7,0");
  CHECK(lines[3] == "3,0.125,0.9,0.2,0.8,0");

  write_metrics_csv(h, path, /*record_wall_time=*/true);
  std::ifstream is2(path);
  std::getline(is2, line);
  std::getline(is2, line);
  CHECK(line == "1,0.5,0.6,0.4,0.7,1.25");
}

namespace {

// small but non-trivial: 16 samples of two bar patterns with pixel noise
Dataset bars_dataset(int64_t n, uint64_t seed) {
  Dataset ds;
  ds.name = "bars";
  ds.classes = 2;
  ds.images = Tensor<float>({n, 1, 4, 4});
  ds.labels.resize(size_t(n));
  Rng rng(seed);
  for (int64_t i = 0; i < n; ++i) {
    const int lab = int(i % 2);
    ds.labels[size_t(i)] = lab;
    for (int64_t p = 0; p < 16; ++p)
      ds.images[i * 16 + p] = static_cast<float>(0.1 * rng.uniform());
    for (int64_t j = 0; j < 4; ++j) {
      // class 0: horizontal bar, class 1: vertical bar
      if (lab == 0)
        ds.images[i * 16 + 1 * 4 + j] = 1.f;
      else
        ds.images[i * 16 + j * 4 + 1] = 1.f;
    }
  }
  return ds;
}

ArchitectureSpec bars_spec() {
  ArchitectureSpec spec;
  spec.name = "bars";
  spec.input_shape = {1, 4, 4};
  spec.layers = {LayerDesc::conv(4),  LayerDesc::relu(), LayerDesc::pool(),
                 LayerDesc::flatten(), LayerDesc::dense(8), LayerDesc::relu(),
                 LayerDesc::classifier(2)};
  spec.validate();
  return spec;
}

AugmentConfig no_augment() {
  AugmentConfig cfg;
  cfg.enable_rotation = cfg.enable_shear = cfg.enable_shift = cfg.enable_zoom = false;
  return cfg;
}

}  // namespace

TEST_CASE("train: byte-identical across runs, learns the bars, honors max_epochs=0") {
  auto train_ds = bars_dataset(16, 1);
  auto val_ds = bars_dataset(8, 2);

  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.batch_size = 8;
  cfg.max_epochs = 40;
  cfg.seed = 3;
  cfg.early_stop.baseline_acc = 1.0;
  cfg.early_stop.patience = 10;

  auto r1 = train(cfg, bars_spec(), train_ds, val_ds, no_augment());
  auto r2 = train(cfg, bars_spec(), train_ds, val_ds, no_augment());

  REQUIRE(!r1.history.rows.empty());
  CHECK(r1.history.rows.size() == r2.history.rows.size());
  for (size_t i = 0; i < r1.history.rows.size(); ++i) {
    CHECK(r1.history.rows[i].train_loss == r2.history.rows[i].train_loss);
    CHECK(r1.history.rows[i].val_acc == r2.history.rows[i].val_acc);
  }
  for (size_t li = 0; li < r1.best_params.weights.size(); ++li)
    CHECK(r1.best_params.weights[li].data == r2.best_params.weights[li].data);

  // the problem is separable; training should solve it well before 40 epochs
  CHECK(r1.history.rows.back().train_acc == 1.0);
  CHECK(r1.history.best_epoch >= 1);

  TrainConfig none = cfg;
  none.max_epochs = 0;
  auto r0 = train(none, bars_spec(), train_ds, val_ds, no_augment());
  CHECK(r0.history.rows.empty());
  CHECK(r0.history.stopped_epoch == 0);
  // best_params falls back to the deterministic init
  Rng init_rng = Rng::substream(cfg.seed, 0, 0x494E4954ULL);
  auto fresh = init_parameters<float>(bars_spec(), init_rng);
  for (size_t li = 0; li < fresh.weights.size(); ++li)
    CHECK(r0.best_params.weights[li].data == fresh.weights[li].data);

  TrainConfig big = cfg;
  big.batch_size = 64;
  CHECK_THROWS_AS(train(big, bars_spec(), train_ds, val_ds, no_augment()), ConfigError);
}

TEST_CASE("train: early stopping fires on a plateaued separable problem") {
  auto train_ds = bars_dataset(16, 1);
  auto val_ds = bars_dataset(8, 2);
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.batch_size = 8;
  cfg.max_epochs = 200;
  cfg.seed = 3;
  cfg.early_stop.baseline_acc = 0.9;
  cfg.early_stop.patience = 5;
  auto r = train(cfg, bars_spec(), train_ds, val_ds, no_augment());
  REQUIRE(!r.history.rows.empty());
  CHECK(r.history.stopped_epoch < 200);
  CHECK(r.history.stopped_epoch - r.history.best_epoch >= 5);
  CHECK(r.history.rows[size_t(r.history.best_epoch - 1)].val_acc >= 0.9);
}
