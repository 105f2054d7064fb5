#pragma once

#include <string>
#include <utility>
#include <vector>

#include "pcnn/tensor.hpp"

namespace pcnn {

struct Dataset {
  Tensor<float> images;       // [n, c, h, w], values in [0,1] after load
  std::vector<int> labels;    // length n, values in [0, classes)
  int classes = 0;
  std::string name;

  int64_t size() const { return images.shape[0]; }

  // [c,h,w] slice of one sample
  Tensor<float> image(int64_t i) const;
};

struct Batch {
  Tensor<float> images;         // [b, c, h, w]
  std::vector<int> labels;      // length b
  std::vector<int64_t> indices; // source positions in the dataset (augment substream keys)
};

// MNIST IDX pair: big-endian magic 0x803 (images) / 0x801 (labels), big-endian
// dims, u8 payload. Pixels are divided by 255 on load.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Official CIFAR binary records: cifar10 = 1 label byte + 3072 pixel bytes
// (R,G,B planes); cifar100 = coarse + fine label bytes, fine label kept.
std::pair<Dataset, Dataset> load_cifar(const std::string& dir, const std::string& variant);

// Official STL-10 binaries: u8 pixels, column-major within each 96x96 plane,
// 1-indexed labels in a separate file (remapped to 0-indexed).
std::pair<Dataset, Dataset> load_stl10(const std::string& dir);

// Text manifest (n/c/h/w/classes + blob paths) over raw u8 row-major blobs.
// Entry point for externally converted sets such as SVHN.
Dataset load_raw(const std::string& manifest_path);

std::pair<Dataset, Dataset> split_train_val(const Dataset& ds, double val_fraction, uint64_t seed);

// Fresh deterministic permutation per (seed, epoch); consecutive permuted
// slices, final partial batch retained.
std::vector<Batch> shuffled_batches(const Dataset& ds, int64_t batch_size, uint64_t seed,
                                    uint64_t epoch);

}  // namespace pcnn
