#include "pcnn/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace pcnn {

namespace {

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  if (!is) throw IoError("cannot open " + path);
  const std::streamsize n = is.tellg();
  is.seekg(0);
  std::vector<uint8_t> buf(static_cast<size_t>(n));
  if (n && !is.read(reinterpret_cast<char*>(buf.data()), n))
    throw IoError("short read on " + path);
  return buf;
}

uint32_t be32(const std::vector<uint8_t>& b, size_t off, const std::string& path) {
  if (off + 4 > b.size())
    throw IoError("truncated file " + path + " at byte offset " + std::to_string(off));
  return (uint32_t(b[off]) << 24) | (uint32_t(b[off + 1]) << 16) | (uint32_t(b[off + 2]) << 8) |
         uint32_t(b[off + 3]);
}

void rescale_u8(Tensor<float>& t, const uint8_t* src) {
  for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(src[i]) / 255.0f;
}

void check_labels(Dataset& ds) {
  for (int lab : ds.labels)
    if (lab < 0 || lab >= ds.classes)
      throw ConsistencyError(ds.name + ": label " + std::to_string(lab) + " out of range");
}

}  // namespace

Tensor<float> Dataset::image(int64_t i) const {
  const int64_t c = images.shape[1], h = images.shape[2], w = images.shape[3];
  Tensor<float> out({c, h, w});
  std::memcpy(out.ptr(), images.ptr() + i * c * h * w, static_cast<size_t>(c * h * w) * 4);
  return out;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  auto ibuf = read_file(images_path);
  const uint32_t imagic = be32(ibuf, 0, images_path);
  if (imagic != 0x00000803)
    throw FormatError(images_path + ": bad magic " + std::to_string(imagic) +
                      ", expected 2051 (0x00000803)");
  const uint32_t n = be32(ibuf, 4, images_path);
  const uint32_t h = be32(ibuf, 8, images_path);
  const uint32_t w = be32(ibuf, 12, images_path);
  const size_t need = 16 + static_cast<size_t>(n) * h * w;
  if (ibuf.size() < need)
    throw IoError(images_path + ": truncated, have " + std::to_string(ibuf.size()) +
                  " bytes, need " + std::to_string(need));

  auto lbuf = read_file(labels_path);
  const uint32_t lmagic = be32(lbuf, 0, labels_path);
  if (lmagic != 0x00000801)
    throw FormatError(labels_path + ": bad magic " + std::to_string(lmagic) +
                      ", expected 2049 (0x00000801)");
  const uint32_t ln = be32(lbuf, 4, labels_path);
  if (ln != n)
    throw ConsistencyError("IDX count mismatch: " + std::to_string(n) + " images vs " +
                           std::to_string(ln) + " labels");
  if (lbuf.size() < 8 + ln)
    throw IoError(labels_path + ": truncated at byte offset " + std::to_string(lbuf.size()));

  Dataset ds;
  ds.name = "idx:" + images_path;
  ds.classes = 10;
  ds.images = Tensor<float>({int64_t(n), 1, int64_t(h), int64_t(w)});
  rescale_u8(ds.images, ibuf.data() + 16);
  ds.labels.assign(lbuf.begin() + 8, lbuf.begin() + 8 + ln);
  check_labels(ds);
  return ds;
}

namespace {

Dataset load_cifar_files(const std::vector<std::string>& paths, bool fine_labels, int classes,
                         const std::string& name) {
  const size_t pixels = 3072;
  const size_t rec = (fine_labels ? 2 : 1) + pixels;
  size_t total = 0;
  for (const auto& p : paths) {
    std::error_code ec;
    auto sz = std::filesystem::file_size(p, ec);
    if (ec) throw IoError("cannot stat " + p);
    if (sz % rec != 0)
      throw FormatError(p + ": size " + std::to_string(sz) + " is not a multiple of record size " +
                        std::to_string(rec));
    total += sz / rec;
  }
  Dataset ds;
  ds.name = name;
  ds.classes = classes;
  ds.images = Tensor<float>({int64_t(total), 3, 32, 32});
  ds.labels.resize(total);
  size_t idx = 0;
  for (const auto& p : paths) {
    auto buf = read_file(p);
    for (size_t off = 0; off < buf.size(); off += rec, ++idx) {
      ds.labels[idx] = buf[off + (fine_labels ? 1 : 0)];
      float* dst = ds.images.ptr() + idx * pixels;
      const uint8_t* src = buf.data() + off + (fine_labels ? 2 : 1);
      for (size_t i = 0; i < pixels; ++i) dst[i] = static_cast<float>(src[i]) / 255.0f;
    }
  }
  check_labels(ds);
  return ds;
}

}  // namespace

std::pair<Dataset, Dataset> load_cifar(const std::string& dir, const std::string& variant) {
  namespace fs = std::filesystem;
  if (variant == "cifar10") {
    std::vector<std::string> train;
    for (int i = 1; i <= 5; ++i)
      train.push_back((fs::path(dir) / ("data_batch_" + std::to_string(i) + ".bin")).string());
    auto tr = load_cifar_files(train, false, 10, "cifar10/train");
    auto te = load_cifar_files({(fs::path(dir) / "test_batch.bin").string()}, false, 10,
                               "cifar10/test");
    return {std::move(tr), std::move(te)};
  }
  if (variant == "cifar100") {
    auto tr = load_cifar_files({(fs::path(dir) / "train.bin").string()}, true, 100,
                               "cifar100/train");
    auto te =
        load_cifar_files({(fs::path(dir) / "test.bin").string()}, true, 100, "cifar100/test");
    return {std::move(tr), std::move(te)};
  }
  throw ConfigError("load_cifar: unknown variant '" + variant + "'");
}

namespace {

Dataset load_stl_split(const std::string& xpath, const std::string& ypath, const std::string& name) {
  auto xbuf = read_file(xpath);
  auto ybuf = read_file(ypath);
  const size_t img = 3 * 96 * 96;
  if (xbuf.size() % img != 0)
    throw FormatError(xpath + ": size " + std::to_string(xbuf.size()) +
                      " is not a multiple of image size " + std::to_string(img));
  const size_t n = xbuf.size() / img;
  if (ybuf.size() != n)
    throw ConsistencyError("STL-10 count mismatch: " + std::to_string(n) + " images vs " +
                           std::to_string(ybuf.size()) + " labels");
  Dataset ds;
  ds.name = name;
  ds.classes = 10;
  ds.images = Tensor<float>({int64_t(n), 3, 96, 96});
  ds.labels.resize(n);
  for (size_t s = 0; s < n; ++s) {
    const int lab = int(ybuf[s]) - 1;  // labels are 1-indexed on disk
    if (lab < 0 || lab > 9)
      throw FormatError(ypath + ": label byte " + std::to_string(int(ybuf[s])) + " out of 1..10");
    ds.labels[s] = lab;
    // planes are column-major on disk
    const uint8_t* src = xbuf.data() + s * img;
    float* dst = ds.images.ptr() + s * img;
    for (int c = 0; c < 3; ++c)
      for (int col = 0; col < 96; ++col)
        for (int row = 0; row < 96; ++row)
          dst[(c * 96 + row) * 96 + col] =
              static_cast<float>(src[c * 96 * 96 + col * 96 + row]) / 255.0f;
  }
  return ds;
}

}  // namespace

std::pair<Dataset, Dataset> load_stl10(const std::string& dir) {
  namespace fs = std::filesystem;
  auto tr = load_stl_split((fs::path(dir) / "train_X.bin").string(),
                           (fs::path(dir) / "train_y.bin").string(), "stl10/train");
  auto te = load_stl_split((fs::path(dir) / "test_X.bin").string(),
                           (fs::path(dir) / "test_y.bin").string(), "stl10/test");
  return {std::move(tr), std::move(te)};
}

Dataset load_raw(const std::string& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is) throw IoError("cannot open " + manifest_path);
  int64_t n = -1, c = -1, h = -1, w = -1;
  int classes = -1;
  std::string images_path, labels_path;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "n") ls >> n;
    else if (key == "c") ls >> c;
    else if (key == "h") ls >> h;
    else if (key == "w") ls >> w;
    else if (key == "classes") ls >> classes;
    else if (key == "images") ls >> images_path;
    else if (key == "labels") ls >> labels_path;
    else throw FormatError(manifest_path + ": unknown manifest key '" + key + "'");
  }
  if (n < 1 || c < 1 || h < 1 || w < 1 || classes < 2 || images_path.empty() ||
      labels_path.empty())
    throw FormatError(manifest_path + ": manifest must set n, c, h, w, classes, images, labels");
  auto base = std::filesystem::path(manifest_path).parent_path();
  auto resolve = [&](const std::string& p) {
    return std::filesystem::path(p).is_absolute() ? p : (base / p).string();
  };
  auto xbuf = read_file(resolve(images_path));
  auto ybuf = read_file(resolve(labels_path));
  const size_t need = static_cast<size_t>(n) * c * h * w;
  if (xbuf.size() != need)
    throw ConsistencyError(images_path + ": blob has " + std::to_string(xbuf.size()) +
                           " bytes, manifest implies " + std::to_string(need));
  if (ybuf.size() != static_cast<size_t>(n))
    throw ConsistencyError(labels_path + ": blob has " + std::to_string(ybuf.size()) +
                           " bytes, manifest implies " + std::to_string(n));
  Dataset ds;
  ds.name = "raw:" + manifest_path;
  ds.classes = classes;
  ds.images = Tensor<float>({n, c, h, w});
  rescale_u8(ds.images, xbuf.data());
  ds.labels.assign(ybuf.begin(), ybuf.end());
  check_labels(ds);
  return ds;
}

std::pair<Dataset, Dataset> split_train_val(const Dataset& ds, double val_fraction, uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw ConfigError("split_train_val: fraction must be in (0,1)");
  const int64_t n = ds.size();
  std::vector<int64_t> perm(static_cast<size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng = Rng::substream(seed, 0, 0x53504C4954ULL);  // "SPLIT" stream tag
  for (int64_t i = n - 1; i > 0; --i)
    std::swap(perm[static_cast<size_t>(i)], perm[rng.below(static_cast<uint64_t>(i + 1))]);
  const int64_t nval = static_cast<int64_t>(
      std::ceil(static_cast<double>(n) * val_fraction));
  auto take = [&](int64_t lo, int64_t hi, const std::string& suffix) {
    Dataset out;
    out.name = ds.name + suffix;
    out.classes = ds.classes;
    const int64_t chw = ds.images.shape[1] * ds.images.shape[2] * ds.images.shape[3];
    out.images = Tensor<float>({hi - lo, ds.images.shape[1], ds.images.shape[2],
                                ds.images.shape[3]});
    out.labels.resize(static_cast<size_t>(hi - lo));
    for (int64_t i = lo; i < hi; ++i) {
      const int64_t src = perm[static_cast<size_t>(i)];
      std::memcpy(out.images.ptr() + (i - lo) * chw, ds.images.ptr() + src * chw,
                  static_cast<size_t>(chw) * 4);
      out.labels[static_cast<size_t>(i - lo)] = ds.labels[static_cast<size_t>(src)];
    }
    return out;
  };
  return {take(0, n - nval, "/train"), take(n - nval, n, "/val")};
}

std::vector<Batch> shuffled_batches(const Dataset& ds, int64_t batch_size, uint64_t seed,
                                    uint64_t epoch) {
  if (batch_size < 1) throw ConfigError("shuffled_batches: batch_size must be >= 1");
  const int64_t n = ds.size();
  std::vector<int64_t> perm(static_cast<size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng = Rng::substream(seed, epoch, 0x5348554646ULL);  // "SHUFF" stream tag
  for (int64_t i = n - 1; i > 0; --i)
    std::swap(perm[static_cast<size_t>(i)], perm[rng.below(static_cast<uint64_t>(i + 1))]);
  const int64_t chw = ds.images.shape[1] * ds.images.shape[2] * ds.images.shape[3];
  std::vector<Batch> out;
  for (int64_t start = 0; start < n; start += batch_size) {
    const int64_t b = std::min(batch_size, n - start);
    Batch batch;
    batch.images = Tensor<float>({b, ds.images.shape[1], ds.images.shape[2], ds.images.shape[3]});
    batch.labels.resize(static_cast<size_t>(b));
    batch.indices.resize(static_cast<size_t>(b));
    for (int64_t i = 0; i < b; ++i) {
      const int64_t src = perm[static_cast<size_t>(start + i)];
      std::memcpy(batch.images.ptr() + i * chw, ds.images.ptr() + src * chw,
                  static_cast<size_t>(chw) * 4);
      batch.labels[static_cast<size_t>(i)] = ds.labels[static_cast<size_t>(src)];
      batch.indices[static_cast<size_t>(i)] = src;
    }
    out.push_back(std::move(batch));
  }
  return out;
}

}  // namespace pcnn
