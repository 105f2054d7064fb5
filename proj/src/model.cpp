#include "pcnn/model.hpp"

#include <array>
#include <map>

namespace pcnn {

void ArchitectureSpec::validate() const {
  if (input_shape.size() != 3) throw ConfigError("spec: input_shape must be [c,h,w]");
  Tensor<float>::check_shape(input_shape);
  if (layers.empty() || layers.back().kind != LayerKind::SoftmaxClassifier)
    throw ConfigError("spec: last layer must be the softmax classifier");
  int classifiers = 0;
  for (const auto& d : layers)
    if (d.kind == LayerKind::SoftmaxClassifier) ++classifiers;
  if (classifiers != 1) throw ConfigError("spec: exactly one softmax classifier allowed");
  propagate_shapes(*this);  // throws on any inconsistency (odd extent before pool etc.)
}

std::vector<LayerShape> propagate_shapes(const ArchitectureSpec& spec) {
  std::vector<LayerShape> out;
  std::vector<int64_t> cur = spec.input_shape;  // [c,h,w] until flatten, then [features]
  for (const auto& d : spec.layers) {
    LayerShape ls;
    ls.in = cur;
    switch (d.kind) {
      case LayerKind::Conv3x3:
        if (cur.size() != 3) throw ConfigError("conv after flatten");
        cur = {d.units, cur[1], cur[2]};
        break;
      case LayerKind::MaxPool2x2:
        if (cur.size() != 3) throw ConfigError("pool after flatten");
        if (cur[1] % 2 || cur[2] % 2)
          throw ConfigError("pool requires even spatial extent, got " + shape_str(cur));
        cur = {cur[0], cur[1] / 2, cur[2] / 2};
        break;
      case LayerKind::Relu:
        break;
      case LayerKind::Dropout:
        if (d.mode == DropoutMode::Spatial && cur.size() != 3)
          throw ConfigError("spatial dropout after flatten");
        break;
      case LayerKind::Flatten: {
        if (cur.size() != 3) throw ConfigError("double flatten");
        cur = {cur[0] * cur[1] * cur[2]};
        break;
      }
      case LayerKind::Dense:
      case LayerKind::SoftmaxClassifier:
        if (cur.size() != 1) throw ConfigError("dense layer requires flattened input");
        cur = {d.units};
        break;
    }
    ls.out = cur;
    out.push_back(std::move(ls));
  }
  return out;
}

int64_t count_parameters(const ArchitectureSpec& spec) {
  auto shapes = propagate_shapes(spec);
  int64_t total = 0;
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& d = spec.layers[i];
    if (d.kind == LayerKind::Conv3x3)
      total += d.units * shapes[i].in[0] * 9 + d.units;
    else if (d.kind == LayerKind::Dense || d.kind == LayerKind::SoftmaxClassifier)
      total += shapes[i].in[0] * d.units + d.units;
  }
  return total;
}

const PresetInfo& preset_info(const std::string& name) {
  static const std::map<std::string, PresetInfo> presets = {
      {"mnist",
       {{1, 28, 28}, {32, 32, 64, 64}, 2048, 10, DropoutParadigm::regular_after_fc(0.8), 256,
        0.995}},
      {"cifar10",
       {{3, 32, 32},
        {32, 32, 64, 64, 128, 128, 256, 256, 256, 256, 256},
        1024,
        10,
        {0.25, DropoutMode::Regular, PoolPlacement::AfterPool, 0.4},
        128,
        0.90}},
      {"cifar100",
       {{3, 32, 32},
        {32, 32, 64, 64, 128, 128, 256, 256, 256, 256, 256},
        1024,
        100,
        {0.25, DropoutMode::Regular, PoolPlacement::AfterPool, 0.4},
        128,
        0.65}},
      {"svhn",
       {{3, 32, 32},
        {32, 32, 64, 64, 128, 128, 256, 256, 256, 256, 256},
        1024,
        10,
        {0.25, DropoutMode::Regular, PoolPlacement::AfterPool, 0.4},
        128,
        0.95}},
      {"stl10",
       {{3, 96, 96},
        {32, 32, 64, 64, 128, 128, 256, 256, 256, 256, 512, 512, 512},
        1024,
        10,
        {0.25, DropoutMode::Regular, PoolPlacement::AfterPool, 0.4},
        8,
        0.80}},
  };
  auto it = presets.find(name);
  if (it == presets.end()) throw ConfigError("unknown preset '" + name + "'");
  return it->second;
}

ArchitectureSpec build_preset(const std::string& name, std::optional<DropoutParadigm> paradigm,
                              std::optional<int64_t> fc_width,
                              std::optional<std::vector<int64_t>> conv_widths) {
  const PresetInfo& info = preset_info(name);
  const DropoutParadigm par = paradigm.value_or(info.default_paradigm);
  const std::vector<int64_t> widths = conv_widths.value_or(info.conv_widths);
  const int64_t fc = fc_width.value_or(info.fc_width);

  ArchitectureSpec spec;
  spec.name = name;
  spec.input_shape = info.input_shape;

  // pool after every two conv layers while halving keeps the extent >= 2
  int64_t extent = info.input_shape[1];
  for (size_t i = 0; i < widths.size(); ++i) {
    spec.layers.push_back(LayerDesc::conv(widths[i]));
    spec.layers.push_back(LayerDesc::relu());
    const bool pool_due = (i % 2 == 1) && extent % 2 == 0 && extent / 2 >= 2;
    if (pool_due) {
      if (par.conv_rate > 0 && par.placement == PoolPlacement::BeforePool)
        spec.layers.push_back(LayerDesc::dropout(par.conv_rate, par.conv_mode));
      spec.layers.push_back(LayerDesc::pool());
      extent /= 2;
      if (par.conv_rate > 0 && par.placement == PoolPlacement::AfterPool)
        spec.layers.push_back(LayerDesc::dropout(par.conv_rate, par.conv_mode));
    }
  }
  spec.layers.push_back(LayerDesc::flatten());
  for (int fi = 0; fi < 2; ++fi) {
    spec.layers.push_back(LayerDesc::dense(fc));
    spec.layers.push_back(LayerDesc::relu());
    if (par.fc_rate > 0)
      spec.layers.push_back(LayerDesc::dropout(par.fc_rate, DropoutMode::Regular));
  }
  spec.layers.push_back(LayerDesc::classifier(info.classes));
  spec.validate();
  return spec;
}

// -------- text serialization --------

static std::string fmt_double(double v) {
  std::array<char, 32> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

std::string spec_to_text(const ArchitectureSpec& spec) {
  std::ostringstream os;
  os << "name " << spec.name << "\n";
  os << "input " << spec.input_shape[0] << " " << spec.input_shape[1] << " " << spec.input_shape[2]
     << "\n";
  for (const auto& d : spec.layers) {
    switch (d.kind) {
      case LayerKind::Conv3x3: os << "conv " << d.units << "\n"; break;
      case LayerKind::MaxPool2x2: os << "pool\n"; break;
      case LayerKind::Relu: os << "relu\n"; break;
      case LayerKind::Dropout:
        os << "dropout " << (d.mode == DropoutMode::Regular ? "regular" : "spatial") << " "
           << fmt_double(d.rate) << "\n";
        break;
      case LayerKind::Flatten: os << "flatten\n"; break;
      case LayerKind::Dense: os << "dense " << d.units << "\n"; break;
      case LayerKind::SoftmaxClassifier: os << "classifier " << d.units << "\n"; break;
    }
  }
  return os.str();
}

ArchitectureSpec spec_from_text(const std::string& text) {
  ArchitectureSpec spec;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "name") {
      ls >> spec.name;
    } else if (word == "input") {
      spec.input_shape.resize(3);
      ls >> spec.input_shape[0] >> spec.input_shape[1] >> spec.input_shape[2];
    } else if (word == "conv") {
      int64_t oc;
      if (!(ls >> oc)) throw FormatError("spec text: conv needs a channel count");
      spec.layers.push_back(LayerDesc::conv(oc));
    } else if (word == "pool") {
      spec.layers.push_back(LayerDesc::pool());
    } else if (word == "relu") {
      spec.layers.push_back(LayerDesc::relu());
    } else if (word == "dropout") {
      std::string mode;
      double rate;
      if (!(ls >> mode >> rate)) throw FormatError("spec text: dropout needs mode and rate");
      if (mode != "regular" && mode != "spatial")
        throw FormatError("spec text: unknown dropout mode '" + mode + "'");
      spec.layers.push_back(
          LayerDesc::dropout(rate, mode == "regular" ? DropoutMode::Regular : DropoutMode::Spatial));
    } else if (word == "flatten") {
      spec.layers.push_back(LayerDesc::flatten());
    } else if (word == "dense") {
      int64_t u;
      if (!(ls >> u)) throw FormatError("spec text: dense needs a unit count");
      spec.layers.push_back(LayerDesc::dense(u));
    } else if (word == "classifier") {
      int64_t k;
      if (!(ls >> k)) throw FormatError("spec text: classifier needs a class count");
      spec.layers.push_back(LayerDesc::classifier(k));
    } else {
      throw FormatError("spec text: unknown layer '" + word + "'");
    }
  }
  spec.validate();
  return spec;
}

}  // namespace pcnn
