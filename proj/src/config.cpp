#include "pcnn/config.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace pcnn {

using nlohmann::json;

namespace {

// defaults document; doubles as the schema for unknown-key rejection
json default_config_json(const std::string& preset_name) {
  const PresetInfo& info = preset_info(preset_name);
  const AugmentConfig aug = AugmentConfig::for_preset(preset_name);
  return json{
      {"dataset",
       {{"name", preset_name},
        {"dir", ""},
        {"images", ""},
        {"labels", ""},
        {"test_images", ""},
        {"test_labels", ""},
        {"manifest", ""},
        {"test_manifest", ""},
        {"val_fraction", 0.1}}},
      {"model",
       {{"preset", preset_name},
        {"paradigm", "default"},
        {"regular_rate", 0.0},
        {"spatial_rate", 0.125},
        {"placement", "before_pool"},
        {"fc_width", info.fc_width},
        {"conv_widths", info.conv_widths}}},
      {"augment",
       {{"rotation", aug.enable_rotation},
        {"shear", aug.enable_shear},
        {"shift", aug.enable_shift},
        {"zoom", aug.enable_zoom},
        {"rotation_deg", aug.rotation_deg},
        {"shear_max", aug.shear},
        {"shift_frac", aug.shift_frac},
        {"zoom_delta", aug.zoom_delta},
        {"rescale", aug.rescale}}},
      {"train",
       {{"lr", 0.01},
        {"momentum", 0.0},
        {"batch_size", info.default_batch_size},
        {"max_epochs", 2500},
        {"seed", 0},
        {"val_fraction", 0.1},
        {"baseline_acc", info.default_baseline_acc},
        {"patience", 50},
        {"min_epochs", 0},
        {"record_wall_time", false}}},
      {"output", {{"dir", "out"}}},
  };
}

void reject_unknown_keys(const json& user, const json& schema, const std::string& prefix) {
  if (!user.is_object()) return;
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!schema.is_object() || !schema.contains(it.key()))
      throw ConfigError("unknown config key '" + path + "'");
    if (it.value().is_object()) reject_unknown_keys(it.value(), schema.at(it.key()), path);
  }
}

void apply_override(json& doc, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override must be section.key=value, got '" + kv + "'");
  const std::string keypath = kv.substr(0, eq);
  const std::string value = kv.substr(eq + 1);
  json* cur = &doc;
  size_t pos = 0;
  for (;;) {
    const size_t dot = keypath.find('.', pos);
    const std::string key = keypath.substr(pos, dot - pos);
    if (key.empty()) throw ConfigError("bad override key '" + keypath + "'");
    if (dot == std::string::npos) {
      json parsed = json::parse(value, nullptr, false);
      (*cur)[key] = parsed.is_discarded() ? json(value) : parsed;
      return;
    }
    cur = &(*cur)[key];
    pos = dot + 1;
  }
}

}  // namespace

std::optional<DropoutParadigm> RunConfig::paradigm() const {
  const PresetInfo& info = preset_info(model.preset);
  const auto pl = model.placement == "after_pool" ? PoolPlacement::AfterPool
                                                  : PoolPlacement::BeforePool;
  if (model.placement != "before_pool" && model.placement != "after_pool")
    throw ConfigError("model.placement must be before_pool or after_pool");
  const double pr = model.regular_rate > 0 ? model.regular_rate : info.default_paradigm.fc_rate;
  if (model.paradigm == "default") return std::nullopt;
  if (model.paradigm == "regular_after_fc") return DropoutParadigm::regular_after_fc(pr);
  if (model.paradigm == "spatial_at_pools")
    return DropoutParadigm::spatial_at_pools(model.spatial_rate, pl);
  if (model.paradigm == "combined")
    return DropoutParadigm::combined(model.spatial_rate, pr, pl);
  throw ConfigError("unknown paradigm '" + model.paradigm + "'");
}

ArchitectureSpec RunConfig::build_spec() const {
  return build_preset(model.preset, paradigm(), model.fc_width, model.conv_widths);
}

RunConfig run_config_from_json_text(const std::string& json_text,
                                    const std::vector<std::string>& overrides) {
  json user = json::parse(json_text, nullptr, false);
  if (user.is_discarded()) throw ConfigError("config is not valid JSON");
  for (const auto& ov : overrides) apply_override(user, ov);

  if (!user.contains("dataset") || !user["dataset"].contains("name") ||
      !user["dataset"]["name"].is_string())
    throw ConfigError("config must set dataset.name");
  const std::string ds_name = user["dataset"]["name"].get<std::string>();
  const std::string preset_name =
      user.contains("model") && user["model"].contains("preset")
          ? user["model"]["preset"].get<std::string>()
          : (ds_name == "raw" ? "svhn" : ds_name);
  preset_info(preset_name);  // validates the name early

  json doc = default_config_json(preset_name);
  reject_unknown_keys(user, doc, "");
  doc.merge_patch(user);

  RunConfig cfg;
  try {
    const json& d = doc["dataset"];
    cfg.dataset.name = d["name"];
    cfg.dataset.dir = d["dir"];
    cfg.dataset.images = d["images"];
    cfg.dataset.labels = d["labels"];
    cfg.dataset.test_images = d["test_images"];
    cfg.dataset.test_labels = d["test_labels"];
    cfg.dataset.manifest = d["manifest"];
    cfg.dataset.test_manifest = d["test_manifest"];
    cfg.dataset.val_fraction = d["val_fraction"];

    const json& m = doc["model"];
    cfg.model.preset = m["preset"];
    cfg.model.paradigm = m["paradigm"];
    cfg.model.regular_rate = m["regular_rate"];
    cfg.model.spatial_rate = m["spatial_rate"];
    cfg.model.placement = m["placement"];
    cfg.model.fc_width = m["fc_width"].get<int64_t>();
    cfg.model.conv_widths = m["conv_widths"].get<std::vector<int64_t>>();

    const json& a = doc["augment"];
    cfg.augment.enable_rotation = a["rotation"];
    cfg.augment.enable_shear = a["shear"];
    cfg.augment.enable_shift = a["shift"];
    cfg.augment.enable_zoom = a["zoom"];
    cfg.augment.rotation_deg = a["rotation_deg"];
    cfg.augment.shear = a["shear_max"];
    cfg.augment.shift_frac = a["shift_frac"];
    cfg.augment.zoom_delta = a["zoom_delta"];
    cfg.augment.rescale = a["rescale"];

    const json& t = doc["train"];
    cfg.train.learning_rate = t["lr"];
    cfg.train.momentum = t["momentum"];
    cfg.train.batch_size = t["batch_size"];
    cfg.train.max_epochs = t["max_epochs"];
    cfg.train.seed = t["seed"].get<uint64_t>();
    cfg.train.val_fraction = cfg.dataset.val_fraction;
    cfg.train.early_stop.baseline_acc = t["baseline_acc"];
    cfg.train.early_stop.patience = t["patience"];
    cfg.train.early_stop.min_epochs = t["min_epochs"];
    cfg.record_wall_time = t["record_wall_time"];

    cfg.output.dir = doc["output"]["dir"];
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field has the wrong type: ") + e.what());
  }

  cfg.train.validate();
  cfg.augment.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return run_config_from_json_text(text, overrides);
}

LoadedData load_dataset(const RunConfig::DatasetSection& ds) {
  namespace fs = std::filesystem;
  LoadedData out;
  if (ds.name == "mnist") {
    std::string img = ds.images, lab = ds.labels;
    if (img.empty() && !ds.dir.empty()) {
      img = (fs::path(ds.dir) / "train-images-idx3-ubyte").string();
      lab = (fs::path(ds.dir) / "train-labels-idx1-ubyte").string();
    }
    if (img.empty()) throw ConfigError("mnist dataset needs images/labels paths or dir");
    out.train = load_idx(img, lab);
    std::string timg = ds.test_images, tlab = ds.test_labels;
    if (timg.empty() && !ds.dir.empty()) {
      const auto p = fs::path(ds.dir) / "t10k-images-idx3-ubyte";
      if (fs::exists(p)) {
        timg = p.string();
        tlab = (fs::path(ds.dir) / "t10k-labels-idx1-ubyte").string();
      }
    }
    if (!timg.empty()) out.test = load_idx(timg, tlab);
  } else if (ds.name == "cifar10" || ds.name == "cifar100") {
    if (ds.dir.empty()) throw ConfigError(ds.name + " dataset needs dir");
    auto [tr, te] = load_cifar(ds.dir, ds.name);
    out.train = std::move(tr);
    out.test = std::move(te);
  } else if (ds.name == "stl10") {
    if (ds.dir.empty()) throw ConfigError("stl10 dataset needs dir");
    auto [tr, te] = load_stl10(ds.dir);
    out.train = std::move(tr);
    out.test = std::move(te);
  } else if (ds.name == "svhn" || ds.name == "raw") {
    if (ds.manifest.empty()) throw ConfigError(ds.name + " dataset needs a manifest path");
    out.train = load_raw(ds.manifest);
    if (!ds.test_manifest.empty()) out.test = load_raw(ds.test_manifest);
  } else {
    throw ConfigError("unknown dataset name '" + ds.name + "'");
  }
  return out;
}

}  // namespace pcnn
