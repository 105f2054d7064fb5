#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pcnn/augment.hpp"
#include "pcnn/data.hpp"
#include "pcnn/model.hpp"
#include "pcnn/train.hpp"

namespace pcnn {

// Fully-resolved run configuration. Every field has a preset-derived default,
// so a minimal JSON config only names the dataset and its paths.
struct RunConfig {
  struct DatasetSection {
    std::string name;  // mnist | cifar10 | cifar100 | svhn | stl10 | raw
    std::string dir;
    std::string images, labels;            // IDX pair (mnist)
    std::string test_images, test_labels;  // optional IDX test pair
    std::string manifest, test_manifest;   // raw-manifest route
    double val_fraction = 0.1;
  } dataset;

  struct ModelSection {
    std::string preset;                    // defaults to dataset.name
    std::string paradigm = "default";      // default | regular_after_fc | spatial_at_pools | combined
    double regular_rate = 0.0;             // 0 means "use the preset's value"
    double spatial_rate = 0.125;
    std::string placement = "before_pool"; // before_pool | after_pool
    std::optional<int64_t> fc_width;
    std::optional<std::vector<int64_t>> conv_widths;
  } model;

  AugmentConfig augment;  // defaults filled from the preset
  TrainConfig train;
  bool record_wall_time = false;

  struct OutputSection {
    std::string dir = "out";
  } output;

  ArchitectureSpec build_spec() const;
  std::optional<DropoutParadigm> paradigm() const;
};

// Parses the JSON config file, applies dotted-path overrides
// (e.g. "train.max_epochs=1"), rejects unknown keys, and fills every missing
// field from the preset defaults.
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides);
RunConfig run_config_from_json_text(const std::string& json_text,
                                    const std::vector<std::string>& overrides);

struct LoadedData {
  Dataset train;
  std::optional<Dataset> test;
};

LoadedData load_dataset(const RunConfig::DatasetSection& ds);

}  // namespace pcnn
