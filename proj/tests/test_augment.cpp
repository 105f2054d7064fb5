#include <doctest.h>

#include <cmath>

#include "pcnn/augment.hpp"

using namespace pcnn;

TEST_CASE("identity parameters give the identity map") {
  auto map = affine_matrix(0, 0, 0, 0, 1, 1, 28, 28);
  CHECK(map.m[0][0] == 1.0);
  CHECK(map.m[0][1] == 0.0);
  CHECK(map.m[0][2] == 0.0);
  CHECK(map.m[1][0] == 0.0);
  CHECK(map.m[1][1] == 1.0);
  CHECK(map.m[1][2] == 0.0);

  CHECK_THROWS_AS(affine_matrix(0, 0, 0, 0, 0, 1, 28, 28), ConfigError);
}

TEST_CASE("two quarter turns equal a half turn") {
  Tensor<double> img({1, 8, 8});
  Rng rng(4);
  for (auto& v : img.data) v = rng.uniform();
  auto quarter = affine_matrix(90, 0, 0, 0, 1, 1, 8, 8);
  auto half = affine_matrix(180, 0, 0, 0, 1, 1, 8, 8);
  auto twice = warp_image(warp_image(img, quarter, 0.0), quarter, 0.0);
  auto once = warp_image(img, half, 0.0);
  for (int64_t i = 0; i < img.size(); ++i)
    REQUIRE(twice[i] == doctest::Approx(once[i]).epsilon(1e-10));
}

TEST_CASE("half-width shift moves a ramp by exactly 14 pixels") {
  const int64_t w = 28;
  Tensor<double> img({1, 1, w});
  for (int64_t j = 0; j < w; ++j) img[j] = static_cast<double>(j);
  auto map = affine_matrix(0, 0, 0.5, 0, 1, 1, w, 1);
  auto out = warp_image(img, map, 0.0);
  for (int64_t j = 0; j < w; ++j)
    CHECK(out[j] == (j < 14 ? 0.0 : static_cast<double>(j - 14)));
}

TEST_CASE("identity warp reproduces the input exactly") {
  Tensor<double> img({3, 6, 6});
  Rng rng(10);
  for (auto& v : img.data) v = rng.uniform();
  auto out = warp_image(img, AffineMap::identity(), 0.0);
  CHECK(out.data == img.data);
}

TEST_CASE("constant image is fixed under an in-range warp") {
  Tensor<double> img({1, 9, 9}, 0.75);
  // zoom 2 inverts to scale 0.5, so every sample lands inside the image
  auto map = affine_matrix(0, 0, 0, 0, 2, 2, 9, 9);
  auto out = warp_image(img, map, 0.0);
  for (double v : out.data) CHECK(v == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("identity draws return the input bitwise") {
  AugmentConfig cfg;
  cfg.enable_rotation = cfg.enable_shear = cfg.enable_shift = cfg.enable_zoom = false;
  Tensor<float> img({1, 5, 5});
  Rng data_rng(2);
  for (auto& v : img.data) v = static_cast<float>(data_rng.uniform());
  Rng rng(77);
  AugmentDraw draw;
  auto out = random_augment(img, cfg, rng, &draw);
  CHECK(out.data == img.data);
  CHECK(draw.rotation_deg == 0.0);
  CHECK(draw.zoom_x == 1.0);
  // no randomness consumed on the identity path
  Rng fresh(77);
  CHECK(rng.next_u64() == fresh.next_u64());
}

TEST_CASE("draws are deterministic in the generator and recorded faithfully") {
  AugmentConfig cfg = AugmentConfig::for_preset("mnist");
  Tensor<float> img({1, 28, 28}, 0.5f);
  Rng r1(123), r2(123);
  AugmentDraw d1, d2;
  auto o1 = random_augment(img, cfg, r1, &d1);
  auto o2 = random_augment(img, cfg, r2, &d2);
  CHECK(o1.data == o2.data);
  CHECK(d1.rotation_deg == d2.rotation_deg);
  CHECK(d1.shear == d2.shear);
  CHECK(d1.shift_x == d2.shift_x);
  CHECK(d1.zoom_y == d2.zoom_y);
  CHECK(std::abs(d1.rotation_deg) <= 10.0);
  CHECK(std::abs(d1.shear) <= 0.15);
  CHECK(std::abs(d1.shift_x) <= 0.10);
  CHECK(d1.zoom_x >= 0.9);
  CHECK(d1.zoom_x <= 1.1);

  // draw order is rotation, shear, shift x/y, zoom x/y
  Rng replay(123);
  CHECK(d1.rotation_deg == replay.uniform(-10.0, 10.0));
  CHECK(d1.shear == replay.uniform(-0.15, 0.15));
  CHECK(d1.shift_x == replay.uniform(-0.10, 0.10));
  CHECK(d1.shift_y == replay.uniform(-0.10, 0.10));
  CHECK(d1.zoom_x == replay.uniform(0.9, 1.1));
  CHECK(d1.zoom_y == replay.uniform(0.9, 1.1));
}

TEST_CASE("rotation is enabled only for mnist") {
  CHECK(AugmentConfig::for_preset("mnist").enable_rotation);
  CHECK(AugmentConfig::for_preset("mnist").rotation_deg == 10.0);
  for (const char* name : {"cifar10", "cifar100", "svhn", "stl10"}) {
    auto cfg = AugmentConfig::for_preset(name);
    CHECK_FALSE(cfg.enable_rotation);
    CHECK(cfg.rotation_deg == 0.0);
    CHECK(cfg.enable_shear);
    CHECK(cfg.enable_shift);
    CHECK(cfg.enable_zoom);
  }
}

TEST_CASE("augmented images stay inside [0,1]") {
  AugmentConfig cfg = AugmentConfig::for_preset("mnist");
  Tensor<float> img({1, 12, 12});
  Rng data_rng(31);
  for (auto& v : img.data) v = static_cast<float>(data_rng.uniform());
  Rng rng(55);
  for (int rep = 0; rep < 50; ++rep) {
    auto out = random_augment(img, cfg, rng);
    for (float v : out.data) {
      REQUIRE(v >= 0.0f);
      REQUIRE(v <= 1.0f);
    }
  }
}

TEST_CASE("rescale maps byte values to unit range") {
  Tensor<float> img({1, 1, 4});
  img.data = {0.f, 51.f, 127.5f, 255.f};
  auto out = rescale(img, 1.0 / 255.0);
  CHECK(out[0] == 0.0f);
  CHECK(out[1] == doctest::Approx(0.2).epsilon(1e-6));
  CHECK(out[3] == 1.0f);
  CHECK_THROWS_AS(rescale(img, 0.0), ConfigError);
}

TEST_CASE("config validation") {
  AugmentConfig cfg;
  cfg.shift_frac = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = AugmentConfig{};
  cfg.rotation_deg = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = AugmentConfig{};
  CHECK_NOTHROW(cfg.validate());
}
