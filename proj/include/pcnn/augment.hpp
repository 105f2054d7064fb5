#pragma once

#include <string>

#include "pcnn/tensor.hpp"

namespace pcnn {

// Per-dataset augmentation ranges. Flips and cutout are deliberately not
// representable here; the pipeline only composes affine transforms plus the
// one-time intensity rescale.
struct AugmentConfig {
  bool enable_rotation = false;
  bool enable_shear = true;
  bool enable_shift = true;
  bool enable_zoom = true;
  double rotation_deg = 0.0;   // max |rotation|, degrees
  double shear = 0.15;         // max |shear| coefficient
  double shift_frac = 0.10;    // max |shift| as fraction of each dimension
  double zoom_delta = 0.10;    // scale drawn from [1-d, 1+d] per axis
  double rescale = 1.0 / 255.0;

  void validate() const {
    if (rotation_deg < 0 || shear < 0) throw ConfigError("augment: negative range");
    if (shift_frac < 0 || shift_frac >= 1) throw ConfigError("augment: shift_frac must be in [0,1)");
    if (zoom_delta < 0 || zoom_delta >= 1) throw ConfigError("augment: zoom_delta must be in [0,1)");
    if (rescale <= 0) throw ConfigError("augment: rescale must be positive");
  }

  static AugmentConfig for_preset(const std::string& name) {
    AugmentConfig c;
    c.enable_rotation = (name == "mnist");
    c.rotation_deg = c.enable_rotation ? 10.0 : 0.0;
    return c;
  }
};

// 2x3 inverse mapping: input coords = map * (x_out, y_out, 1), centered on the
// image midpoint.
struct AffineMap {
  double m[2][3];

  static AffineMap identity() { return {{{1, 0, 0}, {0, 1, 0}}}; }

  void apply(double x, double y, double& xi, double& yi) const {
    xi = m[0][0] * x + m[0][1] * y + m[0][2];
    yi = m[1][0] * x + m[1][1] * y + m[1][2];
  }
};

// Composes (about the image center) scale, then shear, then rotation, then
// translation, and returns the inverse mapping of that composition.
AffineMap affine_matrix(double rotation_deg, double shear, double shift_x_frac,
                        double shift_y_frac, double zoom_x, double zoom_y, int64_t width,
                        int64_t height);

// The parameters one random_augment call drew; exposed for preview output.
struct AugmentDraw {
  double rotation_deg = 0, shear = 0, shift_x = 0, shift_y = 0, zoom_x = 1, zoom_y = 1;
};

template <typename S>
Tensor<S> warp_image(const Tensor<S>& img, const AffineMap& map, S fill);

template <typename S>
Tensor<S> random_augment(const Tensor<S>& img, const AugmentConfig& cfg, Rng& rng,
                         AugmentDraw* draw = nullptr);

template <typename S>
Tensor<S> rescale(const Tensor<S>& img, double factor) {
  if (factor <= 0) throw ConfigError("rescale: factor must be positive");
  Tensor<S> out = img;
  for (S& v : out.data) v = static_cast<S>(v * factor);
  return out;
}

// 8-bit binary PGM (1 channel) / PPM (3 channels); values are scaled by 255
// and clamped to [0,255].
void write_pnm(const Tensor<float>& img, const std::string& path);

extern template Tensor<float> warp_image<float>(const Tensor<float>&, const AffineMap&, float);
extern template Tensor<double> warp_image<double>(const Tensor<double>&, const AffineMap&, double);
extern template Tensor<float> random_augment<float>(const Tensor<float>&, const AugmentConfig&,
                                                    Rng&, AugmentDraw*);
extern template Tensor<double> random_augment<double>(const Tensor<double>&, const AugmentConfig&,
                                                      Rng&, AugmentDraw*);

}  // namespace pcnn
