#include "pcnn/augment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace pcnn {

AffineMap affine_matrix(double rotation_deg, double shear, double shift_x_frac,
                        double shift_y_frac, double zoom_x, double zoom_y, int64_t width,
                        int64_t height) {
  if (zoom_x <= 0 || zoom_y <= 0) throw ConfigError("affine_matrix: zoom must be positive");
  const double theta = rotation_deg * 3.14159265358979323846 / 180.0;
  const double c = std::cos(theta), s = std::sin(theta);
  // forward 2x2: rotation * shear * scale
  const double m00 = c * zoom_x;
  const double m01 = (c * shear - s) * zoom_y;
  const double m10 = s * zoom_x;
  const double m11 = (s * shear + c) * zoom_y;
  const double det = m00 * m11 - m01 * m10;
  if (!std::isfinite(det) || det == 0) throw ConfigError("affine_matrix: singular transform");
  // inverse 2x2
  const double a00 = m11 / det, a01 = -m01 / det;
  const double a10 = -m10 / det, a11 = m00 / det;
  const double cx = (static_cast<double>(width) - 1) / 2.0;
  const double cy = (static_cast<double>(height) - 1) / 2.0;
  const double tx = shift_x_frac * static_cast<double>(width);
  const double ty = shift_y_frac * static_cast<double>(height);
  AffineMap map;
  map.m[0][0] = a00;
  map.m[0][1] = a01;
  map.m[0][2] = cx - (a00 * (cx + tx) + a01 * (cy + ty));
  map.m[1][0] = a10;
  map.m[1][1] = a11;
  map.m[1][2] = cy - (a10 * (cx + tx) + a11 * (cy + ty));
  return map;
}

template <typename S>
Tensor<S> warp_image(const Tensor<S>& img, const AffineMap& map, S fill) {
  if (img.ndim() != 3) throw ShapeError("warp_image: need [c,h,w]");
  const int64_t c = img.shape[0], h = img.shape[1], w = img.shape[2];
  Tensor<S> out(img.shape);
  for (int64_t i = 0; i < h; ++i) {
    for (int64_t j = 0; j < w; ++j) {
      double xi, yi;
      map.apply(static_cast<double>(j), static_cast<double>(i), xi, yi);
      const int64_t x0 = static_cast<int64_t>(std::floor(xi));
      const int64_t y0 = static_cast<int64_t>(std::floor(yi));
      const double fx = xi - static_cast<double>(x0);
      const double fy = yi - static_cast<double>(y0);
      for (int64_t ci = 0; ci < c; ++ci) {
        const S* plane = img.ptr() + ci * h * w;
        auto tap = [&](int64_t y, int64_t x) -> double {
          if (x < 0 || x >= w || y < 0 || y >= h) return static_cast<double>(fill);
          return static_cast<double>(plane[y * w + x]);
        };
        const double v = (1 - fy) * ((1 - fx) * tap(y0, x0) + fx * tap(y0, x0 + 1)) +
                         fy * ((1 - fx) * tap(y0 + 1, x0) + fx * tap(y0 + 1, x0 + 1));
        out.ptr()[(ci * h + i) * w + j] = static_cast<S>(v);
      }
    }
  }
  return out;
}

template <typename S>
Tensor<S> random_augment(const Tensor<S>& img, const AugmentConfig& cfg, Rng& rng,
                         AugmentDraw* draw) {
  cfg.validate();
  if (img.ndim() != 3) throw ShapeError("random_augment: need [c,h,w]");
  AugmentDraw d;
  if (cfg.enable_rotation && cfg.rotation_deg > 0)
    d.rotation_deg = rng.uniform(-cfg.rotation_deg, cfg.rotation_deg);
  if (cfg.enable_shear && cfg.shear > 0) d.shear = rng.uniform(-cfg.shear, cfg.shear);
  if (cfg.enable_shift && cfg.shift_frac > 0) {
    d.shift_x = rng.uniform(-cfg.shift_frac, cfg.shift_frac);
    d.shift_y = rng.uniform(-cfg.shift_frac, cfg.shift_frac);
  }
  if (cfg.enable_zoom && cfg.zoom_delta > 0) {
    d.zoom_x = rng.uniform(1.0 - cfg.zoom_delta, 1.0 + cfg.zoom_delta);
    d.zoom_y = rng.uniform(1.0 - cfg.zoom_delta, 1.0 + cfg.zoom_delta);
  }
  if (draw) *draw = d;
  const bool is_identity = d.rotation_deg == 0 && d.shear == 0 && d.shift_x == 0 &&
                           d.shift_y == 0 && d.zoom_x == 1 && d.zoom_y == 1;
  if (is_identity) return img;
  AffineMap map = affine_matrix(d.rotation_deg, d.shear, d.shift_x, d.shift_y, d.zoom_x, d.zoom_y,
                                img.shape[2], img.shape[1]);
  return warp_image(img, map, S(0));
}

void write_pnm(const Tensor<float>& img, const std::string& path) {
  if (img.ndim() != 3 || (img.shape[0] != 1 && img.shape[0] != 3))
    throw ShapeError("write_pnm: need [1,h,w] or [3,h,w]");
  const int64_t c = img.shape[0], h = img.shape[1], w = img.shape[2];
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("write_pnm: cannot open " + path);
  os << (c == 1 ? "P5" : "P6") << "\n" << w << " " << h << "\n255\n";
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j)
      for (int64_t ci = 0; ci < c; ++ci) {
        double v = std::lround(static_cast<double>(img.ptr()[(ci * h + i) * w + j]) * 255.0);
        v = std::min(255.0, std::max(0.0, v));
        os.put(static_cast<char>(static_cast<unsigned char>(v)));
      }
  if (!os) throw IoError("write_pnm: write failed for " + path);
}

template Tensor<float> warp_image<float>(const Tensor<float>&, const AffineMap&, float);
template Tensor<double> warp_image<double>(const Tensor<double>&, const AffineMap&, double);
template Tensor<float> random_augment<float>(const Tensor<float>&, const AugmentConfig&, Rng&,
                                             AugmentDraw*);
template Tensor<double> random_augment<double>(const Tensor<double>&, const AugmentConfig&, Rng&,
                                               AugmentDraw*);

}  // namespace pcnn
