#include "hemodet/viz.hpp"

#include <algorithm>
#include <cmath>

namespace hemodet {

namespace {

void paint_contour(ImageU8& img, const nn::Tensor& mask01, std::uint8_t r, std::uint8_t g,
                   std::uint8_t b) {
  const nn::Tensor edge = derive_edge_map(mask01);
  for (long y = 0; y < img.height; ++y)
    for (long x = 0; x < img.width; ++x)
      if (edge.at(y, x) > 0.5) set_pixel(img, x, y, r, g, b);
}

}  // namespace

ImageU8 render_overlay(const nn::Tensor& frame_rgb, const nn::Tensor* pred_mask,
                       const BleedAnnotationData& gt, const PointPrediction& pred) {
  ImageU8 img = tensor_to_image(frame_rgb);
  if (pred_mask) {
    blend_mask(img, *pred_mask, 255, 64, 64, 0.25);
    paint_contour(img, *pred_mask, 255, 0, 0);
  }
  if (gt.has_region) paint_contour(img, gt.mask, 0, 255, 0);
  if (gt.has_point)
    draw_circle(img, std::lround(gt.point_x), std::lround(gt.point_y), 5, 0, 255, 0);
  if (pred.has_point)
    draw_cross(img, std::lround(pred.x * img.width), std::lround(pred.y * img.height), 5,
               255, 0, 0);
  return img;
}

ImageU8 plot_metric_curves(const std::vector<MetricSeries>& series, double lo, double hi,
                           long width, long height) {
  ImageU8 img(height, width, 3);
  std::fill(img.pixels.begin(), img.pixels.end(), std::uint8_t{255});

  const long ml = 48, mr = 16, mt = 16, mb = 32;  // margins
  const long x0 = ml, x1 = width - mr, y0 = height - mb, y1 = mt;
  draw_line(img, x0, y0, x1, y0, 0, 0, 0);
  draw_line(img, x0, y0, x0, y1, 0, 0, 0);

  long epochs = 0;
  for (const auto& s : series) epochs = std::max(epochs, static_cast<long>(s.values.size()));
  if (epochs == 0 || hi <= lo) return img;

  auto px = [&](long e) {
    return epochs == 1 ? (x0 + x1) / 2 : x0 + e * (x1 - x0) / (epochs - 1);
  };
  auto py = [&](double v) {
    const double t = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
    return static_cast<long>(std::lround(y0 - t * (y0 - y1)));
  };

  // horizontal gridlines with value labels
  for (int i = 0; i <= 4; ++i) {
    const double v = lo + (hi - lo) * i / 4.0;
    const long y = py(v);
    for (long x = x0; x <= x1; x += 4) set_pixel(img, x, y, 220, 220, 220);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    draw_text(img, 4, y - 2, buf, 0, 0, 0);
  }
  // epoch ticks
  const long tick_step = std::max<long>(1, epochs / 8);
  for (long e = 0; e < epochs; e += tick_step) {
    draw_text(img, px(e) - 3, y0 + 6, std::to_string(e), 0, 0, 0);
  }

  static const std::uint8_t palette[][3] = {
      {220, 40, 40}, {40, 120, 220}, {30, 160, 60}, {200, 140, 20}, {140, 60, 200}};
  for (size_t si = 0; si < series.size(); ++si) {
    const auto* col = palette[si % 5];
    const auto& vals = series[si].values;
    for (size_t e = 1; e < vals.size(); ++e) {
      draw_line(img, px(static_cast<long>(e - 1)), py(vals[e - 1]),
                px(static_cast<long>(e)), py(vals[e]), col[0], col[1], col[2]);
    }
    if (vals.size() == 1) draw_cross(img, px(0), py(vals[0]), 2, col[0], col[1], col[2]);
    // legend swatch + label (labels drawn with the numeric bitmap font where
    // possible; unsupported glyphs render as blanks, the color key still works)
    const long ly = y1 + 8 * static_cast<long>(si);
    draw_line(img, x1 - 90, ly, x1 - 78, ly, col[0], col[1], col[2]);
    draw_text(img, x1 - 74, ly - 2, series[si].label, 0, 0, 0);
  }
  return img;
}

}  // namespace hemodet
