#ifndef FIXSEARCH_PLOT_HPP
#define FIXSEARCH_PLOT_HPP

#include <algorithm>
#include <string>
#include <vector>

#include "fixsearch/image.hpp"
#include "fixsearch/segeval.hpp"

namespace fixsearch::plot {

using image::Canvas;
using image::Rgb;

namespace detail {

inline std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return std::string(buf);
}

inline const std::vector<Rgb>& palette() {
  static const std::vector<Rgb> colors = {
      {31, 119, 180}, {255, 127, 14}, {44, 160, 44},  {214, 39, 40},
      {148, 103, 189}, {140, 86, 75}, {227, 119, 194}, {127, 127, 127}};
  return colors;
}

}  // namespace detail

/// Simple labeled bar chart (used for per-metric means and histograms).
inline image::ImageRgb bar_chart(const std::vector<std::string>& labels,
                                 const std::vector<double>& values, const std::string& title) {
  const int n = static_cast<int>(values.size());
  const int bar_w = 36, gap = 14;
  const int left = 56, right = 16, top = 28, bottom = 34;
  const int plot_h = 180;
  Canvas canvas(left + right + n * (bar_w + gap) + gap, top + plot_h + bottom);

  double vmax = 1e-12;
  for (double v : values) vmax = std::max(vmax, v);
  const Rgb axis{60, 60, 60};
  canvas.draw_text(left, 8, title, axis);
  canvas.draw_line(left - 4, top, left - 4, top + plot_h, axis);
  canvas.draw_line(left - 4, top + plot_h, canvas.img.width - right, top + plot_h, axis);
  for (int t = 0; t <= 4; ++t) {
    const int y = top + plot_h - t * plot_h / 4;
    canvas.draw_line(left - 7, y, left - 4, y, axis);
    canvas.draw_text(4, y - 3, detail::tick_label(vmax * t / 4.0), axis);
  }
  for (int i = 0; i < n; ++i) {
    const int h = static_cast<int>(plot_h * std::max(0.0, values[i]) / vmax + 0.5);
    const int x = left + gap + i * (bar_w + gap);
    canvas.fill_rect(x, top + plot_h - h, bar_w, h, detail::palette()[i % detail::palette().size()]);
    std::string lab = labels[static_cast<std::size_t>(i)];
    if (lab.size() > 7) lab.resize(7);
    canvas.draw_text(x, top + plot_h + 6, lab, axis);
  }
  return canvas.img;
}

/// Precision-recall curve on a unit square.
inline image::ImageRgb pr_plot(const std::vector<segeval::PRPoint>& points, const std::string& title) {
  const int left = 44, right = 14, top = 26, bottom = 34, size = 220;
  Canvas canvas(left + size + right, top + size + bottom);
  const Rgb axis{60, 60, 60};
  canvas.draw_text(left, 8, title, axis);
  canvas.draw_line(left, top, left, top + size, axis);
  canvas.draw_line(left, top + size, left + size, top + size, axis);
  for (int t = 0; t <= 4; ++t) {
    const double f = t / 4.0;
    const int x = left + static_cast<int>(size * f);
    const int y = top + size - static_cast<int>(size * f);
    canvas.draw_line(x, top + size, x, top + size + 3, axis);
    canvas.draw_text(x - 8, top + size + 7, detail::tick_label(f), axis);
    canvas.draw_line(left - 3, y, left, y, axis);
    canvas.draw_text(2, y - 3, detail::tick_label(f), axis);
  }
  canvas.draw_text(left + size / 2 - 18, top + size + 20, "RECALL", axis);
  const Rgb line{214, 39, 40};
  int px = left, py = top;  // start at recall 0, precision 1
  for (const auto& pt : points) {
    const int x = left + static_cast<int>(size * std::clamp(pt.recall, 0.0, 1.0));
    const int y = top + size - static_cast<int>(size * std::clamp(pt.precision, 0.0, 1.0));
    canvas.draw_line(px, py, x, y, line);
    px = x;
    py = y;
  }
  return canvas.img;
}

/// Confusion matrix as a shaded grid with counts; the last row/column carry
/// the totals.
inline image::ImageRgb confusion_plot(const segeval::ConfusionMatrix& cm, const std::string& title) {
  const int n = static_cast<int>(cm.labels.size());
  const int cell = 64, left = 110, top = 48, pad = 10;
  Canvas canvas(left + (n + 1) * cell + pad, top + (n + 1) * cell + pad + 18);
  const Rgb axis{60, 60, 60};
  canvas.draw_text(left, 8, title, axis);
  canvas.draw_text(left, 22, "COLS: PREDICTED  ROWS: GROUND TRUTH", Rgb{120, 120, 120});

  std::int64_t vmax = 1;
  for (const auto& row : cm.counts)
    for (auto v : row) vmax = std::max(vmax, v);

  auto cell_color = [&](std::int64_t v) {
    const double t = static_cast<double>(v) / static_cast<double>(vmax);
    const auto ch = static_cast<std::uint8_t>(255 - 155 * t);
    return Rgb{ch, ch, 255};
  };
  for (int r = 0; r < n; ++r) {
    std::string lab = segeval::label_name(cm.labels[static_cast<std::size_t>(r)]);
    if (lab.size() > 10) lab.resize(10);
    canvas.draw_text(4, top + r * cell + cell / 2 - 3, lab, axis);
    canvas.draw_text(left + r * cell + 6, top - 12, lab.substr(0, 6), axis);
    for (int c = 0; c < n; ++c) {
      const std::int64_t v = cm.counts[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      canvas.fill_rect(left + c * cell, top + r * cell, cell - 2, cell - 2, cell_color(v));
      canvas.draw_text(left + c * cell + 6, top + r * cell + cell / 2 - 3, std::to_string(v),
                       Rgb{20, 20, 20});
    }
    canvas.draw_text(left + n * cell + 6, top + r * cell + cell / 2 - 3,
                     std::to_string(cm.row_total(static_cast<std::size_t>(r))), axis);
  }
  for (int c = 0; c < n; ++c)
    canvas.draw_text(left + c * cell + 6, top + n * cell + 6,
                     std::to_string(cm.col_total(static_cast<std::size_t>(c))), axis);
  canvas.draw_text(left + n * cell + 6, top + n * cell + 6, std::to_string(cm.grand_total()), axis);
  return canvas.img;
}

}  // namespace fixsearch::plot

#endif  // FIXSEARCH_PLOT_HPP
