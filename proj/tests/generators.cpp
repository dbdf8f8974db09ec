// SPDX-License-Identifier: Apache-2.0
#include "generators.hpp"

#include <algorithm>

namespace wardpose::testing {

MetricsInstance random_metrics_instance(std::mt19937_64& rng, bool one_gt_per_image) {
  std::uniform_int_distribution<int> classes_d(1, 5), images_d(1, 12), preds_d(0, 100), coord(0, 60), ext(4, 30),
      jitter(-4, 4), score(0, 20), extra_gt(0, 2);
  const int classes = classes_d(rng);
  std::uniform_int_distribution<int> label(0, classes - 1);
  MetricsInstance in;
  const int images = images_d(rng);
  for (int i = 0; i < images; ++i) {
    const int n = one_gt_per_image ? 1 : 1 + extra_gt(rng);
    for (int k = 0; k < n; ++k) {
      const double x = coord(rng), y = coord(rng);
      in.gt.push_back({"img" + std::to_string(i), {x, y, x + ext(rng), y + ext(rng)},
                       ActionLabel::from_index(static_cast<std::size_t>(label(rng)))});
    }
  }
  const int n_preds = preds_d(rng);
  std::uniform_int_distribution<std::size_t> pick(0, in.gt.size() - 1);
  for (int k = 0; k < n_preds; ++k) {
    const metrics::GroundTruthItem& g = in.gt[pick(rng)];
    CornerBox b = g.box;
    b.x1 += jitter(rng);
    b.y1 += jitter(rng);
    b.x2 = std::max(b.x1 + 1, b.x2 + jitter(rng));
    b.y2 = std::max(b.y1 + 1, b.y2 + jitter(rng));
    const bool right_class = std::bernoulli_distribution(0.6)(rng);
    in.preds.push_back({g.image_id, b,
                        right_class ? g.label : ActionLabel::from_index(static_cast<std::size_t>(label(rng))),
                        score(rng) / 20.0});
  }
  return in;
}

Image noise_image(int w, int h, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> px(0, 255);
  Image img(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      img.set(x, y, {static_cast<std::uint8_t>(px(rng)), static_cast<std::uint8_t>(px(rng)),
                     static_cast<std::uint8_t>(px(rng))});
    }
  }
  return img;
}

}  // namespace wardpose::testing
