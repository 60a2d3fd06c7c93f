#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "repgn/errors.hpp"
#include "repgn/io.hpp"

namespace repgn {

struct SceneSpec {
  int clusters = 3;
  int per_cluster = 8;
  int dim = 0;          // 0: no stored features (spatial descriptors are used)
  double jitter = 0.05; // corner noise, as a fraction of the anchor size
  int width = 1000;
  int height = 1000;
  std::uint64_t seed = 0;
};

/// Seeded synthetic proposals: each cluster is a ground-truth anchor placed in
/// its own cell of a square grid, surrounded by per_cluster Gaussian-jittered
/// copies. Boxes are clipped to their cell, so different clusters never
/// overlap. With dim > 0 each proposal carries its cluster's random center
/// feature plus small noise.
inline io::ProposalDocument generate_scene(const SceneSpec &spec) {
  if (spec.clusters < 0 || spec.per_cluster < 1 || spec.dim < 0 || !(spec.jitter >= 0.0) ||
      spec.width < 1 || spec.height < 1)
    throw InvalidInput("gen: clusters >= 0, per_cluster >= 1, dim >= 0, jitter >= 0 required");
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  io::ProposalDocument doc;
  doc.image_id = "synthetic-" + std::to_string(spec.seed);
  doc.width = spec.width;
  doc.height = spec.height;
  const int grid = std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(spec.clusters)))));
  const double cell = 1.0 / grid;
  const double margin = 0.02 * cell;

  for (int c = 0; c < spec.clusters; ++c) {
    const double cx0 = (c % grid) * cell;
    const double cy0 = (c / grid) * cell;
    const double lo_x = cx0 + margin, hi_x = cx0 + cell - margin;
    const double lo_y = cy0 + margin, hi_y = cy0 + cell - margin;
    const double w = (0.35 + 0.25 * unit(rng)) * cell;
    const double h = (0.35 + 0.25 * unit(rng)) * cell;
    const double ax = lo_x + (hi_x - lo_x - w) * unit(rng);
    const double ay = lo_y + (hi_y - lo_y - h) * unit(rng);

    std::vector<double> center(static_cast<std::size_t>(spec.dim));
    for (auto &v : center)
      v = gauss(rng);

    for (int k = 0; k < spec.per_cluster; ++k) {
      double x1 = std::clamp(ax + spec.jitter * w * gauss(rng), lo_x, hi_x);
      double y1 = std::clamp(ay + spec.jitter * h * gauss(rng), lo_y, hi_y);
      double x2 = std::clamp(ax + w + spec.jitter * w * gauss(rng), lo_x, hi_x);
      double y2 = std::clamp(ay + h + spec.jitter * h * gauss(rng), lo_y, hi_y);
      // Keep at least a tenth of the anchor size in each direction.
      if (x2 - x1 < 0.1 * w) {
        x1 = std::min(x1, hi_x - 0.1 * w);
        x2 = x1 + 0.1 * w;
      }
      if (y2 - y1 < 0.1 * h) {
        y1 = std::min(y1, hi_y - 0.1 * h);
        y2 = y1 + 0.1 * h;
      }
      io::Proposal p;
      p.box = {x1 * spec.width, y1 * spec.height, x2 * spec.width, y2 * spec.height};
      if (spec.dim > 0) {
        std::vector<double> f(center);
        for (auto &v : f)
          v += 0.1 * gauss(rng);
        p.feature = std::move(f);
      }
      p.score = 0.5 + 0.5 * unit(rng);
      doc.proposals.push_back(std::move(p));
    }
  }
  return doc;
}

} // namespace repgn
