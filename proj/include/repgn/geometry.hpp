#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "repgn/errors.hpp"

namespace repgn {

/// Axis-aligned box in normalized image coordinates, (x1, y1) top-left and
/// (x2, y2) bottom-right. Always satisfies 0 <= x1 < x2 <= 1 and likewise for y.
class BoundingBox {
public:
  BoundingBox() = default;

  BoundingBox(double x1, double y1, double x2, double y2)
      : x1_(x1), y1_(y1), x2_(x2), y2_(y2) {
    validate();
  }

  double x1() const { return x1_; }
  double y1() const { return y1_; }
  double x2() const { return x2_; }
  double y2() const { return y2_; }
  double width() const { return x2_ - x1_; }
  double height() const { return y2_ - y1_; }
  double area() const { return width() * height(); }

  bool operator==(const BoundingBox &) const = default;

private:
  void validate() const {
    for (double c : {x1_, y1_, x2_, y2_}) {
      if (!std::isfinite(c) || c < 0.0 || c > 1.0)
        throw InvalidInput("bounding box coordinate outside [0,1]: " + std::to_string(c));
    }
    if (!(x1_ < x2_) || !(y1_ < y2_))
      throw InvalidInput("degenerate bounding box: requires x1 < x2 and y1 < y2");
  }

  // The default-constructed box is the full image.
  double x1_ = 0.0, y1_ = 0.0, x2_ = 1.0, y2_ = 1.0;
};

/// Intersection over union. Boxes that share only an edge or a corner have
/// zero intersection area and therefore IoU 0.
inline double iou(const BoundingBox &a, const BoundingBox &b) {
  const double iw = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const double ih = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  if (iw <= 0.0 || ih <= 0.0)
    return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

/// Explicit 7-dim spatial node feature:
/// (x1, y1, x2, y2, cx, cy, |x1 - x2| / |y1 - y2|).
struct SpatialDescriptor {
  static constexpr std::size_t size = 7;
  std::array<double, size> values{};

  double x1() const { return values[0]; }
  double y1() const { return values[1]; }
  double x2() const { return values[2]; }
  double y2() const { return values[3]; }
  double cx() const { return values[4]; }
  double cy() const { return values[5]; }
  double aspect() const { return values[6]; }
};

inline SpatialDescriptor spatial_descriptor(const BoundingBox &b) {
  const double h = std::abs(b.y1() - b.y2());
  if (h < std::numeric_limits<double>::epsilon())
    throw InvalidInput("spatial descriptor: box height below machine epsilon");
  SpatialDescriptor d;
  d.values = {b.x1(),
              b.y1(),
              b.x2(),
              b.y2(),
              (b.x1() + b.x2()) / 2.0,
              (b.y1() + b.y2()) / 2.0,
              std::abs(b.x1() - b.x2()) / h};
  return d;
}

} // namespace repgn
