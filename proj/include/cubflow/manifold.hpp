#pragma once

#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace cubflow {

struct PointManifold {
  std::vector<double> location;
};

/// {x : ||x - center||_1 = radius}; a diamond in 2-D, a pair of points in 1-D.
struct L1Sphere {
  std::vector<double> center;
  double radius = 0.0;
};

/// {x : x[axis] = offset} intersected with the hypercube.
struct AxisHyperplane {
  int axis = 0;
  double offset = 0.0;
};

/// Zero set S of an Eikonal problem. Construction validates that the
/// geometry lies in the closed hypercube [-1,1]^dim.
class ManifoldDescriptor {
 public:
  using Shape = std::variant<PointManifold, L1Sphere, AxisHyperplane>;

  ManifoldDescriptor(Shape shape, int dim);

  static ManifoldDescriptor point(std::vector<double> location);
  static ManifoldDescriptor l1_sphere(std::vector<double> center, double radius);
  static ManifoldDescriptor axis_hyperplane(int dim, int axis, double offset);

  /// Parses `point:x0,x1`, `l1sphere:c0,c1:r` or `hyperplane:axis:offset`.
  /// A single coordinate is broadcast to every axis.
  static ManifoldDescriptor parse(std::string_view text, int dim);

  const Shape& shape() const noexcept { return shape_; }
  int dim() const noexcept { return dim_; }
  std::string to_string() const;

 private:
  Shape shape_;
  int dim_;
};

}  // namespace cubflow
