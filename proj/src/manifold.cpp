#include "cubflow/manifold.hpp"

#include "cubflow/error.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

namespace cubflow {
namespace {

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    parts.push_back(text.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

double parse_double(std::string_view s) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw InvalidArgument("manifold: cannot parse number '" + std::string(s) + "'");
  return value;
}

std::vector<double> parse_coords(std::string_view s, int dim) {
  std::vector<double> coords;
  for (auto part : split(s, ',')) coords.push_back(parse_double(part));
  if (coords.size() == 1 && dim > 1) coords.assign(dim, coords.front());
  if (static_cast<int>(coords.size()) != dim)
    throw InvalidArgument("manifold: expected " + std::to_string(dim) + " coordinates");
  return coords;
}

bool in_closed_cube(double x) { return x >= -1.0 && x <= 1.0; }

}  // namespace

ManifoldDescriptor::ManifoldDescriptor(Shape shape, int dim) : shape_(std::move(shape)), dim_(dim) {
  if (dim_ < 1) throw InvalidArgument("manifold: dimension must be positive");
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, PointManifold>) {
          if (static_cast<int>(s.location.size()) != dim_)
            throw InvalidArgument("manifold: point location has wrong dimension");
          for (double x : s.location)
            if (!in_closed_cube(x)) throw InvalidArgument("manifold: point outside [-1,1]^d");
        } else if constexpr (std::is_same_v<T, L1Sphere>) {
          if (static_cast<int>(s.center.size()) != dim_)
            throw InvalidArgument("manifold: sphere center has wrong dimension");
          if (!(s.radius > 0.0)) throw InvalidArgument("manifold: sphere radius must be positive");
          for (double c : s.center)
            if (!in_closed_cube(c - s.radius) || !in_closed_cube(c + s.radius))
              throw InvalidArgument("manifold: l1 sphere leaves [-1,1]^d");
        } else {
          if (s.axis < 0 || s.axis >= dim_) throw InvalidArgument("manifold: hyperplane axis out of range");
          if (!in_closed_cube(s.offset)) throw InvalidArgument("manifold: hyperplane offset outside [-1,1]");
        }
      },
      shape_);
}

ManifoldDescriptor ManifoldDescriptor::point(std::vector<double> location) {
  const int d = static_cast<int>(location.size());
  return {PointManifold{std::move(location)}, d};
}

ManifoldDescriptor ManifoldDescriptor::l1_sphere(std::vector<double> center, double radius) {
  const int d = static_cast<int>(center.size());
  return {L1Sphere{std::move(center), radius}, d};
}

ManifoldDescriptor ManifoldDescriptor::axis_hyperplane(int dim, int axis, double offset) {
  return {AxisHyperplane{axis, offset}, dim};
}

ManifoldDescriptor ManifoldDescriptor::parse(std::string_view text, int dim) {
  const auto parts = split(text, ':');
  const auto kind = parts.front();
  if (kind == "point" && parts.size() == 2) return {PointManifold{parse_coords(parts[1], dim)}, dim};
  if ((kind == "l1sphere" || kind == "diamond") && parts.size() == 3)
    return {L1Sphere{parse_coords(parts[1], dim), parse_double(parts[2])}, dim};
  if (kind == "hyperplane" && parts.size() == 3) {
    const double axis = parse_double(parts[1]);
    if (axis != std::floor(axis)) throw InvalidArgument("manifold: hyperplane axis must be an integer");
    return {AxisHyperplane{static_cast<int>(axis), parse_double(parts[2])}, dim};
  }
  throw InvalidArgument("manifold: unsupported descriptor '" + std::string(text) +
                        "' (expected point:X, l1sphere:C:R or hyperplane:AXIS:OFFSET)");
}

std::string ManifoldDescriptor::to_string() const {
  std::ostringstream os;
  os.precision(17);
  auto coords = [&](const std::vector<double>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  };
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, PointManifold>) {
          os << "point:";
          coords(s.location);
        } else if constexpr (std::is_same_v<T, L1Sphere>) {
          os << "l1sphere:";
          coords(s.center);
          os << ":" << s.radius;
        } else {
          os << "hyperplane:" << s.axis << ":" << s.offset;
        }
      },
      shape_);
  return os.str();
}

}  // namespace cubflow
