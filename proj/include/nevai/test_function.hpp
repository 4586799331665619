#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "nevai/error.hpp"

namespace nevai {

// Bounded continuous function with a declared sup-norm bound. Polynomials carry their
// degree (and usually an infinite bound).
class TestFunction {
 public:
  TestFunction(std::string name, std::function<double(double)> fn, double bound,
               std::optional<std::size_t> polynomial_degree = std::nullopt)
      : name_(std::move(name)), fn_(std::move(fn)), bound_(bound), degree_(polynomial_degree) {
    if (!(bound_ > 0.0)) throw ValidationError("test function '" + name_ + "': bound must be positive");
  }

  double operator()(double y) const {
    const double v = fn_(y);
    if (!std::isfinite(v) || std::abs(v) > bound_ * (1.0 + 1e-12)) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.17g", y);
      throw ValidationError("test function '" + name_ + "' violates its bound at y=" + buf);
    }
    return v;
  }

  const std::string& name() const { return name_; }
  double bound() const { return bound_; }
  bool bounded() const { return std::isfinite(bound_); }
  std::optional<std::size_t> polynomial_degree() const { return degree_; }
  bool is_polynomial() const { return degree_.has_value(); }

 private:
  std::string name_;
  std::function<double(double)> fn_;
  double bound_;
  std::optional<std::size_t> degree_;
};

namespace battery {

inline TestFunction one() {
  return {"one", [](double) { return 1.0; }, 1.0, 0};
}
inline TestFunction cauchy() {
  return {"cauchy", [](double y) { return 1.0 / (1.0 + y * y); }, 1.0};
}
inline TestFunction sine() {
  return {"sin", [](double y) { return std::sin(y); }, 1.0};
}
inline TestFunction arctan() {
  return {"atan", [](double y) { return std::atan(y); }, std::numbers::pi / 2.0};
}
// (2 + y^2) / (1 + y^2): between 1 and 2, so its reciprocal is bounded too.
inline TestFunction ratio() {
  return {"ratio", [](double y) { return (2.0 + y * y) / (1.0 + y * y); }, 2.0};
}

inline std::vector<TestFunction> all() { return {one(), cauchy(), sine(), arctan(), ratio()}; }

inline std::optional<TestFunction> by_name(const std::string& name) {
  for (TestFunction& f : all())
    if (f.name() == name) return f;
  return std::nullopt;
}

}  // namespace battery

inline TestFunction constant(double c) {
  return {"const", [c](double) { return c; }, std::max(std::abs(c), std::numeric_limits<double>::min()), 0};
}

// 1/g with the given bound on the reciprocal.
inline TestFunction reciprocal(const TestFunction& g, double bound) {
  auto fn = [g](double y) { return 1.0 / g(y); };
  return {"1/" + g.name(), fn, bound};
}

}  // namespace nevai
