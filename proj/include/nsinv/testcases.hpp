#pragma once

#include <functional>
#include <string>

#include <Eigen/Dense>

#include "nsinv/grid.hpp"

namespace nsinv {

enum class TestId { test1, test2, test3, custom };

TestId parse_test_id(const std::string& s);
std::string to_string(TestId id);

using PointField = std::function<Eigen::Vector2d(double x, double y)>;

/// Closed-form body force and initial velocity. The velocity fields of the
/// built-in cases come from stream functions and are divergence-free.
struct TestCase {
  TestId id = TestId::custom;
  PointField force_def;
  PointField u0_def;
  /// Scale each vector field so that its largest nodal component magnitude is 1.
  bool normalize = true;
};

TestCase make_test_case(TestId id);

struct SampledCase {
  VectorField2 force;
  VectorField2 u0;
  /// Factors applied by the normalization (1 when disabled).
  double force_scale = 1.0;
  double u0_scale = 1.0;
};

SampledCase sample_case(const TestCase& tc, const GridPtr& grid);

/// Divides both components by max over nodes of max(|v1|, |v2|). Returns the
/// factor used (1 / max), or 1 when the field vanishes.
double normalize_max_component(VectorField2& v);

}  // namespace nsinv
