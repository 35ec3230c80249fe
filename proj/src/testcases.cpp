#include "nsinv/testcases.hpp"

#include <cmath>

#include "nsinv/errors.hpp"

namespace nsinv {

namespace {

// Bubble (1 - x^2)^2 (1 - y^2)^2 that vanishes with its gradient on the boundary.
double bubble(double x, double y) {
  const double a = 1.0 - x * x, b = 1.0 - y * y;
  return a * a * b * b;
}

// d/dy and d/dx of the bubble.
double bubble_y(double x, double y) {
  const double a = 1.0 - x * x;
  return -4.0 * y * (1.0 - y * y) * a * a;
}
double bubble_x(double x, double y) {
  const double b = 1.0 - y * y;
  return -4.0 * x * (1.0 - x * x) * b * b;
}

/// Gaussian exp(-((x - cx)^2 + (y - cy)^2) / s).
struct Bump {
  double cx, cy, s;
  double operator()(double x, double y) const {
    return std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) / s);
  }
  double dx(double x, double y) const { return -2.0 * (x - cx) / s * (*this)(x, y); }
  double dy(double x, double y) const { return -2.0 * (y - cy) / s * (*this)(x, y); }
};

/// (d psi/dy, -d psi/dx) for psi = amp * bubble * sum_i w_i bump_i.
Eigen::Vector2d stream_velocity(double x, double y, double amp, std::initializer_list<std::pair<double, Bump>> terms) {
  double u1 = 0.0, u2 = 0.0;
  const double B = bubble(x, y), By = bubble_y(x, y), Bx = bubble_x(x, y);
  for (const auto& [w, g] : terms) {
    u1 += w * (By * g(x, y) + B * g.dy(x, y));
    u2 -= w * (Bx * g(x, y) + B * g.dx(x, y));
  }
  return {amp * u1, amp * u2};
}

/// Anisotropic Gaussian exp(-(((x - cx)/ax)^2 + ((y - cy)/ay)^2) / s).
double aniso(double x, double y, double cx, double cy, double ax, double ay, double s) {
  const double X = (x - cx) / ax, Y = (y - cy) / ay;
  return std::exp(-(X * X + Y * Y) / s);
}

// Test 1: both fields are single-bump stream-function flows.
constexpr Bump kTest1ForceBump{0.05, -0.05, 0.08};
constexpr Bump kTest1VelocityBump{0.0, 0.0, 0.12};
constexpr double kTest1Amplitude = 0.10;

// Test 2: isotropic-ish force blobs, two counter-rotating velocity bumps.
constexpr Bump kTest2BumpA{-0.25, 0.05, 0.14};
constexpr Bump kTest2BumpB{0.20, -0.18, 0.10};
constexpr double kTest2Amplitude = 0.08;
constexpr double kSecondBumpFactor = 0.85;

// Test 3: sharper, well separated velocity bumps.
constexpr Bump kTest3BumpA{-0.45, 0.35, 0.06};
constexpr Bump kTest3BumpB{0.45, -0.35, 0.05};
constexpr double kTest3Amplitude = 0.08;

}  // namespace

TestId parse_test_id(const std::string& s) {
  if (s == "test1" || s == "1") return TestId::test1;
  if (s == "test2" || s == "2") return TestId::test2;
  if (s == "test3" || s == "3") return TestId::test3;
  if (s == "custom") return TestId::custom;
  throw ConfigError("unknown test id '" + s + "' (expected test1, test2, test3 or custom)");
}

std::string to_string(TestId id) {
  switch (id) {
    case TestId::test1: return "test1";
    case TestId::test2: return "test2";
    case TestId::test3: return "test3";
    case TestId::custom: return "custom";
  }
  return "custom";
}

TestCase make_test_case(TestId id) {
  TestCase tc;
  tc.id = id;
  switch (id) {
    case TestId::test1:
      tc.force_def = [](double x, double y) { return stream_velocity(x, y, 1.0, {{1.0, kTest1ForceBump}}); };
      tc.u0_def = [](double x, double y) {
        return stream_velocity(x, y, kTest1Amplitude, {{1.0, kTest1VelocityBump}});
      };
      break;
    case TestId::test2:
      tc.force_def = [](double x, double y) {
        return Eigen::Vector2d(aniso(x, y, 0.0, 0.0, 0.30, 0.30, 1.0), aniso(x, y, 0.0, -0.20, 0.22, 0.28, 1.0));
      };
      tc.u0_def = [](double x, double y) {
        return stream_velocity(x, y, kTest2Amplitude, {{1.0, kTest2BumpA}, {-kSecondBumpFactor, kTest2BumpB}});
      };
      break;
    case TestId::test3:
      tc.force_def = [](double x, double y) {
        return Eigen::Vector2d(aniso(x, y, -0.04, 0.02, 0.28, 0.32, 0.95), aniso(x, y, 0.03, -0.18, 0.24, 0.30, 0.90));
      };
      tc.u0_def = [](double x, double y) {
        return stream_velocity(x, y, kTest3Amplitude, {{1.0, kTest3BumpA}, {-kSecondBumpFactor, kTest3BumpB}});
      };
      break;
    case TestId::custom:
      throw ConfigError("custom test cases are built from field files, not closed forms");
  }
  return tc;
}

double normalize_max_component(VectorField2& v) {
  const double m = std::max(v.u1.values.cwiseAbs().maxCoeff(), v.u2.values.cwiseAbs().maxCoeff());
  if (m == 0.0) return 1.0;
  v.u1.values /= m;
  v.u2.values /= m;
  return 1.0 / m;
}

SampledCase sample_case(const TestCase& tc, const GridPtr& grid) {
  SampledCase out;
  auto eval = [&](const PointField& f) {
    VectorField2 v(grid);
    for (int k = 0; k < grid->size(); ++k) {
      const Eigen::Vector2d p = f(grid->x(grid->col(k)), grid->y(grid->row(k)));
      v.u1.values[k] = p.x();
      v.u2.values[k] = p.y();
    }
    return v;
  };
  out.force = eval(tc.force_def);
  out.u0 = eval(tc.u0_def);
  if (tc.normalize) {
    out.force_scale = normalize_max_component(out.force);
    out.u0_scale = normalize_max_component(out.u0);
  }
  return out;
}

}  // namespace nsinv
