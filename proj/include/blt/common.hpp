#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace blt {

template <int N>
using Vec = Eigen::Matrix<double, N, 1>;

// Relative tolerance for "lies on the sphere |x| = R" predicates.
inline constexpr double tol_geom_rel = 1e-9;

// Default margin for compact containment of a source support in the domain.
inline constexpr double default_dist_min = 0.1;

inline constexpr double pi = 3.14159265358979323846;

struct error : std::runtime_error {
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid geometry input (point off mesh, sensor not locatable, ...).
struct geometry_error : error {
    using error::error;
};

// Mesh construction / validation failure.
struct mesh_error : error {
    using error::error;
};

// Requested discretization exceeds the configured resource caps.
struct resource_error : error {
    using error::error;
};

// A domain precondition was violated (out-of-range argument, unresolvable point).
struct domain_error : error {
    using error::error;
};

// A value-level invariant was violated (shape parameters, config contents).
struct validation_error : error {
    using error::error;
};

// Two source-field representations cannot be converted into each other.
struct representation_error : error {
    using error::error;
};

// Linear solver failed (non-convergence, indefinite matrix).
struct solver_error : error {
    using error::error;
};

// A quadrature did not reach its requested tolerance.
struct accuracy_error : error {
    using error::error;
};

// Malformed input file.
struct parse_error : error {
    using error::error;
};

// Bad experiment configuration (unknown keys, missing fields, bad values).
struct config_error : error {
    using error::error;
};

inline double sqr(double x) { return x * x; }

// z-component of the 2D cross product.
inline double cross2(const Vec<2>& a, const Vec<2>& b) { return a.x() * b.y() - a.y() * b.x(); }

}  // namespace blt
