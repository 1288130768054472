#pragma once

// Parametrized admissible sources q = sum_j phi_j chi_{omega_j}.
//
// Shape families: ball/disk, axis-aligned ellipsoid, convex polygon (2D),
// axis-aligned box, concentric annulus, and corona (ball base with protruding
// tangent cones, one per apex; in 2D each protrusion is the tangent triangle).
// Indicators use the closed-set convention (1 on the shape boundary).
//
// Parameter packing, per layer, geometry first and intensity last:
//   ball      [c..., r, phi]
//   ellipsoid [c..., semiaxes..., phi]
//   polygon   [v0x, v0y, ..., phi]
//   box       [corner..., sides..., phi]
//   annulus   [c..., r_in, r_out, phi]
//   corona    [apex_1..., ..., apex_l..., phi]   (base and carve stay fixed)
// Multi-layer fields concatenate the per-layer blocks in layer order.

#include "blt/common.hpp"

#include <Eigen/Dense>

#include <optional>
#include <variant>

namespace blt {

template <int N>
struct BallShape {
    Vec<N> center = Vec<N>::Zero();
    double radius = 0.0;
};

template <int N>
struct EllipsoidShape {
    Vec<N> center = Vec<N>::Zero();
    Vec<N> semiaxes = Vec<N>::Zero();  // axis-aligned
};

struct PolygonShape {
    std::vector<Vec<2>> vertices;  // convex position, counterclockwise
};

template <int N>
struct BoxShape {
    Vec<N> corner = Vec<N>::Zero();  // min corner
    Vec<N> sides = Vec<N>::Zero();
};

template <int N>
struct AnnulusShape {
    Vec<N> center = Vec<N>::Zero();
    double inner_radius = 0.0;
    double outer_radius = 0.0;
};

// Ball base with strictly convex protruding cones, each the convex hull of an
// apex outside the base with the base ball. A sector of the base (2D) can be
// carved out; the carve is fixed data, not an optimization unknown.
template <int N>
struct CoronaShape {
    Vec<N> center = Vec<N>::Zero();
    double radius = 0.0;
    std::vector<Vec<N>> apexes;
    double carve_azimuth = 0.0;  // direction of the removed sector (2D)
    double carve_width = 0.0;    // full angular width; 0 disables the carve
};

template <int N>
using Shape = std::conditional_t<
    N == 2,
    std::variant<BallShape<2>, EllipsoidShape<2>, PolygonShape, BoxShape<2>, AnnulusShape<2>, CoronaShape<2>>,
    std::variant<BallShape<3>, EllipsoidShape<3>, BoxShape<3>, AnnulusShape<3>, CoronaShape<3>>>;

// ---------------------------------------------------------------------------
// Indicators

template <int N>
bool indicator(const BallShape<N>& s, const Vec<N>& p) {
    return (p - s.center).norm() <= s.radius;
}

template <int N>
bool indicator(const EllipsoidShape<N>& s, const Vec<N>& p) {
    double q = 0.0;
    for (int k = 0; k < N; ++k) q += sqr((p[k] - s.center[k]) / s.semiaxes[k]);
    return q <= 1.0;
}

inline bool indicator(const PolygonShape& s, const Vec<2>& p) {
    const std::size_t n = s.vertices.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec<2>&a = s.vertices[i], &b = s.vertices[(i + 1) % n];
        if (cross2(b - a, p - a) < 0.0) return false;
    }
    return true;
}

template <int N>
bool indicator(const BoxShape<N>& s, const Vec<N>& p) {
    for (int k = 0; k < N; ++k)
        if (p[k] < s.corner[k] || p[k] > s.corner[k] + s.sides[k]) return false;
    return true;
}

template <int N>
bool indicator(const AnnulusShape<N>& s, const Vec<N>& p) {
    double d = (p - s.center).norm();
    return d >= s.inner_radius && d <= s.outer_radius;
}

namespace detail {

// conv({apex} u B_r(c)) = B u { x : angle(x-a, u) <= alpha, 0 <= (x-a).u <= L^2/d }
// with d = |c-a|, L = sqrt(d^2-r^2), sin(alpha) = r/d.
template <int N>
bool in_tangent_cone(const Vec<N>& apex, const Vec<N>& center, double r, const Vec<N>& p) {
    const Vec<N> ca = center - apex;
    const double d = ca.norm();
    if (!(d > r)) return false;  // apex not strictly outside: no protrusion
    const double L2 = d * d - r * r;
    const Vec<N> u = ca / d;
    const Vec<N> pa = p - apex;
    const double t = pa.dot(u);
    if (t < 0.0 || t * d > L2) return false;
    const double cos_alpha = std::sqrt(L2) / d;
    return t >= pa.norm() * cos_alpha;
}

inline double angular_distance(double a, double b) {
    double d = std::fmod(std::abs(a - b), 2.0 * pi);
    return d > pi ? 2.0 * pi - d : d;
}

}  // namespace detail

template <int N>
bool indicator(const CoronaShape<N>& s, const Vec<N>& p) {
    bool in_base = (p - s.center).norm() <= s.radius;
    if (in_base && s.carve_width > 0.0) {
        if constexpr (N == 2) {
            const Vec<2> d = p - s.center;
            double az = std::atan2(d.y(), d.x());
            if (detail::angular_distance(az, s.carve_azimuth) <= 0.5 * s.carve_width) in_base = false;
        }
    }
    if (in_base) return true;
    for (const auto& a : s.apexes)
        if (detail::in_tangent_cone<N>(a, s.center, s.radius, p)) return true;
    return false;
}

template <int N>
bool indicator(const Shape<N>& s, const Vec<N>& p) {
    return std::visit([&](const auto& sh) { return indicator(sh, p); }, s);
}

// ---------------------------------------------------------------------------
// Shape helpers

template <int N>
bool shape_is_convex(const Shape<N>& s) {
    return std::visit(
        [](const auto& sh) {
            using T = std::decay_t<decltype(sh)>;
            return !std::is_same_v<T, AnnulusShape<N>> && !std::is_same_v<T, CoronaShape<N>>;
        },
        s);
}

// Radius of the smallest origin-centred ball certain to contain the shape
// (exact for all families except the ellipsoid, where it is an upper bound).
template <int N>
double bounding_radius_from_origin(const Shape<N>& s) {
    return std::visit(
        [](const auto& sh) -> double {
            using T = std::decay_t<decltype(sh)>;
            if constexpr (std::is_same_v<T, BallShape<N>>) {
                return sh.center.norm() + sh.radius;
            } else if constexpr (std::is_same_v<T, EllipsoidShape<N>>) {
                return sh.center.norm() + sh.semiaxes.maxCoeff();
            } else if constexpr (std::is_same_v<T, PolygonShape>) {
                double r = 0.0;
                for (const auto& v : sh.vertices) r = std::max(r, v.norm());
                return r;
            } else if constexpr (std::is_same_v<T, BoxShape<N>>) {
                double r = 0.0;
                for (int mask = 0; mask < (1 << N); ++mask) {
                    Vec<N> c = sh.corner;
                    for (int k = 0; k < N; ++k)
                        if (mask & (1 << k)) c[k] += sh.sides[k];
                    r = std::max(r, c.norm());
                }
                return r;
            } else if constexpr (std::is_same_v<T, AnnulusShape<N>>) {
                return sh.center.norm() + sh.outer_radius;
            } else {  // corona: hull extremes are the apexes and the base sphere
                double r = sh.center.norm() + sh.radius;
                for (const auto& a : sh.apexes) r = std::max(r, a.norm());
                return r;
            }
        },
        s);
}

// Ball (center, radius) containing the shape, for fast element rejection.
template <int N>
std::pair<Vec<N>, double> bounding_sphere(const Shape<N>& s) {
    return std::visit(
        [](const auto& sh) -> std::pair<Vec<N>, double> {
            using T = std::decay_t<decltype(sh)>;
            if constexpr (std::is_same_v<T, BallShape<N>>) {
                return {sh.center, sh.radius};
            } else if constexpr (std::is_same_v<T, EllipsoidShape<N>>) {
                return {sh.center, sh.semiaxes.maxCoeff()};
            } else if constexpr (std::is_same_v<T, PolygonShape>) {
                Vec<2> c = Vec<2>::Zero();
                for (const auto& v : sh.vertices) c += v;
                c /= double(sh.vertices.size());
                double r = 0.0;
                for (const auto& v : sh.vertices) r = std::max(r, (v - c).norm());
                return {c, r};
            } else if constexpr (std::is_same_v<T, BoxShape<N>>) {
                return {sh.corner + 0.5 * sh.sides, 0.5 * sh.sides.norm()};
            } else if constexpr (std::is_same_v<T, AnnulusShape<N>>) {
                return {sh.center, sh.outer_radius};
            } else {
                double r = sh.radius;
                for (const auto& a : sh.apexes) r = std::max(r, (a - sh.center).norm());
                return {sh.center, r};
            }
        },
        s);
}

// Points on the shape boundary, used by nesting/disjointness checks.
template <int N>
std::vector<Vec<N>> sample_boundary(const Shape<N>& s, int count) {
    std::vector<Vec<N>> pts;
    auto sphere_dirs = [count]() {
        std::vector<Vec<N>> dirs;
        if constexpr (N == 2) {
            for (int i = 0; i < count; ++i) {
                double a = 2.0 * pi * double(i) / count;
                dirs.emplace_back(Vec<2>(std::cos(a), std::sin(a)));
            }
        } else {
            for (int i = 0; i < count; ++i) {
                double z = 1.0 - 2.0 * (i + 0.5) / count;
                double rxy = std::sqrt(std::max(0.0, 1.0 - z * z));
                double a = 2.0 * pi * i * (1.0 - 1.0 / 1.61803398874989484820);
                dirs.emplace_back(Vec<3>(rxy * std::cos(a), rxy * std::sin(a), z));
            }
        }
        return dirs;
    };
    std::visit(
        [&](const auto& sh) {
            using T = std::decay_t<decltype(sh)>;
            if constexpr (std::is_same_v<T, BallShape<N>>) {
                for (const auto& d : sphere_dirs()) pts.push_back(sh.center + sh.radius * d);
            } else if constexpr (std::is_same_v<T, EllipsoidShape<N>>) {
                for (const auto& d : sphere_dirs()) pts.push_back(sh.center + sh.semiaxes.cwiseProduct(d));
            } else if constexpr (std::is_same_v<T, PolygonShape>) {
                const std::size_t n = sh.vertices.size();
                int per_edge = std::max(1, count / int(n));
                for (std::size_t i = 0; i < n; ++i)
                    for (int j = 0; j < per_edge; ++j) {
                        double t = double(j) / per_edge;
                        pts.push_back((1.0 - t) * sh.vertices[i] + t * sh.vertices[(i + 1) % n]);
                    }
            } else if constexpr (std::is_same_v<T, BoxShape<N>>) {
                if constexpr (N == 2) {
                    PolygonShape rect;
                    rect.vertices = {sh.corner, sh.corner + Vec<2>(sh.sides[0], 0),
                                     sh.corner + sh.sides, sh.corner + Vec<2>(0, sh.sides[1])};
                    Shape<2> tmp = rect;
                    pts = sample_boundary<2>(tmp, count);
                } else {
                    int g = std::max(2, int(std::round(std::sqrt(count / 6.0))));
                    for (int axis = 0; axis < 3; ++axis)
                        for (int side = 0; side < 2; ++side)
                            for (int i = 0; i < g; ++i)
                                for (int j = 0; j < g; ++j) {
                                    Vec<3> p = sh.corner;
                                    p[axis] += side * sh.sides[axis];
                                    int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
                                    p[a1] += sh.sides[a1] * (i + 0.5) / g;
                                    p[a2] += sh.sides[a2] * (j + 0.5) / g;
                                    pts.push_back(p);
                                }
                }
            } else if constexpr (std::is_same_v<T, AnnulusShape<N>>) {
                for (const auto& d : sphere_dirs()) {
                    pts.push_back(sh.center + sh.inner_radius * d);
                    pts.push_back(sh.center + sh.outer_radius * d);
                }
            } else {  // corona: base sphere plus apex-to-tangency segments
                for (const auto& d : sphere_dirs()) pts.push_back(sh.center + sh.radius * d);
                for (const auto& a : sh.apexes) {
                    pts.push_back(a);
                    const Vec<N> ca = sh.center - a;
                    const double d = ca.norm();
                    if (d > sh.radius) {
                        double L = std::sqrt(d * d - sh.radius * sh.radius);
                        // a few points along the lateral tangent lines
                        for (const auto& dir : sphere_dirs()) {
                            Vec<N> perp = dir - dir.dot(ca / d) * (ca / d);
                            double pn = perp.norm();
                            if (pn < 1e-12) continue;
                            Vec<N> lateral = (L / d) * (ca / d) + (sh.radius / d) * (perp / pn);
                            for (double t : {0.33, 0.66, 1.0}) pts.push_back(a + t * L * lateral);
                        }
                    }
                }
            }
        },
        s);
    return pts;
}

// "p lies in the shape eroded by margin m"; falls back to the plain indicator
// for the corona, where a cheap exact erosion is not available.
template <int N>
bool contains_with_margin(const Shape<N>& s, const Vec<N>& p, double m) {
    return std::visit(
        [&](const auto& sh) -> bool {
            using T = std::decay_t<decltype(sh)>;
            if constexpr (std::is_same_v<T, BallShape<N>>) {
                return (p - sh.center).norm() <= sh.radius - m;
            } else if constexpr (std::is_same_v<T, EllipsoidShape<N>>) {
                double q = 0.0;
                for (int k = 0; k < N; ++k) {
                    double a = sh.semiaxes[k] - m;
                    if (!(a > 0.0)) return false;
                    q += sqr((p[k] - sh.center[k]) / a);
                }
                return q <= 1.0;
            } else if constexpr (std::is_same_v<T, PolygonShape>) {
                const std::size_t n = sh.vertices.size();
                for (std::size_t i = 0; i < n; ++i) {
                    const Vec<2>&a = sh.vertices[i], &b = sh.vertices[(i + 1) % n];
                    double len = (b - a).norm();
                    if (len < 1e-300 || cross2(b - a, p - a) / len < m) return false;
                }
                return true;
            } else if constexpr (std::is_same_v<T, BoxShape<N>>) {
                for (int k = 0; k < N; ++k)
                    if (p[k] < sh.corner[k] + m || p[k] > sh.corner[k] + sh.sides[k] - m) return false;
                return true;
            } else if constexpr (std::is_same_v<T, AnnulusShape<N>>) {
                double d = (p - sh.center).norm();
                return d >= sh.inner_radius + m && d <= sh.outer_radius - m;
            } else {
                return indicator(sh, p);
            }
        },
        s);
}

// Structural invariants of a single shape. Returns a description of the first
// violation, or nothing when the shape is well formed.
template <int N>
std::optional<std::string> shape_invariant_violation(const Shape<N>& s) {
    return std::visit(
        [](const auto& sh) -> std::optional<std::string> {
            using T = std::decay_t<decltype(sh)>;
            if constexpr (std::is_same_v<T, BallShape<N>>) {
                if (!(sh.radius > 0.0)) return "ball radius must be positive";
            } else if constexpr (std::is_same_v<T, EllipsoidShape<N>>) {
                for (int k = 0; k < N; ++k)
                    if (!(sh.semiaxes[k] > 0.0)) return "ellipsoid semiaxes must be positive";
            } else if constexpr (std::is_same_v<T, PolygonShape>) {
                const std::size_t n = sh.vertices.size();
                if (n < 3) return "polygon needs at least 3 vertices";
                double area2 = 0.0;
                for (std::size_t i = 0; i < n; ++i)
                    area2 += cross2(sh.vertices[i], sh.vertices[(i + 1) % n]);
                if (!(area2 > 0.0)) return "polygon vertices must be counterclockwise";
                double scale = std::sqrt(area2);
                for (std::size_t i = 0; i < n; ++i) {
                    const Vec<2>&a = sh.vertices[i], &b = sh.vertices[(i + 1) % n],
                                &c = sh.vertices[(i + 2) % n];
                    if (cross2(b - a, c - b) < -1e-12 * scale * scale)
                        return "polygon vertices must be in convex position";
                }
            } else if constexpr (std::is_same_v<T, BoxShape<N>>) {
                for (int k = 0; k < N; ++k)
                    if (!(sh.sides[k] > 0.0)) return "box side lengths must be positive";
            } else if constexpr (std::is_same_v<T, AnnulusShape<N>>) {
                if (!(sh.inner_radius > 0.0)) return "annulus inner radius must be positive";
                if (!(sh.inner_radius < sh.outer_radius)) return "annulus requires r_in < r_out";
            } else {
                if (!(sh.radius > 0.0)) return "corona base radius must be positive";
                if (sh.apexes.empty()) return "corona needs at least one apex";
                for (const auto& a : sh.apexes)
                    if (!((a - sh.center).norm() > sh.radius))
                        return "corona apex must lie strictly outside the base";
                if (sh.carve_width < 0.0 || sh.carve_width >= 2.0 * pi)
                    return "corona carve width must lie in [0, 2*pi)";
            }
            return std::nullopt;
        },
        s);
}

// ---------------------------------------------------------------------------
// Source fields

enum class Representation { nested_sum, disjoint_layer };

template <int N>
struct SourceLayer {
    Shape<N> shape;
    double intensity = 0.0;
};

template <int N>
struct SourceField {
    std::vector<SourceLayer<N>> layers;  // nested: outermost first
    Representation rep = Representation::nested_sum;
};

template <int N>
double eval_source(const SourceField<N>& q, const Vec<N>& p) {
    if (q.rep == Representation::nested_sum) {
        double v = 0.0;
        for (const auto& l : q.layers)
            if (indicator<N>(l.shape, p)) v += l.intensity;
        return v;
    }
    for (const auto& l : q.layers)
        if (indicator<N>(l.shape, p)) return l.intensity;
    return 0.0;
}

// ---------------------------------------------------------------------------
// Admissibility checks

struct Violation {
    int layer = -1;
    std::string what;
};

template <int N>
struct DomainDesc {
    double radius = 0.0;            // Omega = B_radius(0)
    double dist_min = default_dist_min;
    double nest_margin = 1e-6;
};

namespace detail {

// Deterministic interior samples for the disjointness check.
template <int N>
std::vector<Vec<N>> sample_interior(const Shape<N>& s, int target) {
    auto [c, r] = bounding_sphere<N>(s);
    std::vector<Vec<N>> pts;
    std::uint64_t state = 0x243F6A8885A308D3ull;
    auto rnd = [&state]() {
        state += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        z ^= z >> 31;
        return double(z >> 11) * 0x1.0p-53;
    };
    for (int tries = 0; tries < 200 * target && int(pts.size()) < target; ++tries) {
        Vec<N> p;
        for (int k = 0; k < N; ++k) p[k] = c[k] + r * (2.0 * rnd() - 1.0);
        if (indicator<N>(s, p)) pts.push_back(p);
    }
    return pts;
}

}  // namespace detail

// Checks compact containment in Omega, nesting or disjointness, and the
// nonzero/distinct intensity conditions. Violations are data, not errors.
template <int N>
std::vector<Violation> validate(const SourceField<N>& q, const DomainDesc<N>& omega) {
    std::vector<Violation> out;
    if (q.layers.empty()) {
        out.push_back({-1, "source field has no layers"});
        return out;
    }
    for (std::size_t j = 0; j < q.layers.size(); ++j) {
        if (auto v = shape_invariant_violation<N>(q.layers[j].shape)) {
            out.push_back({int(j), *v});
            continue;
        }
        if (omega.radius > 0.0) {
            double br = bounding_radius_from_origin<N>(q.layers[j].shape);
            if (br > omega.radius - omega.dist_min)
                out.push_back({int(j), "layer support not compactly contained in the domain (margin " +
                                           std::to_string(omega.dist_min) + ")"});
        }
    }
    if (!out.empty()) return out;  // geometric checks below assume sane shapes

    if (q.rep == Representation::nested_sum) {
        for (std::size_t j = 0; j + 1 < q.layers.size(); ++j) {
            for (const auto& p : sample_boundary<N>(q.layers[j + 1].shape, 64))
                if (!contains_with_margin<N>(q.layers[j].shape, p, omega.nest_margin)) {
                    out.push_back({int(j + 1), "layer support not nested inside the previous layer"});
                    break;
                }
        }
        if (q.layers[0].intensity == 0.0) out.push_back({0, "leading intensity phi_1 must be nonzero"});
        for (std::size_t j = 0; j + 1 < q.layers.size(); ++j)
            if (q.layers[j].intensity == q.layers[j + 1].intensity)
                out.push_back({int(j + 1), "adjacent nested intensities must differ"});
    } else {
        for (std::size_t i = 0; i < q.layers.size(); ++i)
            for (std::size_t j = i + 1; j < q.layers.size(); ++j) {
                auto [ci, ri] = bounding_sphere<N>(q.layers[i].shape);
                auto [cj, rj] = bounding_sphere<N>(q.layers[j].shape);
                if ((ci - cj).norm() > ri + rj) continue;
                bool overlap = false;
                for (const auto& p : detail::sample_interior<N>(q.layers[i].shape, 128))
                    if (indicator<N>(q.layers[j].shape, p)) {
                        overlap = true;
                        break;
                    }
                if (overlap)
                    out.push_back({int(j), "disjoint-layer supports overlap (layers " + std::to_string(i) +
                                               ", " + std::to_string(j) + ")"});
            }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Representation conversions (prefix sums of intensities; concentric peels)

namespace detail {

template <int N>
bool concentric(const Vec<N>& a, const Vec<N>& b, double scale) {
    return (a - b).norm() <= 1e-12 * std::max(1.0, scale);
}

}  // namespace detail

// Nested field -> pairwise disjoint peels with values v_j = sum_{k<=j} phi_k.
// Only concentric ball nests have peels expressible in the shape algebra.
template <int N>
SourceField<N> to_disjoint_layers(const SourceField<N>& q) {
    if (q.rep == Representation::disjoint_layer) return q;
    SourceField<N> out;
    out.rep = Representation::disjoint_layer;
    if (q.layers.size() == 1) {
        out.layers = q.layers;
        return out;
    }
    double v = 0.0;
    for (std::size_t j = 0; j < q.layers.size(); ++j) {
        v += q.layers[j].intensity;
        const auto* ball = std::get_if<BallShape<N>>(&q.layers[j].shape);
        if (!ball) throw representation_error("to_disjoint_layers: only ball nests are convertible");
        if (j + 1 < q.layers.size()) {
            const auto* inner = std::get_if<BallShape<N>>(&q.layers[j + 1].shape);
            if (!inner || !detail::concentric<N>(ball->center, inner->center, ball->radius) ||
                !(inner->radius < ball->radius))
                throw representation_error("to_disjoint_layers: nest peel is not a concentric annulus");
            AnnulusShape<N> peel;
            peel.center = ball->center;
            peel.inner_radius = inner->radius;
            peel.outer_radius = ball->radius;
            out.layers.push_back({Shape<N>(peel), v});
        } else {
            out.layers.push_back({Shape<N>(*ball), v});
        }
    }
    return out;
}

// Disjoint concentric peels -> nested balls with phi_j = v_j - v_{j-1}.
template <int N>
SourceField<N> to_nested_sum(const SourceField<N>& q) {
    if (q.rep == Representation::nested_sum) return q;
    SourceField<N> out;
    out.rep = Representation::nested_sum;
    if (q.layers.size() == 1) {
        out.layers = q.layers;
        return out;
    }
    double prev = 0.0;
    for (std::size_t j = 0; j < q.layers.size(); ++j) {
        BallShape<N> ball;
        if (const auto* ann = std::get_if<AnnulusShape<N>>(&q.layers[j].shape)) {
            ball.center = ann->center;
            ball.radius = ann->outer_radius;
            // the next layer must continue exactly at the inner radius
            if (j + 1 >= q.layers.size())
                throw representation_error("to_nested_sum: annulus peel without an inner continuation");
            double next_outer = 0.0;
            Vec<N> next_center;
            if (const auto* nb = std::get_if<BallShape<N>>(&q.layers[j + 1].shape)) {
                next_outer = nb->radius;
                next_center = nb->center;
            } else if (const auto* na = std::get_if<AnnulusShape<N>>(&q.layers[j + 1].shape)) {
                next_outer = na->outer_radius;
                next_center = na->center;
            } else {
                throw representation_error("to_nested_sum: peels must be concentric annuli/balls");
            }
            if (!detail::concentric<N>(ann->center, next_center, ann->outer_radius) ||
                std::abs(next_outer - ann->inner_radius) > 1e-12 * std::max(1.0, ann->outer_radius))
                throw representation_error("to_nested_sum: peels are not a contiguous concentric onion");
        } else if (const auto* bl = std::get_if<BallShape<N>>(&q.layers[j].shape)) {
            if (j + 1 != q.layers.size())
                throw representation_error("to_nested_sum: ball peel must be innermost");
            ball = *bl;
        } else {
            throw representation_error("to_nested_sum: peels must be concentric annuli/balls");
        }
        out.layers.push_back({Shape<N>(ball), q.layers[j].intensity - prev});
        prev = q.layers[j].intensity;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Parameter packing

template <int N>
struct ParamVector {
    Eigen::VectorXd theta;
    SourceField<N> prototype;  // fixes the family, layer count and frozen data
};

enum class ParamKind { geometry, intensity };

namespace detail {

template <int N>
int shape_free_param_count(const Shape<N>& s) {
    return std::visit(
        [](const auto& sh) -> int {
            using T = std::decay_t<decltype(sh)>;
            if constexpr (std::is_same_v<T, BallShape<N>>) return N + 1;
            else if constexpr (std::is_same_v<T, EllipsoidShape<N>>) return 2 * N;
            else if constexpr (std::is_same_v<T, PolygonShape>) return 2 * int(sh.vertices.size());
            else if constexpr (std::is_same_v<T, BoxShape<N>>) return 2 * N;
            else if constexpr (std::is_same_v<T, AnnulusShape<N>>) return N + 2;
            else return N * int(sh.apexes.size());
        },
        s);
}

template <int N>
void pack_shape(const Shape<N>& s, double* out) {
    std::visit(
        [out](const auto& sh) {
            using T = std::decay_t<decltype(sh)>;
            int w = 0;
            if constexpr (std::is_same_v<T, BallShape<N>>) {
                for (int k = 0; k < N; ++k) out[w++] = sh.center[k];
                out[w++] = sh.radius;
            } else if constexpr (std::is_same_v<T, EllipsoidShape<N>>) {
                for (int k = 0; k < N; ++k) out[w++] = sh.center[k];
                for (int k = 0; k < N; ++k) out[w++] = sh.semiaxes[k];
            } else if constexpr (std::is_same_v<T, PolygonShape>) {
                for (const auto& v : sh.vertices) {
                    out[w++] = v.x();
                    out[w++] = v.y();
                }
            } else if constexpr (std::is_same_v<T, BoxShape<N>>) {
                for (int k = 0; k < N; ++k) out[w++] = sh.corner[k];
                for (int k = 0; k < N; ++k) out[w++] = sh.sides[k];
            } else if constexpr (std::is_same_v<T, AnnulusShape<N>>) {
                for (int k = 0; k < N; ++k) out[w++] = sh.center[k];
                out[w++] = sh.inner_radius;
                out[w++] = sh.outer_radius;
            } else {
                for (const auto& a : sh.apexes)
                    for (int k = 0; k < N; ++k) out[w++] = a[k];
            }
        },
        s);
}

template <int N>
void unpack_shape(Shape<N>& s, const double* in) {
    std::visit(
        [in](auto& sh) {
            using T = std::decay_t<decltype(sh)>;
            int w = 0;
            if constexpr (std::is_same_v<T, BallShape<N>>) {
                for (int k = 0; k < N; ++k) sh.center[k] = in[w++];
                sh.radius = in[w++];
            } else if constexpr (std::is_same_v<T, EllipsoidShape<N>>) {
                for (int k = 0; k < N; ++k) sh.center[k] = in[w++];
                for (int k = 0; k < N; ++k) sh.semiaxes[k] = in[w++];
            } else if constexpr (std::is_same_v<T, PolygonShape>) {
                for (auto& v : sh.vertices) {
                    v.x() = in[w++];
                    v.y() = in[w++];
                }
            } else if constexpr (std::is_same_v<T, BoxShape<N>>) {
                for (int k = 0; k < N; ++k) sh.corner[k] = in[w++];
                for (int k = 0; k < N; ++k) sh.sides[k] = in[w++];
            } else if constexpr (std::is_same_v<T, AnnulusShape<N>>) {
                for (int k = 0; k < N; ++k) sh.center[k] = in[w++];
                sh.inner_radius = in[w++];
                sh.outer_radius = in[w++];
            } else {
                for (auto& a : sh.apexes)
                    for (int k = 0; k < N; ++k) a[k] = in[w++];
            }
        },
        s);
}

}  // namespace detail

template <int N>
int param_count(const SourceField<N>& q) {
    int n = 0;
    for (const auto& l : q.layers) n += detail::shape_free_param_count<N>(l.shape) + 1;
    return n;
}

// Kind of each packed parameter, used to pick finite-difference step sizes.
template <int N>
std::vector<ParamKind> param_kinds(const SourceField<N>& q) {
    std::vector<ParamKind> kinds;
    for (const auto& l : q.layers) {
        int g = detail::shape_free_param_count<N>(l.shape);
        kinds.insert(kinds.end(), g, ParamKind::geometry);
        kinds.push_back(ParamKind::intensity);
    }
    return kinds;
}

template <int N>
ParamVector<N> pack_params(const SourceField<N>& q) {
    ParamVector<N> pv;
    pv.prototype = q;
    pv.theta.resize(param_count<N>(q));
    int w = 0;
    for (const auto& l : q.layers) {
        detail::pack_shape<N>(l.shape, pv.theta.data() + w);
        w += detail::shape_free_param_count<N>(l.shape);
        pv.theta[w++] = l.intensity;
    }
    return pv;
}

// Rebuilds a field from packed parameters without checking shape invariants.
template <int N>
SourceField<N> unpack_params_unchecked(const ParamVector<N>& pv) {
    SourceField<N> q = pv.prototype;
    if (pv.theta.size() != param_count<N>(q))
        throw validation_error("unpack_params: parameter vector length does not match the family layout");
    int w = 0;
    for (auto& l : q.layers) {
        detail::unpack_shape<N>(l.shape, pv.theta.data() + w);
        w += detail::shape_free_param_count<N>(l.shape);
        l.intensity = pv.theta[w++];
    }
    return q;
}

// Rebuilds a field, throwing validation_error naming the violated invariant.
template <int N>
SourceField<N> unpack_params(const ParamVector<N>& pv) {
    SourceField<N> q = unpack_params_unchecked<N>(pv);
    for (std::size_t j = 0; j < q.layers.size(); ++j)
        if (auto v = shape_invariant_violation<N>(q.layers[j].shape))
            throw validation_error("unpack_params: layer " + std::to_string(j) + ": " + *v);
    return q;
}

}  // namespace blt
