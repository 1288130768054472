#pragma once

// Simplicial meshes of the disk/ball B_R(0): structured generators, uniform
// refinement with radial boundary projection, validation, and quality stats.

#include "blt/common.hpp"

#include <algorithm>
#include <cstdint>
#include <map>
#include <unordered_map>
#include <utility>

namespace blt {

template <int N>
struct Mesh {
    static_assert(N == 2 || N == 3, "only planar and spatial meshes are supported");

    std::vector<Vec<N>> nodes;
    std::vector<std::array<int, N + 1>> elements;        // positively oriented simplices
    std::vector<std::array<int, N>> boundary_facets;     // outward-oriented boundary simplices
    std::vector<int> element_region_tag;                 // one tag per element
    double boundary_radius = 0.0;                        // > 0 when the boundary is |x| = R

    int node_count() const { return static_cast<int>(nodes.size()); }
    int element_count() const { return static_cast<int>(elements.size()); }
    int facet_count() const { return static_cast<int>(boundary_facets.size()); }
};

// Hard caps; generators refuse to build anything larger.
inline constexpr int max_mesh_elements = 4'000'000;

template <int N>
double signed_volume(const Mesh<N>& m, const std::array<int, N + 1>& e) {
    if constexpr (N == 2) {
        const Vec<2>&a = m.nodes[e[0]], &b = m.nodes[e[1]], &c = m.nodes[e[2]];
        return 0.5 * cross2(b - a, c - a);
    } else {
        const Vec<3>&a = m.nodes[e[0]], &b = m.nodes[e[1]], &c = m.nodes[e[2]], &d = m.nodes[e[3]];
        return (b - a).cross(c - a).dot(d - a) / 6.0;
    }
}

template <int N>
Vec<N> element_centroid(const Mesh<N>& m, int ei) {
    Vec<N> c = Vec<N>::Zero();
    for (int k = 0; k <= N; ++k) c += m.nodes[m.elements[ei][k]];
    return c / double(N + 1);
}

// Length (2D) or area (3D) of a boundary facet.
template <int N>
double facet_measure(const Mesh<N>& m, const std::array<int, N>& f) {
    if constexpr (N == 2) {
        return (m.nodes[f[1]] - m.nodes[f[0]]).norm();
    } else {
        return 0.5 * (m.nodes[f[1]] - m.nodes[f[0]]).cross(m.nodes[f[2]] - m.nodes[f[0]]).norm();
    }
}

template <int N>
double max_edge_length(const Mesh<N>& m) {
    double h = 0.0;
    for (const auto& e : m.elements)
        for (int a = 0; a <= N; ++a)
            for (int b = a + 1; b <= N; ++b)
                h = std::max(h, (m.nodes[e[a]] - m.nodes[e[b]]).norm());
    return h;
}

// Smallest interior angle of a triangle, in degrees.
inline double min_angle_deg(const Vec<2>& a, const Vec<2>& b, const Vec<2>& c) {
    auto ang = [](const Vec<2>& u, const Vec<2>& v) {
        return std::atan2(std::abs(cross2(u, v)), u.dot(v));
    };
    double t = std::min({ang(b - a, c - a), ang(c - b, a - b), ang(a - c, b - c)});
    return t * 180.0 / pi;
}

// Normalized radius ratio of a tetrahedron: 3*inradius/circumradius (1 for regular).
inline double radius_ratio(const Vec<3>& a, const Vec<3>& b, const Vec<3>& c, const Vec<3>& d) {
    double vol = (b - a).cross(c - a).dot(d - a) / 6.0;
    if (vol <= 0.0) return 0.0;
    auto tri_area = [](const Vec<3>& p, const Vec<3>& q, const Vec<3>& r) {
        return 0.5 * (q - p).cross(r - p).norm();
    };
    double area_sum = tri_area(b, c, d) + tri_area(a, c, d) + tri_area(a, b, d) + tri_area(a, b, c);
    double r_in = 3.0 * vol / area_sum;
    // Circumcenter from the linear system |x-a|^2 = |x-b|^2 = ...
    Eigen::Matrix3d M;
    Eigen::Vector3d rhs;
    M.row(0) = (b - a).transpose();
    M.row(1) = (c - a).transpose();
    M.row(2) = (d - a).transpose();
    rhs << 0.5 * (b.squaredNorm() - a.squaredNorm()), 0.5 * (c.squaredNorm() - a.squaredNorm()),
        0.5 * (d.squaredNorm() - a.squaredNorm());
    Vec<3> cc = M.fullPivLu().solve(rhs);
    double r_circ = (cc - a).norm();
    return r_circ > 0.0 ? 3.0 * r_in / r_circ : 0.0;
}

template <int N>
double min_quality(const Mesh<N>& m) {
    double q = 1e300;
    for (const auto& e : m.elements) {
        if constexpr (N == 2)
            q = std::min(q, min_angle_deg(m.nodes[e[0]], m.nodes[e[1]], m.nodes[e[2]]));
        else
            q = std::min(q, radius_ratio(m.nodes[e[0]], m.nodes[e[1]], m.nodes[e[2]], m.nodes[e[3]]));
    }
    return q;
}

template <int N>
double mesh_volume(const Mesh<N>& m) {
    double v = 0.0;
    for (const auto& e : m.elements) v += signed_volume<N>(m, e);
    return v;
}

namespace detail {

// Facets of one element, each sorted, with multiplicity counted across the mesh.
template <int N>
std::map<std::array<int, N>, int> facet_multiplicity(const Mesh<N>& m) {
    std::map<std::array<int, N>, int> count;
    for (const auto& e : m.elements) {
        for (int skip = 0; skip <= N; ++skip) {
            std::array<int, N> f;
            int w = 0;
            for (int k = 0; k <= N; ++k)
                if (k != skip) f[w++] = e[k];
            std::sort(f.begin(), f.end());
            ++count[f];
        }
    }
    return count;
}

}  // namespace detail

// Checks every structural invariant; throws mesh_error describing the first failure.
template <int N>
void validate_mesh(const Mesh<N>& m) {
    if (m.nodes.empty() || m.elements.empty()) throw mesh_error("validate_mesh: empty mesh");
    if (m.element_region_tag.size() != m.elements.size())
        throw mesh_error("validate_mesh: region tag count mismatch");
    const int nn = m.node_count();
    for (const auto& e : m.elements)
        for (int k = 0; k <= N; ++k)
            if (e[k] < 0 || e[k] >= nn) throw mesh_error("validate_mesh: element node index out of range");
    for (const auto& f : m.boundary_facets)
        for (int k = 0; k < N; ++k)
            if (f[k] < 0 || f[k] >= nn) throw mesh_error("validate_mesh: facet node index out of range");
    for (const auto& p : m.nodes)
        if (!p.allFinite()) throw mesh_error("validate_mesh: non-finite node coordinates");

    for (std::size_t i = 0; i < m.elements.size(); ++i)
        if (!(signed_volume<N>(m, m.elements[i]) > 0.0))
            throw mesh_error("validate_mesh: non-positive volume in element " + std::to_string(i));

    // Boundary facets must be exactly the once-shared element facets.
    auto mult = detail::facet_multiplicity<N>(m);
    std::map<std::array<int, N>, int> boundary_sorted;
    for (const auto& f : m.boundary_facets) {
        std::array<int, N> s = f;
        std::sort(s.begin(), s.end());
        ++boundary_sorted[s];
    }
    int once = 0;
    for (const auto& [f, c] : mult) {
        if (c == 1) {
            ++once;
            if (!boundary_sorted.count(f)) throw mesh_error("validate_mesh: boundary facet missing from list");
        } else if (c != 2) {
            throw mesh_error("validate_mesh: facet shared by more than two elements");
        }
    }
    if (once != m.facet_count()) throw mesh_error("validate_mesh: stored boundary facet list mismatch");

    // Watertightness: each (N-2)-face of the boundary is shared by exactly two facets.
    std::map<std::array<int, N - 1>, int> ridge;
    for (const auto& f : m.boundary_facets) {
        for (int skip = 0; skip < N; ++skip) {
            std::array<int, N - 1> r;
            int w = 0;
            for (int k = 0; k < N; ++k)
                if (k != skip) r[w++] = f[k];
            std::sort(r.begin(), r.end());
            ++ridge[r];
        }
    }
    for (const auto& [r, c] : ridge)
        if (c != 2) throw mesh_error("validate_mesh: boundary is not watertight");

    if (m.boundary_radius > 0.0) {
        const double R = m.boundary_radius, tol = tol_geom_rel * R;
        for (const auto& f : m.boundary_facets)
            for (int k = 0; k < N; ++k)
                if (std::abs(m.nodes[f[k]].norm() - R) > tol)
                    throw mesh_error("validate_mesh: boundary node off the sphere |x| = R");
    }
}

// Quality floors for generated meshes: 20 degrees (2D), radius ratio 0.2 (3D).
template <int N>
void assert_quality_floors(const Mesh<N>& m) {
    const double q = min_quality(m);
    const double floor = (N == 2) ? 20.0 : 0.2;
    if (q < floor)
        throw mesh_error("mesh quality " + std::to_string(q) + " below floor " + std::to_string(floor));
}

// ---------------------------------------------------------------------------
// Generators

// Triangulation of B_R(0) from concentric rings of 6k nodes zipped by angle.
// Ring radii are R*k/K with K = ceil(R/h); each ring listed in `interface_radii`
// snaps the nearest ring onto it so piecewise media lines up with element edges.
inline Mesh<2> build_disk_mesh(double R, double h, const std::vector<double>& interface_radii = {}) {
    if (!(R > 0.0) || !(h > 0.0) || !(h < R)) throw mesh_error("build_disk_mesh: requires 0 < h < R");
    const int K = std::max(1, static_cast<int>(std::ceil(R / h)));
    if (6.0 * double(K) * double(K) > max_mesh_elements)
        throw resource_error("build_disk_mesh: h too small, element cap exceeded");

    std::vector<double> radius(K + 1);
    for (int k = 0; k <= K; ++k) radius[k] = R * double(k) / double(K);
    for (double ri : interface_radii) {
        if (!(ri > 0.0) || !(ri < R)) throw mesh_error("build_disk_mesh: interface radius outside (0, R)");
        int best = 1;
        for (int k = 1; k < K; ++k)
            if (std::abs(radius[k] - ri) < std::abs(radius[best] - ri)) best = k;
        radius[best] = ri;
    }

    Mesh<2> m;
    m.boundary_radius = R;
    m.nodes.emplace_back(Vec<2>::Zero());
    std::vector<int> ring_start(K + 1, 0);
    for (int k = 1; k <= K; ++k) {
        ring_start[k] = m.node_count();
        const int nk = 6 * k;
        for (int j = 0; j < nk; ++j) {
            double a = 2.0 * pi * double(j) / double(nk);
            m.nodes.emplace_back(Vec<2>(radius[k] * std::cos(a), radius[k] * std::sin(a)));
        }
    }

    auto add_tri = [&m](int a, int b, int c) {
        m.elements.push_back({a, b, c});
    };
    // center fan
    for (int j = 0; j < 6; ++j) add_tri(ring_start[1] + j, ring_start[1] + (j + 1) % 6, 0);
    // bands: advance whichever ring's next node comes first in angle
    for (int k = 2; k <= K; ++k) {
        const int ni = 6 * (k - 1), no = 6 * k;
        auto inner = [&](int i) { return ring_start[k - 1] + (i % ni); };
        auto outer = [&](int o) { return ring_start[k] + (o % no); };
        int i = 0, o = 0;
        while (i < ni || o < no) {
            bool take_outer;
            if (o == no) take_outer = false;
            else if (i == ni) take_outer = true;
            else take_outer = double(o + 1) / no <= double(i + 1) / ni;
            if (take_outer) {
                add_tri(outer(o), outer(o + 1), inner(i));
                ++o;
            } else {
                add_tri(inner(i + 1), inner(i), outer(o));
                ++i;
            }
        }
    }
    const int nb = 6 * K;
    for (int j = 0; j < nb; ++j)
        m.boundary_facets.push_back({ring_start[K] + j, ring_start[K] + (j + 1) % nb});
    m.element_region_tag.assign(m.elements.size(), 0);
    validate_mesh(m);
    assert_quality_floors(m);
    return m;
}

template <int N>
Mesh<N> refine_uniform(const Mesh<N>& m);

// Tetrahedralization of B_R(0): an octahedron template refined uniformly with
// radial projection until max edge <= 1.2*h and the polyhedral volume is
// within 2% of (4/3)*pi*R^3.
inline Mesh<3> build_ball_mesh(double R, double h) {
    if (!(R > 0.0) || !(h > 0.0) || !(h < R)) throw mesh_error("build_ball_mesh: requires 0 < h < R");
    if (h > 0.5 * R)
        throw mesh_error("build_ball_mesh: h > R/2 cannot resolve the ball geometry (quality policy)");

    Mesh<3> m;
    m.boundary_radius = R;
    m.nodes = {Vec<3>::Zero(),   Vec<3>(R, 0, 0),  Vec<3>(-R, 0, 0), Vec<3>(0, R, 0),
               Vec<3>(0, -R, 0), Vec<3>(0, 0, R),  Vec<3>(0, 0, -R)};
    const int X[2] = {1, 2}, Y[2] = {3, 4}, Z[2] = {5, 6};
    for (int sx = 0; sx < 2; ++sx)
        for (int sy = 0; sy < 2; ++sy)
            for (int sz = 0; sz < 2; ++sz) {
                std::array<int, 4> t = {0, X[sx], Y[sy], Z[sz]};
                if (signed_volume<3>(m, t) < 0.0) std::swap(t[2], t[3]);
                m.elements.push_back(t);
                std::array<int, 3> f = {t[1], t[2], t[3]};
                m.boundary_facets.push_back(f);
            }
    m.element_region_tag.assign(m.elements.size(), 0);

    const double exact_vol = 4.0 / 3.0 * pi * R * R * R;
    while (max_edge_length(m) > 1.2 * h || std::abs(mesh_volume(m) - exact_vol) > 0.02 * exact_vol) {
        if (8.0 * m.element_count() > max_mesh_elements)
            throw resource_error("build_ball_mesh: h too small, element cap exceeded");
        m = refine_uniform<3>(m);
    }
    validate_mesh(m);
    assert_quality_floors(m);
    return m;
}

namespace detail {

struct EdgeKeyHash {
    std::size_t operator()(std::uint64_t k) const { return std::hash<std::uint64_t>()(k); }
};

inline std::uint64_t edge_key(int a, int b) {
    if (a > b) std::swap(a, b);
    return (std::uint64_t(std::uint32_t(a)) << 32) | std::uint32_t(b);
}

}  // namespace detail

// Splits every simplex into 2^N children (midpoint refinement; the interior
// octahedron of a tet is cut along its shortest diagonal). Boundary nodes are
// projected back onto |x| = R afterwards.
template <int N>
Mesh<N> refine_uniform(const Mesh<N>& m) {
    if (double(m.element_count()) * (1 << N) > max_mesh_elements)
        throw resource_error("refine_uniform: element cap exceeded");

    Mesh<N> r;
    r.boundary_radius = m.boundary_radius;
    r.nodes = m.nodes;
    std::unordered_map<std::uint64_t, int, detail::EdgeKeyHash> mid;
    auto midpoint = [&](int a, int b) {
        auto key = detail::edge_key(a, b);
        auto it = mid.find(key);
        if (it != mid.end()) return it->second;
        int idx = r.node_count();
        r.nodes.emplace_back(0.5 * (r.nodes[a] + r.nodes[b]));
        mid.emplace(key, idx);
        return idx;
    };

    r.elements.reserve(std::size_t(m.element_count()) << N);
    for (std::size_t ei = 0; ei < m.elements.size(); ++ei) {
        const auto& e = m.elements[ei];
        const int tag = m.element_region_tag[ei];
        auto push = [&](std::array<int, N + 1> t) {
            if (signed_volume<N>(r, t) < 0.0) std::swap(t[N - 1], t[N]);
            r.elements.push_back(t);
            r.element_region_tag.push_back(tag);
        };
        if constexpr (N == 2) {
            int m01 = midpoint(e[0], e[1]), m12 = midpoint(e[1], e[2]), m02 = midpoint(e[0], e[2]);
            push({e[0], m01, m02});
            push({e[1], m12, m01});
            push({e[2], m02, m12});
            push({m01, m12, m02});
        } else {
            int m01 = midpoint(e[0], e[1]), m02 = midpoint(e[0], e[2]), m03 = midpoint(e[0], e[3]);
            int m12 = midpoint(e[1], e[2]), m13 = midpoint(e[1], e[3]), m23 = midpoint(e[2], e[3]);
            push({e[0], m01, m02, m03});
            push({e[1], m01, m12, m13});
            push({e[2], m02, m12, m23});
            push({e[3], m03, m13, m23});
            // interior octahedron: pick the shortest of the three diagonals
            struct Diag { int a, b; std::array<int, 4> ring; };
            const Diag diags[3] = {
                {m01, m23, {m02, m03, m13, m12}},
                {m02, m13, {m01, m03, m23, m12}},
                {m03, m12, {m01, m02, m23, m13}},
            };
            int best = 0;
            double best_len = 1e300;
            for (int d = 0; d < 3; ++d) {
                double len = (r.nodes[diags[d].a] - r.nodes[diags[d].b]).norm();
                if (len < best_len - 1e-14 * (1.0 + best_len)) {
                    best_len = len;
                    best = d;
                }
            }
            const Diag& dg = diags[best];
            for (int k = 0; k < 4; ++k)
                push({dg.a, dg.b, dg.ring[k], dg.ring[(k + 1) % 4]});
        }
    }

    for (const auto& f : m.boundary_facets) {
        if constexpr (N == 2) {
            int mm = midpoint(f[0], f[1]);
            r.boundary_facets.push_back({f[0], mm});
            r.boundary_facets.push_back({mm, f[1]});
        } else {
            int m01 = midpoint(f[0], f[1]), m12 = midpoint(f[1], f[2]), m02 = midpoint(f[0], f[2]);
            r.boundary_facets.push_back({f[0], m01, m02});
            r.boundary_facets.push_back({f[1], m12, m01});
            r.boundary_facets.push_back({f[2], m02, m12});
            r.boundary_facets.push_back({m01, m12, m02});
        }
    }

    if (r.boundary_radius > 0.0) {
        const double R = r.boundary_radius;
        std::vector<char> on_boundary(r.nodes.size(), 0);
        for (const auto& f : r.boundary_facets)
            for (int k = 0; k < N; ++k) on_boundary[f[k]] = 1;
        for (std::size_t i = 0; i < r.nodes.size(); ++i)
            if (on_boundary[i]) r.nodes[i] *= R / r.nodes[i].norm();
    }
    validate_mesh(r);
    return r;
}

}  // namespace blt
