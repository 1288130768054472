#pragma once

// Boundary sensor placement: equiangular on the circle, Fibonacci lattice on
// the sphere. Each sensor is bound to the boundary facet its radial ray hits,
// with barycentric weights for linear interpolation of nodal fields.

#include "blt/mesh.hpp"

#include <Eigen/Dense>

namespace blt {

template <int N>
struct SensorSet {
    std::vector<Vec<N>> points;                       // on the true sphere |x| = R
    std::vector<int> facet;                           // containing boundary facet
    std::vector<std::array<double, N>> barycentric;   // weights on that facet
    const Mesh<N>* mesh = nullptr;                    // mesh the facet binding refers to

    int count() const { return static_cast<int>(points.size()); }
};

namespace detail {

// Intersects the ray t*dir (t > 0) with a boundary facet; returns barycentric
// weights if hit.
template <int N>
bool ray_facet_hit(const Mesh<N>& m, const std::array<int, N>& f, const Vec<N>& dir,
                   std::array<double, N>& bary) {
    constexpr double eps = 1e-12;
    if constexpr (N == 2) {
        const Vec<2>&a = m.nodes[f[0]], &b = m.nodes[f[1]];
        // a + s(b-a) = t dir
        Eigen::Matrix2d M;
        M.col(0) = b - a;
        M.col(1) = -dir;
        if (std::abs(M.determinant()) < 1e-14) return false;
        Eigen::Vector2d st = M.inverse() * (-a);
        double s = st[0], t = st[1];
        if (t <= 0.0 || s < -eps || s > 1.0 + eps) return false;
        s = std::clamp(s, 0.0, 1.0);
        bary = {1.0 - s, s};
        return true;
    } else {
        const Vec<3>&a = m.nodes[f[0]], &b = m.nodes[f[1]], &c = m.nodes[f[2]];
        Eigen::Matrix3d M;
        M.col(0) = b - a;
        M.col(1) = c - a;
        M.col(2) = -dir;
        if (std::abs(M.determinant()) < 1e-18) return false;
        Eigen::Vector3d uvt = M.inverse() * (-a);
        double u = uvt[0], v = uvt[1], t = uvt[2];
        if (t <= 0.0 || u < -eps || v < -eps || u + v > 1.0 + eps) return false;
        u = std::max(u, 0.0);
        v = std::max(v, 0.0);
        double w = std::max(1.0 - u - v, 0.0);
        double s = u + v + w;
        bary = {w / s, u / s, v / s};
        return true;
    }
}

}  // namespace detail

// M equiangular sensors on the circle (2D) or a Fibonacci lattice on the
// sphere (3D), at radius R, bound to the mesh's boundary facets.
template <int N>
SensorSet<N> boundary_sensors(double R, int M, const Mesh<N>& mesh) {
    if (M < 1) throw validation_error("boundary_sensors: M must be >= 1");
    if (!(R > 0.0)) throw validation_error("boundary_sensors: R must be positive");
    SensorSet<N> s;
    s.mesh = &mesh;
    s.points.reserve(M);
    for (int i = 0; i < M; ++i) {
        if constexpr (N == 2) {
            double a = 2.0 * pi * double(i) / double(M);
            s.points.emplace_back(Vec<2>(R * std::cos(a), R * std::sin(a)));
        } else {
            // golden-angle spiral, z from +1 to -1 at cell midpoints
            double z = 1.0 - 2.0 * (double(i) + 0.5) / double(M);
            double rxy = std::sqrt(std::max(0.0, 1.0 - z * z));
            double a = 2.0 * pi * double(i) * (1.0 - 1.0 / 1.61803398874989484820);
            s.points.emplace_back(Vec<3>(R * rxy * std::cos(a), R * rxy * std::sin(a), R * z));
        }
    }
    // angular prefilter: a facet can only contain directions close to its centroid direction
    const int F = mesh.facet_count();
    std::vector<Vec<N>> cdir(F);
    std::vector<double> min_cos(F);
    for (int fi = 0; fi < F; ++fi) {
        const auto& f = mesh.boundary_facets[fi];
        Vec<N> c = Vec<N>::Zero();
        for (int k = 0; k < N; ++k) c += mesh.nodes[f[k]];
        cdir[fi] = c.normalized();
        double mc = 1.0;
        for (int k = 0; k < N; ++k) mc = std::min(mc, cdir[fi].dot(mesh.nodes[f[k]].normalized()));
        min_cos[fi] = mc - 1e-3;
    }
    s.facet.resize(M, -1);
    s.barycentric.resize(M);
    for (int i = 0; i < M; ++i) {
        Vec<N> dir = s.points[i] / R;
        for (int fi = 0; fi < F; ++fi) {
            if (dir.dot(cdir[fi]) < min_cos[fi]) continue;
            std::array<double, N> bary;
            if (detail::ray_facet_hit<N>(mesh, mesh.boundary_facets[fi], dir, bary)) {
                s.facet[i] = fi;
                s.barycentric[i] = bary;
                break;
            }
        }
        if (s.facet[i] < 0)
            throw geometry_error("boundary_sensors: sensor " + std::to_string(i) +
                                 " not locatable in any boundary facet");
    }
    return s;
}

}  // namespace blt
