#pragma once

// P1 finite-element discretization of the stationary diffusion problem
//
//     -div(D grad u) + mu u = q   in Omega,   u + 2 D du/dn = g-   on the boundary,
//
// in weak form:  int D grad u.grad v + mu u v dx + 1/2 bint u v ds
//                  = int q v dx + 1/2 bint g- v ds.
//
// The boundary measurement is g = -D du/dn = (u - g-)/2, sampled at sensors by
// linear interpolation on the containing boundary facet.

#include "blt/media.hpp"
#include "blt/mesh.hpp"
#include "blt/sensors.hpp"
#include "blt/source.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/IterativeLinearSolvers>

#include <memory>

namespace blt {

template <int N>
struct BoundaryDatum {
    enum class Kind { zero, coordinate } kind = Kind::zero;
    int axis = 0;

    double operator()(const Vec<N>& p) const {
        return kind == Kind::zero ? 0.0 : p[axis];
    }
    bool is_zero() const { return kind == Kind::zero; }
};

// Direct factorization up to this many unknowns, Jacobi-preconditioned CG above.
inline constexpr int direct_solver_node_limit = 200'000;

template <int N>
struct AssembledSystem {
    Eigen::SparseMatrix<double> A;   // stiffness(D) + mass(mu) + 1/2 boundary mass
    const Mesh<N>* mesh = nullptr;
    const MediaMap<N>* media = nullptr;
    std::unique_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> direct;
    bool use_cg = false;
};

template <int N>
struct FieldSolution {
    Eigen::VectorXd u;  // nodal values
    const Mesh<N>* mesh = nullptr;
};

template <int N>
struct BoundaryMeasurement {
    const SensorSet<N>* sensors = nullptr;
    Eigen::VectorXd values;
};

// Largest |A - A^T| entry relative to the largest |A| entry (symmetry check).
inline double asymmetry(const Eigen::SparseMatrix<double>& A) {
    Eigen::SparseMatrix<double> d = Eigen::SparseMatrix<double>(A.transpose()) - A;
    double amax = 0.0;
    for (int k = 0; k < A.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it)
            amax = std::max(amax, std::abs(it.value()));
    double dmax = 0.0;
    for (int k = 0; k < d.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(d, k); it; ++it)
            dmax = std::max(dmax, std::abs(it.value()));
    return amax > 0.0 ? dmax / amax : 0.0;
}

template <int N>
AssembledSystem<N> assemble(const Mesh<N>& mesh, const MediaMap<N>& media) {
    const int nn = mesh.node_count();
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(std::size_t(mesh.element_count()) * (N + 1) * (N + 1) +
                 std::size_t(mesh.facet_count()) * N * N);

    for (int ei = 0; ei < mesh.element_count(); ++ei) {
        const auto& e = mesh.elements[ei];
        const double vol = signed_volume<N>(mesh, e);
        if (!(vol > 0.0))
            throw mesh_error("assemble: degenerate element " + std::to_string(ei));
        auto [D, mu] = eval_media_element<N>(media, mesh, ei);

        // gradients of the barycentric basis: grad(l_j), j = 1..N from the edge
        // matrix, grad(l_0) = -sum
        Eigen::Matrix<double, N, N> M;
        for (int j = 0; j < N; ++j) M.col(j) = mesh.nodes[e[j + 1]] - mesh.nodes[e[0]];
        Eigen::Matrix<double, N, N> Minv = M.inverse();
        Eigen::Matrix<double, N, N + 1> grad;
        grad.col(0).setZero();
        for (int j = 0; j < N; ++j) {
            grad.col(j + 1) = Minv.row(j).transpose();
            grad.col(0) -= grad.col(j + 1);
        }
        const double mass_scale = mu * vol / double((N + 1) * (N + 2));
        for (int a = 0; a <= N; ++a)
            for (int b = 0; b <= N; ++b) {
                double val = D * vol * grad.col(a).dot(grad.col(b)) + mass_scale * (a == b ? 2.0 : 1.0);
                trip.emplace_back(e[a], e[b], val);
            }
    }

    // Robin term: 1/2 bint u v ds with the exact P1 facet mass matrix
    for (const auto& f : mesh.boundary_facets) {
        const double s = facet_measure<N>(mesh, f);
        const double scale = 0.5 * s / double(N * (N + 1));
        for (int a = 0; a < N; ++a)
            for (int b = 0; b < N; ++b)
                trip.emplace_back(f[a], f[b], scale * (a == b ? 2.0 : 1.0));
    }

    AssembledSystem<N> sys;
    sys.mesh = &mesh;
    sys.media = &media;
    sys.A.resize(nn, nn);
    sys.A.setFromTriplets(trip.begin(), trip.end());
    sys.use_cg = nn > direct_solver_node_limit;
    if (!sys.use_cg) {
        sys.direct = std::make_unique<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>();
        sys.direct->compute(sys.A);
        if (sys.direct->info() != Eigen::Success)
            throw solver_error("assemble: factorization failed (matrix not positive definite?)");
    }
    return sys;
}

namespace detail {

// Accumulates int_T chi_shape * l_k dx by recursive midpoint subdivision: the
// element is split to `depth` levels and each leaf contributes its volume times
// the parent barycentric coordinates of its centroid when the leaf centroid is
// inside the shape.
template <int N>
struct CutElementIntegrator {
    const Shape<N>* shape;
    int depth = 3;

    // corners of the current sub-simplex expressed in parent barycentric coords
    using BaryPt = Eigen::Matrix<double, N + 1, 1>;

    void leaf(const std::array<BaryPt, N + 1>& sub, double sub_vol,
              const std::array<Vec<N>, N + 1>& corners, Eigen::Matrix<double, N + 1, 1>& acc) const {
        BaryPt centroid_b = BaryPt::Zero();
        for (int k = 0; k <= N; ++k) centroid_b += sub[k];
        centroid_b /= double(N + 1);
        Vec<N> x = Vec<N>::Zero();
        for (int k = 0; k <= N; ++k) x += centroid_b[k] * corners[k];
        if (indicator<N>(*shape, x)) acc += sub_vol * centroid_b;
    }

    void recurse(const std::array<BaryPt, N + 1>& sub, double sub_vol, int level,
                 const std::array<Vec<N>, N + 1>& corners, Eigen::Matrix<double, N + 1, 1>& acc) const {
        if (level == depth) {
            leaf(sub, sub_vol, corners, acc);
            return;
        }
        auto mid = [&sub](int a, int b) { return BaryPt(0.5 * (sub[a] + sub[b])); };
        if constexpr (N == 2) {
            BaryPt m01 = mid(0, 1), m12 = mid(1, 2), m02 = mid(0, 2);
            const double v = 0.25 * sub_vol;
            recurse({sub[0], m01, m02}, v, level + 1, corners, acc);
            recurse({sub[1], m12, m01}, v, level + 1, corners, acc);
            recurse({sub[2], m02, m12}, v, level + 1, corners, acc);
            recurse({m01, m12, m02}, v, level + 1, corners, acc);
        } else {
            BaryPt m01 = mid(0, 1), m02 = mid(0, 2), m03 = mid(0, 3);
            BaryPt m12 = mid(1, 2), m13 = mid(1, 3), m23 = mid(2, 3);
            const double v = 0.125 * sub_vol;
            recurse({sub[0], m01, m02, m03}, v, level + 1, corners, acc);
            recurse({sub[1], m01, m12, m13}, v, level + 1, corners, acc);
            recurse({sub[2], m02, m12, m23}, v, level + 1, corners, acc);
            recurse({sub[3], m03, m13, m23}, v, level + 1, corners, acc);
            // fixed interior diagonal m02-m13; sub-volumes partition the parent
            recurse({m02, m13, m01, m03}, v, level + 1, corners, acc);
            recurse({m02, m13, m03, m23}, v, level + 1, corners, acc);
            recurse({m02, m13, m23, m12}, v, level + 1, corners, acc);
            recurse({m02, m13, m12, m01}, v, level + 1, corners, acc);
        }
    }
};

}  // namespace detail

// Load vector: int q v dx with cut-element subdivision plus the Robin boundary
// contribution 1/2 bint g- v ds.
template <int N>
Eigen::VectorXd assemble_load(const Mesh<N>& mesh, const SourceField<N>& q,
                              const BoundaryDatum<N>& g_minus) {
    Eigen::VectorXd load = Eigen::VectorXd::Zero(mesh.node_count());

    // Disjoint layers contribute their value on their own support; nested
    // layers are additive by construction. Either way the field integrates as
    // a sum of (coefficient * indicator) terms.
    for (const auto& layer : q.layers) {
        const double coef = layer.intensity;
        if (coef == 0.0) continue;
        auto [bc, br] = bounding_sphere<N>(layer.shape);
        const bool convex = shape_is_convex<N>(layer.shape);
        detail::CutElementIntegrator<N> cut{&layer.shape};

        for (int ei = 0; ei < mesh.element_count(); ++ei) {
            const auto& e = mesh.elements[ei];
            std::array<Vec<N>, N + 1> corners;
            for (int k = 0; k <= N; ++k) corners[k] = mesh.nodes[e[k]];
            Vec<N> cen = Vec<N>::Zero();
            for (int k = 0; k <= N; ++k) cen += corners[k];
            cen /= double(N + 1);
            double er = 0.0;
            for (int k = 0; k <= N; ++k) er = std::max(er, (corners[k] - cen).norm());
            if ((cen - bc).norm() > br + er) continue;  // element cannot touch the layer

            const double vol = signed_volume<N>(mesh, e);
            int inside = 0;
            for (int k = 0; k <= N; ++k)
                if (indicator<N>(layer.shape, corners[k])) ++inside;
            if (convex && inside == N + 1) {
                // fully covered: int_T l_k dx = vol/(N+1)
                for (int k = 0; k <= N; ++k) load[e[k]] += coef * vol / double(N + 1);
                continue;
            }
            Eigen::Matrix<double, N + 1, 1> acc = Eigen::Matrix<double, N + 1, 1>::Zero();
            std::array<typename detail::CutElementIntegrator<N>::BaryPt, N + 1> unit;
            for (int k = 0; k <= N; ++k) {
                unit[k].setZero();
                unit[k][k] = 1.0;
            }
            cut.recurse(unit, vol, 0, corners, acc);
            for (int k = 0; k <= N; ++k) load[e[k]] += coef * acc[k];
        }
    }

    if (!g_minus.is_zero()) {
        for (const auto& f : mesh.boundary_facets) {
            const double s = facet_measure<N>(mesh, f);
            if constexpr (N == 2) {
                // 2-point Gauss on the segment, exact for cubic integrands
                const double gp = 0.5 / std::sqrt(3.0);
                for (double t : {0.5 - gp, 0.5 + gp}) {
                    Vec<2> x = (1.0 - t) * mesh.nodes[f[0]] + t * mesh.nodes[f[1]];
                    double w = 0.5 * s * 0.5 * g_minus(x);
                    load[f[0]] += w * (1.0 - t);
                    load[f[1]] += w * t;
                }
            } else {
                // edge-midpoint rule on the triangle, exact for quadratics
                const double w = 0.5 * s / 3.0;
                for (int a = 0; a < 3; ++a) {
                    int b = (a + 1) % 3;
                    Vec<3> x = 0.5 * (mesh.nodes[f[a]] + mesh.nodes[f[b]]);
                    double v = w * g_minus(x);
                    load[f[a]] += 0.5 * v;
                    load[f[b]] += 0.5 * v;
                }
            }
        }
    }
    return load;
}

template <int N>
FieldSolution<N> solve(const AssembledSystem<N>& sys, const Eigen::VectorXd& load) {
    FieldSolution<N> sol;
    sol.mesh = sys.mesh;
    const double bnorm = load.norm();
    if (sys.use_cg) {
        Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper,
                                 Eigen::DiagonalPreconditioner<double>> cg;
        cg.setTolerance(1e-10);
        cg.setMaxIterations(20000);
        cg.compute(sys.A);
        sol.u = cg.solve(load);
        if (cg.info() != Eigen::Success)
            throw solver_error("solve: CG did not converge, residual " + std::to_string(cg.error()));
    } else {
        sol.u = sys.direct->solve(load);
    }
    const double rnorm = (sys.A * sol.u - load).norm();
    if (rnorm > 1e-10 * std::max(bnorm, 1e-300) && rnorm > 1e-14)
        throw solver_error("solve: residual " + std::to_string(rnorm) + " exceeds tolerance (|b| = " +
                           std::to_string(bnorm) + ")");
    return sol;
}

// g_i = (u(x_i) - g-(x_i))/2 with u interpolated on the sensor's facet.
template <int N>
BoundaryMeasurement<N> measure(const FieldSolution<N>& u, const SensorSet<N>& sensors,
                               const BoundaryDatum<N>& g_minus) {
    if (sensors.mesh != u.mesh)
        throw geometry_error("measure: sensors are bound to a different mesh");
    BoundaryMeasurement<N> g;
    g.sensors = &sensors;
    g.values.resize(sensors.count());
    for (int i = 0; i < sensors.count(); ++i) {
        const auto& f = u.mesh->boundary_facets[sensors.facet[i]];
        double ui = 0.0;
        for (int k = 0; k < N; ++k) ui += sensors.barycentric[i][k] * u.u[f[k]];
        g.values[i] = 0.5 * (ui - g_minus(sensors.points[i]));
    }
    return g;
}

// One-shot forward operator F(q).
template <int N>
BoundaryMeasurement<N> forward(const Mesh<N>& mesh, const MediaMap<N>& media, const SourceField<N>& q,
                               const BoundaryDatum<N>& g_minus, const SensorSet<N>& sensors) {
    AssembledSystem<N> sys = assemble<N>(mesh, media);
    Eigen::VectorXd load = assemble_load<N>(mesh, q, g_minus);
    FieldSolution<N> u = solve<N>(sys, load);
    return measure<N>(u, sensors, g_minus);
}

// Reusable forward context: one factorization, one boundary load; repeated
// F(q) evaluations only assemble the source part and back-substitute.
template <int N>
struct ForwardContext {
    const Mesh<N>* mesh = nullptr;
    const MediaMap<N>* media = nullptr;
    const SensorSet<N>* sensors = nullptr;
    BoundaryDatum<N> g_minus;
    AssembledSystem<N> system;
    Eigen::VectorXd boundary_load;

    static ForwardContext make(const Mesh<N>& mesh, const MediaMap<N>& media,
                               const SensorSet<N>& sensors, const BoundaryDatum<N>& g_minus) {
        ForwardContext ctx;
        ctx.mesh = &mesh;
        ctx.media = &media;
        ctx.sensors = &sensors;
        ctx.g_minus = g_minus;
        ctx.system = assemble<N>(mesh, media);
        ctx.boundary_load = assemble_load<N>(mesh, SourceField<N>{}, g_minus);
        return ctx;
    }

    Eigen::VectorXd apply(const SourceField<N>& q) const {
        Eigen::VectorXd load = assemble_load<N>(*mesh, q, BoundaryDatum<N>{});
        load += boundary_load;
        FieldSolution<N> u = solve<N>(system, load);
        return measure<N>(u, *sensors, g_minus).values;
    }

    FieldSolution<N> solve_field(const SourceField<N>& q) const {
        Eigen::VectorXd load = assemble_load<N>(*mesh, q, BoundaryDatum<N>{});
        load += boundary_load;
        return solve<N>(system, load);
    }
};

}  // namespace blt
