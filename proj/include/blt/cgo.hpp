#pragma once

// Numerical verification of complex-geometric-optics decay on truncated
// corners in the constant-coefficient case. The probe field is
//
//     w(x) = (1/sqrt(D)) exp(-tau (xi + i xi_perp) . (x - x_c)),
//
// with orthonormal xi, xi_perp, so (xi + i xi_perp).(xi + i xi_perp) = 0 and w
// is annihilated by the constant-coefficient operator. On a truncated cone
// where xi . unit(x - x_c) >= rho > 0 the study measures, per tau:
//
//   * |int_{S_h} w dx| and |int_{S_h} |x - x_c|^alpha w dx| (volume integrals),
//   * the L2 norms of w and grad w on the spherical cap |x - x_c| = h, which
//     is where the boundary-pairing argument meets the e^{-rho h tau} bound
//     (on any region touching the apex |w| ~ 1, so no exponential bound can
//     hold there; the cap carries the decay that matters).
//
// Volume L2 norms over the whole truncated cone are reported alongside for
// reference. Radial integrals are evaluated in closed form where the weight
// exponent is an integer and by panel-wise Gauss quadrature otherwise; the
// angular quadrature doubles its order until two successive refinements agree.

#include "blt/common.hpp"

#include <Eigen/Dense>

#include <nlohmann/json.hpp>

#include <complex>
#include <fstream>
#include <map>

namespace blt {

template <int N>
struct ConeSpec {
    Vec<N> apex = Vec<N>::Zero();
    Vec<N> axis = Vec<N>::Unit(0);      // unit vector
    double half_angle = pi / 4.0;       // theta_c in (0, pi/2)
    double truncation = 1.0;            // h > 0
    std::vector<Vec<N>> edges;          // nonempty: polyhedral corner (3D only)

    bool polyhedral() const { return !edges.empty(); }
};

template <int N>
void validate_cone(const ConeSpec<N>& c) {
    if (std::abs(c.axis.norm() - 1.0) > 1e-9) throw validation_error("cone axis must be a unit vector");
    if (!(c.half_angle > 0.0) || !(c.half_angle < pi / 2.0))
        throw validation_error("cone half angle must lie in (0, pi/2)");
    if (!(c.truncation > 0.0)) throw validation_error("cone truncation must be positive");
    if (c.polyhedral()) {
        if constexpr (N == 2) throw validation_error("polyhedral corners are three-dimensional");
        if (c.edges.size() < 3) throw validation_error("polyhedral corner needs at least 3 edges");
        for (const auto& e : c.edges) {
            if (!(e.norm() > 0.0)) throw validation_error("polyhedral edge must be nonzero");
            double ang = std::acos(std::clamp(e.normalized().dot(c.axis), -1.0, 1.0));
            if (ang > c.half_angle + 1e-12)
                throw validation_error("polyhedral edges must fit inside the conic hull");
        }
    }
}

template <int N>
struct CGOParams {
    double tau = 1.0;
    Vec<N> xi = Vec<N>::Unit(0);
    Vec<N> xi_perp = Vec<N>::Unit(1);
    double D_const = 1.0;
};

template <int N>
void validate_cgo_params(const CGOParams<N>& p) {
    if (!(p.tau > 0.0)) throw validation_error("cgo params: tau must be positive");
    if (!(p.D_const > 0.0)) throw validation_error("cgo params: D must be positive");
    if (std::abs(p.xi.norm() - 1.0) > 1e-12 || std::abs(p.xi_perp.norm() - 1.0) > 1e-12 ||
        std::abs(p.xi.dot(p.xi_perp)) > 1e-12)
        throw validation_error("cgo params: xi, xi_perp must be orthonormal");
}

template <int N>
std::complex<double> cgo_field(const CGOParams<N>& params, const Vec<N>& p, const Vec<N>& apex) {
    const Vec<N> y = p - apex;
    const double a = params.tau * params.xi.dot(y);
    const double b = params.tau * params.xi_perp.dot(y);
    return (std::exp(-a) / std::sqrt(params.D_const)) * std::complex<double>(std::cos(b), -std::sin(b));
}

// ---------------------------------------------------------------------------
// rho: the minimum of xi . unit(x - x_c) over the cone's direction set

namespace detail {

// directions of a polyhedral corner ordered by azimuth around their mean
template <int N>
std::vector<Vec<N>> ordered_edge_dirs(const ConeSpec<N>& cone) {
    std::vector<Vec<N>> dirs;
    for (const auto& e : cone.edges) dirs.push_back(e.normalized());
    Vec<N> m = Vec<N>::Zero();
    for (const auto& d : dirs) m += d;
    m.normalize();
    if constexpr (N == 3) {
        Vec<3> t1 = m.cross(std::abs(m.z()) < 0.9 ? Vec<3>(0, 0, 1) : Vec<3>(1, 0, 0)).normalized();
        Vec<3> t2 = m.cross(t1);
        std::sort(dirs.begin(), dirs.end(), [&](const Vec<3>& a, const Vec<3>& b) {
            return std::atan2(a.dot(t2), a.dot(t1)) < std::atan2(b.dot(t2), b.dot(t1));
        });
    }
    return dirs;
}

template <int N>
bool direction_in_polyhedral_cone(const std::vector<Vec<N>>& dirs, const Vec<N>& v) {
    if constexpr (N == 3) {
        Vec<3> m = Vec<3>::Zero();
        for (const auto& d : dirs) m += d;
        const std::size_t n = dirs.size();
        for (std::size_t i = 0; i < n; ++i) {
            Vec<3> nrm = dirs[i].cross(dirs[(i + 1) % n]);
            if (nrm.dot(m) < 0.0) nrm = -nrm;
            if (nrm.dot(v) < 0.0) return false;
        }
        return true;
    }
    (void)dirs;
    (void)v;
    return false;
}

}  // namespace detail

template <int N>
double rho(const ConeSpec<N>& cone, const Vec<N>& xi) {
    validate_cone(cone);
    if (!cone.polyhedral()) {
        const double a = std::acos(std::clamp(xi.normalized().dot(cone.axis), -1.0, 1.0));
        return std::cos(std::clamp(a + cone.half_angle, 0.0, pi));
    }
    if constexpr (N == 3) {
        auto dirs = detail::ordered_edge_dirs<3>(cone);
        if (detail::direction_in_polyhedral_cone<3>(dirs, -xi)) return -1.0;
        double best = 2.0;
        const std::size_t n = dirs.size();
        for (std::size_t i = 0; i < n; ++i) best = std::min(best, xi.dot(dirs[i]));
        // interior critical points on the great-circle arcs: for d(t) =
        // unit(u + t(v-u)) the stationarity condition is linear in t
        for (std::size_t i = 0; i < n; ++i) {
            const Vec<3>&u = dirs[i], &v = dirs[(i + 1) % n];
            const Vec<3> dl = v - u;
            const double A = xi.dot(u), B = xi.dot(dl);
            const double den = B * u.dot(dl) - A * dl.squaredNorm();
            if (std::abs(den) < 1e-300) continue;
            const double t = -(B * u.squaredNorm() - A * u.dot(dl)) / den;
            if (t > 0.0 && t < 1.0) best = std::min(best, xi.dot((u + t * dl).normalized()));
        }
        return best;
    }
    return -1.0;  // unreachable
}

// ---------------------------------------------------------------------------
// Quadrature over the truncated cone

namespace detail {

inline const std::vector<std::pair<double, double>>& gauss_legendre_16() {
    // nodes/weights on [-1, 1]
    static const std::vector<std::pair<double, double>> gl = {
        {-0.9894009349916499, 0.0271524594117541}, {-0.9445750230732326, 0.0622535239386479},
        {-0.8656312023878318, 0.0951585116824928}, {-0.7554044083550030, 0.1246289712555339},
        {-0.6178762444026438, 0.1495959888165767}, {-0.4580167776572274, 0.1691565193950025},
        {-0.2816035507792589, 0.1826034150449236}, {-0.0950125098376374, 0.1894506104550685},
        {0.0950125098376374, 0.1894506104550685},  {0.2816035507792589, 0.1826034150449236},
        {0.4580167776572274, 0.1691565193950025},  {0.6178762444026438, 0.1495959888165767},
        {0.7554044083550030, 0.1246289712555339},  {0.8656312023878318, 0.0951585116824928},
        {0.9445750230732326, 0.0622535239386479},  {0.9894009349916499, 0.0271524594117541},
    };
    return gl;
}

// Gauss-Legendre nodes/weights on [-1,1] for arbitrary order (Newton on the
// Legendre recurrence; orders here stay modest). Cached per order.
inline const std::vector<std::pair<double, double>>& gauss_legendre(int n) {
    static std::map<int, std::vector<std::pair<double, double>>> cache;
    auto hit = cache.find(n);
    if (hit != cache.end()) return hit->second;
    std::vector<std::pair<double, double>> out(n);
    for (int i = 0; i < n; ++i) {
        double x = std::cos(pi * (i + 0.75) / (n + 0.5));
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            double dp = n * (x * p1 - p0) / (x * x - 1.0);
            double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
            double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        double dp = n * (x * p1 - p0) / (x * x - 1.0);
        out[i] = {x, 2.0 / ((1.0 - x * x) * dp * dp)};
    }
    return cache.emplace(n, std::move(out)).first->second;
}

// int_0^h r^m exp(-s r) dr for integer m (elementary closed form).
inline std::complex<double> radial_closed_form(std::complex<double> s, double h, int m) {
    if (std::abs(s) * h < 1e-8) {
        // nearly constant integrand; series fallback
        return std::pow(h, m + 1) / double(m + 1) - s * std::pow(h, m + 2) / double(m + 2);
    }
    const std::complex<double> sh = s * h, e = std::exp(-sh);
    if (m == 1) return (1.0 - e * (1.0 + sh)) / (s * s);
    return (2.0 - e * (2.0 + sh * (2.0 + sh))) / (s * s * s);  // m == 2
}

// int_0^h r^p exp(-s r) dr for real p >= 1 by panel-wise Gauss quadrature;
// panels halve geometrically toward 0 so each holds a smooth integrand.
inline std::complex<double> radial_panels(std::complex<double> s, double h, double p) {
    const double sh = std::abs(s) * h;
    const int J = std::clamp(int(std::ceil(std::log2(std::max(2.0, sh)))) + 3, 5, 60);
    std::complex<double> acc = 0.0;
    const auto& gl = gauss_legendre_16();
    double hi = h;
    for (int j = 0; j < J; ++j) {
        const double lo = (j + 1 == J) ? 0.0 : hi * 0.5;
        const double mid = 0.5 * (hi + lo), half = 0.5 * (hi - lo);
        for (const auto& [x, w] : gl) {
            const double r = mid + half * x;
            acc += w * half * std::pow(r, p) * std::exp(-s * r);
        }
        hi = lo;
    }
    return acc;
}

inline std::complex<double> radial_integral(std::complex<double> s, double h, int n, double alpha) {
    if (alpha == 0.0) return radial_closed_form(s, h, n - 1);
    return radial_panels(s, h, double(n - 1) + alpha);
}

// Integrates dir -> f(d) * dOmega(d) over the cone's direction set with the
// given angular order; f receives unit directions.
template <int N, typename F>
auto integrate_directions(const ConeSpec<N>& cone, int order, F&& f) {
    using R = decltype(f(std::declval<Vec<N>>()));
    R acc{};
    if constexpr (N == 2) {
        const double phi0 = std::atan2(cone.axis.y(), cone.axis.x());
        for (const auto& [x, w] : gauss_legendre(order)) {
            const double phi = phi0 + cone.half_angle * x;
            acc += (w * cone.half_angle) * f(Vec<2>(std::cos(phi), std::sin(phi)));
        }
        return acc;
    } else if (!cone.polyhedral()) {
        // polar Gauss x periodic trapezoid in azimuth around the axis
        Vec<3> t1 = cone.axis.cross(std::abs(cone.axis.z()) < 0.9 ? Vec<3>(0, 0, 1) : Vec<3>(1, 0, 0));
        t1.normalize();
        const Vec<3> t2 = cone.axis.cross(t1);
        const int npsi = 2 * order;
        for (const auto& [x, w] : gauss_legendre(order)) {
            const double th = 0.5 * cone.half_angle * (x + 1.0);
            const double wth = w * 0.5 * cone.half_angle * std::sin(th);
            for (int k = 0; k < npsi; ++k) {
                const double ps = 2.0 * pi * (k + 0.5) / npsi;
                const Vec<3> d = std::cos(th) * cone.axis +
                                 std::sin(th) * (std::cos(ps) * t1 + std::sin(ps) * t2);
                acc += (wth * 2.0 * pi / npsi) * f(d);
            }
        }
        return acc;
    } else {
        // spherical polygon with vertices e_i: fan of planar triangles
        // (m, e_i, e_{i+1}) projected radially; dOmega = (d.n) dA / |y|^2
        auto dirs = ordered_edge_dirs<3>(cone);
        Vec<3> m = Vec<3>::Zero();
        for (const auto& d : dirs) m += d;
        m.normalize();
        const auto& gl = gauss_legendre(order);
        const std::size_t n = dirs.size();
        for (std::size_t i = 0; i < n; ++i) {
            const Vec<3>&v0 = m, &v1 = dirs[i], &v2 = dirs[(i + 1) % n];
            Vec<3> nrm = (v1 - v0).cross(v2 - v0);
            const double area2 = nrm.norm();
            if (area2 < 1e-300) continue;
            nrm /= area2;
            if (nrm.dot(m) < 0.0) nrm = -nrm;
            // Duffy map of the unit square onto the triangle
            for (const auto& [xu, wu] : gl)
                for (const auto& [xv, wv] : gl) {
                    const double u = 0.5 * (xu + 1.0), v = 0.5 * (xv + 1.0);
                    const double a = u, b = u * v;  // jacobian u
                    const Vec<3> y = v0 + a * (v1 - v0) + b * (v2 - v1);
                    const double jac = 0.25 * wu * wv * u * area2;  // area2 = 2*area
                    const double r2 = y.squaredNorm();
                    const Vec<3> d = y / std::sqrt(r2);
                    acc += (jac * d.dot(nrm) / r2) * f(d);
                }
        }
        return acc;
    }
}

// Doubles the angular order until two refinements agree to rel_tol.
template <int N, typename F>
auto integrate_adaptive(const ConeSpec<N>& cone, double rel_tol, F&& f, const char* what) {
    int order = (N == 2) ? 32 : 12;
    const int max_order = (N == 2) ? 4096 : 384;
    auto prev = integrate_directions<N>(cone, order, f);
    while (order < max_order) {
        order *= 2;
        auto cur = integrate_directions<N>(cone, order, f);
        const double scale = std::max(std::abs(cur), 1e-300);
        if (std::abs(cur - prev) <= rel_tol * scale) return cur;
        prev = cur;
    }
    throw accuracy_error(std::string(what) + ": angular quadrature did not reach the requested tolerance " +
                         std::to_string(rel_tol));
}

}  // namespace detail

// int_{S_h} |x - x_c|^alpha w dx by cone-aligned product quadrature
// (alpha = 0 gives the plain integral); relative tolerance 1e-8.
template <int N>
std::complex<double> cone_integral(const ConeSpec<N>& cone, const CGOParams<N>& params, double alpha = 0.0) {
    validate_cone(cone);
    validate_cgo_params(params);
    if (alpha < 0.0 || alpha >= 1.0) throw domain_error("cone_integral: alpha must lie in [0, 1)");
    if (!(rho<N>(cone, params.xi) > 0.0))
        throw domain_error("cone_integral: rho <= 0, the decay condition fails for this xi");
    const double inv_sqrt_d = 1.0 / std::sqrt(params.D_const);
    auto f = [&](const Vec<N>& d) {
        const std::complex<double> s(params.tau * params.xi.dot(d), params.tau * params.xi_perp.dot(d));
        return detail::radial_integral(s, cone.truncation, N, alpha);
    };
    return inv_sqrt_d * detail::integrate_adaptive<N>(cone, 1e-8, f, "cone_integral");
}

// L2 norm of w over the truncated cone (volume).
template <int N>
double cone_l2_norm(const ConeSpec<N>& cone, const CGOParams<N>& params) {
    validate_cone(cone);
    validate_cgo_params(params);
    auto f = [&](const Vec<N>& d) {
        const std::complex<double> s(2.0 * params.tau * params.xi.dot(d), 0.0);
        return detail::radial_integral(s, cone.truncation, N, 0.0).real();
    };
    const double v = detail::integrate_adaptive<N>(cone, 1e-10, f, "cone_l2_norm");
    return std::sqrt(std::max(0.0, v)) / std::sqrt(params.D_const);
}

// L2 norm of w over the spherical cap |x - x_c| = h bounding the cone.
template <int N>
double cap_l2_norm(const ConeSpec<N>& cone, const CGOParams<N>& params) {
    validate_cone(cone);
    validate_cgo_params(params);
    const double h = cone.truncation;
    auto f = [&](const Vec<N>& d) { return std::exp(-2.0 * params.tau * h * params.xi.dot(d)); };
    const double v = detail::integrate_adaptive<N>(cone, 1e-10, f, "cap_l2_norm");
    return std::sqrt(std::max(0.0, v) * std::pow(h, N - 1)) / std::sqrt(params.D_const);
}

// ---------------------------------------------------------------------------
// Decay study over a tau grid

struct DecayRow {
    double tau = 0.0;
    double abs_integral = 0.0;      // |int w|
    double l2_cap = 0.0;            // |w|_{L2(cap)}
    double grad_l2_cap = 0.0;       // |grad w|_{L2(cap)} = sqrt(2) tau |w|_{L2(cap)}
    double weighted_integral = 0.0; // |int |x-x_c|^alpha w|
    double l2_vol = 0.0;            // |w|_{L2(S_h)} for reference
    double grad_l2_vol = 0.0;
};

struct DecayReport {
    int dim = 2;
    double rho = 0.0;
    double h = 0.0;
    double alpha = 0.5;
    std::vector<DecayRow> rows;
    double slope_abs_integral = 0.0;   // log-log slope of |int w|
    double slope_weighted = 0.0;       // log-log slope of the weighted integral
    double cap_ratio = 0.0;            // max/min of e^{rho h tau} |w|_{L2(cap)}
    double grad_ratio = 0.0;           // max/min of e^{rho h tau} |grad w|_{L2(cap)}/(1+tau)
    bool flag_l2_bounded = false;      // cap_ratio <= 10
    bool flag_grad_bounded = false;    // grad_ratio <= 10
    double dev_vs_nm1 = 0.0;           // |slope - (-(n-1))|
    double dev_vs_n = 0.0;             // |slope - (-n)|
    std::string matched_exponent;      // which power law the measured slope matches
};

namespace detail {

inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const int n = int(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int i = 0; i < n; ++i) {
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace detail

template <int N>
DecayReport decay_study(const ConeSpec<N>& cone, const CGOParams<N>& base,
                        const std::vector<double>& tau_grid, double alpha = 0.5) {
    validate_cone(cone);
    if (tau_grid.size() < 3) throw validation_error("decay_study: need at least 3 grid points");
    for (std::size_t i = 0; i + 1 < tau_grid.size(); ++i)
        if (!(tau_grid[i] < tau_grid[i + 1]))
            throw validation_error("decay_study: tau grid must be strictly increasing");
    if (!(tau_grid.back() >= 10.0 * tau_grid.front()))
        throw validation_error("decay_study: tau grid must span at least one decade");
    const double r = rho<N>(cone, base.xi);
    if (!(r > 0.0)) throw domain_error("decay_study: rho <= 0 for the given xi");

    DecayReport rep;
    rep.dim = N;
    rep.rho = r;
    rep.h = cone.truncation;
    rep.alpha = alpha;
    for (double tau : tau_grid) {
        CGOParams<N> p = base;
        p.tau = tau;
        DecayRow row;
        row.tau = tau;
        row.abs_integral = std::abs(cone_integral<N>(cone, p, 0.0));
        row.weighted_integral = std::abs(cone_integral<N>(cone, p, alpha));
        row.l2_cap = cap_l2_norm<N>(cone, p);
        row.grad_l2_cap = std::sqrt(2.0) * tau * row.l2_cap;
        row.l2_vol = cone_l2_norm<N>(cone, p);
        row.grad_l2_vol = std::sqrt(2.0) * tau * row.l2_vol;
        rep.rows.push_back(row);
    }

    std::vector<double> taus, absint, wint;
    for (const auto& row : rep.rows) {
        taus.push_back(row.tau);
        absint.push_back(row.abs_integral);
        wint.push_back(row.weighted_integral);
    }
    rep.slope_abs_integral = detail::loglog_slope(taus, absint);
    rep.slope_weighted = detail::loglog_slope(taus, wint);

    double cmin = 1e300, cmax = 0, gmin = 1e300, gmax = 0;
    for (const auto& row : rep.rows) {
        const double c = std::exp(r * rep.h * row.tau) * row.l2_cap;
        const double g = std::exp(r * rep.h * row.tau) * row.grad_l2_cap / (1.0 + row.tau);
        cmin = std::min(cmin, c);
        cmax = std::max(cmax, c);
        gmin = std::min(gmin, g);
        gmax = std::max(gmax, g);
    }
    rep.cap_ratio = cmax / cmin;
    rep.grad_ratio = gmax / gmin;
    rep.flag_l2_bounded = rep.cap_ratio <= 10.0;
    rep.flag_grad_bounded = rep.grad_ratio <= 10.0;

    rep.dev_vs_nm1 = std::abs(rep.slope_abs_integral + double(N - 1));
    rep.dev_vs_n = std::abs(rep.slope_abs_integral + double(N));
    if (rep.dev_vs_n <= 0.1 && rep.dev_vs_n <= rep.dev_vs_nm1)
        rep.matched_exponent = "tau^-n";
    else if (rep.dev_vs_nm1 <= 0.1)
        rep.matched_exponent = "tau^-(n-1)";
    else
        rep.matched_exponent = "neither";
    return rep;
}

inline void write_decay_csv(const DecayReport& rep, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw parse_error("write_decay_csv: cannot open " + path);
    out << "tau,abs_integral,l2_norm,grad_l2_norm,weighted_integral,l2_norm_vol,grad_l2_norm_vol\n";
    char buf[240];
    for (const auto& r : rep.rows) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.tau,
                      r.abs_integral, r.l2_cap, r.grad_l2_cap, r.weighted_integral, r.l2_vol,
                      r.grad_l2_vol);
        out << buf;
    }
    out << "# slope_abs_integral," << rep.slope_abs_integral << "\n";
    out << "# slope_weighted," << rep.slope_weighted << "\n";
    out << "# rho," << rep.rho << "\n";
    out << "# flag_l2_bounded," << (rep.flag_l2_bounded ? 1 : 0) << "\n";
    out << "# flag_grad_bounded," << (rep.flag_grad_bounded ? 1 : 0) << "\n";
    out << "# matched_exponent," << rep.matched_exponent << "\n";
}

inline nlohmann::json decay_report_json(const DecayReport& rep) {
    nlohmann::json j;
    j["dim"] = rep.dim;
    j["rho"] = rep.rho;
    j["h"] = rep.h;
    j["alpha"] = rep.alpha;
    j["slope_abs_integral"] = rep.slope_abs_integral;
    j["slope_weighted"] = rep.slope_weighted;
    j["cap_ratio"] = rep.cap_ratio;
    j["grad_ratio"] = rep.grad_ratio;
    j["flag_l2_bounded"] = rep.flag_l2_bounded;
    j["flag_grad_bounded"] = rep.flag_grad_bounded;
    j["deviation_vs_power_nm1"] = rep.dev_vs_nm1;
    j["deviation_vs_power_n"] = rep.dev_vs_n;
    j["matched_exponent"] = rep.matched_exponent;
    j["rows"] = nlohmann::json::array();
    for (const auto& r : rep.rows) {
        j["rows"].push_back({{"tau", r.tau},
                             {"abs_integral", r.abs_integral},
                             {"l2_norm", r.l2_cap},
                             {"grad_l2_norm", r.grad_l2_cap},
                             {"weighted_integral", r.weighted_integral},
                             {"l2_norm_vol", r.l2_vol},
                             {"grad_l2_norm_vol", r.grad_l2_vol}});
    }
    return j;
}

inline void write_decay_json(const DecayReport& rep, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw parse_error("write_decay_json: cannot open " + path);
    out << decay_report_json(rep).dump(2) << "\n";
}

}  // namespace blt
