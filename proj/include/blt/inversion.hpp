#pragma once

// Levenberg-Marquardt minimization of the Tikhonov functional over packed
// shape parameters with a sigmoid regularization schedule
//
//     lambda(i) = 1 / (1 + exp(beta*(i + i0))),
//
// forward-difference Jacobian, step repair by backtracking on infeasible
// iterates, and the stopping rule E_i = |theta^i - theta^{i-1}| <= stop_tol
// capped at max_iter updates.

#include "blt/fem.hpp"
#include "blt/noise.hpp"
#include "blt/source.hpp"

#include <Eigen/Dense>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <limits>

namespace blt {

struct LMConfig {
    double beta = 0.7;
    int i0 = 0;
    int max_iter = 20;
    double stop_tol = 1e-2;
    double fd_step_geometry = 1e-3;        // absolute step for coordinates/radii/vertices
    double fd_step_intensity_rel = 1e-3;   // relative step for intensities
    int max_backtracks = 10;
    std::vector<int> frozen;               // parameter indices held fixed
};

inline double lambda_schedule(int i, double beta, int i0) {
    if (!(beta > 0.0)) throw domain_error("lambda_schedule: beta must be positive");
    return 1.0 / (1.0 + std::exp(beta * (double(i) + double(i0))));
}

struct LMIterate {
    int iter = 0;
    Eigen::VectorXd theta;
    double lambda = 0.0;
    double residual_norm = 0.0;
    double step_norm = std::numeric_limits<double>::quiet_NaN();  // E_i, NaN at i = 0
    double rel_error = std::numeric_limits<double>::quiet_NaN();  // e_r when the true source is known
    double wall_s = 0.0;
};

struct LMTrace {
    std::vector<LMIterate> rows;
    std::string termination;  // converged | max_iterations | infeasible_step | solver_failure
    int failure_iter = -1;

    const LMIterate& final() const { return rows.back(); }
};

// Solves (G^T G + lambda I) delta = G^T r; lambda > 0 keeps the system SPD.
inline Eigen::VectorXd lm_step(const Eigen::MatrixXd& G, const Eigen::VectorXd& residual, double lambda) {
    if (!(lambda > 0.0)) throw domain_error("lm_step: lambda must be positive");
    const int P = int(G.cols());
    Eigen::MatrixXd A = G.transpose() * G + lambda * Eigen::MatrixXd::Identity(P, P);
    Eigen::VectorXd b = G.transpose() * residual;
    return A.ldlt().solve(b);
}

// L2 relative error |q1 - q2| / |q2| on a regular cell-centred grid over Omega.
template <int N>
double relative_error(const SourceField<N>& q_rec, const SourceField<N>& q_true, double R,
                      double grid_spacing) {
    if (!(grid_spacing > 0.0) || !(R > 0.0))
        throw domain_error("relative_error: grid spacing and radius must be positive");
    const int n = std::max(2, int(std::ceil(2.0 * R / grid_spacing)));
    const double s = 2.0 * R / n;
    double num = 0.0, den = 0.0;
    auto visit_cells = [&](auto&& body) {
        if constexpr (N == 2) {
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    body(Vec<2>(-R + (i + 0.5) * s, -R + (j + 0.5) * s));
        } else {
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    for (int k = 0; k < n; ++k)
                        body(Vec<3>(-R + (i + 0.5) * s, -R + (j + 0.5) * s, -R + (k + 0.5) * s));
        }
    };
    visit_cells([&](const Vec<N>& p) {
        if (p.norm() > R) return;
        const double vt = eval_source<N>(q_true, p);
        const double vr = eval_source<N>(q_rec, p);
        num += sqr(vr - vt);
        den += sqr(vt);
    });
    if (den == 0.0) throw domain_error("relative_error: the reference source is identically zero");
    return std::sqrt(num / den);
}

template <int N>
struct LMProblem {
    const ForwardContext<N>* ctx = nullptr;
    SourceField<N> prototype;                 // family layout for unpacking
    Eigen::VectorXd data;                     // noisy measurement Phi^delta
    DomainDesc<N> omega;                      // admissibility for step repair
    const SourceField<N>* true_source = nullptr;  // optional, enables e_r in the trace
    double er_grid_spacing = 0.05;
};

namespace detail {

template <int N>
bool theta_feasible(const LMProblem<N>& prob, const Eigen::VectorXd& theta) {
    ParamVector<N> pv{theta, prob.prototype};
    SourceField<N> q = unpack_params_unchecked<N>(pv);
    for (const auto& l : q.layers)
        if (shape_invariant_violation<N>(l.shape)) return false;
    return validate<N>(q, prob.omega).empty();
}

}  // namespace detail

// Residual F_i = Phi^delta - F(q(theta)).
template <int N>
Eigen::VectorXd lm_residual(const LMProblem<N>& prob, const Eigen::VectorXd& theta) {
    SourceField<N> q = unpack_params<N>(ParamVector<N>{theta, prob.prototype});
    return prob.data - prob.ctx->apply(q);
}

// Forward-difference Jacobian of F (not of the residual): column j approximates
// dF/dtheta_j. The base measurement F(theta) is reused for every column; when
// theta + h e_j is infeasible the step direction flips.
template <int N>
Eigen::MatrixXd lm_fd_jacobian(const LMProblem<N>& prob, const Eigen::VectorXd& theta,
                               const Eigen::VectorXd& base_forward, const LMConfig& cfg) {
    const int P = int(theta.size());
    const int M = int(base_forward.size());
    std::vector<ParamKind> kinds = param_kinds<N>(prob.prototype);
    std::vector<char> frozen(P, 0);
    for (int j : cfg.frozen)
        if (j >= 0 && j < P) frozen[j] = 1;

    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(M, P);
    for (int j = 0; j < P; ++j) {
        if (frozen[j]) continue;
        double h = kinds[j] == ParamKind::intensity
                       ? cfg.fd_step_intensity_rel * std::max(1.0, std::abs(theta[j]))
                       : cfg.fd_step_geometry;
        Eigen::VectorXd tp = theta;
        tp[j] += h;
        if (!detail::theta_feasible<N>(prob, tp)) {
            tp[j] = theta[j] - h;
            h = -h;
            if (!detail::theta_feasible<N>(prob, tp))
                throw validation_error("fd_jacobian: both perturbation directions infeasible for parameter " +
                                       std::to_string(j));
        }
        SourceField<N> qp = unpack_params_unchecked<N>(ParamVector<N>{tp, prob.prototype});
        G.col(j) = (prob.ctx->apply(qp) - base_forward) / h;
    }
    return G;
}

// Full LM driver. Row i of the trace carries the state after i updates,
// lambda(i), the residual norm at theta^i, and E_i for i >= 1.
template <int N>
LMTrace lm_run(const LMProblem<N>& prob, const Eigen::VectorXd& theta0, const LMConfig& cfg) {
    if (!(cfg.max_iter >= 1)) throw validation_error("lm_run: max_iter must be >= 1");
    if (!(cfg.stop_tol > 0.0)) throw validation_error("lm_run: stop_tol must be positive");
    if (!detail::theta_feasible<N>(prob, theta0))
        throw validation_error("lm_run: initial guess violates the admissibility constraints");

    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&t0] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    LMTrace trace;
    Eigen::VectorXd theta = theta0;

    auto record = [&](int i, const Eigen::VectorXd& th, double res_norm, double step_norm) {
        LMIterate row;
        row.iter = i;
        row.theta = th;
        row.lambda = lambda_schedule(i, cfg.beta, cfg.i0);
        row.residual_norm = res_norm;
        row.step_norm = step_norm;
        if (prob.true_source) {
            SourceField<N> q = unpack_params_unchecked<N>(ParamVector<N>{th, prob.prototype});
            row.rel_error = relative_error<N>(q, *prob.true_source, prob.omega.radius, prob.er_grid_spacing);
        }
        row.wall_s = elapsed();
        trace.rows.push_back(std::move(row));
    };

    Eigen::VectorXd base;
    try {
        base = prob.ctx->apply(unpack_params<N>(ParamVector<N>{theta, prob.prototype}));
    } catch (const solver_error&) {
        trace.termination = "solver_failure";
        trace.failure_iter = 0;
        return trace;
    }
    Eigen::VectorXd residual = prob.data - base;
    record(0, theta, residual.norm(), std::numeric_limits<double>::quiet_NaN());

    for (int i = 0; i < cfg.max_iter; ++i) {
        const double lambda = lambda_schedule(i, cfg.beta, cfg.i0);
        Eigen::VectorXd delta;
        try {
            Eigen::MatrixXd G = lm_fd_jacobian<N>(prob, theta, base, cfg);
            delta = lm_step(G, residual, lambda);
        } catch (const solver_error&) {
            trace.termination = "solver_failure";
            trace.failure_iter = i;
            return trace;
        }
        for (int j : cfg.frozen)
            if (j >= 0 && j < delta.size()) delta[j] = 0.0;

        Eigen::VectorXd theta_new = theta + delta;
        int tries = 0;
        while (!detail::theta_feasible<N>(prob, theta_new) && tries < cfg.max_backtracks) {
            delta *= 0.5;
            theta_new = theta + delta;
            ++tries;
        }
        if (!detail::theta_feasible<N>(prob, theta_new)) {
            trace.termination = "infeasible_step";
            trace.failure_iter = i;
            return trace;
        }

        const double step_norm = (theta_new - theta).norm();
        theta = theta_new;
        try {
            base = prob.ctx->apply(unpack_params<N>(ParamVector<N>{theta, prob.prototype}));
        } catch (const solver_error&) {
            trace.termination = "solver_failure";
            trace.failure_iter = i + 1;
            return trace;
        }
        residual = prob.data - base;
        record(i + 1, theta, residual.norm(), step_norm);
        if (step_norm <= cfg.stop_tol) {
            trace.termination = "converged";
            return trace;
        }
    }
    trace.termination = "max_iterations";
    return trace;
}

// Trace CSV: iter, lambda, residual_norm, E_i, e_r, theta components.
inline void write_trace_csv(const LMTrace& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw parse_error("write_trace_csv: cannot open " + path);
    const int P = trace.rows.empty() ? 0 : int(trace.rows.front().theta.size());
    out << "iter,lambda,residual_norm,E,e_r";
    for (int j = 0; j < P; ++j) out << ",theta_" << j;
    out << "\n";
    char buf[64];
    auto emit = [&](double v) {
        if (std::isnan(v)) {
            out << ",";
            return;
        }
        std::snprintf(buf, sizeof buf, ",%.17g", v);
        out << buf;
    };
    for (const auto& r : trace.rows) {
        out << r.iter;
        emit(r.lambda);
        emit(r.residual_norm);
        emit(r.step_norm);
        emit(r.rel_error);
        for (int j = 0; j < P; ++j) emit(r.theta[j]);
        out << "\n";
    }
}

}  // namespace blt
