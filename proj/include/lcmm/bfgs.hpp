#pragma once

// Box-limited BFGS minimizer with an Armijo backtracking line search, and a
// finite-difference-Hessian Newton polish for tightening first-order
// optimality at the end of a run.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

namespace lcmm::optim {

// Returns f(x) and writes the gradient into g; returns +inf when x is
// outside the objective's domain.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& g)>;

struct BfgsOptions {
    int max_iterations = 500;
    double rel_f_tol = 1e-8;
    double grad_tol = 1e-4;  // max-norm
    double bound = 30.0;     // |x_j| <= bound
};

struct BfgsResult {
    Eigen::VectorXd x;
    Eigen::VectorXd grad;
    double f = std::numeric_limits<double>::infinity();
    double last_rel_change = std::numeric_limits<double>::infinity();
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
    bool at_bound = false;
    std::string status;
};

namespace detail {

// Largest step along d that keeps x + step * d inside the box.
inline double max_step(const Eigen::VectorXd& x, const Eigen::VectorXd& d, double bound) {
    double t = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (d(i) > 0) t = std::min(t, (bound - x(i)) / d(i));
        else if (d(i) < 0) t = std::min(t, (-bound - x(i)) / d(i));
    }
    return std::max(0.0, t);
}

inline bool touches_bound(const Eigen::VectorXd& x, double bound) {
    return x.cwiseAbs().maxCoeff() >= bound * (1.0 - 1e-9);
}

inline double rel_change(double f_old, double f_new) {
    return std::abs(f_old - f_new) / std::max(1.0, std::abs(f_new));
}

}  // namespace detail

inline BfgsResult minimize_bfgs(const Objective& fn, Eigen::VectorXd x0, const BfgsOptions& opt) {
    const auto n = x0.size();
    BfgsResult res;
    res.x = x0.cwiseMax(-opt.bound).cwiseMin(opt.bound);
    res.grad.resize(n);
    res.f = fn(res.x, res.grad);
    ++res.evaluations;
    if (!std::isfinite(res.f)) {
        res.status = "objective not finite at the initial point";
        return res;
    }

    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
    bool fresh_H = true;
    Eigen::VectorXd x_new(n), g_new(n);

    for (res.iterations = 0; res.iterations < opt.max_iterations; ++res.iterations) {
        const double gmax = res.grad.cwiseAbs().maxCoeff();
        if (gmax < opt.grad_tol && res.last_rel_change < opt.rel_f_tol) {
            res.converged = true;
            res.status = "converged";
            break;
        }
        Eigen::VectorXd d = -H * res.grad;
        double slope = res.grad.dot(d);
        if (!(slope < 0)) {
            H.setIdentity();
            fresh_H = true;
            d = -res.grad;
            slope = res.grad.dot(d);
        }
        // First step from an unscaled H: limit to a unit move in the max-norm.
        double step = fresh_H ? std::min(1.0, 1.0 / std::max(1e-300, d.cwiseAbs().maxCoeff())) : 1.0;
        const double limit = detail::max_step(res.x, d, opt.bound);
        step = std::min(step, limit);

        bool accepted = false;
        double f_new = 0.0;
        for (int ls = 0; ls < 60 && step > 0; ++ls) {
            x_new = res.x + step * d;
            f_new = fn(x_new, g_new);
            ++res.evaluations;
            if (std::isfinite(f_new) && f_new <= res.f + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= (std::isfinite(f_new) ? 0.5 : 0.1);
        }
        if (!accepted) {
            if (!fresh_H) {
                H.setIdentity();
                fresh_H = true;
                continue;
            }
            res.status = "line search failed";
            break;
        }

        const Eigen::VectorXd s = x_new - res.x;
        const Eigen::VectorXd y = g_new - res.grad;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            if (fresh_H) {
                H *= sy / y.squaredNorm();
                fresh_H = false;
            }
            const double rho = 1.0 / sy;
            const Eigen::VectorXd Hy = H * y;
            H += (rho * rho * y.dot(Hy) + rho) * (s * s.transpose()) - rho * (Hy * s.transpose() + s * Hy.transpose());
        }
        res.last_rel_change = detail::rel_change(res.f, f_new);
        res.x = x_new;
        res.grad = g_new;
        res.f = f_new;
    }
    if (res.status.empty()) res.status = "iteration limit";
    res.at_bound = detail::touches_bound(res.x, opt.bound);
    if (res.at_bound) {
        res.converged = false;
        res.status = "parameter at bound (degenerate fit)";
    }
    return res;
}

/// Central-difference Hessian of an analytic gradient, symmetrized.
inline Eigen::MatrixXd fd_hessian(const Objective& fn, const Eigen::VectorXd& x, double h = 1e-4) {
    const auto n = x.size();
    Eigen::MatrixXd Hs(n, n);
    Eigen::VectorXd gp(n), gm(n);
    Eigen::VectorXd xp = x, xm = x;
    for (Eigen::Index j = 0; j < n; ++j) {
        xp(j) = x(j) + h;
        xm(j) = x(j) - h;
        const double fp = fn(xp, gp);
        const double fm = fn(xm, gm);
        if (!std::isfinite(fp) || !std::isfinite(fm)) return Eigen::MatrixXd();
        Hs.col(j) = (gp - gm) / (2 * h);
        xp(j) = xm(j) = x(j);
    }
    return 0.5 * (Hs + Hs.transpose());
}

/// A few damped Newton steps from a BFGS end point. Steps never raise f by
/// more than rounding noise.
inline BfgsResult newton_polish(const Objective& fn, BfgsResult res, const BfgsOptions& opt, int max_steps = 8) {
    if (!std::isfinite(res.f)) return res;
    const auto n = res.x.size();
    Eigen::VectorXd g_new(n);
    for (int it = 0; it < max_steps; ++it) {
        // Aim well inside the tolerance; convergence is still judged at grad_tol.
        const double gmax = res.grad.cwiseAbs().maxCoeff();
        if (gmax < 1e-2 * opt.grad_tol && res.last_rel_change < opt.rel_f_tol) break;
        Eigen::MatrixXd Hs = fd_hessian(fn, res.x);
        res.evaluations += 2 * static_cast<int>(n);
        if (Hs.size() == 0) break;
        Eigen::VectorXd d;
        double damp = 0.0;
        for (int tries = 0; tries < 12; ++tries) {
            Eigen::LLT<Eigen::MatrixXd> llt(Hs + damp * Eigen::MatrixXd::Identity(n, n));
            if (llt.info() == Eigen::Success) {
                d = -llt.solve(res.grad);
                break;
            }
            damp = damp == 0.0 ? 1e-6 * std::max(1.0, Hs.diagonal().cwiseAbs().maxCoeff()) : damp * 10;
        }
        if (d.size() == 0) break;
        double step = std::min(1.0, detail::max_step(res.x, d, opt.bound));
        bool moved = false;
        for (int ls = 0; ls < 30 && step > 0; ++ls) {
            Eigen::VectorXd x_new = res.x + step * d;
            const double f_new = fn(x_new, g_new);
            ++res.evaluations;
            // Near the optimum f is flat to rounding; accept a step that lowers the
            // gradient as long as f does not rise beyond that noise.
            const double noise = 1e-12 * std::max(1.0, std::abs(res.f));
            const bool better = f_new <= res.f ||
                                (f_new <= res.f + noise && g_new.cwiseAbs().maxCoeff() < res.grad.cwiseAbs().maxCoeff());
            if (std::isfinite(f_new) && better) {
                res.last_rel_change = detail::rel_change(res.f, f_new);
                res.x = x_new;
                res.f = f_new;
                res.grad = g_new;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if (!moved) break;
    }
    res.at_bound = detail::touches_bound(res.x, opt.bound);
    res.converged = !res.at_bound && res.grad.cwiseAbs().maxCoeff() < opt.grad_tol &&
                    res.last_rel_change < opt.rel_f_tol;
    if (res.converged) res.status = "converged";
    else if (res.at_bound) res.status = "parameter at bound (degenerate fit)";
    return res;
}

}  // namespace lcmm::optim
