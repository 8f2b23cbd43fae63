#pragma once

// Matrix-free solvers used by the implicit steppers.

#include "dgflow/grid.hpp"

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dgflow {

using Vector = std::vector<double>;

struct LinearOperator
{
    std::size_t dim = 0;
    // out = A v; out is sized dim and may be overwritten freely.
    std::function<void(std::span<const double> v, std::span<double> out)> apply;
};

// Thrown when an iterative method gives up; carries the best iterate found.
class ConvergenceError : public std::runtime_error
{
public:
    ConvergenceError(const std::string& what, Vector best, std::size_t iterations)
        : std::runtime_error(what), best_(std::move(best)), iterations_(iterations)
    {
    }
    const Vector& best() const { return best_; }
    std::size_t iterations() const { return iterations_; }

private:
    Vector best_;
    std::size_t iterations_;
};

struct CgResult
{
    Vector x;
    std::size_t iters = 0;
    double residual_norm = 0.0;
    bool converged = false;
    bool breakdown = false; // hit a direction with p^T A p <= 0
    std::vector<double> history; // recursive residual norm, one entry per iteration (entry 0 = initial)
};

// Hestenes-Stiefel conjugate gradients for symmetric positive (semi)definite A.
// Stops once ||r|| <= tol * max(||b||, eps).
inline CgResult cg_solve(const LinearOperator& A, std::span<const double> b, std::span<const double> x0, double tol,
                         std::size_t maxit)
{
    if (b.size() != A.dim || x0.size() != A.dim) throw std::invalid_argument("cg_solve: dimension mismatch");
    if (!(tol > 0.0)) throw std::invalid_argument("cg_solve: tol must be positive");

    const std::size_t n = A.dim;
    CgResult res;
    res.x.assign(x0.begin(), x0.end());
    Vector r(n), p(n), ap(n);

    A.apply(res.x, ap);
    for (std::size_t k = 0; k < n; ++k) r[k] = b[k] - ap[k];
    const double target = tol * std::max(norm2(b), std::numeric_limits<double>::epsilon());

    double rr = dot(r, r);
    res.residual_norm = std::sqrt(rr);
    res.history.push_back(res.residual_norm);
    if (res.residual_norm <= target) {
        res.converged = true;
        return res;
    }
    p = r;
    while (res.iters < maxit) {
        A.apply(p, ap);
        const double pap = dot(p, ap);
        if (!(pap > 0.0)) {
            res.breakdown = true;
            break;
        }
        const double step = rr / pap;
        axpy(step, p, res.x);
        axpy(-step, ap, r);
        ++res.iters;
        const double rr_new = dot(r, r);
        res.residual_norm = std::sqrt(rr_new);
        res.history.push_back(res.residual_norm);
        if (res.residual_norm <= target) {
            res.converged = true;
            break;
        }
        const double beta = rr_new / rr;
        rr = rr_new;
        for (std::size_t k = 0; k < n; ++k) p[k] = r[k] + beta * p[k];
    }
    return res;
}

// ---------------------------------------------------------------------------

struct NewtonOptions
{
    double tol = 1e-8;          // ||r(x)|| <= tol * (1 + ||r(x0)||)
    std::size_t maxit = 50;
    std::size_t backtracks = 20;
    double forcing = 1e-2;      // relative CG tolerance per Newton system
    std::size_t cg_maxit = 500;
};

struct NewtonResult
{
    Vector x;
    std::size_t iters = 0;       // Newton iterations
    std::size_t linear_iters = 0; // accumulated CG iterations
    double residual_norm = 0.0;
};

using ResidualFn = std::function<Vector(std::span<const double>)>;
// Given x, r(x) and the forcing tolerance, return the Newton direction
// (approximately) solving J(x) delta = -r(x); adds its CG work to the counter.
using NewtonDirectionFn =
    std::function<Vector(std::span<const double> x, std::span<const double> r, double forcing, std::size_t& cg_iters)>;

// Damped Newton: full step first, then halve until the residual norm drops.
inline NewtonResult newton_solve_with(const ResidualFn& residual, const NewtonDirectionFn& direction,
                                      std::span<const double> x0, const NewtonOptions& opt)
{
    NewtonResult res;
    res.x.assign(x0.begin(), x0.end());
    Vector r = residual(res.x);
    double rn = norm2(r);
    const double target = opt.tol * (1.0 + rn);
    res.residual_norm = rn;

    while (rn > target) {
        if (res.iters >= opt.maxit)
            throw ConvergenceError("Newton: no convergence after " + std::to_string(res.iters) +
                                       " iterations (residual " + std::to_string(rn) + ")",
                                   res.x, res.iters);
        Vector delta = direction(res.x, r, opt.forcing, res.linear_iters);
        ++res.iters;

        double lambda = 1.0;
        bool accepted = false;
        Vector trial(res.x.size());
        for (std::size_t bt = 0; bt <= opt.backtracks; ++bt, lambda *= 0.5) {
            for (std::size_t k = 0; k < trial.size(); ++k) trial[k] = res.x[k] + lambda * delta[k];
            Vector rt = residual(trial);
            const double rtn = norm2(rt);
            if (std::isfinite(rtn) && rtn < rn) {
                res.x.swap(trial);
                r.swap(rt);
                rn = rtn;
                accepted = true;
                break;
            }
        }
        if (!accepted)
            throw ConvergenceError("Newton: line search failed to reduce the residual (" + std::to_string(rn) + ")",
                                   res.x, res.iters);
        res.residual_norm = rn;
    }
    return res;
}

// Newton with Jacobian-vector products; each system is solved by CG, so the
// Jacobian is expected to be symmetric positive definite near the root.
inline NewtonResult newton_solve(const ResidualFn& residual,
                                 const std::function<Vector(std::span<const double> x, std::span<const double> v)>& jvp,
                                 std::span<const double> x0, const NewtonOptions& opt = {})
{
    auto direction = [&](std::span<const double> x, std::span<const double> r, double forcing, std::size_t& cg_iters) {
        LinearOperator J{x.size(), [&](std::span<const double> v, std::span<double> out) {
                             Vector jv = jvp(x, v);
                             std::copy(jv.begin(), jv.end(), out.begin());
                         }};
        Vector rhs(r.size());
        for (std::size_t k = 0; k < r.size(); ++k) rhs[k] = -r[k];
        Vector zero(r.size(), 0.0);
        auto cg = cg_solve(J, rhs, zero, forcing, opt.cg_maxit);
        cg_iters += cg.iters;
        return cg.x;
    };
    return newton_solve_with(residual, direction, x0, opt);
}

// ---------------------------------------------------------------------------

class NoBracket : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

struct ScalarRoot
{
    double s = 0.0;
    std::size_t evals = 0;
    double lo = 0.0; // final bracket; h(lo) has the sign of h(s0)
    double hi = 0.0;
};

// Finds a root of h by stepping geometrically away from s0 along `direction`
// (first step `initial_step`, doubling) until h changes sign, then refining the
// bracket with the Illinois variant of regula falsi, bisecting whenever the
// bracket fails to halve. Returns the first bracketed root encountered.
inline ScalarRoot scalar_root(const std::function<double(double)>& h, double s0, double direction, double tol,
                              std::size_t expand_cap = 60, double initial_step = 1.0)
{
    if (!(tol > 0.0)) throw std::invalid_argument("scalar_root: tol must be positive");
    if (direction == 0.0 || !(initial_step > 0.0)) throw std::invalid_argument("scalar_root: invalid search direction");
    const double dir = direction > 0.0 ? 1.0 : -1.0;

    ScalarRoot out;
    double a = s0, fa = h(s0);
    ++out.evals;
    if (!std::isfinite(fa)) throw std::invalid_argument("scalar_root: h(s0) is not finite");
    if (std::abs(fa) <= tol) {
        out.s = out.lo = out.hi = s0;
        return out;
    }

    double b = s0, fb = fa, step = initial_step;
    bool bracketed = false;
    for (std::size_t k = 0; k <= expand_cap; ++k, step *= 2.0) {
        b = s0 + dir * step;
        fb = h(b);
        ++out.evals;
        if (!std::isfinite(fb)) break;
        if (std::abs(fb) <= tol) {
            out.s = b;
            out.lo = a;
            out.hi = b;
            return out;
        }
        if ((fb > 0.0) != (fa > 0.0)) {
            bracketed = true;
            break;
        }
        a = b;
        fa = fb;
    }
    if (!bracketed) throw NoBracket("scalar_root: no sign change within the expansion cap");

    // Invariant: sign(fa) == sign(h(s0)) != sign(fb).
    int stale_side = 0;
    double width = std::abs(b - a);
    for (;;) {
        double s = (a * fb - b * fa) / (fb - fa);
        const double lo = std::min(a, b), hi = std::max(a, b);
        if (!(s > lo && s < hi)) s = 0.5 * (a + b);
        const double fs = h(s);
        ++out.evals;
        if (std::abs(fs) <= tol || s == a || s == b) {
            out.s = s;
            out.lo = a;
            out.hi = b;
            return out;
        }
        if ((fs > 0.0) == (fa > 0.0)) {
            a = s;
            fa = fs;
            if (stale_side == 1) fb *= 0.5;
            stale_side = 1;
        } else {
            b = s;
            fb = fs;
            if (stale_side == -1) fa *= 0.5;
            stale_side = -1;
        }
        const double w = std::abs(b - a);
        if (w > 0.5 * width) {
            // Slow progress: force a bisection next time round by resetting weights.
            const double m = 0.5 * (a + b);
            const double fm = h(m);
            ++out.evals;
            if (std::abs(fm) <= tol) {
                out.s = m;
                out.lo = a;
                out.hi = b;
                return out;
            }
            if ((fm > 0.0) == (fa > 0.0)) {
                a = m;
                fa = fm;
            } else {
                b = m;
                fb = fm;
            }
            stale_side = 0;
        }
        width = std::abs(b - a);
        if (width <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(a), std::abs(b))) {
            out.s = std::abs(fa) < std::abs(fb) ? a : b;
            out.lo = a;
            out.hi = b;
            return out;
        }
    }
}

} // namespace dgflow
