#pragma once

// One step of the discretised gradient flow  x' = -grad V(x).
//
// Discrete gradient steps solve  x_{n+1} - x_n = -tau * DG(x_n, x_{n+1}),  which
// gives V(x_{n+1}) - V(x_n) = -tau * ||DG||^2 <= 0 for every tau > 0.

#include "dgflow/discrete_gradient.hpp"
#include "dgflow/functionals.hpp"
#include "dgflow/solvers.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <type_traits>

namespace dgflow {

enum class Method { Gonzalez, MeanValue, ItohAbe, Euler, Lagged };

inline const char* to_string(Method m)
{
    switch (m) {
    case Method::Gonzalez: return "gonzalez";
    case Method::MeanValue: return "meanvalue";
    case Method::ItohAbe: return "itoh-abe";
    case Method::Euler: return "euler";
    case Method::Lagged: return "lagged";
    }
    return "?";
}

inline bool is_discrete_gradient(Method m)
{
    return m == Method::Gonzalez || m == Method::MeanValue || m == Method::ItohAbe;
}

struct StepOptions
{
    double tol = 1e-8;                 // Newton residual (relative to 1+||x||) and Itoh-Abe scalar tolerance
    std::size_t quadrature_order = 4;  // mean-value discrete gradient
    NewtonOptions newton{};            // newton.tol is overridden by tol
    std::size_t retry_cap = 5;         // implicit step: halve tau this many times before giving up
    std::size_t expand_cap = 60;       // Itoh-Abe bracket expansions
    double cg_tol = 1e-10;             // lagged diffusivity
    std::size_t cg_maxit = 2000;
    bool lagged_fixed_point = false;   // drop the 1/tau term (pure fixed-point iteration)
};

struct StepResult
{
    ImageGrid state;
    std::size_t inner_iters = 0;
    double tau = 0.0;            // step size actually used
    std::size_t unchanged = 0;   // Itoh-Abe: coordinates left in place (zero partial)
    std::size_t failed = 0;      // Itoh-Abe: coordinates whose scalar solve found no bracket
};

// Implicit step failed even after the step-size retries.
class StepError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

template <Energy E>
StepResult euler_step(const E& V, const ImageGrid& x, double tau)
{
    if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
    StepResult r{x, 0, tau};
    axpy(-tau, V.gradient(x).values(), r.state.values());
    return r;
}

// ---------------------------------------------------------------------------

namespace detail {

template <Energy E>
struct ImplicitSystem
{
    const E& V;
    DGScheme scheme;
    const ImageGrid& x;
    double tau;
    QuadratureRule rule;
    double vx;

    ImplicitSystem(const E& v, DGScheme s, const ImageGrid& x0, double t)
        : V(v), scheme(s), x(x0), tau(t),
          rule(s.kind == DGKind::Gonzalez ? QuadratureRule{{0.5}, {1.0}} : gauss_legendre(s.quadrature_order)),
          vx(v.value(x0))
    {
    }

    ImageGrid grid(std::span<const double> v) const
    {
        return ImageGrid(x.shape(), std::vector<double>(v.begin(), v.end()));
    }

    Vector residual(std::span<const double> yv) const
    {
        const ImageGrid y = grid(yv);
        ImageGrid g = discrete_gradient(V, scheme, x, y);
        Vector r(yv.size());
        for (std::size_t k = 0; k < r.size(); ++k) r[k] = yv[k] - x[k] + tau * g[k];
        return r;
    }

    // Newton direction for F(y) = y - x + tau*(gq(y) + c(y) d), d = y - x, where
    // gq is the quadrature average of grad V along the segment. Its Jacobian is
    //   J = A + tau d a^T,  A = (1 + tau c) I + tau B,  B = sum_k w_k s_k H(z_k),
    //   a = (grad V(y) - B d - gq - 2 c d) / ||d||^2,
    // i.e. symmetric plus rank one, solved with two CG runs and Sherman-Morrison.
    Vector direction(std::span<const double> yv, std::span<const double> r, double forcing, std::size_t& cg_iters,
                     std::size_t cg_maxit) const
    {
        const std::size_t n = yv.size();
        const ImageGrid y = grid(yv);
        const ImageGrid d = y - x;
        const double dd = inner(d, d);
        const bool diag = near_diagonal(dd, inner(x, x));

        std::vector<ImageGrid> nodes;
        ImageGrid gq(x.shape());
        for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
            ImageGrid z = x;
            axpy(rule.nodes[k], d.values(), z.values());
            axpy(rule.weights[k], V.gradient(z).values(), gq.values());
            nodes.push_back(std::move(z));
        }
        double c = 0.0;
        if (!diag) c = (V.value(y) - vx - inner(gq, d)) / dd;

        auto apply_b = [&](const ImageGrid& v) {
            ImageGrid out(x.shape());
            for (std::size_t k = 0; k < nodes.size(); ++k)
                axpy(rule.weights[k] * rule.nodes[k], V.hessian_vector(nodes[k], v).values(), out.values());
            return out;
        };

        LinearOperator A{n, [&](std::span<const double> v, std::span<double> out) {
                             const ImageGrid bv = apply_b(grid(v));
                             for (std::size_t k = 0; k < n; ++k) out[k] = (1.0 + tau * c) * v[k] + tau * bv[k];
                         }};
        const Vector zero(n, 0.0);
        Vector rhs(n);
        for (std::size_t k = 0; k < n; ++k) rhs[k] = -r[k];
        auto z1 = cg_solve(A, rhs, zero, forcing, cg_maxit);
        cg_iters += z1.iters;
        if (diag) return z1.x;

        ImageGrid a = V.gradient(y);
        a -= apply_b(d);
        a -= gq;
        axpy(-2.0 * c, d.values(), a.values());
        a *= 1.0 / dd;

        Vector td(n);
        for (std::size_t k = 0; k < n; ++k) td[k] = tau * d[k];
        auto z2 = cg_solve(A, td, zero, forcing, cg_maxit);
        cg_iters += z2.iters;
        const double denom = 1.0 + dot(a.values(), z2.x);
        if (!(std::abs(denom) > 1e-12)) return z1.x;
        const double coef = dot(a.values(), z1.x) / denom;
        Vector delta = z1.x;
        axpy(-coef, z2.x, delta);
        return delta;
    }
};

} // namespace detail

// Gonzalez or mean-value discrete gradient step by damped Newton-CG, starting
// from the explicit Euler point. On Newton failure tau is halved and the step
// retried, up to opt.retry_cap times.
template <Energy E>
StepResult dg_step_implicit(const E& V, const DGScheme& scheme, const ImageGrid& x, double tau,
                            const StepOptions& opt = {})
{
    if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
    if (scheme.kind == DGKind::ItohAbe) throw std::invalid_argument("dg_step_implicit: use itoh_abe_step");

    const ImageGrid g0 = V.gradient(x);
    if (norm(g0) == 0.0) return StepResult{x, 0, tau};

    NewtonOptions nopt = opt.newton;
    nopt.tol = opt.tol;
    const double target = opt.tol * (1.0 + norm(x));

    std::size_t work = 0;
    double t = tau;
    std::string last_error;
    for (std::size_t attempt = 0; attempt <= opt.retry_cap; ++attempt, t *= 0.5) {
        detail::ImplicitSystem<E> sys(V, scheme, x, t);
        ImageGrid guess = x;
        axpy(-t, g0.values(), guess.values());
        auto residual = [&](std::span<const double> y) { return sys.residual(y); };
        auto direction = [&](std::span<const double> y, std::span<const double> r, double forcing, std::size_t& cg) {
            return sys.direction(y, r, forcing, cg, nopt.cg_maxit);
        };
        try {
            // Absolute target tol*(1+||x||): express it relative to the initial residual.
            const double r0 = norm2(sys.residual(guess.values()));
            nopt.tol = target / (1.0 + r0);
            auto res = newton_solve_with(residual, direction, guess.values(), nopt);
            work += res.iters;
            StepResult out{sys.grid(res.x), work, t};
            return out;
        } catch (const ConvergenceError& e) {
            work += e.iterations();
            last_error = e.what();
        }
    }
    throw StepError("implicit discrete gradient step failed at tau=" + std::to_string(tau) + " after " +
                    std::to_string(opt.retry_cap) + " step-size halvings: " + last_error);
}

// ---------------------------------------------------------------------------

// Itoh-Abe step: coordinates are updated one after another in storage order.
// Coordinate k solves (s - x_k)^2 + tau * D_k(s) = 0 for its nontrivial root,
// where D_k(s) is the energy change from setting x_k = s given the coordinates
// already updated. Written as h(s) = (s - x_k) + tau * D_k(s) / (s - x_k), with
// h(x_k) = tau * dV/dx_k, so the trivial root is removed.
template <Energy E>
StepResult itoh_abe_step(const E& V, const ImageGrid& x, double tau, const StepOptions& opt = {})
{
    if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
    auto coords = V.coordinate_evaluator(x);
    StepResult out{ImageGrid(x.shape()), 0, tau};

    for (std::size_t k = 0; k < x.size(); ++k) {
        const double xk = coords.state()[k];
        const double g = coords.partial(k);
        if (std::abs(tau * g) <= opt.tol) {
            ++out.unchanged;
            continue;
        }
        auto h = [&](double s) { return s == xk ? tau * g : (s - xk) + tau * coords.diff(k, s) / (s - xk); };
        ScalarRoot root;
        try {
            root = scalar_root(h, xk, -g, opt.tol, opt.expand_cap, tau * std::abs(g) / 1024.0);
        } catch (const NoBracket&) {
            ++out.failed;
            continue;
        }
        out.inner_iters += root.evals;
        // Accept only moves that do not raise the energy; this can reject a move
        // only when it is below the scalar tolerance.
        if (root.s == xk || !(coords.diff(k, root.s) <= 0.0)) {
            ++out.unchanged;
            continue;
        }
        coords.commit(k, root.s);
    }
    out.state = std::move(coords).release();
    return out;
}

// ---------------------------------------------------------------------------

// Semi-implicit step with the TV diffusivity frozen at u:
//   (u' - u)/tau = -dxdy * (P (u' - u0) + alpha * D^T W(u) D u'),   W = 1/sqrt(|Du|^2 + beta)
// which is a symmetric positive definite linear system solved by CG. With
// fixed_point the 1/tau term is dropped.
inline StepResult lagged_diffusivity_step(const FunctionalModel& m, const ImageGrid& u, double tau,
                                          const StepOptions& opt = {})
{
    if (m.kind() != ModelKind::DenoiseTV && m.kind() != ModelKind::InpaintTV)
        throw std::invalid_argument("lagged diffusivity supports the denoising and inpainting models only");
    if (!opt.lagged_fixed_point && !(tau > 0.0)) throw std::invalid_argument("tau must be positive");
    m.check_state(u);

    const Shape& sh = u.shape();
    const std::size_t npix = sh.pixels(), n = u.size();
    const double cell = sh.dx * sh.dy;
    const double inv_tau = opt.lagged_fixed_point ? 0.0 : 1.0 / tau;
    const auto p = m.tv_params();

    // Frozen weights per stencil and channel.
    std::vector<ImageGrid> weights;
    Shape one = sh;
    one.channels = 1;
    for (std::size_t c = 0; c < sh.channels; ++c) {
        const ImageGrid uc = u.channel_grid(c);
        const ImageGrid gx = backward_diff(uc, Axis::X), gy = backward_diff(uc, Axis::Y);
        ImageGrid w(one);
        for (std::size_t k = 0; k < npix; ++k) w[k] = tv::weight(gx[k] * gx[k] + gy[k] * gy[k], p);
        weights.push_back(std::move(w));
    }

    LinearOperator A{n, [&](std::span<const double> v, std::span<double> out) {
                         for (std::size_t c = 0; c < sh.channels; ++c) {
                             ImageGrid vc(one, std::vector<double>(v.begin() + c * npix, v.begin() + (c + 1) * npix));
                             ImageGrid fx = backward_diff(vc, Axis::X), fy = backward_diff(vc, Axis::Y);
                             for (std::size_t k = 0; k < npix; ++k) {
                                 fx[k] *= weights[c][k];
                                 fy[k] *= weights[c][k];
                             }
                             const ImageGrid div = divergence_forward(fx, fy);
                             for (std::size_t k = 0; k < npix; ++k) {
                                 const std::size_t q = c * npix + k;
                                 out[q] = inv_tau * v[q] + cell * (m.fidelity_weight(k) * v[q] - m.alpha() * div[k]);
                             }
                         }
                     }};
    Vector rhs(n);
    for (std::size_t q = 0; q < n; ++q) rhs[q] = inv_tau * u[q] + cell * m.fidelity_weight(q % npix) * m.data()[q];

    auto cg = cg_solve(A, rhs, u.values(), opt.cg_tol, opt.cg_maxit);
    if (!cg.converged)
        throw ConvergenceError("lagged diffusivity: CG did not reach tolerance (residual " +
                                   std::to_string(cg.residual_norm) + ")",
                               cg.x, cg.iters);
    return StepResult{ImageGrid(sh, std::move(cg.x)), cg.iters, tau};
}

// ---------------------------------------------------------------------------

template <Energy E>
StepResult take_step(const E& V, Method method, const ImageGrid& x, double tau, const StepOptions& opt = {})
{
    switch (method) {
    case Method::Gonzalez: return dg_step_implicit(V, DGScheme::gonzalez(), x, tau, opt);
    case Method::MeanValue: return dg_step_implicit(V, DGScheme::mean_value(opt.quadrature_order), x, tau, opt);
    case Method::ItohAbe: return itoh_abe_step(V, x, tau, opt);
    case Method::Euler: return euler_step(V, x, tau);
    case Method::Lagged:
        if constexpr (std::is_same_v<E, FunctionalModel>)
            return lagged_diffusivity_step(V, x, tau, opt);
        else
            throw std::invalid_argument("lagged diffusivity needs a TV functional model");
    }
    throw std::invalid_argument("unknown method");
}

} // namespace dgflow
