#pragma once

// Discrete gradients: maps (x, x') -> g with <g, x' - x> = V(x') - V(x) and
// g(x, x) = grad V(x).

#include "dgflow/grid.hpp"

#include <cmath>
#include <concepts>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace dgflow {

// What the steppers need from an energy.
template <class E>
concept Energy = requires(const E& e, const ImageGrid& x) {
    { e.value(x) } -> std::convertible_to<double>;
    { e.gradient(x) } -> std::same_as<ImageGrid>;
    { e.hessian_vector(x, x) } -> std::same_as<ImageGrid>;
    e.coordinate_evaluator(x);
};

enum class DGKind { Gonzalez, MeanValue, ItohAbe };

struct DGScheme
{
    DGKind kind = DGKind::Gonzalez;
    std::size_t quadrature_order = 4; // mean-value only

    static DGScheme gonzalez() { return {DGKind::Gonzalez, 1}; }
    static DGScheme mean_value(std::size_t q = 4) { return {DGKind::MeanValue, q}; }
    static DGScheme itoh_abe() { return {DGKind::ItohAbe, 1}; }
};

struct QuadratureRule
{
    std::vector<double> nodes;   // in (0, 1), ascending
    std::vector<double> weights; // sum to 1
};

// Gauss-Legendre rule on [0, 1] with q points (Newton on the Legendre recurrence).
inline QuadratureRule gauss_legendre(std::size_t q)
{
    if (q == 0) throw std::invalid_argument("quadrature order must be at least 1");
    QuadratureRule rule;
    rule.nodes.resize(q);
    rule.weights.resize(q);
    const std::size_t half = (q + 1) / 2;
    for (std::size_t i = 0; i < half; ++i) {
        double z = std::cos(std::numbers::pi * (double(i) + 0.75) / (double(q) + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (std::size_t j = 1; j <= q; ++j) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * double(j) - 1.0) * z * p1 - (double(j) - 1.0) * p2) / double(j);
            }
            dp = double(q) * (z * p0 - p1) / (z * z - 1.0);
            const double dz = p0 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16) break;
        }
        const double w = 1.0 / ((1.0 - z * z) * dp * dp); // half of the [-1,1] weight
        rule.nodes[i] = 0.5 * (1.0 - z);
        rule.nodes[q - 1 - i] = 0.5 * (1.0 + z);
        rule.weights[i] = w;
        rule.weights[q - 1 - i] = w;
    }
    return rule;
}

namespace detail {

// ||d||^2 small enough that the secant quotient is 0/0 noise.
inline bool near_diagonal(double dd, double xx) { return dd <= std::numeric_limits<double>::epsilon() * (1.0 + xx); }

// Adds the secant correction c*(x2 - x) that makes <g, x2 - x> = V(x2) - V(x).
template <Energy E>
ImageGrid with_secant_correction(const E& V, const ImageGrid& x, const ImageGrid& x2, ImageGrid g)
{
    ImageGrid d = x2 - x;
    const double dd = inner(d, d);
    if (near_diagonal(dd, inner(x, x))) return g;
    const double c = (V.value(x2) - V.value(x) - inner(g, d)) / dd;
    axpy(c, d.values(), g.values());
    return g;
}

} // namespace detail

template <Energy E>
ImageGrid gonzalez_dg(const E& V, const ImageGrid& x, const ImageGrid& x2)
{
    x.require_conformable(x2);
    ImageGrid mid = x + x2;
    mid *= 0.5;
    return detail::with_secant_correction(V, x, x2, V.gradient(mid));
}

// Quadrature of the line integral of grad V from x to x2, corrected so the
// secant identity holds regardless of the quadrature error.
template <Energy E>
ImageGrid mean_value_dg(const E& V, const ImageGrid& x, const ImageGrid& x2, std::size_t q)
{
    x.require_conformable(x2);
    const auto rule = gauss_legendre(q);
    const ImageGrid d = x2 - x;
    if (detail::near_diagonal(inner(d, d), inner(x, x))) return V.gradient(x);
    ImageGrid avg(x.shape());
    for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
        ImageGrid z = x;
        axpy(rule.nodes[k], d.values(), z.values());
        axpy(rule.weights[k], V.gradient(z).values(), avg.values());
    }
    return detail::with_secant_correction(V, x, x2, std::move(avg));
}

// Coordinate-wise divided differences, moving one coordinate at a time from x
// to x2 in storage order. Coordinates that do not move take the partial
// derivative at the intermediate point.
template <Energy E>
ImageGrid itoh_abe_dg(const E& V, const ImageGrid& x, const ImageGrid& x2)
{
    x.require_conformable(x2);
    ImageGrid g(x.shape());
    auto coords = V.coordinate_evaluator(x);
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double step = x2[k] - x[k];
        if (step == 0.0) {
            g[k] = coords.partial(k);
            continue;
        }
        g[k] = coords.diff(k, x2[k]) / step;
        coords.commit(k, x2[k]);
    }
    return g;
}

template <Energy E>
ImageGrid discrete_gradient(const E& V, const DGScheme& scheme, const ImageGrid& x, const ImageGrid& x2)
{
    switch (scheme.kind) {
    case DGKind::Gonzalez: return gonzalez_dg(V, x, x2);
    case DGKind::MeanValue: return mean_value_dg(V, x, x2, scheme.quadrature_order);
    case DGKind::ItohAbe: return itoh_abe_dg(V, x, x2);
    }
    throw std::invalid_argument("unknown discrete gradient");
}

} // namespace dgflow
