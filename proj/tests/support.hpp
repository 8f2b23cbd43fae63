#pragma once

// Shared fixtures and independent oracles for the test suites.

#include "dgflow/dgflow.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace dgflow::testing {

inline ImageGrid random_grid(std::mt19937_64& rng, const Shape& s, double lo = 0.0, double hi = 1.0)
{
    std::uniform_real_distribution<double> d(lo, hi);
    ImageGrid u(s);
    for (auto& v : u.values()) v = d(rng);
    return u;
}

inline Mask random_mask(std::mt19937_64& rng, std::size_t w, std::size_t h, double fraction = 0.3)
{
    std::bernoulli_distribution d(fraction);
    Mask m = Mask::empty(w, h);
    for (auto& v : m.inside) v = d(rng) ? 1 : 0;
    return m;
}

inline const std::vector<ModelKind>& all_kinds()
{
    static const std::vector<ModelKind> kinds{ModelKind::DenoiseTV, ModelKind::DeblurTV, ModelKind::InpaintTV,
                                              ModelKind::MultichannelTV2, ModelKind::TVp};
    return kinds;
}

// A model of the given kind on random data. Multichannel models get 3 channels.
inline FunctionalModel random_model(std::mt19937_64& rng, ModelKind kind, std::size_t w, std::size_t h,
                                    double alpha = 0.1, double beta = 0.01)
{
    const std::size_t channels = kind == ModelKind::MultichannelTV2 ? 3 : 1;
    ImageGrid data = random_grid(rng, Shape{w, h, channels});
    switch (kind) {
    case ModelKind::DenoiseTV: return FunctionalModel::denoise(data, alpha, beta);
    case ModelKind::DeblurTV: return FunctionalModel::deblur(data, Kernel::box(3), alpha, beta);
    case ModelKind::InpaintTV: return FunctionalModel::inpaint(data, random_mask(rng, w, h), alpha, beta);
    case ModelKind::MultichannelTV2: return FunctionalModel::multichannel(data, alpha, beta);
    case ModelKind::TVp: return FunctionalModel::tvp(data, alpha, beta, 0.6);
    }
    throw std::invalid_argument("kind");
}

// Direct O(N^2 k^2) convolution with half-sample reflection at every edge
// (-1 -> 0, n -> n-1), the boundary rule of the mirrored 2N tile.
inline ImageGrid direct_reflect_convolution(const ImageGrid& u, const Kernel& k)
{
    const long nx = long(u.width()), ny = long(u.height());
    auto reflect = [](long m, long n) {
        const long period = 2 * n;
        long r = ((m % period) + period) % period;
        return r < n ? r : period - 1 - r;
    };
    ImageGrid out(u.shape());
    const long cx = long(k.center_x()), cy = long(k.center_y());
    for (long j = 0; j < ny; ++j)
        for (long i = 0; i < nx; ++i) {
            double s = 0.0;
            for (long b = 0; b < long(k.ky); ++b)
                for (long a = 0; a < long(k.kx); ++a)
                    s += k(std::size_t(a), std::size_t(b)) *
                         u(std::size_t(reflect(i - (a - cx), nx)), std::size_t(reflect(j - (b - cy), ny)));
            out(std::size_t(i), std::size_t(j)) = s;
        }
    return out;
}

// Central finite difference of V along coordinate k.
template <class E>
double fd_partial(const E& V, const ImageGrid& u, std::size_t k, double h = 1e-5)
{
    ImageGrid up = u, um = u;
    up[k] += h;
    um[k] -= h;
    return (V.value(up) - V.value(um)) / (2.0 * h);
}

// Bisection on a sign change of f over [lo, hi].
template <class F>
double bisect(F f, double lo, double hi, int iters = 200)
{
    double flo = f(lo);
    for (int it = 0; it < iters; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if ((fm < 0) == (flo < 0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

// Dense Gaussian elimination with partial pivoting, row-major A.
inline std::vector<double> dense_solve(std::vector<double> A, std::vector<double> b)
{
    const std::size_t n = b.size();
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < n; ++r)
            if (std::abs(A[r * n + c]) > std::abs(A[piv * n + c])) piv = r;
        for (std::size_t k = 0; k < n; ++k) std::swap(A[c * n + k], A[piv * n + k]);
        std::swap(b[c], b[piv]);
        for (std::size_t r = c + 1; r < n; ++r) {
            const double f = A[r * n + c] / A[c * n + c];
            for (std::size_t k = c; k < n; ++k) A[r * n + k] -= f * A[c * n + k];
            b[r] -= f * b[c];
        }
    }
    std::vector<double> x(n);
    for (std::size_t r = n; r-- > 0;) {
        double s = b[r];
        for (std::size_t k = r + 1; k < n; ++k) s -= A[r * n + k] * x[k];
        x[r] = s / A[r * n + r];
    }
    return x;
}

// Random symmetric positive definite matrix M^T M + shift I, row-major.
inline std::vector<double> random_spd(std::mt19937_64& rng, std::size_t n, double shift = 0.5)
{
    std::normal_distribution<double> d;
    std::vector<double> m(n * n), a(n * n, 0.0);
    for (auto& v : m) v = d(rng);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) s += m[k * n + i] * m[k * n + j];
            a[i * n + j] = s / double(n) + (i == j ? shift : 0.0);
        }
    return a;
}

inline double rms_difference(const ImageGrid& a, const ImageGrid& b)
{
    return norm(a - b) / std::sqrt(double(a.size()));
}

inline std::size_t energy_increases(const FlowTrace& t, double slack = 0.0)
{
    std::size_t n = 0;
    for (std::size_t k = 1; k < t.rows.size(); ++k)
        if (t.rows[k].energy > t.rows[k - 1].energy + slack) ++n;
    return n;
}

} // namespace dgflow::testing
