#pragma once

// Discretised variational energies for image restoration.
//
// Every model has the form  V(u) = fit(u) + reg(u)  with
//
//   fit(u) = 1/2 dx dy sum w_ij (A u - u0)_ij^2      A = I or blur K, w = mask weight
//   reg(u) = alpha * J(u)                           (per-channel J summed), or
//            alpha * sqrt(sum_c J(u_c)^2)           (coupled multichannel)
//   J(u)   = dx dy sum_ij psi((D^x u)_ij^2 + (D^y u)_ij^2),  psi(t) = (t + beta)^(p/2)
//
// with backward differences D^x, D^y from grid.hpp. p = 1 gives the smoothed
// total variation; 0 < p < 1 the non-convex TV^p penalty.

#include "dgflow/convolution.hpp"
#include "dgflow/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dgflow {

enum class ModelKind { DenoiseTV, DeblurTV, InpaintTV, MultichannelTV2, TVp };

inline const char* to_string(ModelKind k)
{
    switch (k) {
    case ModelKind::DenoiseTV: return "denoise-tv";
    case ModelKind::DeblurTV: return "deblur-tv";
    case ModelKind::InpaintTV: return "inpaint-tv";
    case ModelKind::MultichannelTV2: return "multichannel-tv2";
    case ModelKind::TVp: return "tvp";
    }
    return "?";
}

// Inpainting domain D: inside[i + width*j] != 0 means no data is available there.
struct Mask
{
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> inside;

    Mask() = default;
    Mask(std::size_t w, std::size_t h, std::vector<std::uint8_t> in) : width(w), height(h), inside(std::move(in))
    {
        if (inside.size() != w * h) throw std::invalid_argument("mask size does not match its dimensions");
    }
    static Mask empty(std::size_t w, std::size_t h) { return Mask(w, h, std::vector<std::uint8_t>(w * h, 0)); }

    std::size_t count() const
    {
        return std::size_t(std::count_if(inside.begin(), inside.end(), [](auto v) { return v != 0; }));
    }
    bool contains(std::size_t pixel) const { return inside[pixel] != 0; }
};

struct EnergyBreakdown
{
    double fit = 0.0;
    double reg = 0.0;
    double total = 0.0;
};

// ---------------------------------------------------------------------------
// Smoothed TV^p on one channel, given as a flat span so that the incremental
// evaluator can reuse the stencil code without copies.

namespace tv {

struct Params
{
    std::size_t nx, ny;
    double dx, dy;
    double beta;
    double exponent;
};

inline double psi(double t, const Params& p)
{
    return p.exponent == 1.0 ? std::sqrt(t + p.beta) : std::pow(t + p.beta, 0.5 * p.exponent);
}

// 2 psi'(t)
inline double weight(double t, const Params& p)
{
    return p.exponent == 1.0 ? 1.0 / std::sqrt(t + p.beta) : p.exponent * std::pow(t + p.beta, 0.5 * p.exponent - 1.0);
}

struct Diffs
{
    double x, y;
};

inline Diffs diffs_at(std::span<const double> u, std::size_t i, std::size_t j, const Params& p)
{
    const std::size_t k = i + p.nx * j;
    return {i > 0 ? (u[k] - u[k - 1]) / p.dx : 0.0, j > 0 ? (u[k] - u[k - p.nx]) / p.dy : 0.0};
}

// Same, with u[override_k] replaced by s.
inline Diffs diffs_at(std::span<const double> u, std::size_t i, std::size_t j, const Params& p,
                      std::size_t override_k, double s)
{
    const std::size_t k = i + p.nx * j;
    auto at = [&](std::size_t m) { return m == override_k ? s : u[m]; };
    return {i > 0 ? (at(k) - at(k - 1)) / p.dx : 0.0, j > 0 ? (at(k) - at(k - p.nx)) / p.dy : 0.0};
}

inline double value(std::span<const double> u, const Params& p)
{
    double sum = 0.0;
    for (std::size_t j = 0; j < p.ny; ++j)
        for (std::size_t i = 0; i < p.nx; ++i) {
            const auto d = diffs_at(u, i, j, p);
            sum += psi(d.x * d.x + d.y * d.y, p);
        }
    return p.dx * p.dy * sum;
}

// out += scale * grad J(u)
inline void add_gradient(std::span<const double> u, const Params& p, double scale, std::span<double> out)
{
    // Each stencil (i,j) depends on u(i,j), u(i-1,j), u(i,j-1).
    const double c = scale * p.dx * p.dy;
    for (std::size_t j = 0; j < p.ny; ++j)
        for (std::size_t i = 0; i < p.nx; ++i) {
            const auto d = diffs_at(u, i, j, p);
            const double w = weight(d.x * d.x + d.y * d.y, p);
            const double gx = c * w * d.x / p.dx, gy = c * w * d.y / p.dy;
            const std::size_t k = i + p.nx * j;
            if (i > 0) {
                out[k] += gx;
                out[k - 1] -= gx;
            }
            if (j > 0) {
                out[k] += gy;
                out[k - p.nx] -= gy;
            }
        }
}

// Change of J when u[k] is set to s: only the stencils at k, its right and its
// upper neighbour involve u[k].
inline double local_change(std::span<const double> u, std::size_t k, double s, const Params& p)
{
    const std::size_t i = k % p.nx, j = k / p.nx;
    double before = 0.0, after = 0.0;
    auto acc = [&](std::size_t a, std::size_t b) {
        const auto d0 = diffs_at(u, a, b, p);
        const auto d1 = diffs_at(u, a, b, p, k, s);
        before += psi(d0.x * d0.x + d0.y * d0.y, p);
        after += psi(d1.x * d1.x + d1.y * d1.y, p);
    };
    acc(i, j);
    if (i + 1 < p.nx) acc(i + 1, j);
    if (j + 1 < p.ny) acc(i, j + 1);
    return p.dx * p.dy * (after - before);
}

inline double local_partial(std::span<const double> u, std::size_t k, const Params& p)
{
    const std::size_t i = k % p.nx, j = k / p.nx;
    double g = 0.0;
    {
        const auto d = diffs_at(u, i, j, p);
        const double w = weight(d.x * d.x + d.y * d.y, p);
        g += w * (d.x / p.dx + d.y / p.dy);
    }
    if (i + 1 < p.nx) {
        const auto d = diffs_at(u, i + 1, j, p);
        g -= weight(d.x * d.x + d.y * d.y, p) * d.x / p.dx;
    }
    if (j + 1 < p.ny) {
        const auto d = diffs_at(u, i, j + 1, p);
        g -= weight(d.x * d.x + d.y * d.y, p) * d.y / p.dy;
    }
    return p.dx * p.dy * g;
}

} // namespace tv

inline void validate_smoothing(double beta, double exponent)
{
    if (!(beta > 0.0) || !std::isfinite(beta)) throw std::invalid_argument("beta must be positive");
    if (!(exponent > 0.0 && exponent <= 1.0)) throw std::invalid_argument("exponent must lie in (0, 1]");
}

inline double smoothed_tv(const ImageGrid& u, double beta, double exponent)
{
    require_single_channel(u, "smoothed_tv");
    validate_smoothing(beta, exponent);
    const tv::Params p{u.width(), u.height(), u.shape().dx, u.shape().dy, beta, exponent};
    return tv::value(u.values(), p);
}

class CoordinateEvaluator;

// ---------------------------------------------------------------------------

class FunctionalModel
{
public:
    static FunctionalModel denoise(ImageGrid data, double alpha, double beta)
    {
        return FunctionalModel(ModelKind::DenoiseTV, std::move(data), alpha, beta, 1.0);
    }

    static FunctionalModel tvp(ImageGrid data, double alpha, double beta, double p)
    {
        if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("TV^p exponent must lie in (0, 1)");
        return FunctionalModel(ModelKind::TVp, std::move(data), alpha, beta, p);
    }

    static FunctionalModel deblur(ImageGrid data, Kernel kernel, double alpha, double beta)
    {
        FunctionalModel m(ModelKind::DeblurTV, std::move(data), alpha, beta, 1.0);
        m.blur_ = std::make_shared<const ReflectConvolution>(m.data_.width(), m.data_.height(), std::move(kernel));
        return m;
    }

    static FunctionalModel inpaint(ImageGrid data, Mask mask, double alpha, double beta)
    {
        if (mask.width != data.width() || mask.height != data.height())
            throw std::invalid_argument("mask size does not match the image");
        FunctionalModel m(ModelKind::InpaintTV, std::move(data), alpha, beta, 1.0);
        m.mask_ = std::move(mask);
        return m;
    }

    static FunctionalModel multichannel(ImageGrid data, double alpha, double beta)
    {
        if (data.channels() < 2) throw std::invalid_argument("multichannel model needs at least two channels");
        return FunctionalModel(ModelKind::MultichannelTV2, std::move(data), alpha, beta, 1.0);
    }

    ModelKind kind() const { return kind_; }
    double alpha() const { return alpha_; }
    double beta() const { return beta_; }
    double exponent() const { return exponent_; }
    const ImageGrid& data() const { return data_; }
    const Shape& shape() const { return data_.shape(); }
    const std::optional<Mask>& mask() const { return mask_; }
    const ReflectConvolution* blur() const { return blur_.get(); }

    // Energy changes of single coordinates can be computed from a few stencils.
    bool is_local() const { return kind_ != ModelKind::DeblurTV; }

    tv::Params tv_params() const
    {
        const auto& s = data_.shape();
        return {s.width, s.height, s.dx, s.dy, beta_, exponent_};
    }

    double fidelity_weight(std::size_t pixel) const { return mask_ && mask_->contains(pixel) ? 0.0 : 1.0; }

    // Per-channel J(u_c).
    std::vector<double> channel_tv(const ImageGrid& u) const
    {
        const auto p = tv_params();
        std::vector<double> out(u.channels());
        for (std::size_t c = 0; c < u.channels(); ++c) out[c] = tv::value(u.channel(c), p);
        return out;
    }

    EnergyBreakdown breakdown(const ImageGrid& u) const
    {
        check_state(u);
        const auto& s = data_.shape();
        const double cell = s.dx * s.dy;
        const std::size_t npix = s.pixels();
        EnergyBreakdown e;

        double fit = 0.0;
        if (kind_ == ModelKind::DeblurTV) {
            const ImageGrid ku = blur_->apply(u);
            for (std::size_t k = 0; k < u.size(); ++k) {
                const double r = ku[k] - data_[k];
                fit += r * r;
            }
        } else {
            for (std::size_t k = 0; k < u.size(); ++k) {
                const double r = u[k] - data_[k];
                fit += fidelity_weight(k % npix) * r * r;
            }
        }
        e.fit = 0.5 * cell * fit;

        const auto j = channel_tv(u);
        if (kind_ == ModelKind::MultichannelTV2) {
            double s2 = 0.0;
            for (double v : j) s2 += v * v;
            e.reg = alpha_ * std::sqrt(s2);
        } else {
            double sum = 0.0;
            for (double v : j) sum += v;
            e.reg = alpha_ * sum;
        }
        e.total = e.fit + e.reg;
        return e;
    }

    double value(const ImageGrid& u) const { return breakdown(u).total; }

    // Coupling constants c_c = J(u_c) / sqrt(sum J^2). Only meaningful for the multichannel model.
    std::vector<double> coupling(const ImageGrid& u) const
    {
        auto j = channel_tv(u);
        double s2 = 0.0;
        for (double v : j) s2 += v * v;
        const double s = std::sqrt(s2);
        for (double& v : j) v = s > 0.0 ? v / s : 0.0;
        return j;
    }

    ImageGrid gradient(const ImageGrid& u) const
    {
        check_state(u);
        const auto& s = data_.shape();
        const double cell = s.dx * s.dy;
        const std::size_t npix = s.pixels();
        ImageGrid g(u.shape());

        if (kind_ == ModelKind::DeblurTV) {
            ImageGrid r = blur_->apply(u);
            r -= data_;
            g = blur_->apply_adjoint(r);
            g *= cell;
        } else {
            for (std::size_t k = 0; k < u.size(); ++k) g[k] = cell * fidelity_weight(k % npix) * (u[k] - data_[k]);
        }

        const auto p = tv_params();
        const std::vector<double> c =
            kind_ == ModelKind::MultichannelTV2 ? coupling(u) : std::vector<double>(u.channels(), 1.0);
        for (std::size_t ch = 0; ch < u.channels(); ++ch) tv::add_gradient(u.channel(ch), p, alpha_ * c[ch], g.channel(ch));
        return g;
    }

    // Central difference of the gradient along w.
    ImageGrid hessian_vector(const ImageGrid& u, const ImageGrid& w) const
    {
        u.require_conformable(w);
        const double wn = norm(w);
        if (wn == 0.0) return ImageGrid(u.shape());
        const double h = 1e-5 * (1.0 + norm(u)) / std::max(wn, std::numeric_limits<double>::min());
        ImageGrid up = u, um = u;
        axpy(h, w.values(), up.values());
        axpy(-h, w.values(), um.values());
        ImageGrid hv = gradient(up);
        hv -= gradient(um);
        hv *= 1.0 / (2.0 * h);
        return hv;
    }

    CoordinateEvaluator coordinate_evaluator(const ImageGrid& u) const;

    void check_state(const ImageGrid& u) const
    {
        if (!u.conformable(data_))
            throw std::invalid_argument("state " + describe(u.shape()) + " does not match model data " +
                                        describe(data_.shape()));
    }

private:
    FunctionalModel(ModelKind kind, ImageGrid data, double alpha, double beta, double exponent)
        : kind_(kind), alpha_(alpha), beta_(beta), exponent_(exponent), data_(std::move(data))
    {
        if (!(alpha_ > 0.0) || !std::isfinite(alpha_)) throw std::invalid_argument("alpha must be positive");
        validate_smoothing(beta_, exponent_);
    }

    ModelKind kind_;
    double alpha_, beta_, exponent_;
    ImageGrid data_;
    std::optional<Mask> mask_;
    std::shared_ptr<const ReflectConvolution> blur_;
};

// ---------------------------------------------------------------------------
// Energy differences along single coordinates of a state that is updated in
// place, one coordinate at a time. For the multichannel model the per-channel
// J values are carried along so each query stays O(1). The blur model has a
// nonlocal fit term and falls back to full evaluations (O(n log n) per query).

class CoordinateEvaluator
{
public:
    CoordinateEvaluator(const FunctionalModel& model, ImageGrid u)
        : model_(&model), u_(std::move(u)), params_(model.tv_params())
    {
        model.check_state(u_);
        if (model.is_local()) {
            channel_j_ = model.channel_tv(u_);
            sum_sq_ = 0.0;
            for (double v : channel_j_) sum_sq_ += v * v;
        } else {
            full_value_ = model.value(u_);
        }
    }

    const ImageGrid& state() const { return u_; }
    std::size_t size() const { return u_.size(); }

    // V(u with u[k] = s) - V(u)
    double diff(std::size_t k, double s) const
    {
        const double old = u_[k];
        if (s == old) return 0.0;
        if (!model_->is_local()) {
            ImageGrid trial = u_;
            trial[k] = s;
            return model_->value(trial) - full_value_;
        }
        const auto& sh = u_.shape();
        const std::size_t npix = sh.pixels();
        const std::size_t c = k / npix, p = k % npix;
        const double u0 = model_->data()[k];
        const double fit = 0.5 * sh.dx * sh.dy * model_->fidelity_weight(p) * (s - old) * (s + old - 2.0 * u0);
        const double dj = tv::local_change(u_.channel(c), p, s, params_);
        return fit + model_->alpha() * reg_change(c, dj);
    }

    // dV/du_k at the current state.
    double partial(std::size_t k) const
    {
        if (!model_->is_local()) return model_->gradient(u_)[k];
        const auto& sh = u_.shape();
        const std::size_t npix = sh.pixels();
        const std::size_t c = k / npix, p = k % npix;
        const double fit = sh.dx * sh.dy * model_->fidelity_weight(p) * (u_[k] - model_->data()[k]);
        double scale = 1.0;
        if (model_->kind() == ModelKind::MultichannelTV2) scale = channel_j_[c] / std::sqrt(sum_sq_);
        return fit + model_->alpha() * scale * tv::local_partial(u_.channel(c), p, params_);
    }

    void commit(std::size_t k, double s)
    {
        if (!model_->is_local()) {
            full_value_ += diff(k, s);
            u_[k] = s;
            return;
        }
        const std::size_t c = k / u_.shape().pixels();
        const double dj = tv::local_change(u_.channel(c), k % u_.shape().pixels(), s, params_);
        const double jn = channel_j_[c] + dj;
        sum_sq_ += (jn - channel_j_[c]) * (jn + channel_j_[c]);
        channel_j_[c] = jn;
        u_[k] = s;
    }

    ImageGrid release() && { return std::move(u_); }

private:
    double reg_change(std::size_t c, double dj) const
    {
        if (model_->kind() != ModelKind::MultichannelTV2) return dj;
        // sqrt(S^2 + 2 J dj + dj^2) - S without cancellation.
        const double jc = channel_j_[c];
        const double s_old = std::sqrt(sum_sq_);
        const double s_new = std::sqrt(std::max(0.0, sum_sq_ + dj * (2.0 * jc + dj)));
        const double denom = s_old + s_new;
        return denom > 0.0 ? dj * (2.0 * jc + dj) / denom : 0.0;
    }

    const FunctionalModel* model_;
    ImageGrid u_;
    tv::Params params_;
    std::vector<double> channel_j_;
    double sum_sq_ = 0.0;
    double full_value_ = 0.0;
};

inline CoordinateEvaluator FunctionalModel::coordinate_evaluator(const ImageGrid& u) const
{
    return CoordinateEvaluator(*this, u);
}

// ---------------------------------------------------------------------------
// Free-function surface.

inline EnergyBreakdown value(const FunctionalModel& m, const ImageGrid& u) { return m.breakdown(u); }
inline ImageGrid gradient(const FunctionalModel& m, const ImageGrid& u) { return m.gradient(u); }

inline ImageGrid hessian_vector(const FunctionalModel& m, const ImageGrid& u, const ImageGrid& w)
{
    return m.hessian_vector(u, w);
}

// V(u with u[pixel] = s) - V(u), from the affected stencils only.
inline double local_diff(const FunctionalModel& m, const ImageGrid& u, std::size_t pixel, double s)
{
    if (!m.is_local()) throw std::invalid_argument("local_diff: the blur model has a nonlocal fit term");
    if (pixel >= u.size()) throw std::out_of_range("local_diff: pixel index out of range");
    return CoordinateEvaluator(m, u).diff(pixel, s);
}

} // namespace dgflow
