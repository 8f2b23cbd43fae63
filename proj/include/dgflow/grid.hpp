#pragma once

// Image lattice, finite-difference stencils and Euclidean vector helpers.
//
// Storage is column-major per channel: index = i + width*j + width*height*c,
// where i runs along x (the fast axis) and j along y. Channels are stored as
// contiguous blocks. The same order is the raster order of a PGM/PPM plane,
// so reading a file is a straight copy.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dgflow {

struct Shape
{
    std::size_t width = 1;     // N_x
    std::size_t height = 1;    // N_y
    std::size_t channels = 1;
    double dx = 1.0;
    double dy = 1.0;

    std::size_t pixels() const { return width * height; }
    std::size_t size() const { return width * height * channels; }

    bool operator==(const Shape&) const = default;
};

inline void validate(const Shape& s)
{
    if (s.width == 0 || s.height == 0 || s.channels == 0)
        throw std::invalid_argument("grid dimensions must be positive");
    if (!(s.dx > 0.0) || !(s.dy > 0.0) || !std::isfinite(s.dx) || !std::isfinite(s.dy))
        throw std::invalid_argument("grid spacing must be positive and finite");
}

inline std::string describe(const Shape& s)
{
    return std::to_string(s.width) + "x" + std::to_string(s.height) + "x" + std::to_string(s.channels);
}

class ImageGrid
{
public:
    ImageGrid() : ImageGrid(Shape{}) {}

    explicit ImageGrid(const Shape& shape, double fill = 0.0) : shape_(shape)
    {
        validate(shape_);
        data_.assign(shape_.size(), fill);
    }

    ImageGrid(const Shape& shape, std::vector<double> values) : shape_(shape), data_(std::move(values))
    {
        validate(shape_);
        if (data_.size() != shape_.size())
            throw std::invalid_argument("data length " + std::to_string(data_.size()) +
                                        " does not match grid " + describe(shape_));
        for (double v : data_)
            if (!std::isfinite(v))
                throw std::invalid_argument("grid entries must be finite");
    }

    const Shape& shape() const { return shape_; }
    std::size_t width() const { return shape_.width; }
    std::size_t height() const { return shape_.height; }
    std::size_t channels() const { return shape_.channels; }
    std::size_t size() const { return data_.size(); }

    std::size_t index(std::size_t i, std::size_t j, std::size_t c = 0) const
    {
        return i + shape_.width * (j + shape_.height * c);
    }

    double& operator()(std::size_t i, std::size_t j, std::size_t c = 0) { return data_[index(i, j, c)]; }
    double operator()(std::size_t i, std::size_t j, std::size_t c = 0) const { return data_[index(i, j, c)]; }

    double& operator[](std::size_t k) { return data_[k]; }
    double operator[](std::size_t k) const { return data_[k]; }

    std::vector<double>& values() & { return data_; }
    const std::vector<double>& values() const& { return data_; }
    std::vector<double> values() && { return std::move(data_); }

    std::span<double> channel(std::size_t c)
    {
        return std::span<double>(data_).subspan(c * shape_.pixels(), shape_.pixels());
    }
    std::span<const double> channel(std::size_t c) const
    {
        return std::span<const double>(data_).subspan(c * shape_.pixels(), shape_.pixels());
    }

    // Single-channel copy of channel c, same spacing.
    ImageGrid channel_grid(std::size_t c) const
    {
        Shape s = shape_;
        s.channels = 1;
        auto ch = channel(c);
        return ImageGrid(s, std::vector<double>(ch.begin(), ch.end()));
    }

    void set_channel(std::size_t c, const ImageGrid& g)
    {
        if (g.channels() != 1 || g.width() != width() || g.height() != height())
            throw std::invalid_argument("set_channel: shape mismatch");
        std::copy(g.data_.begin(), g.data_.end(), channel(c).begin());
    }

    ImageGrid& operator+=(const ImageGrid& o)
    {
        require_conformable(o);
        for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
        return *this;
    }
    ImageGrid& operator-=(const ImageGrid& o)
    {
        require_conformable(o);
        for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
        return *this;
    }
    ImageGrid& operator*=(double a)
    {
        for (double& v : data_) v *= a;
        return *this;
    }

    friend ImageGrid operator+(ImageGrid a, const ImageGrid& b) { return a += b; }
    friend ImageGrid operator-(ImageGrid a, const ImageGrid& b) { return a -= b; }
    friend ImageGrid operator*(double s, ImageGrid a) { return a *= s; }
    friend ImageGrid operator*(ImageGrid a, double s) { return a *= s; }

    bool conformable(const ImageGrid& o) const { return shape_ == o.shape_; }

    void require_conformable(const ImageGrid& o) const
    {
        if (!conformable(o))
            throw std::invalid_argument("grids not conformable: " + describe(shape_) + " vs " + describe(o.shape_));
    }

private:
    Shape shape_;
    std::vector<double> data_;
};

inline std::vector<double> flatten(const ImageGrid& u) { return u.values(); }

inline ImageGrid unflatten(const Shape& shape, std::vector<double> flat) { return ImageGrid(shape, std::move(flat)); }

// ---------------------------------------------------------------------------
// Plain Euclidean algebra on flat vectors. Spacing weights live in the
// functionals, never here.

inline double dot(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// y += a*x
inline void axpy(double a, std::span<const double> x, std::span<double> y)
{
    if (x.size() != y.size()) throw std::invalid_argument("axpy: length mismatch");
    for (std::size_t k = 0; k < x.size(); ++k) y[k] += a * x[k];
}

inline double inner(const ImageGrid& u, const ImageGrid& v)
{
    u.require_conformable(v);
    return dot(u.values(), v.values());
}

inline double norm(const ImageGrid& u) { return norm2(u.values()); }

// ---------------------------------------------------------------------------
// Stencils. Neumann boundaries come from duplicating the first row/column, so
// the backward difference at index 0 is exactly zero.

enum class Axis { X, Y };

inline void require_single_channel(const ImageGrid& u, const char* what)
{
    if (u.channels() != 1)
        throw std::invalid_argument(std::string(what) + ": expects a single-channel grid");
}

inline ImageGrid backward_diff(const ImageGrid& u, Axis axis)
{
    require_single_channel(u, "backward_diff");
    const std::size_t nx = u.width(), ny = u.height();
    ImageGrid d(u.shape());
    if (axis == Axis::X) {
        const double inv = 1.0 / u.shape().dx;
        for (std::size_t j = 0; j < ny; ++j)
            for (std::size_t i = 1; i < nx; ++i)
                d(i, j) = (u(i, j) - u(i - 1, j)) * inv;
    } else {
        const double inv = 1.0 / u.shape().dy;
        for (std::size_t j = 1; j < ny; ++j)
            for (std::size_t i = 0; i < nx; ++i)
                d(i, j) = (u(i, j) - u(i, j - 1)) * inv;
    }
    return d;
}

// Negative adjoint of backward_diff: <D_x u, px> + <D_y u, py> = -<u, div(px, py)>.
// Interior entries are forward differences; the rows/columns at index 0 and
// N-1 carry the one-sided terms the adjoint construction produces.
inline ImageGrid divergence_forward(const ImageGrid& px, const ImageGrid& py)
{
    require_single_channel(px, "divergence_forward");
    require_single_channel(py, "divergence_forward");
    px.require_conformable(py);
    const std::size_t nx = px.width(), ny = px.height();
    const double ix = 1.0 / px.shape().dx, iy = 1.0 / px.shape().dy;
    ImageGrid div(px.shape());
    for (std::size_t j = 0; j < ny; ++j) {
        for (std::size_t i = 0; i < nx; ++i) {
            double s = 0.0;
            if (i + 1 < nx) s += px(i + 1, j) * ix;
            if (i > 0) s -= px(i, j) * ix;
            if (j + 1 < ny) s += py(i, j + 1) * iy;
            if (j > 0) s -= py(i, j) * iy;
            div(i, j) = s;
        }
    }
    return div;
}

} // namespace dgflow
