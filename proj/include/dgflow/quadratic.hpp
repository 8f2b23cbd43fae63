#pragma once

// V(x) = 1/2 x^T A x with a dense symmetric A. Small closed-form reference
// energy for the steppers; the state is an n x 1 single-channel grid.

#include "dgflow/grid.hpp"

#include <stdexcept>
#include <vector>

namespace dgflow {

class QuadraticEnergy
{
public:
    // a is row-major n x n and must be symmetric.
    QuadraticEnergy(std::size_t n, std::vector<double> a) : n_(n), a_(std::move(a))
    {
        if (a_.size() != n * n) throw std::invalid_argument("QuadraticEnergy: matrix size mismatch");
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < i; ++j)
                if (a_[i * n + j] != a_[j * n + i]) throw std::invalid_argument("QuadraticEnergy: matrix not symmetric");
    }

    static QuadraticEnergy diagonal(const std::vector<double>& d)
    {
        const std::size_t n = d.size();
        std::vector<double> a(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i) a[i * n + i] = d[i];
        return QuadraticEnergy(n, std::move(a));
    }

    Shape shape() const { return Shape{n_, 1, 1}; }
    std::size_t dim() const { return n_; }
    double entry(std::size_t i, std::size_t j) const { return a_[i * n_ + j]; }

    ImageGrid multiply(const ImageGrid& x) const
    {
        ImageGrid y(x.shape());
        for (std::size_t i = 0; i < n_; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n_; ++j) s += a_[i * n_ + j] * x[j];
            y[i] = s;
        }
        return y;
    }

    double value(const ImageGrid& x) const { return 0.5 * inner(x, multiply(x)); }
    ImageGrid gradient(const ImageGrid& x) const { return multiply(x); }
    ImageGrid hessian_vector(const ImageGrid&, const ImageGrid& w) const { return multiply(w); }

    class Coordinates
    {
    public:
        Coordinates(const QuadraticEnergy& e, ImageGrid x) : e_(&e), x_(std::move(x)) {}
        const ImageGrid& state() const { return x_; }
        std::size_t size() const { return x_.size(); }

        double diff(std::size_t k, double s) const
        {
            const double old = x_[k];
            const double off = partial(k) - e_->entry(k, k) * old;
            return 0.5 * e_->entry(k, k) * (s - old) * (s + old) + (s - old) * off;
        }
        double partial(std::size_t k) const
        {
            double s = 0.0;
            for (std::size_t j = 0; j < e_->n_; ++j) s += e_->entry(k, j) * x_[j];
            return s;
        }
        void commit(std::size_t k, double s) { x_[k] = s; }
        ImageGrid release() && { return std::move(x_); }

    private:
        const QuadraticEnergy* e_;
        ImageGrid x_;
    };

    Coordinates coordinate_evaluator(const ImageGrid& x) const { return Coordinates(*this, x); }

private:
    std::size_t n_;
    std::vector<double> a_;
};

} // namespace dgflow
