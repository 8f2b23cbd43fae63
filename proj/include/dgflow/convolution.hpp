#pragma once

// Blur operator with reflective (Neumann) boundaries, evaluated by FFT.
//
// The N_x x N_y image is embedded in a 2N_x x 2N_y tile by mirroring it over
// the right-hand and top edges. Circular convolution of that tile with the
// zero-padded, centred kernel is then restricted back to the original window.
// Because the tile is periodic with period 2N, the wrap-around on the left and
// bottom edges lands on the mirrored copy, so all four sides see a
// half-sample reflection.

#include "dgflow/grid.hpp"

#include <fftw3.h>

#include <complex>
#include <memory>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace dgflow {

struct Kernel
{
    std::size_t kx = 1;
    std::size_t ky = 1;
    std::vector<double> weights; // weights[a + kx*b]

    Kernel() : weights{1.0} {}

    Kernel(std::size_t size_x, std::size_t size_y, std::vector<double> w)
        : kx(size_x), ky(size_y), weights(std::move(w))
    {
        if (kx == 0 || ky == 0 || kx % 2 == 0 || ky % 2 == 0)
            throw std::invalid_argument("kernel sizes must be odd and positive");
        if (weights.size() != kx * ky)
            throw std::invalid_argument("kernel weight count does not match its size");
        for (double v : weights)
            if (!std::isfinite(v)) throw std::invalid_argument("kernel weights must be finite");
    }

    // Uniform averaging kernel of size n x n; box(7) is the 7x7 PSF with weights 1/49.
    static Kernel box(std::size_t n) { return Kernel(n, n, std::vector<double>(n * n, 1.0 / double(n * n))); }

    std::size_t center_x() const { return (kx - 1) / 2; }
    std::size_t center_y() const { return (ky - 1) / 2; }
    double operator()(std::size_t a, std::size_t b) const { return weights[a + kx * b]; }
    double total() const { return std::accumulate(weights.begin(), weights.end(), 0.0); }

    // Invariant under a 180 degree rotation, i.e. the blur operator is self-adjoint.
    bool symmetric() const
    {
        for (std::size_t b = 0; b < ky; ++b)
            for (std::size_t a = 0; a < kx; ++a)
                if ((*this)(a, b) != (*this)(kx - 1 - a, ky - 1 - b)) return false;
        return true;
    }
};

namespace detail {

inline std::mutex& fftw_planner_mutex()
{
    static std::mutex m;
    return m;
}

struct FftwFree
{
    void operator()(void* p) const { fftw_free(p); }
};

template <class T>
using FftwBuffer = std::unique_ptr<T[], FftwFree>;

inline FftwBuffer<double> alloc_real(std::size_t n) { return FftwBuffer<double>(fftw_alloc_real(n)); }
inline FftwBuffer<fftw_complex> alloc_complex(std::size_t n)
{
    return FftwBuffer<fftw_complex>(fftw_alloc_complex(n));
}

// Period-2N mirror index: ... 1 0 | 0 1 .. N-1 | N-1 .. 0 | 0 1 ...
inline std::size_t reflect_index(long m, std::size_t n)
{
    const long period = 2 * static_cast<long>(n);
    long r = m % period;
    if (r < 0) r += period;
    return r < static_cast<long>(n) ? static_cast<std::size_t>(r) : static_cast<std::size_t>(period - 1 - r);
}

} // namespace detail

// Precomputed operator for one (image size, kernel) pair. Thread-safe for
// concurrent apply() calls: each call owns its scratch buffers.
class ReflectConvolution
{
public:
    ReflectConvolution(std::size_t width, std::size_t height, Kernel kernel)
        : nx_(width), ny_(height), tx_(2 * width), ty_(2 * height), kernel_(std::move(kernel))
    {
        if (nx_ == 0 || ny_ == 0) throw std::invalid_argument("convolution: empty image");
        if (kernel_.kx > tx_ - 1 || kernel_.ky > ty_ - 1)
            throw std::invalid_argument("kernel " + std::to_string(kernel_.kx) + "x" + std::to_string(kernel_.ky) +
                                        " larger than image " + std::to_string(nx_) + "x" + std::to_string(ny_) +
                                        " allows");
        const std::size_t nreal = tx_ * ty_;
        const std::size_t ncplx = ty_ * (tx_ / 2 + 1);
        auto real = detail::alloc_real(nreal);
        auto cplx = detail::alloc_complex(ncplx);
        {
            std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
            // FFTW is row-major with the last dimension contiguous: (rows = y, cols = x).
            forward_ = fftw_plan_dft_r2c_2d(int(ty_), int(tx_), real.get(), cplx.get(), FFTW_ESTIMATE);
            inverse_ = fftw_plan_dft_c2r_2d(int(ty_), int(tx_), cplx.get(), real.get(), FFTW_ESTIMATE);
        }
        if (!forward_ || !inverse_) throw std::runtime_error("FFTW plan creation failed");

        std::fill(real.get(), real.get() + nreal, 0.0);
        const long cx = long(kernel_.center_x()), cy = long(kernel_.center_y());
        for (std::size_t b = 0; b < kernel_.ky; ++b) {
            for (std::size_t a = 0; a < kernel_.kx; ++a) {
                const std::size_t x = std::size_t((long(a) - cx + long(tx_)) % long(tx_));
                const std::size_t y = std::size_t((long(b) - cy + long(ty_)) % long(ty_));
                real[x + tx_ * y] += kernel_(a, b);
            }
        }
        fftw_execute_dft_r2c(forward_, real.get(), cplx.get());
        spectrum_.resize(ncplx);
        for (std::size_t k = 0; k < ncplx; ++k) spectrum_[k] = {cplx[k][0], cplx[k][1]};
    }

    ReflectConvolution(const ReflectConvolution&) = delete;
    ReflectConvolution& operator=(const ReflectConvolution&) = delete;

    ~ReflectConvolution()
    {
        std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
        if (forward_) fftw_destroy_plan(forward_);
        if (inverse_) fftw_destroy_plan(inverse_);
    }

    const Kernel& kernel() const { return kernel_; }
    std::size_t width() const { return nx_; }
    std::size_t height() const { return ny_; }

    // K u, applied channel by channel.
    ImageGrid apply(const ImageGrid& u) const { return run(u, false); }

    // K^T u. Equals apply() for symmetric kernels.
    ImageGrid apply_adjoint(const ImageGrid& u) const { return run(u, true); }

private:
    ImageGrid run(const ImageGrid& u, bool adjoint) const
    {
        if (u.width() != nx_ || u.height() != ny_)
            throw std::invalid_argument("convolution: image size does not match the operator");
        ImageGrid out(u.shape());
        const std::size_t nreal = tx_ * ty_;
        const std::size_t ncplx = spectrum_.size();
        auto real = detail::alloc_real(nreal);
        auto cplx = detail::alloc_complex(ncplx);
        const double scale = 1.0 / double(nreal);

        for (std::size_t c = 0; c < u.channels(); ++c) {
            auto src = u.channel(c);
            auto dst = out.channel(c);
            if (!adjoint) {
                for (std::size_t y = 0; y < ty_; ++y) {
                    const std::size_t j = y < ny_ ? y : ty_ - 1 - y;
                    for (std::size_t x = 0; x < tx_; ++x) {
                        const std::size_t i = x < nx_ ? x : tx_ - 1 - x;
                        real[x + tx_ * y] = src[i + nx_ * j];
                    }
                }
            } else {
                // Transpose of restriction: zero padding.
                std::fill(real.get(), real.get() + nreal, 0.0);
                for (std::size_t j = 0; j < ny_; ++j)
                    for (std::size_t i = 0; i < nx_; ++i) real[i + tx_ * j] = src[i + nx_ * j];
            }

            fftw_execute_dft_r2c(forward_, real.get(), cplx.get());
            for (std::size_t k = 0; k < ncplx; ++k) {
                const std::complex<double> z(cplx[k][0], cplx[k][1]);
                const std::complex<double> h = adjoint ? std::conj(spectrum_[k]) : spectrum_[k];
                const std::complex<double> p = z * h;
                cplx[k][0] = p.real();
                cplx[k][1] = p.imag();
            }
            fftw_execute_dft_c2r(inverse_, cplx.get(), real.get());

            if (!adjoint) {
                for (std::size_t j = 0; j < ny_; ++j)
                    for (std::size_t i = 0; i < nx_; ++i) dst[i + nx_ * j] = real[i + tx_ * j] * scale;
            } else {
                // Transpose of the mirror embedding: fold the four quadrants back.
                for (std::size_t j = 0; j < ny_; ++j) {
                    const std::size_t yj = ty_ - 1 - j;
                    for (std::size_t i = 0; i < nx_; ++i) {
                        const std::size_t xi = tx_ - 1 - i;
                        dst[i + nx_ * j] = (real[i + tx_ * j] + real[xi + tx_ * j] + real[i + tx_ * yj] +
                                            real[xi + tx_ * yj]) *
                                           scale;
                    }
                }
            }
        }
        return out;
    }

    std::size_t nx_, ny_, tx_, ty_;
    Kernel kernel_;
    fftw_plan forward_ = nullptr;
    fftw_plan inverse_ = nullptr;
    std::vector<std::complex<double>> spectrum_;
};

inline ImageGrid convolve_reflect(const ImageGrid& u, const Kernel& k)
{
    require_single_channel(u, "convolve_reflect");
    return ReflectConvolution(u.width(), u.height(), k).apply(u);
}

} // namespace dgflow
