#pragma once

// Deterministic synthetic data: Gaussian noise, uniform random fields and the
// piecewise-smooth "shapes" test image with matching inpainting masks.
//
// Random numbers come from a counter-based generator, so element k of a field
// depends only on (seed, k):
//
//   mix(z):  z += 0x9E3779B97F4A7C15
//            z  = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//            z  = (z ^ (z >> 27)) * 0x94D049BB133111EB
//            return z ^ (z >> 31)
//   bits(seed, stream, k) = mix(mix(seed ^ stream) + k * 0x9E3779B97F4A7C15)
//   uniform(seed, stream, k) = ((bits >> 11) + 1) * 2^-53           in (0, 1]
//
// Gaussian samples use Box-Muller on the pair (2m, 2m+1) for elements 2m and
// 2m+1 (cosine and sine branch respectively).

#include "dgflow/functionals.hpp"
#include "dgflow/grid.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>

namespace dgflow {

namespace rng {

inline constexpr std::uint64_t golden = 0x9E3779B97F4A7C15ull;
inline constexpr std::uint64_t noise_stream = 0x6E6F697365000000ull;   // "noise"
inline constexpr std::uint64_t uniform_stream = 0x756E69666F726D00ull; // "uniform"

constexpr std::uint64_t mix(std::uint64_t z)
{
    z += golden;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

constexpr std::uint64_t bits(std::uint64_t seed, std::uint64_t stream, std::uint64_t k)
{
    return mix(mix(seed ^ stream) + k * golden);
}

constexpr double uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t k)
{
    return double((bits(seed, stream, k) >> 11) + 1) * 0x1.0p-53;
}

} // namespace rng

// Zero-mean Gaussian field with standard deviation sigma.
inline ImageGrid synth_noise(const Shape& shape, double sigma, std::uint64_t seed)
{
    if (!(sigma >= 0.0)) throw std::invalid_argument("sigma must be non-negative");
    ImageGrid out(shape);
    if (sigma == 0.0) return out;
    for (std::size_t k = 0; k < out.size(); ++k) {
        const std::uint64_t m = k / 2;
        const double u1 = rng::uniform(seed, rng::noise_stream, 2 * m);
        const double u2 = rng::uniform(seed, rng::noise_stream, 2 * m + 1);
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        out[k] = sigma * r * (k % 2 == 0 ? std::cos(angle) : std::sin(angle));
    }
    return out;
}

// Independent uniform intensities in [lo, hi].
inline ImageGrid uniform_field(const Shape& shape, double lo, double hi, std::uint64_t seed)
{
    ImageGrid out(shape);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = lo + (hi - lo) * rng::uniform(seed, rng::uniform_stream, k);
    return out;
}

// Linear ramp along x with two constant rectangles on top, values in [0.1, 0.85].
// Channel c > 0 is a shifted variant so colour channels are not identical.
inline ImageGrid shapes_image(std::size_t width, std::size_t height, std::size_t channels = 1)
{
    ImageGrid u(Shape{width, height, channels});
    for (std::size_t c = 0; c < channels; ++c) {
        const double shift = 0.05 * double(c);
        for (std::size_t j = 0; j < height; ++j) {
            for (std::size_t i = 0; i < width; ++i) {
                double v = 0.2 + shift + 0.3 * double(i) / double(std::max<std::size_t>(width - 1, 1));
                if (5 * i >= width && 2 * i < width && 4 * j >= height && 4 * j < 3 * height) v = 0.85 - shift;
                if (5 * i >= 3 * width && 10 * i < 9 * width && 8 * j >= height && 8 * j < 3 * height) v = 0.1 + shift;
                u(i, j, c) = v;
            }
        }
    }
    return u;
}

// Shapes image plus Gaussian noise.
inline ImageGrid noisy_shapes(std::size_t width, std::size_t height, double sigma, std::uint64_t seed,
                              std::size_t channels = 1)
{
    ImageGrid u = shapes_image(width, height, channels);
    u += synth_noise(u.shape(), sigma, seed);
    return u;
}

// Text-like occlusion: two horizontal strokes and one vertical stroke, two
// pixels thick.
inline Mask stroke_mask(std::size_t width, std::size_t height)
{
    Mask m = Mask::empty(width, height);
    for (std::size_t j = 0; j < height; ++j) {
        for (std::size_t i = 0; i < width; ++i) {
            const bool horizontal = (j == height / 3 || j == height / 3 + 1 || j == 2 * height / 3 ||
                                     j == 2 * height / 3 + 1) &&
                                    i >= width / 8 && i < width - width / 8;
            const bool vertical = (i == width / 2 || i == width / 2 + 1) && j >= height / 4 && j < height - height / 4;
            if (horizontal || vertical) m.inside[i + width * j] = 1;
        }
    }
    return m;
}

} // namespace dgflow
