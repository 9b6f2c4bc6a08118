#pragma once

#include <array>
#include <vector>

#include "fgr/image.hpp"

namespace fgr {

/// 8x8 block of DCT coefficients or spatial samples.
using Block8 = std::array<double, 64>;

/// Float image plane (H x W, row-major).
struct Plane {
    std::size_t height = 0, width = 0;
    std::vector<double> data;
    Plane() = default;
    Plane(std::size_t h, std::size_t w) : height(h), width(w), data(h * w, 0.0) {}
    double& at(std::size_t y, std::size_t x) { return data[y * width + x]; }
    double at(std::size_t y, std::size_t x) const { return data[y * width + x]; }
};

enum class PlaneKind { Luma, Chroma };

/// 8x8 quantization divisors, entries in [1,255].
struct QuantMatrix {
    std::array<int, 64> q{};
    PlaneKind kind = PlaneKind::Luma;
};

/// Full-range JFIF conversion; planes clamped to [0,255].
void rgb_to_ycbcr(const ImageU8& img, Plane& y, Plane& cb, Plane& cr);
ImageU8 ycbcr_to_rgb(const Plane& y, const Plane& cb, const Plane& cr);

/// Orthonormal 2-D DCT-II on an 8x8 block and its inverse.
Block8 dct8(const Block8& block);
Block8 idct8(const Block8& coeffs);

/// ITU-T T.81 Annex-K base table scaled by the libjpeg quality rule:
/// s = 5000/lambda (lambda < 50) else 200 - 2*lambda;
/// entry = clamp(floor((base*s + 50)/100), 1, 255).
QuantMatrix quant_matrix(int lambda, PlaneKind kind);

/// JPEG-style low-pass: YCbCr -> level shift -> blockwise DCT -> round(F/Q)*Q
/// -> IDCT -> RGB. Dimension-preserving; non-multiple-of-8 planes are
/// replicate-padded and cropped back.
ImageU8 filter_image(const ImageU8& img, int lambda);

/// Mean squared DCT coefficient per (u,v) over all luma blocks (level-shifted,
/// replicate-padded). Total equals the spatial mean square (Parseval).
Block8 spectral_energy(const ImageU8& img);

}  // namespace fgr
