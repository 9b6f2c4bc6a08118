#include "fgr/freq_filter.hpp"

#include <cmath>
#include <stdexcept>

namespace fgr {

namespace {

// ITU-T T.81 Annex K, Tables K.1 (luma) and K.2 (chroma)
constexpr int kBaseLuma[64] = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99};
constexpr int kBaseChroma[64] = {
    17, 18, 24, 47, 99, 99, 99, 99,  //
    18, 21, 26, 66, 99, 99, 99, 99,  //
    24, 26, 56, 99, 99, 99, 99, 99,  //
    47, 66, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99};

// orthonormal DCT-II basis: C[u][x] = c_u cos((2x+1)u*pi/16)
struct DctBasis {
    double c[8][8];
    DctBasis() {
        const double pi = std::acos(-1.0);
        for (int u = 0; u < 8; ++u) {
            double cu = (u == 0) ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
            for (int x = 0; x < 8; ++x) c[u][x] = cu * std::cos((2 * x + 1) * u * pi / 16.0);
        }
    }
};
const DctBasis& basis() {
    static const DctBasis b;
    return b;
}

double clamp255(double v) { return v < 0.0 ? 0.0 : (v > 255.0 ? 255.0 : v); }

Plane pad_to_8(const Plane& p) {
    std::size_t ph = (p.height + 7) / 8 * 8, pw = (p.width + 7) / 8 * 8;
    if (ph == p.height && pw == p.width) return p;
    Plane out(ph, pw);
    for (std::size_t y = 0; y < ph; ++y) {
        std::size_t sy = y < p.height ? y : p.height - 1;
        for (std::size_t x = 0; x < pw; ++x)
            out.at(y, x) = p.at(sy, x < p.width ? x : p.width - 1);
    }
    return out;
}

Block8 get_block(const Plane& p, std::size_t by, std::size_t bx, double shift) {
    Block8 b;
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) b[y * 8 + x] = p.at(by + y, bx + x) + shift;
    return b;
}

void put_block(Plane& p, std::size_t by, std::size_t bx, const Block8& b, double shift) {
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) p.at(by + y, bx + x) = b[y * 8 + x] + shift;
}

Plane filter_plane(const Plane& in, const QuantMatrix& q) {
    Plane p = pad_to_8(in);
    for (std::size_t by = 0; by < p.height; by += 8)
        for (std::size_t bx = 0; bx < p.width; bx += 8) {
            Block8 f = dct8(get_block(p, by, bx, -128.0));
            for (int i = 0; i < 64; ++i) f[i] = std::round(f[i] / q.q[i]) * q.q[i];
            put_block(p, by, bx, idct8(f), 128.0);
        }
    if (p.height == in.height && p.width == in.width) return p;
    Plane out(in.height, in.width);
    for (std::size_t y = 0; y < in.height; ++y)
        for (std::size_t x = 0; x < in.width; ++x) out.at(y, x) = p.at(y, x);
    return out;
}

}  // namespace

void rgb_to_ycbcr(const ImageU8& img, Plane& y, Plane& cb, Plane& cr) {
    y = Plane(img.height, img.width);
    cb = Plane(img.height, img.width);
    cr = Plane(img.height, img.width);
    for (std::size_t i = 0; i < img.height; ++i)
        for (std::size_t j = 0; j < img.width; ++j) {
            double r = img.px(i, j, 0), g = img.px(i, j, 1), b = img.px(i, j, 2);
            y.at(i, j) = clamp255(0.299 * r + 0.587 * g + 0.114 * b);
            cb.at(i, j) = clamp255(128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b);
            cr.at(i, j) = clamp255(128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b);
        }
}

ImageU8 ycbcr_to_rgb(const Plane& y, const Plane& cb, const Plane& cr) {
    ImageU8 img(y.height, y.width);
    for (std::size_t i = 0; i < y.height; ++i)
        for (std::size_t j = 0; j < y.width; ++j) {
            double yy = y.at(i, j), u = cb.at(i, j) - 128.0, v = cr.at(i, j) - 128.0;
            img.px(i, j, 0) = clamp_u8(yy + 1.402 * v);
            img.px(i, j, 1) = clamp_u8(yy - 0.344136 * u - 0.714136 * v);
            img.px(i, j, 2) = clamp_u8(yy + 1.772 * u);
        }
    return img;
}

Block8 dct8(const Block8& block) {
    const auto& B = basis();
    // rows then columns: F = C X C^T
    double tmp[64];
    for (int u = 0; u < 8; ++u)
        for (int x = 0; x < 8; ++x) {
            double s = 0.0;
            for (int k = 0; k < 8; ++k) s += B.c[u][k] * block[k * 8 + x];
            tmp[u * 8 + x] = s;
        }
    Block8 out;
    for (int u = 0; u < 8; ++u)
        for (int v = 0; v < 8; ++v) {
            double s = 0.0;
            for (int k = 0; k < 8; ++k) s += tmp[u * 8 + k] * B.c[v][k];
            out[u * 8 + v] = s;
        }
    return out;
}

Block8 idct8(const Block8& coeffs) {
    const auto& B = basis();
    double tmp[64];
    for (int x = 0; x < 8; ++x)
        for (int v = 0; v < 8; ++v) {
            double s = 0.0;
            for (int k = 0; k < 8; ++k) s += B.c[k][x] * coeffs[k * 8 + v];
            tmp[x * 8 + v] = s;
        }
    Block8 out;
    for (int x = 0; x < 8; ++x)
        for (int y = 0; y < 8; ++y) {
            double s = 0.0;
            for (int k = 0; k < 8; ++k) s += tmp[x * 8 + k] * B.c[k][y];
            out[x * 8 + y] = s;
        }
    return out;
}

QuantMatrix quant_matrix(int lambda, PlaneKind kind) {
    if (lambda < 1 || lambda > 100)
        throw std::invalid_argument("quant_matrix: lambda must be in [1,100], got " +
                                    std::to_string(lambda));
    const int* base = kind == PlaneKind::Luma ? kBaseLuma : kBaseChroma;
    const int s = lambda < 50 ? 5000 / lambda : 200 - 2 * lambda;
    QuantMatrix q;
    q.kind = kind;
    for (int i = 0; i < 64; ++i) {
        int v = (base[i] * s + 50) / 100;
        q.q[i] = v < 1 ? 1 : (v > 255 ? 255 : v);
    }
    return q;
}

ImageU8 filter_image(const ImageU8& img, int lambda) {
    if (!img.valid()) throw std::invalid_argument("filter_image: invalid image");
    QuantMatrix ql = quant_matrix(lambda, PlaneKind::Luma);
    QuantMatrix qc = quant_matrix(lambda, PlaneKind::Chroma);
    Plane y, cb, cr;
    rgb_to_ycbcr(img, y, cb, cr);
    return ycbcr_to_rgb(filter_plane(y, ql), filter_plane(cb, qc), filter_plane(cr, qc));
}

Block8 spectral_energy(const ImageU8& img) {
    Plane y, cb, cr;
    rgb_to_ycbcr(img, y, cb, cr);
    Plane p = pad_to_8(y);
    Block8 energy{};
    std::size_t nblocks = 0;
    for (std::size_t by = 0; by < p.height; by += 8)
        for (std::size_t bx = 0; bx < p.width; bx += 8) {
            Block8 f = dct8(get_block(p, by, bx, -128.0));
            for (int i = 0; i < 64; ++i) energy[i] += f[i] * f[i];
            ++nblocks;
        }
    for (int i = 0; i < 64; ++i) energy[i] /= double(nblocks);
    return energy;
}

}  // namespace fgr
