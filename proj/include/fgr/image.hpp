#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fgr {

/// H x W x 3 8-bit RGB image, row-major, channel-interleaved.
struct ImageU8 {
    std::size_t height = 0, width = 0;
    std::vector<std::uint8_t> data;  // H*W*3

    ImageU8() = default;
    ImageU8(std::size_t h, std::size_t w) : height(h), width(w), data(h * w * 3, 0) {}

    std::uint8_t& px(std::size_t y, std::size_t x, std::size_t c) {
        return data[(y * width + x) * 3 + c];
    }
    std::uint8_t px(std::size_t y, std::size_t x, std::size_t c) const {
        return data[(y * width + x) * 3 + c];
    }
    bool valid() const { return height >= 1 && width >= 1 && data.size() == height * width * 3; }
};

std::uint8_t clamp_u8(double v);

// Binary PPM (P6, maxval 255)
ImageU8 read_ppm(const std::string& path);
void write_ppm(const std::string& path, const ImageU8& img);

}  // namespace fgr
