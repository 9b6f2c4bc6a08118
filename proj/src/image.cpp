#include "fgr/image.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace fgr {

std::uint8_t clamp_u8(double v) {
    double r = std::round(v);
    if (r < 0.0) return 0;
    if (r > 255.0) return 255;
    return std::uint8_t(r);
}

static int read_token(std::istream& in) {
    // skips whitespace and '#' comments
    while (true) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    int v;
    if (!(in >> v)) throw std::runtime_error("read_ppm: malformed header");
    return v;
}

ImageU8 read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_ppm: cannot open " + path);
    std::string magic;
    in >> magic;
    if (magic != "P6") throw std::runtime_error("read_ppm: not a P6 file: " + path);
    int w = read_token(in), h = read_token(in), maxval = read_token(in);
    if (maxval != 255) throw std::runtime_error("read_ppm: only maxval 255 supported");
    in.get();  // single whitespace after header
    ImageU8 img{std::size_t(h), std::size_t(w)};
    in.read(reinterpret_cast<char*>(img.data.data()), std::streamsize(img.data.size()));
    if (std::size_t(in.gcount()) != img.data.size())
        throw std::runtime_error("read_ppm: truncated pixel data in " + path);
    return img;
}

void write_ppm(const std::string& path, const ImageU8& img) {
    if (!img.valid()) throw std::invalid_argument("write_ppm: invalid image");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_ppm: cannot open " + path);
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.data.data()), std::streamsize(img.data.size()));
}

}  // namespace fgr
