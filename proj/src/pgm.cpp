#include "evoact/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace evoact {

void write_pgm(const std::string& path, int width, int height, const std::vector<std::uint8_t>& pixels) {
    if (static_cast<std::size_t>(width) * height != pixels.size()) {
        throw std::invalid_argument("write_pgm: pixel count does not match dimensions");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("write_pgm: cannot write " + path);
    out << "P5\n" << width << " " << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

PgmImage read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_pgm: cannot open " + path);
    std::string magic;
    in >> magic;
    if (magic != "P5") throw std::runtime_error("read_pgm: not a P5 file");
    PgmImage img;
    int maxval = 0;
    in >> img.width >> img.height >> maxval;
    if (maxval != 255) throw std::runtime_error("read_pgm: unsupported maxval");
    in.get();  // single whitespace after header
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (!in) throw std::runtime_error("read_pgm: truncated pixel data");
    return img;
}

std::vector<float> bilinear_upsample(const std::vector<float>& grid, int gw, int gh, int out_w, int out_h) {
    if (static_cast<std::size_t>(gw) * gh != grid.size()) {
        throw std::invalid_argument("bilinear_upsample: grid size mismatch");
    }
    std::vector<float> out(static_cast<std::size_t>(out_w) * out_h);
    for (int y = 0; y < out_h; ++y) {
        float sy = (static_cast<float>(y) + 0.5f) * gh / out_h - 0.5f;
        sy = std::clamp(sy, 0.0f, static_cast<float>(gh - 1));
        int y0 = static_cast<int>(std::floor(sy));
        int y1 = std::min(y0 + 1, gh - 1);
        float fy = sy - static_cast<float>(y0);
        for (int x = 0; x < out_w; ++x) {
            float sx = (static_cast<float>(x) + 0.5f) * gw / out_w - 0.5f;
            sx = std::clamp(sx, 0.0f, static_cast<float>(gw - 1));
            int x0 = static_cast<int>(std::floor(sx));
            int x1 = std::min(x0 + 1, gw - 1);
            float fx = sx - static_cast<float>(x0);
            float v00 = grid[static_cast<std::size_t>(y0) * gw + x0];
            float v01 = grid[static_cast<std::size_t>(y0) * gw + x1];
            float v10 = grid[static_cast<std::size_t>(y1) * gw + x0];
            float v11 = grid[static_cast<std::size_t>(y1) * gw + x1];
            out[static_cast<std::size_t>(y) * out_w + x] =
                (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
        }
    }
    return out;
}

}  // namespace evoact
