#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace evoact {

// Binary PGM (P5, maxval 255, row-major).
void write_pgm(const std::string& path, int width, int height, const std::vector<std::uint8_t>& pixels);

struct PgmImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;
};
PgmImage read_pgm(const std::string& path);

// Center-aligned bilinear resize of a gw x gh grid to out_w x out_h.
std::vector<float> bilinear_upsample(const std::vector<float>& grid, int gw, int gh, int out_w, int out_h);

}  // namespace evoact
