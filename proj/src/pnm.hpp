#pragma once

// Binary PPM (P6) and PGM (P5) readers and writers, 8-bit.

#include <cstdint>
#include <string>
#include <vector>

namespace car {

struct PnmImage {
    int width = 0;
    int height = 0;
    int channels = 1;               // 1 for PGM, 3 for PPM
    std::vector<uint8_t> pixels;    // row-major, interleaved
};

void write_pnm(const std::string& path, const PnmImage& img);
PnmImage read_pnm(const std::string& path);

}  // namespace car
