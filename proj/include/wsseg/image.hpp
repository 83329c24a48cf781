#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wsseg/mat.hpp"

namespace wsseg {

// Integer label map (pixel value = class index).
struct GridU8 {
    int rows = 0;
    int cols = 0;
    std::vector<uint8_t> a;

    GridU8() = default;
    GridU8(int r, int c, uint8_t fill = 0)
        : rows(r), cols(c), a(static_cast<size_t>(r) * c, fill) {}

    uint8_t& at(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
    uint8_t at(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }
    bool same_shape(const GridU8& o) const { return rows == o.rows && cols == o.cols; }
};

// PGM (P5 binary / P2 ascii) readers and writers, 8- and 16-bit.
// Intensities are rescaled to [0,1] by maxval; index masks are read raw.
Mat load_pgm_intensity(const std::filesystem::path& path);
GridU8 load_pgm_index(const std::filesystem::path& path);
void save_pgm_intensity(const std::filesystem::path& path, const Mat& img);
void save_pgm_index(const std::filesystem::path& path, const GridU8& labels);

// Half-pixel-center bilinear resample.
Mat resize_bilinear(const Mat& src, int out_rows, int out_cols);
// Nearest-neighbor resample (ground-truth masks; prevents label mixing).
GridU8 resize_nearest(const GridU8& src, int out_rows, int out_cols);

// Rotation about the image center, bilinear sampling, zero fill outside.
Mat rotate_bilinear(const Mat& src, double degrees);
Mat hflip(const Mat& src);

}  // namespace wsseg
