#include "wsseg/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "wsseg/errors.hpp"

namespace wsseg {

namespace {

struct PgmHeader {
    bool binary = true;
    int rows = 0;
    int cols = 0;
    int maxval = 255;
};

int next_pgm_token(std::istream& in) {
    // Skips whitespace and '#' comments, returns the next integer.
    for (;;) {
        int c = in.peek();
        if (c == EOF) throw DataError("pgm: truncated header");
        if (c == '#') {
            std::string line;
            std::getline(in, line);
            continue;
        }
        if (std::isspace(c)) {
            in.get();
            continue;
        }
        break;
    }
    int v = 0;
    in >> v;
    if (!in) throw DataError("pgm: malformed header value");
    return v;
}

PgmHeader read_pgm_header(std::istream& in, const std::filesystem::path& path) {
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (m0 != 'P' || (m1 != '5' && m1 != '2')) {
        throw DataError("pgm: not a P5/P2 file: " + path.string());
    }
    PgmHeader h;
    h.binary = (m1 == '5');
    h.cols = next_pgm_token(in);
    h.rows = next_pgm_token(in);
    h.maxval = next_pgm_token(in);
    if (h.rows <= 0 || h.cols <= 0 || h.maxval <= 0 || h.maxval > 65535) {
        throw DataError("pgm: bad dimensions/maxval in " + path.string());
    }
    if (h.binary) in.get();  // single whitespace between header and payload
    return h;
}

std::vector<uint32_t> read_pgm_pixels(std::istream& in, const PgmHeader& h,
                                      const std::filesystem::path& path) {
    const size_t n = static_cast<size_t>(h.rows) * h.cols;
    std::vector<uint32_t> px(n);
    if (h.binary) {
        if (h.maxval < 256) {
            std::vector<uint8_t> buf(n);
            in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
            if (static_cast<size_t>(in.gcount()) != n)
                throw DataError("pgm: truncated payload in " + path.string());
            for (size_t i = 0; i < n; ++i) px[i] = buf[i];
        } else {
            // 16-bit PGM payloads are big-endian
            std::vector<uint8_t> buf(n * 2);
            in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * 2));
            if (static_cast<size_t>(in.gcount()) != n * 2)
                throw DataError("pgm: truncated payload in " + path.string());
            for (size_t i = 0; i < n; ++i)
                px[i] = (static_cast<uint32_t>(buf[2 * i]) << 8) | buf[2 * i + 1];
        }
    } else {
        for (size_t i = 0; i < n; ++i) px[i] = static_cast<uint32_t>(next_pgm_token(in));
    }
    return px;
}

}  // namespace

Mat load_pgm_intensity(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open image: " + path.string());
    const PgmHeader h = read_pgm_header(in, path);
    const auto px = read_pgm_pixels(in, h, path);
    Mat img(h.rows, h.cols);
    const double inv = 1.0 / h.maxval;
    for (size_t i = 0; i < px.size(); ++i) img.a[i] = px[i] * inv;
    return img;
}

GridU8 load_pgm_index(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open mask: " + path.string());
    const PgmHeader h = read_pgm_header(in, path);
    if (h.maxval > 255) throw DataError("mask must be 8-bit: " + path.string());
    const auto px = read_pgm_pixels(in, h, path);
    GridU8 g(h.rows, h.cols);
    for (size_t i = 0; i < px.size(); ++i) g.a[i] = static_cast<uint8_t>(px[i]);
    return g;
}

void save_pgm_intensity(const std::filesystem::path& path, const Mat& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write image: " + path.string());
    out << "P5\n" << img.cols << " " << img.rows << "\n255\n";
    std::vector<uint8_t> buf(img.size());
    for (size_t i = 0; i < img.size(); ++i) {
        const double v = std::clamp(img.a[i], 0.0, 1.0);
        buf[i] = static_cast<uint8_t>(std::lround(v * 255.0));
    }
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size()));
    if (!out) throw DataError("write failed: " + path.string());
}

void save_pgm_index(const std::filesystem::path& path, const GridU8& labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write mask: " + path.string());
    out << "P5\n" << labels.cols << " " << labels.rows << "\n255\n";
    out.write(reinterpret_cast<const char*>(labels.a.data()),
              static_cast<std::streamsize>(labels.a.size()));
    if (!out) throw DataError("write failed: " + path.string());
}

Mat resize_bilinear(const Mat& src, int out_rows, int out_cols) {
    if (src.rows <= 0 || src.cols <= 0) throw DataError("resize_bilinear: empty source");
    if (out_rows == src.rows && out_cols == src.cols) return src;
    Mat dst(out_rows, out_cols);
    const double sr = static_cast<double>(src.rows) / out_rows;
    const double sc = static_cast<double>(src.cols) / out_cols;
    for (int i = 0; i < out_rows; ++i) {
        double fy = (i + 0.5) * sr - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(src.rows - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, src.rows - 1);
        const double wy = fy - y0;
        for (int j = 0; j < out_cols; ++j) {
            double fx = (j + 0.5) * sc - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(src.cols - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, src.cols - 1);
            const double wx = fx - x0;
            const double top = src.at(y0, x0) * (1.0 - wx) + src.at(y0, x1) * wx;
            const double bot = src.at(y1, x0) * (1.0 - wx) + src.at(y1, x1) * wx;
            dst.at(i, j) = top * (1.0 - wy) + bot * wy;
        }
    }
    return dst;
}

Mat rotate_bilinear(const Mat& src, double degrees) {
    const double rad = degrees * 3.14159265358979323846 / 180.0;
    const double ca = std::cos(rad), sa = std::sin(rad);
    const double cy = (src.rows - 1) * 0.5;
    const double cx = (src.cols - 1) * 0.5;
    Mat dst(src.rows, src.cols, 0.0);
    for (int i = 0; i < src.rows; ++i) {
        for (int j = 0; j < src.cols; ++j) {
            // Inverse map: sample the source at the rotated position.
            const double dy = i - cy, dx = j - cx;
            const double sy = cy + ca * dy + sa * dx;
            const double sx = cx - sa * dy + ca * dx;
            if (sy < 0.0 || sy > src.rows - 1 || sx < 0.0 || sx > src.cols - 1) continue;
            const int y0 = static_cast<int>(sy);
            const int x0 = static_cast<int>(sx);
            const int y1 = std::min(y0 + 1, src.rows - 1);
            const int x1 = std::min(x0 + 1, src.cols - 1);
            const double wy = sy - y0, wx = sx - x0;
            const double top = src.at(y0, x0) * (1.0 - wx) + src.at(y0, x1) * wx;
            const double bot = src.at(y1, x0) * (1.0 - wx) + src.at(y1, x1) * wx;
            dst.at(i, j) = top * (1.0 - wy) + bot * wy;
        }
    }
    return dst;
}

Mat hflip(const Mat& src) {
    Mat dst(src.rows, src.cols);
    for (int i = 0; i < src.rows; ++i)
        for (int j = 0; j < src.cols; ++j) dst.at(i, j) = src.at(i, src.cols - 1 - j);
    return dst;
}

GridU8 resize_nearest(const GridU8& src, int out_rows, int out_cols) {
    if (src.rows <= 0 || src.cols <= 0) throw DataError("resize_nearest: empty source");
    if (out_rows == src.rows && out_cols == src.cols) return src;
    GridU8 dst(out_rows, out_cols);
    const double sr = static_cast<double>(src.rows) / out_rows;
    const double sc = static_cast<double>(src.cols) / out_cols;
    for (int i = 0; i < out_rows; ++i) {
        int y = static_cast<int>((i + 0.5) * sr);
        y = std::clamp(y, 0, src.rows - 1);
        for (int j = 0; j < out_cols; ++j) {
            int x = static_cast<int>((j + 0.5) * sc);
            x = std::clamp(x, 0, src.cols - 1);
            dst.at(i, j) = src.at(y, x);
        }
    }
    return dst;
}

}  // namespace wsseg
