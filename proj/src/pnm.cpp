#include "pnm.hpp"

#include <cctype>
#include <fstream>
#include <stdexcept>

namespace car {

namespace {

// Skips whitespace and '#' comment lines between header tokens.
int next_header_int(std::istream& in, const std::string& path) {
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            c = in.get();
        } else {
            break;
        }
    }
    if (c == EOF || !std::isdigit(c)) throw std::runtime_error("malformed PNM header in " + path);
    int v = 0;
    while (c != EOF && std::isdigit(c)) {
        v = v * 10 + (c - '0');
        c = in.get();
    }
    return v;
}

}  // namespace

void write_pnm(const std::string& path, const PnmImage& img) {
    if (img.channels != 1 && img.channels != 3)
        throw std::invalid_argument("write_pnm: channels must be 1 or 3");
    if (img.pixels.size() != size_t(img.width) * size_t(img.height) * size_t(img.channels))
        throw std::invalid_argument("write_pnm: pixel count does not match dimensions");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << (img.channels == 3 ? "P6" : "P5") << "\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()), std::streamsize(img.pixels.size()));
    if (!out) throw std::runtime_error("write failed for " + path);
}

PnmImage read_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    char p = 0, kind = 0;
    in.get(p);
    in.get(kind);
    if (p != 'P' || (kind != '5' && kind != '6')) throw std::runtime_error("malformed PNM header in " + path);
    PnmImage img;
    img.channels = kind == '6' ? 3 : 1;
    img.width = next_header_int(in, path);
    img.height = next_header_int(in, path);
    int maxval = next_header_int(in, path);
    if (maxval != 255) throw std::runtime_error("unsupported PNM maxval in " + path);
    if (img.width <= 0 || img.height <= 0) throw std::runtime_error("malformed PNM dimensions in " + path);
    // the single whitespace after maxval was consumed by next_header_int
    img.pixels.resize(size_t(img.width) * size_t(img.height) * size_t(img.channels));
    in.read(reinterpret_cast<char*>(img.pixels.data()), std::streamsize(img.pixels.size()));
    if (size_t(in.gcount()) != img.pixels.size()) throw std::runtime_error("truncated PNM payload in " + path);
    return img;
}

}  // namespace car
