#include "mit/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace mit {

namespace {

void write_p5(const std::filesystem::path& file, const unsigned char* data, int w, int h) {
    std::ofstream os(file, std::ios::binary);
    if (!os) throw std::runtime_error("write_pgm: cannot open " + file.string());
    os << "P5\n" << w << " " << h << "\n255\n";
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(w) * h);
    if (!os) throw std::runtime_error("write_pgm: write failed for " + file.string());
}

}  // namespace

void write_pgm(const FieldImage& img, const std::filesystem::path& file) {
    std::vector<unsigned char> bytes(img.pixels.size());
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        const float v = std::clamp(img.pixels[i], 0.0f, 1.0f);
        bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
    write_p5(file, bytes.data(), FieldImage::kRes, FieldImage::kRes);
}

void write_pgm(const Mask& mask, const std::filesystem::path& file) {
    std::vector<unsigned char> bytes(mask.pixels.size());
    for (std::size_t i = 0; i < mask.pixels.size(); ++i) bytes[i] = mask.pixels[i] ? 255 : 0;
    write_p5(file, bytes.data(), Mask::kRes, Mask::kRes);
}

FieldImage read_pgm(const std::filesystem::path& file) {
    std::ifstream is(file, std::ios::binary);
    if (!is) throw std::runtime_error("read_pgm: cannot open " + file.string());
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    is >> magic >> w >> h >> maxval;
    if (magic != "P5" || w != FieldImage::kRes || h != FieldImage::kRes || maxval != 255)
        throw std::runtime_error("read_pgm: unsupported format in " + file.string());
    is.get();  // single whitespace after the header
    std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h);
    is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!is) throw std::runtime_error("read_pgm: truncated file " + file.string());
    FieldImage img;
    for (std::size_t i = 0; i < bytes.size(); ++i)
        img.pixels[i] = static_cast<float>(bytes[i]) / 255.0f;
    return img;
}

}  // namespace mit
