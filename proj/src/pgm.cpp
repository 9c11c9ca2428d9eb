#include "framepred/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace framepred {

namespace {

std::pair<std::size_t, std::size_t> image_size(const Tensor<float>& image) {
    const Shape& s = image.shape();
    if (s.size() == 2 || (s.size() == 3 && s[2] == 1)) return {s[0], s[1]};
    throw ShapeError("pgm: expected an (H,W) or (H,W,1) image, got " + to_string(s));
}

void write_bytes(std::size_t h, std::size_t w, const std::vector<unsigned char>& pixels,
                 const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out << "P5\n" << w << ' ' << h << "\n255\n";
    out.write(reinterpret_cast<const char*>(pixels.data()), std::streamsize(pixels.size()));
    if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

std::string header_token(std::istream& in) {
    std::string tok;
    while (in >> std::ws && in.peek() == '#') {
        std::string comment;
        std::getline(in, comment);
    }
    in >> tok;
    return tok;
}

}  // namespace

void write_pgm(const Tensor<float>& image, const std::filesystem::path& path) {
    const auto [h, w] = image_size(image);
    std::vector<unsigned char> px(h * w);
    for (std::size_t i = 0; i < px.size(); ++i)
        px[i] = static_cast<unsigned char>(std::lround(std::clamp(double(image[i]), 0.0, 1.0) * 255.0));
    write_bytes(h, w, px, path);
}

std::pair<float, float> write_pgm_normalized(const Tensor<float>& image, const std::filesystem::path& path) {
    const auto [h, w] = image_size(image);
    const auto [lo, hi] = std::minmax_element(image.data().begin(), image.data().end());
    const double mn = *lo, range = double(*hi) - double(*lo);
    std::vector<unsigned char> px(h * w, 0);
    if (range > 0.0)
        for (std::size_t i = 0; i < px.size(); ++i)
            px[i] = static_cast<unsigned char>(std::lround((double(image[i]) - mn) / range * 255.0));
    write_bytes(h, w, px, path);
    return {*lo, *hi};
}

Tensor<float> read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    if (header_token(in) != "P5") throw std::runtime_error("'" + path.string() + "' is not a binary PGM");
    std::size_t w = 0, h = 0, maxval = 0;
    try {
        w = std::stoul(header_token(in));
        h = std::stoul(header_token(in));
        maxval = std::stoul(header_token(in));
    } catch (const std::exception&) {
        throw std::runtime_error("'" + path.string() + "' has a malformed PGM header");
    }
    if (maxval != 255) throw std::runtime_error("'" + path.string() + "' has maxval " + std::to_string(maxval) + ", expected 255");
    in.get();
    std::vector<unsigned char> px(h * w);
    in.read(reinterpret_cast<char*>(px.data()), std::streamsize(px.size()));
    if (in.gcount() != std::streamsize(px.size())) throw std::runtime_error("'" + path.string() + "' is truncated");
    Tensor<float> image({h, w, 1});
    for (std::size_t i = 0; i < px.size(); ++i) image[i] = float(px[i]) / 255.0f;
    return image;
}

}  // namespace framepred
