#include "utaam/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>

#include "utaam/errors.hpp"

namespace utaam {

double bilinear_sample(const ImageGray& image, double x, double y, bool* clamped) {
    if (image.width == 0 || image.height == 0)
        throw InvalidArgument("bilinear_sample: empty image");

    const double max_x = static_cast<double>(image.width - 1);
    const double max_y = static_cast<double>(image.height - 1);
    if (clamped && (x < 0.0 || y < 0.0 || x > max_x || y > max_y)) *clamped = true;
    x = std::clamp(x, 0.0, max_x);
    y = std::clamp(y, 0.0, max_y);

    const std::size_t x0 = static_cast<std::size_t>(x);
    const std::size_t y0 = static_cast<std::size_t>(y);
    const std::size_t x1 = std::min(x0 + 1, image.width - 1);
    const std::size_t y1 = std::min(y0 + 1, image.height - 1);
    const double fx = x - static_cast<double>(x0);
    const double fy = y - static_cast<double>(y0);

    const double top = image(x0, y0) * (1.0 - fx) + image(x1, y0) * fx;
    const double bottom = image(x0, y1) * (1.0 - fx) + image(x1, y1) * fx;
    return top * (1.0 - fy) + bottom * fy;
}

void save_pgm(const std::filesystem::path& path, const ImageGray& image) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "P5\n" << image.width << " " << image.height << "\n255\n";
    std::vector<unsigned char> row(image.width);
    for (std::size_t y = 0; y < image.height; ++y) {
        for (std::size_t x = 0; x < image.width; ++x) {
            const double v = std::clamp(image(x, y), 0.0, 1.0);
            row[x] = static_cast<unsigned char>(std::lround(v * 255.0));
        }
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw IoError("PGM write failed: " + path.string());
}

namespace {

// Reads one whitespace-delimited token, skipping '#' comment lines.
std::string next_pgm_token(std::istream& in) {
    std::string token;
    char c;
    while (in.get(c)) {
        if (c == '#') {
            while (in.get(c) && c != '\n') {
            }
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!token.empty()) return token;
            continue;
        }
        token.push_back(c);
    }
    return token;
}

}  // namespace

ImageGray load_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path.string());

    if (next_pgm_token(in) != "P5") throw IoError("not a binary PGM (P5): " + path.string());
    const std::size_t width = std::stoul(next_pgm_token(in));
    const std::size_t height = std::stoul(next_pgm_token(in));
    const std::size_t maxval = std::stoul(next_pgm_token(in));
    if (width == 0 || height == 0 || maxval != 255)
        throw IoError("unsupported PGM header in " + path.string());

    ImageGray image(width, height);
    std::vector<unsigned char> raw(width * height);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!in) throw IoError("truncated PGM payload: " + path.string());
    for (std::size_t i = 0; i < raw.size(); ++i)
        image.pixels[i] = static_cast<double>(raw[i]) / 255.0;
    return image;
}

}  // namespace utaam
