#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace utaam {

/// Grayscale raster with intensities in [0,1], row-major, origin top-left,
/// x rightward and y downward.
struct ImageGray {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<double> pixels;

    ImageGray() = default;
    ImageGray(std::size_t w, std::size_t h, double fill = 0.0)
        : width(w), height(h), pixels(w * h, fill) {}

    double operator()(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
    double& operator()(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
};

/// Bilinear sample with edge clamping. `clamped`, when given, is set if the
/// sample position fell outside the image rectangle.
double bilinear_sample(const ImageGray& image, double x, double y, bool* clamped = nullptr);

/// Binary 8-bit PGM (P5, maxval 255); intensities are mapped by /255 on
/// read and round-to-nearest on write.
void save_pgm(const std::filesystem::path& path, const ImageGray& image);
ImageGray load_pgm(const std::filesystem::path& path);

}  // namespace utaam
