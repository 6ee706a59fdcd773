#include "utaam/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "utaam/errors.hpp"

namespace utaam {

void validate(const HogSpec& spec) {
    if (spec.cell_side == 0 || spec.patch_side == 0 || spec.patch_side % spec.cell_side != 0)
        throw InvalidArgument("HogSpec: patch side must be a positive multiple of cell side");
    if (spec.bins < 2) throw InvalidArgument("HogSpec: need at least 2 orientation bins");
    if (!(spec.epsilon > 0.0)) throw InvalidArgument("HogSpec: epsilon must be positive");
}

Eigen::VectorXd extract_features(const ImageGray& image, const FaceShape& shape,
                                 const HogSpec& spec) {
    validate(spec);
    if (!shape.coords.allFinite()) throw InvalidArgument("extract_features: non-finite shape");
    if (image.width == 0 || image.height == 0)
        throw InvalidArgument("extract_features: empty image");

    const std::size_t landmarks = shape.landmark_count();
    const std::size_t cells = spec.cells_per_side();
    const std::size_t per_landmark = spec.per_landmark();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(per_landmark * landmarks));

    auto pixel = [&](long x, long y) {
        x = std::clamp<long>(x, 0, static_cast<long>(image.width) - 1);
        y = std::clamp<long>(y, 0, static_cast<long>(image.height) - 1);
        return image(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
    };

    const long half = static_cast<long>(spec.patch_side) / 2;
    for (std::size_t l = 0; l < landmarks; ++l) {
        const long cx = std::lround(shape.x(l));
        const long cy = std::lround(shape.y(l));
        const long x0 = cx - half;
        const long y0 = cy - half;

        Eigen::VectorXd desc = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(per_landmark));
        for (std::size_t j = 0; j < spec.patch_side; ++j)
            for (std::size_t i = 0; i < spec.patch_side; ++i) {
                const long px = x0 + static_cast<long>(i);
                const long py = y0 + static_cast<long>(j);
                const double gx = 0.5 * (pixel(px + 1, py) - pixel(px - 1, py));
                const double gy = 0.5 * (pixel(px, py + 1) - pixel(px, py - 1));
                const double mag = std::hypot(gx, gy);
                if (mag == 0.0) continue;

                double theta = std::atan2(gy, gx);
                if (theta < 0.0) theta += std::numbers::pi;
                if (theta >= std::numbers::pi) theta -= std::numbers::pi;
                const std::size_t bin = std::min(
                    static_cast<std::size_t>(theta / std::numbers::pi * static_cast<double>(spec.bins)),
                    spec.bins - 1);

                const std::size_t cell = (j / spec.cell_side) * cells + (i / spec.cell_side);
                desc[static_cast<Eigen::Index>(cell * spec.bins + bin)] += mag;
            }

        desc /= std::sqrt(desc.squaredNorm() + spec.epsilon * spec.epsilon);
        out.segment(static_cast<Eigen::Index>(l * per_landmark),
                    static_cast<Eigen::Index>(per_landmark)) = desc;
    }
    return out;
}

}  // namespace utaam
