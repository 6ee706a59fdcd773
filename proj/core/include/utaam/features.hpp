#pragma once

#include <Eigen/Dense>
#include <cstddef>

#include "utaam/geometry.hpp"
#include "utaam/image.hpp"

namespace utaam {

/// Local descriptor hyperparameters. The descriptor length per image is
/// L * bins * (patch_side / cell_side)^2.
struct HogSpec {
    std::size_t patch_side = 32;
    std::size_t cell_side = 8;
    std::size_t bins = 9;
    double epsilon = 1e-6;

    std::size_t cells_per_side() const { return patch_side / cell_side; }
    std::size_t per_landmark() const { return bins * cells_per_side() * cells_per_side(); }
    std::size_t feature_length(std::size_t landmarks) const { return landmarks * per_landmark(); }
};

void validate(const HogSpec& spec);

/// Histogram-of-oriented-gradients patches around every landmark of the
/// current shape estimate, concatenated in landmark order. Patches are
/// centered on the rounded landmark and edge-clamped; gradients are central
/// differences; orientation is unsigned with hard bin assignment; each
/// patch descriptor is L2-normalized with the spec epsilon.
Eigen::VectorXd extract_features(const ImageGray& image, const FaceShape& shape,
                                 const HogSpec& spec);

}  // namespace utaam
