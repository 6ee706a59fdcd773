#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "utaam/image.hpp"

namespace utaam {

/// L landmarks stored as the concatenated vector [x_1, y_1, ..., x_L, y_L]
/// in pixel coordinates (origin top-left, y downward).
struct FaceShape {
    Eigen::VectorXd coords;

    FaceShape() = default;
    explicit FaceShape(Eigen::VectorXd c) : coords(std::move(c)) {}

    std::size_t landmark_count() const { return static_cast<std::size_t>(coords.size()) / 2; }
    double x(std::size_t l) const { return coords[static_cast<Eigen::Index>(2 * l)]; }
    double y(std::size_t l) const { return coords[static_cast<Eigen::Index>(2 * l + 1)]; }
    Eigen::Vector2d point(std::size_t l) const { return {x(l), y(l)}; }
    void set_point(std::size_t l, const Eigen::Vector2d& p) {
        coords[static_cast<Eigen::Index>(2 * l)] = p.x();
        coords[static_cast<Eigen::Index>(2 * l + 1)] = p.y();
    }
};

/// Shape-free pixel intensities over the reference lattice.
using TextureVector = Eigen::VectorXd;

/// Similarity transform p_g = [scale, theta, t_x, t_y]: scale-rotation
/// about the origin followed by translation.
struct AffineParams {
    double scale = 1.0;
    double theta = 0.0;
    double tx = 0.0;
    double ty = 0.0;
};

FaceShape apply_affine(const FaceShape& shape, const AffineParams& g);
AffineParams invert(const AffineParams& g);
/// compose(outer, inner): apply inner first, then outer.
AffineParams compose(const AffineParams& outer, const AffineParams& inner);

/// Linear 4-vector encoding (s cos t, s sin t, t_x, t_y) used wherever the
/// affine segment sits inside a regression parameter vector.
Eigen::Vector4d affine_to_linear(const AffineParams& g);
AffineParams affine_from_linear(const Eigen::Vector4d& v);

struct ProcrustesResult {
    std::vector<FaceShape> aligned;
    FaceShape mean;                        // zero centroid, unit centroid size
    std::vector<AffineParams> transforms;  // original = G(aligned, transform)
    std::size_t iterations = 0;
};

/// Generalized Procrustes alignment by similarity transforms.
ProcrustesResult procrustes_align(std::span<const FaceShape> shapes, std::size_t max_iter = 100,
                                  double tol = 1e-12);

/// Similarity aligning `shape` onto `target` in least squares; returns the
/// transform that maps the aligned copy back onto the original.
AffineParams align_to_target(const FaceShape& shape, const FaceShape& target,
                             FaceShape* aligned = nullptr);

/// Delaunay triangulation of a planar point set. Triangles are returned
/// with sorted vertex indices, list sorted lexicographically. Exactly
/// degenerate (cocircular) configurations are resolved by a deterministic
/// 1e-9 px jitter; `jittered` reports whether that was needed.
std::vector<std::array<int, 3>> delaunay_triangulate(const std::vector<Eigen::Vector2d>& points,
                                                     bool* jittered = nullptr);

struct LatticePixel {
    int x = 0;
    int y = 0;
    int triangle = 0;
    double w0 = 0.0, w1 = 0.0, w2 = 0.0;  // barycentric in the reference triangle
};

/// Reference shape plus its triangulation and the interior pixel lattice in
/// raster order; the lattice length defines the texture vector size I_t.
class ReferenceMesh {
public:
    ReferenceMesh() = default;
    ReferenceMesh(FaceShape reference, std::vector<std::array<int, 3>> triangles);

    const FaceShape& reference() const { return reference_; }
    const std::vector<std::array<int, 3>>& triangles() const { return triangles_; }
    const std::vector<LatticePixel>& lattice() const { return lattice_; }
    std::size_t texture_size() const { return lattice_.size(); }

    /// Raster footprint of the reference shape (bounding box, exclusive).
    std::size_t raster_width() const { return raster_width_; }
    std::size_t raster_height() const { return raster_height_; }

private:
    FaceShape reference_;
    std::vector<std::array<int, 3>> triangles_;
    std::vector<LatticePixel> lattice_;
    std::size_t raster_width_ = 0;
    std::size_t raster_height_ = 0;
};

/// Mean of Procrustes-aligned frontal shapes, rescaled so the bounding-box
/// height equals `target_height` px, placed at the origin, triangulated.
ReferenceMesh build_reference_mesh(std::span<const FaceShape> frontal_shapes,
                                   double target_height = 128.0);

struct WarpResult {
    TextureVector texture;
    std::size_t clamped_samples = 0;
    std::size_t degenerate_triangles = 0;
};

/// Piecewise-affine warp of the image texture inside `shape` onto the
/// reference lattice; bilinear sampling with border clamp.
WarpResult warp_to_reference(const ImageGray& image, const FaceShape& shape,
                             const ReferenceMesh& mesh);

/// Inverse warp: paint the reference texture into a canvas through the
/// triangles of `shape`. Pixels outside the shape keep `background`.
ImageGray render_from_reference(const TextureVector& texture, const ReferenceMesh& mesh,
                                const FaceShape& shape, std::size_t width, std::size_t height,
                                double background = 0.0);

/// Rasterize a texture vector onto the reference bounding box.
ImageGray texture_to_raster(const TextureVector& texture, const ReferenceMesh& mesh,
                            double background = 0.0);

/// Replace each invisible landmark by the intersection of its horizontal
/// line with the outline polyline (nearest intersection in x); if no
/// segment spans that y, the nearest outline vertex is used.
FaceShape remap_occluded_landmarks(const FaceShape& shape, const std::vector<bool>& visibility,
                                   std::span<const std::size_t> outline);

}  // namespace utaam
