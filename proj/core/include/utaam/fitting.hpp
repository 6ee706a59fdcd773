#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "utaam/features.hpp"
#include "utaam/geometry.hpp"
#include "utaam/image.hpp"
#include "utaam/model.hpp"

namespace utaam {

/// One linear stage: delta_p = projection * f + offset.
struct WeakRegressor {
    Eigen::MatrixXd projection;  // N_p x N_f
    Eigen::VectorXd offset;      // N_p
};

/// Ridge regression in closed form (normal equations on mean-centered
/// features; the offset absorbs the means). `features` is N x N_f,
/// `deltas` N x N_p.
WeakRegressor train_weak(const Eigen::MatrixXd& features, const Eigen::MatrixXd& deltas,
                         double lambda);

/// Test-time initialization statistics gathered during training: the model
/// frame's rotation into image frames and the affine scale per unit face
/// box height (the alignment gauge is shape-derived, so neither is 0/1 in
/// general).
struct CascadeInitSpec {
    double rotation = 0.0;
    double scale_per_box_height = 0.0;
};

struct CascadeRegressor {
    std::vector<WeakRegressor> stages;
    double lambda = 0.0;  // ridge weight used for the last trained stage
    HogSpec hog;
    CascadeInitSpec init;
};

struct CascadeTrainingOptions {
    std::size_t stages = 5;
    double lambda = -1.0;  // < 0: per-stage 1e-3 * trace(F^T F) / N_f
    std::size_t perturbations = 10;
    std::uint64_t seed = 0;
    std::size_t als_rounds = 5;          // ground-truth parameter projection
    double scale_jitter = 0.1;           // multiplicative, +-
    double rotation_jitter_deg = 10.0;
    double translation_jitter = 0.05;    // fraction of the face bounding-box diagonal
};

struct TrainedCascade {
    CascadeRegressor cascade;
    /// Mean training pt-pt error per stage; index 0 is the initialization.
    std::vector<double> stage_errors;
};

/// Stage-by-stage training: perturbed initializations, feature extraction
/// at the current estimates, one ridge solve per stage, parameter update.
/// `image_at` supplies the image for a training index (called once per
/// stage per image).
TrainedCascade train_cascade(const UtaamModel& model,
                             const std::function<ImageGray(std::size_t)>& image_at,
                             std::span<const FaceShape> truths,
                             const CascadeTrainingOptions& options = {});

struct TextureEstimate {
    TextureParams params;
    std::vector<double> residual_trace;  // one entry per mode update
    bool ridge_fallback = false;
};

/// Alternating least squares over the four texture modes.
TextureEstimate estimate_texture_params(const TextureVector& texture, const UtaamModel& model,
                                        std::size_t rounds = 5);

/// Ground-truth shape parameters of an annotated shape: similarity
/// alignment onto the model mean plus ALS projection of the residual onto
/// the shape core.
ShapeParams project_shape(const UtaamModel& model, const FaceShape& image_shape,
                          std::size_t rounds = 5);

struct FitResult {
    ShapeParams params;
    TextureParams texture;
    FaceShape shape;
};

/// Run the cascade from `init`, then warp the texture at the final shape
/// and estimate the texture parameters. Requires no variation-state input.
FitResult fit(const ImageGray& image, const CascadeRegressor& cascade, const UtaamModel& model,
              const ShapeParams& init, std::size_t texture_rounds = 5);

/// Mean shape placed so that its bounding box matches the given box
/// (upright model frame assumed).
ShapeParams init_from_box(const UtaamModel& model, double x, double y, double w, double h);
/// Mean shape placed into the box using the cascade's recorded rotation and
/// scale statistics.
ShapeParams init_from_box(const UtaamModel& model, const CascadeRegressor& cascade, double x,
                          double y, double w, double h);
/// Mean shape at the image center with unit scale.
ShapeParams init_at_center(const UtaamModel& model, std::size_t image_width,
                           std::size_t image_height);

/// Mean Euclidean landmark distance, pixels.
double pt_pt_error(const FaceShape& predicted, const FaceShape& truth);

/// pt-pt error divided by the distance between the truth's eye-center
/// centroids.
double normalized_error(const FaceShape& predicted, const FaceShape& truth,
                        std::span<const std::size_t> left_eye,
                        std::span<const std::size_t> right_eye);

/// || t_mean + T beta - W(I, alpha) ||^2: texture misfit of the classical
/// model at the given coefficients (evaluation only, no optimizer).
double aam_fitting_objective(const ImageGray& image, const PcaAamModel& model,
                             const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta,
                             const ReferenceMesh& mesh);

}  // namespace utaam
