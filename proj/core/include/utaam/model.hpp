#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "utaam/completion.hpp"
#include "utaam/features.hpp"
#include "utaam/geometry.hpp"
#include "utaam/tensor.hpp"

namespace utaam {

/// Dataset factor indexing: identity x pose x illumination x expression,
/// with a per-cell presence flag (empty means fully observed).
struct SampleGrid {
    std::array<std::size_t, 4> extents{};
    std::size_t frontal_pose = 0;
    std::vector<std::uint8_t> present;  // cell order, expression fastest

    std::size_t cells() const { return extents[0] * extents[1] * extents[2] * extents[3]; }
    std::size_t cell_index(std::size_t i, std::size_t p, std::size_t l, std::size_t e) const {
        return ((i * extents[1] + p) * extents[2] + l) * extents[3] + e;
    }
    bool is_present(std::size_t cell) const { return present.empty() || present[cell] != 0; }
    void validate() const;
};

struct CompletionPolicy {
    enum class Solver { TuckerPower, CpWeighted };

    bool variation_aware_init = true;
    Solver solver = Solver::TuckerPower;
    std::vector<std::size_t> ranks;  // Tucker ranks; empty = per-mode lossless default
    std::size_t cp_rank = 4;
    std::size_t max_iter = 200;
    double tol = 1e-6;
    std::uint64_t seed = 0;
};

/// Centered 5-way tensors ready for decomposition, plus the subtracted means.
struct AssembledTensors {
    std::array<std::size_t, 4> grid_extents{};
    DenseTensor shape;    // (I_i, I_p, I_l, I_e, 2L), centered, completed
    DenseTensor texture;  // (I_i, I_p, I_l, I_e, I_t), centered, completed
    Eigen::VectorXd mean_shape;
    Eigen::VectorXd mean_texture;
    std::vector<InitRule> shape_init_rules;    // empty when fully observed
    std::vector<InitRule> texture_init_rules;
};

/// Stack aligned shapes and extracted textures into 5-way tensors, subtract
/// the means over observed samples, and complete missing cells per policy.
AssembledTensors assemble_tensors(const SampleGrid& grid, std::span<const FaceShape> shapes,
                                  std::span<const TextureVector> textures,
                                  const CompletionPolicy& policy = {});

/// Per-mode retained ranks for the two decompositions; empty = lossless.
struct ModelRanks {
    std::vector<std::size_t> shape;    // 5 entries when set
    std::vector<std::size_t> texture;  // 5 entries when set
};

/// The unified tensor model: means, compressed cores, retained mode
/// matrices, reference mesh and descriptor spec.
struct UtaamModel {
    Eigen::VectorXd mean_shape;   // 2L
    Eigen::VectorXd mean_texture; // I_t

    DenseTensor shape_core;       // (R_i, R_p, R_e, 2L): illumination folded in, sample basis folded
    Eigen::MatrixXd shape_identity;    // I_i x R_i
    Eigen::MatrixXd shape_pose;        // I_p x R_p
    Eigen::MatrixXd shape_expression;  // I_e x R_e

    DenseTensor texture_core;     // (R_i, R_p, R_l, R_e, I_t): pixel basis folded
    Eigen::MatrixXd texture_identity;
    Eigen::MatrixXd texture_pose;
    Eigen::MatrixXd texture_illumination;
    Eigen::MatrixXd texture_expression;

    ReferenceMesh mesh;
    HogSpec hog;

    std::size_t landmark_count() const { return static_cast<std::size_t>(mean_shape.size()) / 2; }
    std::size_t texture_size() const { return static_cast<std::size_t>(mean_texture.size()); }
    std::size_t shape_param_count() const {
        return 4 + static_cast<std::size_t>(shape_identity.cols() + shape_pose.cols() +
                                            shape_expression.cols());
    }
};

/// HOSVD both tensors and fold the cores per the compression scheme. The
/// illumination fold-in weights default to the uniform simplex vector; any
/// simplex vector over I_l may be supplied (one-hot reproduces the
/// uncompressed model at that illumination state).
UtaamModel build_utaam(const AssembledTensors& tensors, const ReferenceMesh& mesh,
                       const HogSpec& hog, const ModelRanks& ranks = {},
                       const Eigen::VectorXd& illumination_weights = Eigen::VectorXd());

/// Shape parameters p = [global affine; a_i; a_p; a_e]; coefficient vectors
/// live in the retained-rank spaces.
struct ShapeParams {
    AffineParams global;
    Eigen::VectorXd identity;
    Eigen::VectorXd pose;
    Eigen::VectorXd expression;

    /// Flat N_p vector with the affine encoded linearly (s cos t, s sin t, tx, ty).
    Eigen::VectorXd to_vector() const;
    static ShapeParams from_vector(const Eigen::VectorXd& v, std::size_t rank_identity,
                                   std::size_t rank_pose, std::size_t rank_expression);
};

struct TextureParams {
    Eigen::VectorXd identity;
    Eigen::VectorXd pose;
    Eigen::VectorXd illumination;
    Eigen::VectorXd expression;
};

FaceShape synthesize_shape(const UtaamModel& model, const ShapeParams& p);
TextureVector synthesize_texture(const UtaamModel& model, const TextureParams& q);

/// Coefficient rows of a training sample (rows of the retained mode
/// matrices); the affine part is the identity transform.
ShapeParams shape_coefficient_rows(const UtaamModel& model, std::size_t identity, std::size_t pose,
                                   std::size_t expression);
TextureParams texture_coefficient_rows(const UtaamModel& model, std::size_t identity,
                                       std::size_t pose, std::size_t illumination,
                                       std::size_t expression);

/// a_p = (1 - t) * S_p[row_a, :] + t * S_p[row_b, :], for synthesis at an
/// in-between pose.
Eigen::VectorXd interpolate_pose(const UtaamModel& model, std::size_t row_a, std::size_t row_b,
                                 double t);

/// Simplex mixture weights over the discrete variation states.
struct MixtureCoefficients {
    Eigen::VectorXd pose;          // I_p
    Eigen::VectorXd expression;    // I_e
    Eigen::VectorXd illumination;  // I_l
};

/// Variation-specific basis sub-tensors unfolded along the sample mode,
/// plus the coefficient-weighted means.
struct TaamVariationModel {
    Eigen::VectorXd mean_shape;     // weighted over (pose, expression) slice means
    Eigen::MatrixXd shape_basis;    // I_s x (I_i * I_l)
    Eigen::VectorXd mean_texture;   // weighted over illumination slice means
    Eigen::MatrixXd texture_basis;  // I_t x (I_i * I_p * I_e)
};

TaamVariationModel build_taam_variation_models(const AssembledTensors& tensors,
                                               const MixtureCoefficients& coeffs);

/// Classical PCA shape/texture baseline.
struct PcaAamModel {
    Eigen::VectorXd mean_shape;
    Eigen::MatrixXd shape_basis;       // columns = eigenvectors
    Eigen::VectorXd shape_eigenvalues;
    Eigen::VectorXd mean_texture;
    Eigen::MatrixXd texture_basis;
    Eigen::VectorXd texture_eigenvalues;
};

/// PCA via SVD of the centered data; retains the smallest component count
/// reaching the requested variance fraction.
PcaAamModel build_pca_aam(std::span<const FaceShape> shapes,
                          std::span<const TextureVector> textures, double variance_fraction);

}  // namespace utaam
