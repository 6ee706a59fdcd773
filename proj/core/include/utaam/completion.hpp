#pragma once

#include <cstdint>
#include <vector>

#include "utaam/tensor.hpp"

namespace utaam {

/// Incomplete tensor: data values are arbitrary at missing positions, the
/// mask holds 1 where a value is observed and 0 where it is missing.
struct MaskedTensor {
    DenseTensor data;
    DenseTensor mask;

    MaskedTensor(DenseTensor data_, DenseTensor mask_);

    /// True when the mask is constant along the last (feature) mode, i.e.
    /// a training sample is wholly present or wholly absent.
    bool sample_constant() const;
};

/// Broadcast a cell mask over the grid modes to a full sample tensor mask
/// by appending a feature mode of the given extent.
DenseTensor expand_sample_mask(const DenseTensor& cell_mask, std::size_t feature_extent);

/// || O * (X - candidate) ||: residual norm over observed entries only.
double masked_residual_norm(const MaskedTensor& x, const DenseTensor& candidate);

/// RMS over missing positions (mask == 0); 0 when nothing is missing.
double reconstruction_rms(const DenseTensor& truth, const DenseTensor& completed,
                          const DenseTensor& mask);

enum class InitRule : std::uint8_t { Observed, And, Or, Random };

struct InitPolicy {
    bool variation_aware = true;  // false: straight per-entry random fill
    std::uint64_t seed = 0;
};

struct InitResult {
    DenseTensor tensor;
    /// One rule per grid cell, in cell layout order (feature mode dropped).
    std::vector<InitRule> rules;
};

/// Fill the missing samples of a 5-way (identity x pose x illumination x
/// expression x feature) tensor. Variation-aware filling tries, per missing
/// sample, the mean of available samples sharing pose AND illumination AND
/// expression (identity free); falls back to the mean of samples sharing
/// pose OR illumination OR expression; falls back to seeded uniform values
/// in [0,1).
InitResult initialize_missing(const MaskedTensor& x, const InitPolicy& policy);

struct SolveOptions {
    std::size_t max_iter = 200;
    double tol = 1e-6;              // relative objective change
    bool restore_observed = true;   // overwrite observed positions with the input values
};

struct CompletionResult {
    DenseTensor tensor;
    std::vector<double> objective_trace;  // masked residual per accepted iterate, non-increasing
};

/// Tucker power iteration: impute from the current estimate, truncated
/// HOSVD at `ranks`, reconstruct, restore observed entries; stops on small
/// relative objective change, iteration cap, or a non-improving step.
CompletionResult complete_tucker_power(const MaskedTensor& x, const DenseTensor& init,
                                       std::span<const std::size_t> ranks,
                                       const SolveOptions& options = {});

/// CP factor matrices, all sharing column count R.
struct CpFactors {
    std::vector<Eigen::MatrixXd> factors;

    std::size_t rank() const { return factors.empty() ? 0 : static_cast<std::size_t>(factors[0].cols()); }
};

/// Evaluate the CP model as a dense tensor.
DenseTensor cp_reconstruct(const CpFactors& f, const std::vector<std::size_t>& dims);

/// Gradient of 0.5 * || O * (X - CP(factors)) ||^2 with respect to each
/// factor matrix. Exposed for the finite-difference checks.
std::vector<Eigen::MatrixXd> cp_weighted_gradient(const MaskedTensor& x, const CpFactors& f);

/// Weighted CP completion: gradient descent with backtracking line search
/// on the CP factors, initialized from truncated HOSVD factors of `init`.
CompletionResult complete_cp_weighted(const MaskedTensor& x, const DenseTensor& init,
                                      std::size_t rank, const SolveOptions& options = {});

}  // namespace utaam
