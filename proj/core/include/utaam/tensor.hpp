#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace utaam {

/// Dense N-way real array. The flat buffer stores entries with the LAST
/// index varying fastest; every routine in this toolkit that unfolds a
/// tensor orders the columns with the LOWEST remaining mode varying
/// fastest. Both conventions are part of the file-format and test
/// contract, so they never change independently.
class DenseTensor {
public:
    DenseTensor() = default;
    explicit DenseTensor(std::vector<std::size_t> dims, double fill = 0.0);
    DenseTensor(std::vector<std::size_t> dims, std::vector<double> values);

    std::size_t order() const { return dims_.size(); }
    const std::vector<std::size_t>& dims() const { return dims_; }
    std::size_t extent(std::size_t mode) const;
    std::size_t size() const { return values_.size(); }

    double operator[](std::size_t flat) const { return values_[flat]; }
    double& operator[](std::size_t flat) { return values_[flat]; }

    std::size_t flat_index(std::span<const std::size_t> idx) const;
    double at(std::initializer_list<std::size_t> idx) const;
    double& at(std::initializer_list<std::size_t> idx);

    const std::vector<double>& values() const { return values_; }
    std::vector<double>& values() { return values_; }

    bool same_dims(const DenseTensor& other) const { return dims_ == other.dims_; }

private:
    std::vector<std::size_t> dims_;
    std::vector<double> values_;
};

/// Tucker decomposition: core plus one orthonormal-column factor per mode.
struct TuckerModel {
    DenseTensor core;
    std::vector<Eigen::MatrixXd> factors;
};

/// Mode-`mode` matricization, I_mode x prod(other extents).
Eigen::MatrixXd unfold(const DenseTensor& x, std::size_t mode);

/// Exact inverse of unfold for the given target dims.
DenseTensor fold(const Eigen::MatrixXd& m, std::size_t mode, std::vector<std::size_t> dims);

/// Tensor-times-matrix along `mode`; y is J x I_mode, result extent J.
DenseTensor mode_n_product(const DenseTensor& x, const Eigen::MatrixXd& y, std::size_t mode);

/// Tensor-times-vector along `mode`; the contracted mode is removed.
DenseTensor contract_mode(const DenseTensor& x, const Eigen::VectorXd& v, std::size_t mode);

/// Frobenius norm: square root of the sum of squares of all entries.
double tensor_norm(const DenseTensor& x);

/// Truncated higher-order SVD. factors[n] holds the leading ranks[n] left
/// singular vectors of unfold(x, n), sign-fixed so the largest-magnitude
/// entry of each column is positive; the core is x contracted with every
/// factor transpose.
TuckerModel hosvd(const DenseTensor& x, std::span<const std::size_t> ranks);

/// core x_0 U_0 x_1 U_1 ... x_{N-1} U_{N-1}.
DenseTensor tucker_reconstruct(const TuckerModel& t);

/// Orthonormal-column basis for the column space of m plus a deterministic
/// completion, truncated/extended to `rank` columns. Shared by hosvd and
/// the spectral helpers in `model`.
Eigen::MatrixXd leading_left_singular_vectors(const Eigen::MatrixXd& m, std::size_t rank,
                                              Eigen::VectorXd* singular_values = nullptr);

}  // namespace utaam
