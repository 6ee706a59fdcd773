#include "utaam/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "utaam/errors.hpp"

namespace utaam {

namespace {

std::size_t checked_element_count(const std::vector<std::size_t>& dims) {
    if (dims.empty()) throw InvalidArgument("DenseTensor: order must be >= 1");
    std::size_t n = 1;
    for (std::size_t d : dims) {
        if (d == 0) throw InvalidArgument("DenseTensor: every extent must be >= 1");
        n *= d;
    }
    return n;
}

// Strides of the flat layout (last index fastest).
std::vector<std::size_t> layout_strides(const std::vector<std::size_t>& dims) {
    std::vector<std::size_t> strides(dims.size());
    std::size_t s = 1;
    for (std::size_t k = dims.size(); k-- > 0;) {
        strides[k] = s;
        s *= dims[k];
    }
    return strides;
}

// Column stride per mode for the unfolding convention: among the modes
// other than `mode`, the lowest one varies fastest.
std::vector<std::size_t> column_strides(const std::vector<std::size_t>& dims, std::size_t mode) {
    std::vector<std::size_t> strides(dims.size(), 0);
    std::size_t s = 1;
    for (std::size_t k = 0; k < dims.size(); ++k) {
        if (k == mode) continue;
        strides[k] = s;
        s *= dims[k];
    }
    return strides;
}

}  // namespace

DenseTensor::DenseTensor(std::vector<std::size_t> dims, double fill)
    : dims_(std::move(dims)), values_(checked_element_count(dims_), fill) {}

DenseTensor::DenseTensor(std::vector<std::size_t> dims, std::vector<double> values)
    : dims_(std::move(dims)), values_(std::move(values)) {
    if (checked_element_count(dims_) != values_.size())
        throw InvalidArgument("DenseTensor: value count does not match extents");
}

std::size_t DenseTensor::extent(std::size_t mode) const {
    if (mode >= dims_.size()) throw InvalidArgument("DenseTensor: mode out of range");
    return dims_[mode];
}

std::size_t DenseTensor::flat_index(std::span<const std::size_t> idx) const {
    if (idx.size() != dims_.size()) throw InvalidArgument("DenseTensor: index arity mismatch");
    std::size_t flat = 0;
    for (std::size_t k = 0; k < dims_.size(); ++k) {
        if (idx[k] >= dims_[k]) throw InvalidArgument("DenseTensor: index out of range");
        flat = flat * dims_[k] + idx[k];
    }
    return flat;
}

double DenseTensor::at(std::initializer_list<std::size_t> idx) const {
    return values_[flat_index(std::span(idx.begin(), idx.size()))];
}

double& DenseTensor::at(std::initializer_list<std::size_t> idx) {
    return values_[flat_index(std::span(idx.begin(), idx.size()))];
}

Eigen::MatrixXd unfold(const DenseTensor& x, std::size_t mode) {
    const auto& dims = x.dims();
    if (mode >= dims.size()) throw InvalidArgument("unfold: mode out of range");

    const std::size_t rows = dims[mode];
    const std::size_t cols = x.size() / rows;
    const auto col_stride = column_strides(dims, mode);

    Eigen::MatrixXd m(rows, cols);
    std::vector<std::size_t> idx(dims.size(), 0);
    std::size_t col = 0;
    for (std::size_t flat = 0; flat < x.size(); ++flat) {
        m(static_cast<Eigen::Index>(idx[mode]), static_cast<Eigen::Index>(col)) = x[flat];
        // odometer increment, last mode fastest
        for (std::size_t k = dims.size(); k-- > 0;) {
            col += col_stride[k];
            if (++idx[k] < dims[k]) break;
            idx[k] = 0;
            col -= col_stride[k] * dims[k];
        }
    }
    return m;
}

DenseTensor fold(const Eigen::MatrixXd& m, std::size_t mode, std::vector<std::size_t> dims) {
    if (mode >= dims.size()) throw InvalidArgument("fold: mode out of range");
    const std::size_t total = checked_element_count(dims);
    if (static_cast<std::size_t>(m.rows()) != dims[mode] ||
        static_cast<std::size_t>(m.cols()) != total / dims[mode])
        throw InvalidArgument("fold: matrix shape inconsistent with dims and mode");

    const auto col_stride = column_strides(dims, mode);
    DenseTensor x(std::move(dims));
    const auto& xd = x.dims();
    std::vector<std::size_t> idx(xd.size(), 0);
    std::size_t col = 0;
    for (std::size_t flat = 0; flat < x.size(); ++flat) {
        x[flat] = m(static_cast<Eigen::Index>(idx[mode]), static_cast<Eigen::Index>(col));
        for (std::size_t k = xd.size(); k-- > 0;) {
            col += col_stride[k];
            if (++idx[k] < xd[k]) break;
            idx[k] = 0;
            col -= col_stride[k] * xd[k];
        }
    }
    return x;
}

DenseTensor mode_n_product(const DenseTensor& x, const Eigen::MatrixXd& y, std::size_t mode) {
    const auto& dims = x.dims();
    if (mode >= dims.size()) throw InvalidArgument("mode_n_product: mode out of range");
    if (static_cast<std::size_t>(y.cols()) != dims[mode])
        throw InvalidArgument("mode_n_product: matrix columns must equal the mode extent");

    Eigen::MatrixXd prod = y * unfold(x, mode);
    std::vector<std::size_t> out_dims = dims;
    out_dims[mode] = static_cast<std::size_t>(y.rows());
    return fold(prod, mode, std::move(out_dims));
}

DenseTensor contract_mode(const DenseTensor& x, const Eigen::VectorXd& v, std::size_t mode) {
    const auto& dims = x.dims();
    if (mode >= dims.size()) throw InvalidArgument("contract_mode: mode out of range");
    if (dims.size() == 1) throw InvalidArgument("contract_mode: cannot contract the only mode");
    if (static_cast<std::size_t>(v.size()) != dims[mode])
        throw InvalidArgument("contract_mode: vector length must equal the mode extent");

    std::vector<std::size_t> out_dims;
    out_dims.reserve(dims.size() - 1);
    for (std::size_t k = 0; k < dims.size(); ++k)
        if (k != mode) out_dims.push_back(dims[k]);

    const std::size_t extent = dims[mode];
    std::size_t inner = 1;  // product of extents after `mode` (fastest-varying)
    for (std::size_t k = mode + 1; k < dims.size(); ++k) inner *= dims[k];
    const std::size_t outer = x.size() / (extent * inner);

    // The flat layout makes the contraction a batch of row-major
    // matrix-vector products; no unfolding copy needed.
    DenseTensor out(std::move(out_dims));
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    for (std::size_t o = 0; o < outer; ++o) {
        Eigen::Map<const RowMajor> block(x.values().data() + o * extent * inner,
                                         static_cast<Eigen::Index>(extent),
                                         static_cast<Eigen::Index>(inner));
        Eigen::Map<Eigen::RowVectorXd> dst(out.values().data() + o * inner,
                                           static_cast<Eigen::Index>(inner));
        dst = v.transpose() * block;
    }
    return out;
}

double tensor_norm(const DenseTensor& x) {
    double sum = 0.0;
    for (double v : x.values()) sum += v * v;
    return std::sqrt(sum);
}

Eigen::MatrixXd leading_left_singular_vectors(const Eigen::MatrixXd& m, std::size_t rank,
                                              Eigen::VectorXd* singular_values) {
    const std::size_t rows = static_cast<std::size_t>(m.rows());
    const std::size_t thin = std::min(rows, static_cast<std::size_t>(m.cols()));
    if (rank > rows)
        throw InvalidArgument("leading_left_singular_vectors: rank exceeds row count");

    Eigen::MatrixXd u;
    Eigen::VectorXd sv;
    if (thin <= 64) {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU);
        u = svd.matrixU();
        sv = svd.singularValues();
    } else {
        Eigen::BDCSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU);
        u = svd.matrixU();
        sv = svd.singularValues();
    }
    if (!u.allFinite()) throw NumericalError("SVD did not converge to finite factors");

    // Deterministic sign: largest-magnitude entry of each column positive.
    for (Eigen::Index c = 0; c < u.cols(); ++c) {
        Eigen::Index arg = 0;
        u.col(c).cwiseAbs().maxCoeff(&arg);
        if (u(arg, c) < 0.0) u.col(c) = -u.col(c);
    }

    if (rank > static_cast<std::size_t>(u.cols())) {
        // Complete the basis with orthonormalized coordinate vectors so the
        // orthonormal-column invariant holds for any legal rank request.
        Eigen::MatrixXd full(rows, rank);
        full.leftCols(u.cols()) = u;
        std::size_t have = static_cast<std::size_t>(u.cols());
        for (std::size_t j = 0; j < rows && have < rank; ++j) {
            Eigen::VectorXd cand = Eigen::VectorXd::Unit(static_cast<Eigen::Index>(rows),
                                                         static_cast<Eigen::Index>(j));
            for (int pass = 0; pass < 2; ++pass)
                cand -= full.leftCols(have) * (full.leftCols(have).transpose() * cand);
            double n = cand.norm();
            if (n > 1e-8) full.col(have++) = cand / n;
        }
        if (have < rank)
            throw NumericalError("could not complete an orthonormal basis to the requested rank");
        u = full;
    } else {
        u = u.leftCols(static_cast<Eigen::Index>(rank)).eval();
    }

    if (singular_values) {
        Eigen::VectorXd padded = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rank));
        const Eigen::Index keep = std::min<Eigen::Index>(sv.size(), static_cast<Eigen::Index>(rank));
        padded.head(keep) = sv.head(keep);
        *singular_values = padded;
    }
    return u;
}

TuckerModel hosvd(const DenseTensor& x, std::span<const std::size_t> ranks) {
    const auto& dims = x.dims();
    if (ranks.size() != dims.size()) throw InvalidArgument("hosvd: one rank per mode required");
    for (std::size_t n = 0; n < dims.size(); ++n) {
        if (ranks[n] == 0 || ranks[n] > dims[n])
            throw InvalidArgument("hosvd: rank for mode " + std::to_string(n) +
                                  " must be in [1, extent]");
    }

    TuckerModel t;
    t.factors.reserve(dims.size());
    for (std::size_t n = 0; n < dims.size(); ++n)
        t.factors.push_back(leading_left_singular_vectors(unfold(x, n), ranks[n]));

    t.core = x;
    for (std::size_t n = 0; n < dims.size(); ++n)
        t.core = mode_n_product(t.core, t.factors[n].transpose(), n);
    return t;
}

DenseTensor tucker_reconstruct(const TuckerModel& t) {
    if (t.factors.size() != t.core.order())
        throw InvalidArgument("tucker_reconstruct: one factor per core mode required");
    for (std::size_t n = 0; n < t.factors.size(); ++n)
        if (static_cast<std::size_t>(t.factors[n].cols()) != t.core.dims()[n])
            throw InvalidArgument("tucker_reconstruct: factor/core dimension mismatch at mode " +
                                  std::to_string(n));

    DenseTensor x = t.core;
    for (std::size_t n = 0; n < t.factors.size(); ++n)
        x = mode_n_product(x, t.factors[n], n);
    return x;
}

}  // namespace utaam
