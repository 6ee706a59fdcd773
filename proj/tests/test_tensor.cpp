#include <sstream>

#include "doctest.h"
#include "support/oracles.hpp"
#include "utaam/errors.hpp"
#include "utaam/tensor.hpp"
#include "utaam/tensor_io.hpp"

using namespace utaam;

namespace {

DenseTensor iota_tensor(std::vector<std::size_t> dims) {
    DenseTensor x(std::move(dims));
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = static_cast<double>(k + 1);
    return x;
}

double relative_error(const DenseTensor& a, const DenseTensor& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        num += d * d;
        den += a[k] * a[k];
    }
    return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace

TEST_CASE("DenseTensor construction and invariants") {
    DenseTensor x({2, 3}, 1.5);
    CHECK(x.order() == 2);
    CHECK(x.size() == 6);
    CHECK(x.at({1, 2}) == 1.5);

    CHECK_THROWS_AS(DenseTensor(std::vector<std::size_t>{}), InvalidArgument);
    CHECK_THROWS_AS(DenseTensor({2, 0, 3}), InvalidArgument);
    CHECK_THROWS_AS(DenseTensor({2, 2}, std::vector<double>(3, 0.0)), InvalidArgument);
    CHECK_THROWS_AS(x.at({2, 0}), InvalidArgument);
}

TEST_CASE("unfold: matrix along its row mode is the matrix itself") {
    DenseTensor x({2, 2}, std::vector<double>{1, 2, 3, 4});
    const Eigen::MatrixXd m = unfold(x, 0);
    CHECK(m(0, 0) == 1);
    CHECK(m(0, 1) == 2);
    CHECK(m(1, 0) == 3);
    CHECK(m(1, 1) == 4);
}

TEST_CASE("unfold: zero 2x2x2 along mode 1 is a 2x4 zero matrix") {
    DenseTensor x({2, 2, 2});
    const Eigen::MatrixXd m = unfold(x, 1);
    CHECK(m.rows() == 2);
    CHECK(m.cols() == 4);
    CHECK(m.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("unfold matches the index-enumeration oracle") {
    const DenseTensor x = iota_tensor({2, 2, 2});
    for (std::size_t mode = 0; mode < 3; ++mode) {
        const Eigen::MatrixXd got = unfold(x, mode);
        const Eigen::MatrixXd want = oracle::unfold_by_enumeration(x, mode);
        CHECK((got - want).cwiseAbs().maxCoeff() == 0.0);
    }
    // Frozen values for mode 0 under the declared convention.
    const Eigen::MatrixXd m = unfold(x, 0);
    CHECK(m(0, 0) == 1);
    CHECK(m(0, 1) == 3);
    CHECK(m(0, 2) == 2);
    CHECK(m(0, 3) == 4);
    CHECK(m(1, 0) == 5);

    const DenseTensor big = oracle::random_tensor({3, 4, 2, 5}, 77);
    for (std::size_t mode = 0; mode < 4; ++mode)
        CHECK((unfold(big, mode) - oracle::unfold_by_enumeration(big, mode)).cwiseAbs().maxCoeff() ==
              0.0);

    CHECK_THROWS_AS(unfold(x, 3), InvalidArgument);
}

TEST_CASE("fold inverts unfold bit-exactly") {
    const DenseTensor x = oracle::random_tensor({3, 4, 2}, 11);
    for (std::size_t mode = 0; mode < 3; ++mode) {
        const DenseTensor back = fold(unfold(x, mode), mode, x.dims());
        REQUIRE(back.size() == x.size());
        for (std::size_t k = 0; k < x.size(); ++k) CHECK(back[k] == x[k]);
    }

    const DenseTensor zero = fold(Eigen::MatrixXd::Zero(2, 4), 1, {2, 2, 2});
    CHECK(tensor_norm(zero) == 0.0);

    // The 2x4 mode-0 unfolding of 1..8 folds back to 1..8.
    const DenseTensor iota = iota_tensor({2, 2, 2});
    const DenseTensor refolded = fold(unfold(iota, 0), 0, {2, 2, 2});
    for (std::size_t k = 0; k < 8; ++k) CHECK(refolded[k] == static_cast<double>(k + 1));

    CHECK_THROWS_AS(fold(Eigen::MatrixXd::Zero(2, 5), 1, {2, 2, 2}), InvalidArgument);
    CHECK_THROWS_AS(fold(Eigen::MatrixXd::Zero(2, 4), 3, {2, 2, 2}), InvalidArgument);
}

TEST_CASE("mode_n_product basics") {
    const DenseTensor x = oracle::random_tensor({3, 4, 2}, 5);

    // Identity leaves the tensor unchanged.
    const DenseTensor same = mode_n_product(x, Eigen::MatrixXd::Identity(4, 4), 1);
    CHECK(relative_error(x, same) < 1e-15);

    // Row of ones sums along the mode.
    DenseTensor small({2, 2}, std::vector<double>{1, 2, 3, 4});
    Eigen::MatrixXd ones(1, 2);
    ones << 1, 1;
    const DenseTensor sums = mode_n_product(small, ones, 0);
    CHECK(sums.dims() == std::vector<std::size_t>{1, 2});
    CHECK(sums[0] == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(sums[1] == doctest::Approx(6.0).epsilon(1e-12));

    CHECK_THROWS_AS(mode_n_product(x, Eigen::MatrixXd::Zero(2, 3), 1), InvalidArgument);
}

TEST_CASE("mode products commute across distinct modes and match the loop oracle") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const DenseTensor x = oracle::random_tensor({3, 4, 2}, 100 + seed);
        RandomStream rng(200 + seed);
        Eigen::MatrixXd a(2, 3), b(5, 4);
        for (Eigen::Index r = 0; r < a.rows(); ++r)
            for (Eigen::Index c = 0; c < a.cols(); ++c) a(r, c) = rng.normal();
        for (Eigen::Index r = 0; r < b.rows(); ++r)
            for (Eigen::Index c = 0; c < b.cols(); ++c) b(r, c) = rng.normal();

        const DenseTensor ab = mode_n_product(mode_n_product(x, a, 0), b, 1);
        const DenseTensor ba = mode_n_product(mode_n_product(x, b, 1), a, 0);
        CHECK(relative_error(ab, ba) < 1e-12);

        const DenseTensor naive = oracle::mode_product_by_loops(oracle::mode_product_by_loops(x, a, 0), b, 1);
        CHECK(relative_error(ab, naive) < 1e-12);
    }
}

TEST_CASE("contract_mode removes the contracted mode") {
    const DenseTensor x = oracle::random_tensor({3, 4, 2}, 9);
    Eigen::VectorXd v(4);
    v << 0.3, -1.0, 0.5, 2.0;
    const DenseTensor c = contract_mode(x, v, 1);
    CHECK(c.dims() == std::vector<std::size_t>{3, 2});

    Eigen::MatrixXd row = v.transpose();
    const DenseTensor full = mode_n_product(x, row, 1);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t k = 0; k < 2; ++k)
            CHECK(c.at({i, k}) == doctest::Approx(full.at({i, 0, k})).epsilon(1e-14));
}

TEST_CASE("tensor_norm") {
    CHECK(tensor_norm(DenseTensor({2, 2})) == 0.0);
    CHECK(tensor_norm(DenseTensor({2, 2}, std::vector<double>{3, 0, 0, 4})) ==
          doctest::Approx(5.0).epsilon(1e-15));
    const DenseTensor x = oracle::random_tensor({4, 3, 2}, 13);
    CHECK(tensor_norm(x) == doctest::Approx(oracle::norm_by_flat_sum(x)).epsilon(1e-12));
}

TEST_CASE("hosvd reconstructs exactly at full rank") {
    const DenseTensor x = oracle::random_tensor({3, 4, 5}, 21);
    const std::vector<std::size_t> ranks{3, 4, 5};
    const TuckerModel t = hosvd(x, ranks);
    const DenseTensor back = tucker_reconstruct(t);
    CHECK(relative_error(x, back) < 1e-10);

    for (const auto& u : t.factors) {
        const Eigen::MatrixXd gram = u.transpose() * u;
        CHECK((gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() <
              1e-8);
    }
    // Orthogonal invariance: the core carries the full energy.
    CHECK(tensor_norm(t.core) == doctest::Approx(tensor_norm(x)).epsilon(1e-10));
}

TEST_CASE("hosvd of a rank-1 outer product concentrates into one core entry") {
    RandomStream rng(33);
    Eigen::VectorXd u(4), v(3), w(5);
    for (Eigen::Index k = 0; k < u.size(); ++k) u[k] = rng.normal();
    for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = rng.normal();
    for (Eigen::Index k = 0; k < w.size(); ++k) w[k] = rng.normal();

    DenseTensor x({4, 3, 5});
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            for (std::size_t k = 0; k < 5; ++k)
                x.at({i, j, k}) = u[static_cast<Eigen::Index>(i)] * v[static_cast<Eigen::Index>(j)] *
                                  w[static_cast<Eigen::Index>(k)];

    const std::vector<std::size_t> ranks{1, 1, 1};
    const TuckerModel t = hosvd(x, ranks);
    CHECK(t.core.size() == 1);
    CHECK(std::abs(t.core[0]) == doctest::Approx(tensor_norm(x)).epsilon(1e-10));
}

TEST_CASE("hosvd of the zero tensor yields a zero core and orthonormal factors") {
    const DenseTensor x({3, 2, 4});
    const std::vector<std::size_t> ranks{3, 2, 4};
    const TuckerModel t = hosvd(x, ranks);
    CHECK(tensor_norm(t.core) == 0.0);
    for (const auto& u : t.factors) {
        const Eigen::MatrixXd gram = u.transpose() * u;
        CHECK((gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() <
              1e-8);
    }
}

TEST_CASE("hosvd rejects out-of-range ranks") {
    const DenseTensor x = oracle::random_tensor({3, 4, 5}, 3);
    std::vector<std::size_t> bad{3, 5, 5};
    CHECK_THROWS_AS(hosvd(x, bad), InvalidArgument);
    std::vector<std::size_t> zero{0, 4, 5};
    CHECK_THROWS_AS(hosvd(x, zero), InvalidArgument);
    std::vector<std::size_t> arity{3, 4};
    CHECK_THROWS_AS(hosvd(x, arity), InvalidArgument);
}

TEST_CASE("truncated reconstruction error equals the discarded core energy") {
    const DenseTensor x = oracle::random_tensor({5, 6, 4}, 55);
    const std::vector<std::size_t> full{5, 6, 4};
    const std::vector<std::size_t> trunc{3, 4, 2};
    const TuckerModel t_full = hosvd(x, full);
    const TuckerModel t_trunc = hosvd(x, trunc);
    const DenseTensor approx = tucker_reconstruct(t_trunc);

    double discarded = 0.0;
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 6; ++j)
            for (std::size_t k = 0; k < 4; ++k) {
                if (i < trunc[0] && j < trunc[1] && k < trunc[2]) continue;
                const double c = t_full.core.at({i, j, k});
                discarded += c * c;
            }

    double residual = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double d = x[k] - approx[k];
        residual += d * d;
    }
    CHECK(std::sqrt(residual) == doctest::Approx(std::sqrt(discarded)).epsilon(1e-8));
}

TEST_CASE("reconstructing and re-decomposing preserves the core norm") {
    const DenseTensor x = oracle::random_tensor({4, 3, 5}, 71);
    const std::vector<std::size_t> ranks{4, 3, 5};
    const TuckerModel t1 = hosvd(x, ranks);
    const TuckerModel t2 = hosvd(tucker_reconstruct(t1), ranks);
    CHECK(tensor_norm(t2.core) == doctest::Approx(tensor_norm(t1.core)).epsilon(1e-10));
}

TEST_CASE("UTT1 round trip is bit-exact") {
    const DenseTensor x = oracle::random_tensor({3, 1, 4, 2}, 99);
    std::ostringstream out(std::ios::binary);
    write_tensor(out, x);
    const std::string bytes = out.str();

    std::istringstream in(bytes, std::ios::binary);
    const DenseTensor back = read_tensor(in);
    REQUIRE(back.dims() == x.dims());
    for (std::size_t k = 0; k < x.size(); ++k) CHECK(back[k] == x[k]);

    std::ostringstream out2(std::ios::binary);
    write_tensor(out2, back);
    CHECK(out2.str() == bytes);

    std::istringstream bad("nope", std::ios::binary);
    CHECK_THROWS_AS(read_tensor(bad), IoError);
}
