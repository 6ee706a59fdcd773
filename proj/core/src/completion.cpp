#include "utaam/completion.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "utaam/errors.hpp"
#include "utaam/random.hpp"

namespace utaam {

namespace {

// Accept a new iterate only if it does not increase the objective beyond
// floating-point slack; keeps every returned trace non-increasing.
bool improves(double prev, double next) { return next <= prev * (1.0 + 1e-12) + 1e-15; }

std::size_t cell_count(const std::vector<std::size_t>& dims) {
    std::size_t n = 1;
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) n *= dims[k];
    return n;
}

}  // namespace

MaskedTensor::MaskedTensor(DenseTensor data_, DenseTensor mask_)
    : data(std::move(data_)), mask(std::move(mask_)) {
    if (!data.same_dims(mask)) throw InvalidArgument("MaskedTensor: mask dims must match data dims");
    for (double v : mask.values())
        if (v != 0.0 && v != 1.0) throw InvalidArgument("MaskedTensor: mask entries must be 0 or 1");
}

bool MaskedTensor::sample_constant() const {
    const std::size_t feature = mask.dims().back();
    const std::size_t cells = cell_count(mask.dims());
    for (std::size_t c = 0; c < cells; ++c) {
        const double first = mask[c * feature];
        for (std::size_t f = 1; f < feature; ++f)
            if (mask[c * feature + f] != first) return false;
    }
    return true;
}

DenseTensor expand_sample_mask(const DenseTensor& cell_mask, std::size_t feature_extent) {
    if (feature_extent == 0) throw InvalidArgument("expand_sample_mask: feature extent must be >= 1");
    std::vector<std::size_t> dims = cell_mask.dims();
    dims.push_back(feature_extent);
    DenseTensor out(std::move(dims));
    for (std::size_t c = 0; c < cell_mask.size(); ++c)
        for (std::size_t f = 0; f < feature_extent; ++f)
            out[c * feature_extent + f] = cell_mask[c];
    return out;
}

double masked_residual_norm(const MaskedTensor& x, const DenseTensor& candidate) {
    if (!x.data.same_dims(candidate))
        throw InvalidArgument("masked_residual_norm: candidate dims must match data dims");
    double sum = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        if (x.mask[i] == 0.0) continue;
        const double d = x.data[i] - candidate[i];
        sum += d * d;
    }
    return std::sqrt(sum);
}

double reconstruction_rms(const DenseTensor& truth, const DenseTensor& completed,
                          const DenseTensor& mask) {
    if (!truth.same_dims(completed) || !truth.same_dims(mask))
        throw InvalidArgument("reconstruction_rms: dims must match");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (mask[i] != 0.0) continue;
        const double d = truth[i] - completed[i];
        sum += d * d;
        ++n;
    }
    return n == 0 ? 0.0 : std::sqrt(sum / static_cast<double>(n));
}

InitResult initialize_missing(const MaskedTensor& x, const InitPolicy& policy) {
    if (x.data.order() != 5)
        throw InvalidArgument("initialize_missing: expected a 5-way sample tensor");
    if (!x.sample_constant())
        throw InvalidArgument("initialize_missing: mask must be constant per sample");

    const auto& dims = x.data.dims();
    const std::size_t ni = dims[0], np = dims[1], nl = dims[2], ne = dims[3], nf = dims[4];
    const std::size_t cells = ni * np * nl * ne;

    auto cell_of = [&](std::size_t i, std::size_t p, std::size_t l, std::size_t e) {
        return ((i * np + p) * nl + l) * ne + e;
    };
    std::vector<bool> present(cells);
    for (std::size_t c = 0; c < cells; ++c) present[c] = x.mask[c * nf] != 0.0;

    InitResult out{x.data, std::vector<InitRule>(cells, InitRule::Observed)};
    RandomStream rng(policy.seed);

    std::vector<double> acc(nf);
    for (std::size_t i = 0; i < ni; ++i)
        for (std::size_t p = 0; p < np; ++p)
            for (std::size_t l = 0; l < nl; ++l)
                for (std::size_t e = 0; e < ne; ++e) {
                    const std::size_t c = cell_of(i, p, l, e);
                    if (present[c]) continue;

                    std::size_t matched = 0;
                    std::fill(acc.begin(), acc.end(), 0.0);
                    InitRule rule = InitRule::Random;
                    if (policy.variation_aware) {
                        // AND rule: same pose, illumination and expression, identity free.
                        for (std::size_t i2 = 0; i2 < ni; ++i2) {
                            const std::size_t c2 = cell_of(i2, p, l, e);
                            if (!present[c2]) continue;
                            for (std::size_t f = 0; f < nf; ++f) acc[f] += x.data[c2 * nf + f];
                            ++matched;
                        }
                        if (matched > 0) {
                            rule = InitRule::And;
                        } else {
                            // OR rule: any one of the three variation indices matches.
                            for (std::size_t i2 = 0; i2 < ni; ++i2)
                                for (std::size_t p2 = 0; p2 < np; ++p2)
                                    for (std::size_t l2 = 0; l2 < nl; ++l2)
                                        for (std::size_t e2 = 0; e2 < ne; ++e2) {
                                            if (p2 != p && l2 != l && e2 != e) continue;
                                            const std::size_t c2 = cell_of(i2, p2, l2, e2);
                                            if (!present[c2]) continue;
                                            for (std::size_t f = 0; f < nf; ++f)
                                                acc[f] += x.data[c2 * nf + f];
                                            ++matched;
                                        }
                            if (matched > 0) rule = InitRule::Or;
                        }
                    }
                    if (matched > 0) {
                        for (std::size_t f = 0; f < nf; ++f)
                            out.tensor[c * nf + f] = acc[f] / static_cast<double>(matched);
                    } else {
                        for (std::size_t f = 0; f < nf; ++f) out.tensor[c * nf + f] = rng.uniform01();
                    }
                    out.rules[c] = rule;
                }
    return out;
}

CompletionResult complete_tucker_power(const MaskedTensor& x, const DenseTensor& init,
                                       std::span<const std::size_t> ranks,
                                       const SolveOptions& options) {
    if (!x.data.same_dims(init))
        throw InvalidArgument("complete_tucker_power: init dims must match data dims");

    DenseTensor estimate = init;
    DenseTensor imputed = x.data;
    CompletionResult result;
    result.tensor = estimate;

    for (std::size_t iter = 0; iter < options.max_iter; ++iter) {
        for (std::size_t i = 0; i < imputed.size(); ++i)
            imputed[i] = x.mask[i] != 0.0 ? x.data[i] : estimate[i];

        DenseTensor recon = tucker_reconstruct(hosvd(imputed, ranks));
        const double obj = masked_residual_norm(x, recon);
        if (!std::isfinite(obj))
            throw NumericalError("complete_tucker_power: non-finite objective at iteration " +
                                 std::to_string(iter));
        if (!result.objective_trace.empty() && !improves(result.objective_trace.back(), obj)) break;

        estimate = std::move(recon);
        result.objective_trace.push_back(obj);
        result.tensor = estimate;

        if (result.objective_trace.size() >= 2) {
            const double prev = result.objective_trace[result.objective_trace.size() - 2];
            if (std::abs(prev - obj) <= options.tol * std::max(prev, 1e-300)) break;
        }
        if (obj == 0.0) break;
    }

    if (options.restore_observed)
        for (std::size_t i = 0; i < result.tensor.size(); ++i)
            if (x.mask[i] != 0.0) result.tensor[i] = x.data[i];
    return result;
}

DenseTensor cp_reconstruct(const CpFactors& f, const std::vector<std::size_t>& dims) {
    if (f.factors.size() != dims.size())
        throw InvalidArgument("cp_reconstruct: one factor per mode required");
    const std::size_t rank = f.rank();
    for (std::size_t n = 0; n < dims.size(); ++n)
        if (static_cast<std::size_t>(f.factors[n].rows()) != dims[n] ||
            static_cast<std::size_t>(f.factors[n].cols()) != rank)
            throw InvalidArgument("cp_reconstruct: factor shape mismatch at mode " + std::to_string(n));

    DenseTensor out(dims);
    const std::size_t order = dims.size();
    std::vector<std::size_t> idx(order, 0);
    Eigen::VectorXd prod(rank);
    for (std::size_t flat = 0; flat < out.size(); ++flat) {
        prod.setOnes();
        for (std::size_t n = 0; n < order; ++n)
            prod.array() *= f.factors[n].row(static_cast<Eigen::Index>(idx[n])).transpose().array();
        out[flat] = prod.sum();
        for (std::size_t k = order; k-- > 0;) {
            if (++idx[k] < dims[k]) break;
            idx[k] = 0;
        }
    }
    return out;
}

std::vector<Eigen::MatrixXd> cp_weighted_gradient(const MaskedTensor& x, const CpFactors& f) {
    const auto& dims = x.data.dims();
    const std::size_t order = dims.size();
    const std::size_t rank = f.rank();

    std::vector<Eigen::MatrixXd> grad;
    grad.reserve(order);
    for (std::size_t n = 0; n < order; ++n)
        grad.emplace_back(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dims[n]),
                                                static_cast<Eigen::Index>(rank)));

    std::vector<std::size_t> idx(order, 0);
    // prefix[n] = prod of factor rows over modes < n, suffix likewise above n.
    Eigen::MatrixXd prefix(order + 1, rank), suffix(order + 1, rank);
    for (std::size_t flat = 0; flat < x.data.size(); ++flat) {
        if (x.mask[flat] != 0.0) {
            prefix.row(0).setOnes();
            for (std::size_t n = 0; n < order; ++n)
                prefix.row(static_cast<Eigen::Index>(n + 1)) =
                    prefix.row(static_cast<Eigen::Index>(n)).cwiseProduct(
                        f.factors[n].row(static_cast<Eigen::Index>(idx[n])));
            suffix.row(static_cast<Eigen::Index>(order)).setOnes();
            for (std::size_t n = order; n-- > 0;)
                suffix.row(static_cast<Eigen::Index>(n)) =
                    suffix.row(static_cast<Eigen::Index>(n + 1)).cwiseProduct(
                        f.factors[n].row(static_cast<Eigen::Index>(idx[n])));

            const double residual = prefix.row(static_cast<Eigen::Index>(order)).sum() - x.data[flat];
            for (std::size_t n = 0; n < order; ++n)
                grad[n].row(static_cast<Eigen::Index>(idx[n])) +=
                    residual * prefix.row(static_cast<Eigen::Index>(n))
                                   .cwiseProduct(suffix.row(static_cast<Eigen::Index>(n + 1)));
        }
        for (std::size_t k = order; k-- > 0;) {
            if (++idx[k] < dims[k]) break;
            idx[k] = 0;
        }
    }
    return grad;
}

namespace {

double cp_masked_objective(const MaskedTensor& x, const CpFactors& f) {
    const DenseTensor recon = cp_reconstruct(f, x.data.dims());
    const double r = masked_residual_norm(x, recon);
    return 0.5 * r * r;
}

}  // namespace

CompletionResult complete_cp_weighted(const MaskedTensor& x, const DenseTensor& init,
                                      std::size_t rank, const SolveOptions& options) {
    if (rank == 0) throw InvalidArgument("complete_cp_weighted: rank must be >= 1");
    if (!x.data.same_dims(init))
        throw InvalidArgument("complete_cp_weighted: init dims must match data dims");

    const auto& dims = x.data.dims();
    const std::size_t order = dims.size();

    // Seed the factors with HOSVD bases of the initial guess; columns beyond
    // the numerical basis are deterministic pseudo-random so every mode has
    // exactly `rank` columns.
    CpFactors f;
    f.factors.reserve(order);
    RandomStream pad_rng(0xC0F5EEDULL);
    for (std::size_t n = 0; n < order; ++n) {
        const std::size_t have = std::min(rank, dims[n]);
        Eigen::MatrixXd u = leading_left_singular_vectors(unfold(init, n), have);
        Eigen::MatrixXd a(dims[n], rank);
        a.leftCols(static_cast<Eigen::Index>(have)) = u;
        for (std::size_t c = have; c < rank; ++c)
            for (std::size_t r = 0; r < dims[n]; ++r)
                a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                    pad_rng.uniform(-0.5, 0.5);
        f.factors.push_back(std::move(a));
    }
    // Scale so the initial CP model matches the initial guess in norm.
    {
        const double target = tensor_norm(init);
        const double current = tensor_norm(cp_reconstruct(f, dims));
        if (current > 0.0 && target > 0.0) f.factors[0] *= target / current;
    }

    CompletionResult result;
    double obj = cp_masked_objective(x, f);
    if (!std::isfinite(obj)) throw NumericalError("complete_cp_weighted: non-finite initial objective");
    result.objective_trace.push_back(std::sqrt(2.0 * obj));

    double step = 1.0;
    for (std::size_t iter = 0; iter < options.max_iter; ++iter) {
        const auto grad = cp_weighted_gradient(x, f);
        double grad_sq = 0.0;
        for (const auto& g : grad) {
            if (!g.allFinite())
                throw NumericalError("complete_cp_weighted: non-finite gradient at iteration " +
                                     std::to_string(iter));
            grad_sq += g.squaredNorm();
        }
        if (grad_sq == 0.0) break;

        // Backtracking line search, Armijo constant 1e-4, halving steps.
        step *= 2.0;
        CpFactors trial = f;
        double trial_obj = 0.0;
        bool accepted = false;
        while (step > 1e-20) {
            for (std::size_t n = 0; n < order; ++n) trial.factors[n] = f.factors[n] - step * grad[n];
            trial_obj = cp_masked_objective(x, trial);
            if (std::isfinite(trial_obj) && trial_obj <= obj - 1e-4 * step * grad_sq) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;

        f = std::move(trial);
        const double prev = obj;
        obj = trial_obj;
        result.objective_trace.push_back(std::sqrt(2.0 * obj));
        if (std::abs(prev - obj) <= options.tol * std::max(prev, 1e-300)) break;
    }

    result.tensor = cp_reconstruct(f, dims);
    if (options.restore_observed)
        for (std::size_t i = 0; i < result.tensor.size(); ++i)
            if (x.mask[i] != 0.0) result.tensor[i] = x.data[i];
    return result;
}

}  // namespace utaam
