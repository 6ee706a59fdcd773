#include "utaam/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "utaam/errors.hpp"

namespace utaam {

namespace {

// Lossless per-mode rank: nothing beyond min(extent, product of the rest)
// can carry information.
std::vector<std::size_t> lossless_ranks(const std::vector<std::size_t>& dims) {
    std::size_t total = 1;
    for (std::size_t d : dims) total *= d;
    std::vector<std::size_t> ranks(dims.size());
    for (std::size_t n = 0; n < dims.size(); ++n) ranks[n] = std::min(dims[n], total / dims[n]);
    return ranks;
}

void check_simplex(const Eigen::VectorXd& v, const char* what) {
    if (v.size() == 0) throw InvalidArgument(std::string(what) + ": empty coefficient vector");
    double sum = 0.0;
    for (Eigen::Index k = 0; k < v.size(); ++k) {
        if (!(v[k] >= 0.0 && v[k] <= 1.0))
            throw InvalidArgument(std::string(what) + ": entries must lie in [0, 1]");
        sum += v[k];
    }
    if (std::abs(sum - 1.0) > 1e-10)
        throw InvalidArgument(std::string(what) + ": entries must sum to 1");
}

Eigen::VectorXd tensor_as_vector(const DenseTensor& t) {
    return Eigen::Map<const Eigen::VectorXd>(t.values().data(),
                                             static_cast<Eigen::Index>(t.size()));
}

}  // namespace

void SampleGrid::validate() const {
    for (std::size_t e : extents)
        if (e == 0) throw InvalidArgument("SampleGrid: extents must be >= 1");
    if (frontal_pose >= extents[1])
        throw InvalidArgument("SampleGrid: frontal pose index outside pose extent");
    if (!present.empty() && present.size() != cells())
        throw InvalidArgument("SampleGrid: presence flags must cover every cell");
}

AssembledTensors assemble_tensors(const SampleGrid& grid, std::span<const FaceShape> shapes,
                                  std::span<const TextureVector> textures,
                                  const CompletionPolicy& policy) {
    grid.validate();
    const std::size_t cells = grid.cells();
    if (shapes.size() != cells || textures.size() != cells)
        throw InvalidArgument("assemble_tensors: need one shape and texture per grid cell");

    std::size_t observed = 0;
    for (std::size_t c = 0; c < cells; ++c)
        if (grid.is_present(c)) ++observed;
    if (observed == 0) throw InvalidArgument("assemble_tensors: no observed samples");

    // Every pose index must retain at least one sample; that mode cannot be
    // recovered otherwise.
    for (std::size_t p = 0; p < grid.extents[1]; ++p) {
        bool any = false;
        for (std::size_t i = 0; i < grid.extents[0] && !any; ++i)
            for (std::size_t l = 0; l < grid.extents[2] && !any; ++l)
                for (std::size_t e = 0; e < grid.extents[3] && !any; ++e)
                    any = grid.is_present(grid.cell_index(i, p, l, e));
        if (!any)
            throw InvalidArgument("assemble_tensors: every sample at pose index " +
                                  std::to_string(p) + " is missing");
    }

    std::size_t first_present = 0;
    while (!grid.is_present(first_present)) ++first_present;
    const std::size_t shape_dim = static_cast<std::size_t>(shapes[first_present].coords.size());
    const std::size_t texture_dim = static_cast<std::size_t>(textures[first_present].size());
    if (shape_dim == 0 || texture_dim == 0)
        throw InvalidArgument("assemble_tensors: empty shape or texture vectors");
    for (std::size_t c = 0; c < cells; ++c) {
        if (!grid.is_present(c)) continue;
        if (static_cast<std::size_t>(shapes[c].coords.size()) != shape_dim ||
            static_cast<std::size_t>(textures[c].size()) != texture_dim)
            throw InvalidArgument("assemble_tensors: inconsistent vector lengths across samples");
    }

    AssembledTensors out;
    out.grid_extents = grid.extents;
    out.mean_shape = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(shape_dim));
    out.mean_texture = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(texture_dim));
    for (std::size_t c = 0; c < cells; ++c) {
        if (!grid.is_present(c)) continue;
        out.mean_shape += shapes[c].coords;
        out.mean_texture += textures[c];
    }
    out.mean_shape /= static_cast<double>(observed);
    out.mean_texture /= static_cast<double>(observed);

    const std::vector<std::size_t> shape_dims{grid.extents[0], grid.extents[1], grid.extents[2],
                                              grid.extents[3], shape_dim};
    const std::vector<std::size_t> texture_dims{grid.extents[0], grid.extents[1], grid.extents[2],
                                                grid.extents[3], texture_dim};
    out.shape = DenseTensor(shape_dims);
    out.texture = DenseTensor(texture_dims);
    for (std::size_t c = 0; c < cells; ++c) {
        if (!grid.is_present(c)) continue;
        for (std::size_t f = 0; f < shape_dim; ++f)
            out.shape[c * shape_dim + f] = shapes[c].coords[static_cast<Eigen::Index>(f)] -
                                           out.mean_shape[static_cast<Eigen::Index>(f)];
        for (std::size_t f = 0; f < texture_dim; ++f)
            out.texture[c * texture_dim + f] = textures[c][static_cast<Eigen::Index>(f)] -
                                               out.mean_texture[static_cast<Eigen::Index>(f)];
    }

    if (observed == cells) return out;

    DenseTensor cell_mask({grid.extents[0], grid.extents[1], grid.extents[2], grid.extents[3]});
    for (std::size_t c = 0; c < cells; ++c) cell_mask[c] = grid.is_present(c) ? 1.0 : 0.0;

    auto complete = [&](DenseTensor& data, std::size_t feature_dim, std::vector<InitRule>& rules) {
        MaskedTensor masked(std::move(data), expand_sample_mask(cell_mask, feature_dim));
        InitResult init = initialize_missing(masked, {policy.variation_aware_init, policy.seed});
        rules = std::move(init.rules);

        std::vector<std::size_t> ranks = policy.ranks;
        if (ranks.empty()) {
            ranks = lossless_ranks(masked.data.dims());
            for (std::size_t n = 0; n < 4; ++n) ranks[n] = std::min(ranks[n], grid.extents[n]);
        }
        if (ranks.size() != masked.data.order())
            throw InvalidArgument("assemble_tensors: completion ranks must match tensor order");

        SolveOptions options;
        options.max_iter = policy.max_iter;
        options.tol = policy.tol;
        CompletionResult solved =
            policy.solver == CompletionPolicy::Solver::TuckerPower
                ? complete_tucker_power(masked, init.tensor, ranks, options)
                : complete_cp_weighted(masked, init.tensor, policy.cp_rank, options);
        data = std::move(solved.tensor);
    };

    complete(out.shape, shape_dim, out.shape_init_rules);
    complete(out.texture, texture_dim, out.texture_init_rules);
    return out;
}

UtaamModel build_utaam(const AssembledTensors& tensors, const ReferenceMesh& mesh,
                       const HogSpec& hog, const ModelRanks& ranks,
                       const Eigen::VectorXd& illumination_weights) {
    if (tensors.shape.order() != 5 || tensors.texture.order() != 5)
        throw InvalidArgument("build_utaam: expected 5-way shape and texture tensors");
    for (std::size_t n = 0; n < 4; ++n)
        if (tensors.shape.dims()[n] != tensors.texture.dims()[n])
            throw InvalidArgument("build_utaam: shape/texture grid extents disagree");
    if (mesh.texture_size() != tensors.texture.dims()[4])
        throw InvalidArgument("build_utaam: mesh lattice size does not match the texture extent");
    validate(hog);

    std::vector<std::size_t> shape_ranks =
        ranks.shape.empty() ? lossless_ranks(tensors.shape.dims()) : ranks.shape;
    std::vector<std::size_t> texture_ranks =
        ranks.texture.empty() ? lossless_ranks(tensors.texture.dims()) : ranks.texture;

    const std::size_t illum_extent = tensors.shape.dims()[2];
    Eigen::VectorXd weights = illumination_weights;
    if (weights.size() == 0)
        weights = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(illum_extent),
                                            1.0 / static_cast<double>(illum_extent));
    if (static_cast<std::size_t>(weights.size()) != illum_extent)
        throw InvalidArgument("build_utaam: illumination weights must have one entry per state");
    check_simplex(weights, "build_utaam illumination weights");

    UtaamModel model;
    model.mean_shape = tensors.mean_shape;
    model.mean_texture = tensors.mean_texture;
    model.mesh = mesh;
    model.hog = hog;

    TuckerModel shape_t = hosvd(tensors.shape, shape_ranks);
    model.shape_identity = shape_t.factors[0];
    model.shape_pose = shape_t.factors[1];
    model.shape_expression = shape_t.factors[3];
    // Fold the sample basis back in, then contract illumination away.
    DenseTensor folded = mode_n_product(shape_t.core, shape_t.factors[4], 4);
    model.shape_core = contract_mode(folded, shape_t.factors[2].transpose() * weights, 2);

    TuckerModel texture_t = hosvd(tensors.texture, texture_ranks);
    model.texture_identity = texture_t.factors[0];
    model.texture_pose = texture_t.factors[1];
    model.texture_illumination = texture_t.factors[2];
    model.texture_expression = texture_t.factors[3];
    model.texture_core = mode_n_product(texture_t.core, texture_t.factors[4], 4);
    return model;
}

Eigen::VectorXd ShapeParams::to_vector() const {
    Eigen::VectorXd v(4 + identity.size() + pose.size() + expression.size());
    v.head<4>() = affine_to_linear(global);
    v.segment(4, identity.size()) = identity;
    v.segment(4 + identity.size(), pose.size()) = pose;
    v.tail(expression.size()) = expression;
    return v;
}

ShapeParams ShapeParams::from_vector(const Eigen::VectorXd& v, std::size_t rank_identity,
                                     std::size_t rank_pose, std::size_t rank_expression) {
    if (static_cast<std::size_t>(v.size()) != 4 + rank_identity + rank_pose + rank_expression)
        throw InvalidArgument("ShapeParams: flat vector length mismatch");
    ShapeParams p;
    p.global = affine_from_linear(v.head<4>());
    p.identity = v.segment(4, static_cast<Eigen::Index>(rank_identity));
    p.pose = v.segment(4 + static_cast<Eigen::Index>(rank_identity),
                       static_cast<Eigen::Index>(rank_pose));
    p.expression = v.tail(static_cast<Eigen::Index>(rank_expression));
    return p;
}

FaceShape synthesize_shape(const UtaamModel& model, const ShapeParams& p) {
    if (p.identity.size() != model.shape_identity.cols() ||
        p.pose.size() != model.shape_pose.cols() ||
        p.expression.size() != model.shape_expression.cols())
        throw InvalidArgument("synthesize_shape: coefficient lengths must match retained ranks");

    DenseTensor t = contract_mode(model.shape_core, p.identity, 0);
    t = contract_mode(t, p.pose, 0);
    t = contract_mode(t, p.expression, 0);
    FaceShape shape(model.mean_shape + tensor_as_vector(t));
    return apply_affine(shape, p.global);
}

TextureVector synthesize_texture(const UtaamModel& model, const TextureParams& q) {
    if (q.identity.size() != model.texture_identity.cols() ||
        q.pose.size() != model.texture_pose.cols() ||
        q.illumination.size() != model.texture_illumination.cols() ||
        q.expression.size() != model.texture_expression.cols())
        throw InvalidArgument("synthesize_texture: coefficient lengths must match retained ranks");

    DenseTensor t = contract_mode(model.texture_core, q.identity, 0);
    t = contract_mode(t, q.pose, 0);
    t = contract_mode(t, q.illumination, 0);
    t = contract_mode(t, q.expression, 0);
    return model.mean_texture + tensor_as_vector(t);
}

ShapeParams shape_coefficient_rows(const UtaamModel& model, std::size_t identity, std::size_t pose,
                                   std::size_t expression) {
    if (identity >= static_cast<std::size_t>(model.shape_identity.rows()) ||
        pose >= static_cast<std::size_t>(model.shape_pose.rows()) ||
        expression >= static_cast<std::size_t>(model.shape_expression.rows()))
        throw InvalidArgument("shape_coefficient_rows: training index out of range");
    ShapeParams p;
    p.identity = model.shape_identity.row(static_cast<Eigen::Index>(identity)).transpose();
    p.pose = model.shape_pose.row(static_cast<Eigen::Index>(pose)).transpose();
    p.expression = model.shape_expression.row(static_cast<Eigen::Index>(expression)).transpose();
    return p;
}

TextureParams texture_coefficient_rows(const UtaamModel& model, std::size_t identity,
                                       std::size_t pose, std::size_t illumination,
                                       std::size_t expression) {
    if (identity >= static_cast<std::size_t>(model.texture_identity.rows()) ||
        pose >= static_cast<std::size_t>(model.texture_pose.rows()) ||
        illumination >= static_cast<std::size_t>(model.texture_illumination.rows()) ||
        expression >= static_cast<std::size_t>(model.texture_expression.rows()))
        throw InvalidArgument("texture_coefficient_rows: training index out of range");
    TextureParams q;
    q.identity = model.texture_identity.row(static_cast<Eigen::Index>(identity)).transpose();
    q.pose = model.texture_pose.row(static_cast<Eigen::Index>(pose)).transpose();
    q.illumination =
        model.texture_illumination.row(static_cast<Eigen::Index>(illumination)).transpose();
    q.expression = model.texture_expression.row(static_cast<Eigen::Index>(expression)).transpose();
    return q;
}

Eigen::VectorXd interpolate_pose(const UtaamModel& model, std::size_t row_a, std::size_t row_b,
                                 double t) {
    const std::size_t rows = static_cast<std::size_t>(model.shape_pose.rows());
    if (row_a >= rows || row_b >= rows)
        throw InvalidArgument("interpolate_pose: pose row out of range");
    if (!(t >= 0.0 && t <= 1.0)) throw InvalidArgument("interpolate_pose: t must lie in [0, 1]");
    return (1.0 - t) * model.shape_pose.row(static_cast<Eigen::Index>(row_a)).transpose() +
           t * model.shape_pose.row(static_cast<Eigen::Index>(row_b)).transpose();
}

TaamVariationModel build_taam_variation_models(const AssembledTensors& tensors,
                                               const MixtureCoefficients& coeffs) {
    if (tensors.shape.order() != 5 || tensors.texture.order() != 5)
        throw InvalidArgument("build_taam_variation_models: expected 5-way tensors");
    const auto& sdims = tensors.shape.dims();
    const auto& tdims = tensors.texture.dims();
    if (static_cast<std::size_t>(coeffs.pose.size()) != sdims[1] ||
        static_cast<std::size_t>(coeffs.illumination.size()) != sdims[2] ||
        static_cast<std::size_t>(coeffs.expression.size()) != sdims[3])
        throw InvalidArgument("build_taam_variation_models: coefficient lengths must match extents");
    check_simplex(coeffs.pose, "pose mixture");
    check_simplex(coeffs.expression, "expression mixture");
    check_simplex(coeffs.illumination, "illumination mixture");

    TaamVariationModel out;

    // Shape basis sub-tensor: contract pose and expression, fold the sample basis.
    {
        TuckerModel t = hosvd(tensors.shape, lossless_ranks(sdims));
        DenseTensor basis = mode_n_product(t.core, t.factors[4], 4);
        basis = contract_mode(basis, t.factors[1].transpose() * coeffs.pose, 1);
        basis = contract_mode(basis, t.factors[3].transpose() * coeffs.expression, 1);
        // Remaining modes (identity, illumination, sample): restore the
        // original identity/illumination extents via their factors.
        basis = mode_n_product(basis, t.factors[0], 0);
        basis = mode_n_product(basis, t.factors[2], 1);
        out.shape_basis = unfold(basis, 2);  // I_s x (I_i * I_l), identity fastest
    }
    {
        TuckerModel t = hosvd(tensors.texture, lossless_ranks(tdims));
        DenseTensor basis = mode_n_product(t.core, t.factors[4], 4);
        basis = contract_mode(basis, t.factors[2].transpose() * coeffs.illumination, 2);
        basis = mode_n_product(basis, t.factors[0], 0);
        basis = mode_n_product(basis, t.factors[1], 1);
        basis = mode_n_product(basis, t.factors[3], 2);
        out.texture_basis = unfold(basis, 3);  // I_t x (I_i * I_p * I_e)
    }

    // Coefficient-weighted means over the respective slice means.
    const std::size_t shape_dim = sdims[4];
    const std::size_t texture_dim = tdims[4];
    out.mean_shape = tensors.mean_shape;
    {
        Eigen::VectorXd weighted = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(shape_dim));
        for (std::size_t p = 0; p < sdims[1]; ++p)
            for (std::size_t e = 0; e < sdims[3]; ++e) {
                Eigen::VectorXd slice = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(shape_dim));
                for (std::size_t i = 0; i < sdims[0]; ++i)
                    for (std::size_t l = 0; l < sdims[2]; ++l) {
                        const std::size_t cell = ((i * sdims[1] + p) * sdims[2] + l) * sdims[3] + e;
                        for (std::size_t f = 0; f < shape_dim; ++f)
                            slice[static_cast<Eigen::Index>(f)] += tensors.shape[cell * shape_dim + f];
                    }
                slice /= static_cast<double>(sdims[0] * sdims[2]);
                weighted += coeffs.pose[static_cast<Eigen::Index>(p)] *
                            coeffs.expression[static_cast<Eigen::Index>(e)] * slice;
            }
        out.mean_shape += weighted;
    }
    out.mean_texture = tensors.mean_texture;
    {
        Eigen::VectorXd weighted = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(texture_dim));
        for (std::size_t l = 0; l < tdims[2]; ++l) {
            Eigen::VectorXd slice = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(texture_dim));
            for (std::size_t i = 0; i < tdims[0]; ++i)
                for (std::size_t p = 0; p < tdims[1]; ++p)
                    for (std::size_t e = 0; e < tdims[3]; ++e) {
                        const std::size_t cell = ((i * tdims[1] + p) * tdims[2] + l) * tdims[3] + e;
                        for (std::size_t f = 0; f < texture_dim; ++f)
                            slice[static_cast<Eigen::Index>(f)] +=
                                tensors.texture[cell * texture_dim + f];
                    }
            slice /= static_cast<double>(tdims[0] * tdims[1] * tdims[3]);
            weighted += coeffs.illumination[static_cast<Eigen::Index>(l)] * slice;
        }
        out.mean_texture += weighted;
    }
    return out;
}

PcaAamModel build_pca_aam(std::span<const FaceShape> shapes,
                          std::span<const TextureVector> textures, double variance_fraction) {
    if (shapes.size() < 2 || textures.size() != shapes.size())
        throw InvalidArgument("build_pca_aam: need at least 2 samples with matching textures");
    if (!(variance_fraction > 0.0 && variance_fraction <= 1.0))
        throw InvalidArgument("build_pca_aam: variance fraction must lie in (0, 1]");

    const std::size_t n = shapes.size();
    auto fit_pca = [&](auto value_of, std::size_t dim, Eigen::VectorXd& mean,
                       Eigen::MatrixXd& basis, Eigen::VectorXd& eigenvalues) {
        Eigen::MatrixXd data(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(n));
        for (std::size_t k = 0; k < n; ++k) data.col(static_cast<Eigen::Index>(k)) = value_of(k);
        mean = data.rowwise().mean();
        data.colwise() -= mean;

        Eigen::VectorXd sv;
        const std::size_t thin = std::min(dim, n);
        Eigen::MatrixXd u = leading_left_singular_vectors(data, thin, &sv);

        Eigen::VectorXd ev = sv.array().square() / static_cast<double>(n - 1);
        const double cutoff = sv.size() > 0 ? 1e-12 * sv[0] : 0.0;
        std::size_t nonzero = 0;
        for (Eigen::Index k = 0; k < sv.size(); ++k)
            if (sv[k] > cutoff) ++nonzero;

        const double total = ev.head(static_cast<Eigen::Index>(nonzero)).sum();
        std::size_t keep = nonzero;
        if (total > 0.0) {
            double acc = 0.0;
            for (std::size_t k = 0; k < nonzero; ++k) {
                acc += ev[static_cast<Eigen::Index>(k)];
                if (acc >= variance_fraction * total - 1e-15) {
                    keep = k + 1;
                    break;
                }
            }
        } else {
            keep = 0;
        }
        basis = u.leftCols(static_cast<Eigen::Index>(keep));
        eigenvalues = ev.head(static_cast<Eigen::Index>(keep));
    };

    const std::size_t shape_dim = static_cast<std::size_t>(shapes[0].coords.size());
    const std::size_t texture_dim = static_cast<std::size_t>(textures[0].size());
    for (std::size_t k = 0; k < n; ++k)
        if (static_cast<std::size_t>(shapes[k].coords.size()) != shape_dim ||
            static_cast<std::size_t>(textures[k].size()) != texture_dim)
            throw InvalidArgument("build_pca_aam: inconsistent vector lengths");

    PcaAamModel model;
    fit_pca([&](std::size_t k) { return shapes[k].coords; }, shape_dim, model.mean_shape,
            model.shape_basis, model.shape_eigenvalues);
    fit_pca([&](std::size_t k) { return textures[k]; }, texture_dim, model.mean_texture,
            model.texture_basis, model.texture_eigenvalues);
    return model;
}

}  // namespace utaam
