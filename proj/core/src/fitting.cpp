#include "utaam/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "utaam/errors.hpp"
#include "utaam/random.hpp"

namespace utaam {

WeakRegressor train_weak(const Eigen::MatrixXd& features, const Eigen::MatrixXd& deltas,
                         double lambda) {
    const Eigen::Index n = features.rows();
    if (n < 1 || deltas.rows() != n)
        throw InvalidArgument("train_weak: need matching, non-empty feature and delta rows");
    if (lambda < 0.0) throw InvalidArgument("train_weak: lambda must be >= 0");

    const Eigen::RowVectorXd f_mean = features.colwise().mean();
    const Eigen::RowVectorXd d_mean = deltas.colwise().mean();
    const Eigen::MatrixXd fc = features.rowwise() - f_mean;
    const Eigen::MatrixXd dc = deltas.rowwise() - d_mean;

    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(fc.cols(), fc.cols());
    gram.selfadjointView<Eigen::Lower>().rankUpdate(fc.transpose());
    gram = gram.selfadjointView<Eigen::Lower>();
    gram.diagonal().array() += lambda;

    if (lambda == 0.0) {
        Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
        if (!lu.isInvertible())
            throw NumericalError("train_weak: singular normal matrix; use lambda > 0");
    }

    WeakRegressor w;
    w.projection = gram.ldlt().solve(fc.transpose() * dc).transpose();
    if (!w.projection.allFinite())
        throw NumericalError("train_weak: non-finite solution; use lambda > 0");
    w.offset = d_mean.transpose() - w.projection * f_mean.transpose();
    return w;
}

namespace {

Eigen::Vector4d shape_bbox(const FaceShape& s) {
    double min_x = s.x(0), max_x = s.x(0), min_y = s.y(0), max_y = s.y(0);
    for (std::size_t l = 1; l < s.landmark_count(); ++l) {
        min_x = std::min(min_x, s.x(l));
        max_x = std::max(max_x, s.x(l));
        min_y = std::min(min_y, s.y(l));
        max_y = std::max(max_y, s.y(l));
    }
    return {min_x, min_y, max_x - min_x, max_y - min_y};
}

// One alternating-least-squares pass over the given core modes; the core's
// last mode is the output dimension. Returns the residual after each mode
// update.
struct AlsState {
    std::vector<Eigen::VectorXd> coeffs;
    std::vector<double> residual_trace;
    bool ridge_fallback = false;
};

// Joint minimum-norm solve for the full coefficient tensor followed by its
// best rank-one extraction; lands ALS in the right basin. Skipped when the
// coefficient tensor is too large to solve cheaply.
bool rank_one_init(const DenseTensor& core, const Eigen::VectorXd& target,
                   std::vector<Eigen::VectorXd>& coeffs) {
    const std::size_t modes = core.order() - 1;
    const std::size_t dim = core.dims()[modes];
    std::size_t n_g = 1;
    for (std::size_t n = 0; n < modes; ++n) n_g *= core.dims()[n];
    if (n_g > 8192 || std::min(dim, n_g) > 256) return false;

    // Minimum-norm solution through a truncated spectral pseudo-inverse of
    // the smaller Gram; near-null directions carry no signal and must not
    // leak into the coefficient tensor.
    const Eigen::MatrixXd b = unfold(core, modes);  // dim x n_g
    auto pinv_apply = [](const Eigen::MatrixXd& gram, const Eigen::VectorXd& rhs) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
        const Eigen::VectorXd& ev = eig.eigenvalues();
        const double cutoff = 1e-10 * std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
        Eigen::VectorXd inv = Eigen::VectorXd::Zero(ev.size());
        for (Eigen::Index k = 0; k < ev.size(); ++k)
            if (ev[k] > cutoff) inv[k] = 1.0 / ev[k];
        return Eigen::VectorXd(eig.eigenvectors() *
                               (inv.asDiagonal() * (eig.eigenvectors().transpose() * rhs)));
    };

    Eigen::VectorXd g(n_g);
    if (dim <= n_g) {
        g = b.transpose() * pinv_apply(b * b.transpose(), target);
    } else {
        g = pinv_apply(b.transpose() * b, b.transpose() * target);
    }
    if (!g.allFinite()) return false;

    // Rearrange: unfold columns run lowest mode fastest, the flat layout
    // runs the last mode fastest.
    std::vector<std::size_t> g_dims(core.dims().begin(), core.dims().end() - 1);
    DenseTensor g_tensor(g_dims);
    std::vector<std::size_t> idx(modes, 0);
    for (std::size_t col = 0; col < n_g; ++col) {
        std::size_t rem = col;
        for (std::size_t n = 0; n < modes; ++n) {
            idx[n] = rem % g_dims[n];
            rem /= g_dims[n];
        }
        g_tensor[g_tensor.flat_index(idx)] = g[static_cast<Eigen::Index>(col)];
    }

    const std::vector<std::size_t> ones(modes, 1);
    const TuckerModel rank1 = hosvd(g_tensor, ones);
    for (std::size_t n = 0; n < modes; ++n) coeffs[n] = rank1.factors[n].col(0);
    coeffs[0] *= rank1.core[0];
    return true;
}

AlsState als_project(const DenseTensor& core, const std::vector<const Eigen::MatrixXd*>& factors,
                     const Eigen::VectorXd& target, std::size_t rounds) {
    const std::size_t modes = factors.size();
    AlsState state;
    state.coeffs.resize(modes);
    if (!rank_one_init(core, target, state.coeffs))
        for (std::size_t n = 0; n < modes; ++n)
            state.coeffs[n] = factors[n]->colwise().mean().transpose();

    auto evaluate = [&](const std::vector<Eigen::VectorXd>& coeffs) {
        DenseTensor reduced = core;
        for (std::size_t k = modes; k-- > 0;) reduced = contract_mode(reduced, coeffs[k], k);
        return (Eigen::Map<const Eigen::VectorXd>(reduced.values().data(),
                                                  static_cast<Eigen::Index>(reduced.size())) -
                target)
            .norm();
    };

    std::vector<Eigen::VectorXd> previous = state.coeffs;
    for (std::size_t round = 0; round < rounds; ++round) {
        for (std::size_t n = 0; n < modes; ++n) {
            // Contract every other mode; descending order keeps each mode at
            // its original index when its turn comes.
            DenseTensor reduced = core;
            for (std::size_t k = modes; k-- > 0;) {
                if (k == n) continue;
                reduced = contract_mode(reduced, state.coeffs[k], k);
            }
            // reduced is (R_n, dim): y_hat = reduced^T * b_n.
            const Eigen::MatrixXd m = unfold(reduced, 0);
            Eigen::MatrixXd gram = m * m.transpose();
            Eigen::VectorXd rhs = m * target;

            Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
            if (!lu.isInvertible()) {
                gram.diagonal().array() += 1e-8;
                state.ridge_fallback = true;
            }
            state.coeffs[n] = gram.ldlt().solve(rhs);
            state.residual_trace.push_back((m.transpose() * state.coeffs[n] - target).norm());
        }

        // Over-relaxation along the round's displacement; alternating least
        // squares crawls along near-flat ridges without it. A candidate is
        // kept only when it strictly improves, so the trace stays monotone.
        // Short runs (coarse estimates inside the fitting loop) skip it.
        if (rounds >= 3) {
            double best = state.residual_trace.back();
            std::vector<Eigen::VectorXd> best_coeffs = state.coeffs;
            for (double gamma : {1.5, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0}) {
                std::vector<Eigen::VectorXd> candidate(modes);
                for (std::size_t n = 0; n < modes; ++n)
                    candidate[n] = previous[n] + gamma * (state.coeffs[n] - previous[n]);
                const double value = evaluate(candidate);
                if (value < best) {
                    best = value;
                    best_coeffs = std::move(candidate);
                }
            }
            state.coeffs = std::move(best_coeffs);
            if (best < state.residual_trace.back()) state.residual_trace.push_back(best);
        }

        // Balance the factor norms; the represented vector is unchanged, the
        // next round's normal systems are better conditioned.
        double log_prod = 0.0;
        bool balanced = true;
        for (const auto& c : state.coeffs) {
            const double norm = c.norm();
            if (norm <= 0.0) {
                balanced = false;
                break;
            }
            log_prod += std::log(norm);
        }
        if (balanced) {
            const double mean_norm = std::exp(log_prod / static_cast<double>(modes));
            for (auto& c : state.coeffs) c *= mean_norm / c.norm();
        }
        previous = state.coeffs;
    }
    return state;
}

}  // namespace

TextureEstimate estimate_texture_params(const TextureVector& texture, const UtaamModel& model,
                                        std::size_t rounds) {
    if (texture.size() != model.mean_texture.size())
        throw InvalidArgument("estimate_texture_params: texture length mismatch");

    const Eigen::VectorXd target = texture - model.mean_texture;
    AlsState state = als_project(model.texture_core,
                                 {&model.texture_identity, &model.texture_pose,
                                  &model.texture_illumination, &model.texture_expression},
                                 target, rounds);

    TextureEstimate out;
    out.params.identity = state.coeffs[0];
    out.params.pose = state.coeffs[1];
    out.params.illumination = state.coeffs[2];
    out.params.expression = state.coeffs[3];
    out.residual_trace = std::move(state.residual_trace);
    out.ridge_fallback = state.ridge_fallback;
    return out;
}

ShapeParams project_shape(const UtaamModel& model, const FaceShape& image_shape,
                          std::size_t rounds) {
    if (image_shape.landmark_count() != model.landmark_count())
        throw InvalidArgument("project_shape: landmark count mismatch");

    // Alternate between similarity alignment and coefficient projection; the
    // second pass re-aligns onto the current model estimate, which removes
    // the scale gauge between the mean and the aligned training frame.
    FaceShape reference(model.mean_shape);
    ShapeParams p;
    for (int pass = 0; pass < 3; ++pass) {
        FaceShape aligned;
        p.global = align_to_target(image_shape, reference, &aligned);
        const Eigen::VectorXd target = aligned.coords - model.mean_shape;

        AlsState state = als_project(
            model.shape_core, {&model.shape_identity, &model.shape_pose, &model.shape_expression},
            target, rounds);
        p.identity = state.coeffs[0];
        p.pose = state.coeffs[1];
        p.expression = state.coeffs[2];

        AffineParams identity_affine;
        ShapeParams normalized = p;
        normalized.global = identity_affine;
        reference = synthesize_shape(model, normalized);
    }
    return p;
}

TrainedCascade train_cascade(const UtaamModel& model,
                             const std::function<ImageGray(std::size_t)>& image_at,
                             std::span<const FaceShape> truths,
                             const CascadeTrainingOptions& options) {
    if (truths.empty()) throw InvalidArgument("train_cascade: empty training set");
    if (options.stages < 1) throw InvalidArgument("train_cascade: need at least one stage");
    if (options.perturbations < 1)
        throw InvalidArgument("train_cascade: need at least one perturbation per image");

    const std::size_t n_images = truths.size();
    const std::size_t k_per = options.perturbations;
    const std::size_t n_rows = n_images * k_per;
    const std::size_t n_f = model.hog.feature_length(model.landmark_count());
    const std::size_t rank_i = static_cast<std::size_t>(model.shape_identity.cols());
    const std::size_t rank_p = static_cast<std::size_t>(model.shape_pose.cols());
    const std::size_t rank_e = static_cast<std::size_t>(model.shape_expression.cols());
    const std::size_t n_p = 4 + rank_i + rank_p + rank_e;

    // Ground-truth parameters per image.
    std::vector<Eigen::VectorXd> target(n_images);
    for (std::size_t i = 0; i < n_images; ++i)
        target[i] = project_shape(model, truths[i], options.als_rounds).to_vector();

    // Perturbed initializations: jittered ground-truth affine, coefficients
    // either zero (mean shape) or borrowed from another training image.
    RandomStream rng(options.seed);
    std::vector<Eigen::VectorXd> params(n_rows);
    for (std::size_t i = 0; i < n_images; ++i) {
        const Eigen::Vector4d box = shape_bbox(truths[i]);
        const double face_size = std::hypot(box[2], box[3]);
        const AffineParams gt = affine_from_linear(target[i].head<4>());
        for (std::size_t k = 0; k < k_per; ++k) {
            AffineParams g = gt;
            g.scale *= 1.0 + rng.uniform(-options.scale_jitter, options.scale_jitter);
            g.theta += rng.uniform(-options.rotation_jitter_deg, options.rotation_jitter_deg) *
                       std::numbers::pi / 180.0;
            g.tx += rng.uniform(-options.translation_jitter, options.translation_jitter) * face_size;
            g.ty += rng.uniform(-options.translation_jitter, options.translation_jitter) * face_size;

            Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_p));
            p.head<4>() = affine_to_linear(g);
            if (k % 2 == 1 && n_images > 1) {
                const std::size_t other = rng.uniform_index(n_images);
                p.tail(static_cast<Eigen::Index>(n_p - 4)) =
                    target[other].tail(static_cast<Eigen::Index>(n_p - 4));
            }
            params[i * k_per + k] = std::move(p);
        }
    }

    auto unflatten = [&](const Eigen::VectorXd& v) {
        return ShapeParams::from_vector(v, rank_i, rank_p, rank_e);
    };
    auto mean_error = [&]() {
        double sum = 0.0;
        for (std::size_t i = 0; i < n_images; ++i)
            for (std::size_t k = 0; k < k_per; ++k)
                sum += pt_pt_error(synthesize_shape(model, unflatten(params[i * k_per + k])),
                                   truths[i]);
        return sum / static_cast<double>(n_rows);
    };

    TrainedCascade out;
    out.cascade.hog = model.hog;
    // Initialization statistics: circular-mean rotation of the ground-truth
    // affines and the mean affine scale per unit face-box height.
    {
        double sin_sum = 0.0, cos_sum = 0.0, ratio_sum = 0.0;
        for (std::size_t i = 0; i < n_images; ++i) {
            const AffineParams gt = affine_from_linear(target[i].head<4>());
            sin_sum += std::sin(gt.theta);
            cos_sum += std::cos(gt.theta);
            ratio_sum += gt.scale / shape_bbox(truths[i])[3];
        }
        out.cascade.init.rotation = std::atan2(sin_sum, cos_sum);
        out.cascade.init.scale_per_box_height = ratio_sum / static_cast<double>(n_images);
    }
    out.stage_errors.push_back(mean_error());

    Eigen::MatrixXd features(static_cast<Eigen::Index>(n_rows), static_cast<Eigen::Index>(n_f));
    Eigen::MatrixXd deltas(static_cast<Eigen::Index>(n_rows), static_cast<Eigen::Index>(n_p));
    for (std::size_t m = 0; m < options.stages; ++m) {
        for (std::size_t i = 0; i < n_images; ++i) {
            const ImageGray image = image_at(i);
            for (std::size_t k = 0; k < k_per; ++k) {
                const std::size_t row = i * k_per + k;
                const FaceShape current = synthesize_shape(model, unflatten(params[row]));
                features.row(static_cast<Eigen::Index>(row)) =
                    extract_features(image, current, model.hog).transpose();
                deltas.row(static_cast<Eigen::Index>(row)) = (target[i] - params[row]).transpose();
            }
        }

        const double lambda = options.lambda >= 0.0
                                  ? options.lambda
                                  : 1e-3 * features.squaredNorm() / static_cast<double>(n_f);
        WeakRegressor weak = train_weak(features, deltas, lambda);
        for (std::size_t row = 0; row < n_rows; ++row)
            params[row] += weak.projection * features.row(static_cast<Eigen::Index>(row)).transpose() +
                           weak.offset;
        out.cascade.stages.push_back(std::move(weak));
        out.cascade.lambda = lambda;
        out.stage_errors.push_back(mean_error());
    }
    return out;
}

FitResult fit(const ImageGray& image, const CascadeRegressor& cascade, const UtaamModel& model,
              const ShapeParams& init, std::size_t texture_rounds) {
    const std::size_t rank_i = static_cast<std::size_t>(model.shape_identity.cols());
    const std::size_t rank_p = static_cast<std::size_t>(model.shape_pose.cols());
    const std::size_t rank_e = static_cast<std::size_t>(model.shape_expression.cols());

    Eigen::VectorXd p = init.to_vector();
    if (static_cast<std::size_t>(p.size()) != 4 + rank_i + rank_p + rank_e)
        throw InvalidArgument("fit: init parameter length does not match the model");

    for (std::size_t m = 0; m < cascade.stages.size(); ++m) {
        const FaceShape current =
            synthesize_shape(model, ShapeParams::from_vector(p, rank_i, rank_p, rank_e));
        const Eigen::VectorXd f = extract_features(image, current, cascade.hog);
        p += cascade.stages[m].projection * f + cascade.stages[m].offset;
        if (!p.allFinite())
            throw NumericalError("fit: non-finite parameters after stage " + std::to_string(m));
    }

    FitResult out;
    out.params = ShapeParams::from_vector(p, rank_i, rank_p, rank_e);
    out.shape = synthesize_shape(model, out.params);
    const WarpResult warped = warp_to_reference(image, out.shape, model.mesh);
    out.texture = estimate_texture_params(warped.texture, model, texture_rounds).params;
    return out;
}

ShapeParams init_from_box(const UtaamModel& model, double x, double y, double w, double h) {
    if (!(w > 0.0 && h > 0.0)) throw InvalidArgument("init_from_box: empty box");
    const FaceShape mean(model.mean_shape);
    const Eigen::Vector4d box = shape_bbox(mean);
    if (!(box[2] > 0.0 && box[3] > 0.0))
        throw InvalidArgument("init_from_box: degenerate model mean shape");

    ShapeParams p;
    p.identity = Eigen::VectorXd::Zero(model.shape_identity.cols());
    p.pose = Eigen::VectorXd::Zero(model.shape_pose.cols());
    p.expression = Eigen::VectorXd::Zero(model.shape_expression.cols());
    // Height-based scale: box widths shrink under yaw foreshortening while
    // face heights stay stable.
    p.global.scale = h / box[3];
    p.global.theta = 0.0;
    const double cx = box[0] + box[2] / 2.0;
    const double cy = box[1] + box[3] / 2.0;
    p.global.tx = x + w / 2.0 - p.global.scale * cx;
    p.global.ty = y + h / 2.0 - p.global.scale * cy;
    return p;
}

ShapeParams init_from_box(const UtaamModel& model, const CascadeRegressor& cascade, double x,
                          double y, double w, double h) {
    if (!(w > 0.0 && h > 0.0)) throw InvalidArgument("init_from_box: empty box");
    if (!(cascade.init.scale_per_box_height > 0.0))
        throw InvalidArgument("init_from_box: cascade carries no initialization statistics");

    ShapeParams p;
    p.identity = Eigen::VectorXd::Zero(model.shape_identity.cols());
    p.pose = Eigen::VectorXd::Zero(model.shape_pose.cols());
    p.expression = Eigen::VectorXd::Zero(model.shape_expression.cols());
    p.global.scale = cascade.init.scale_per_box_height * h;
    p.global.theta = cascade.init.rotation;

    const FaceShape placed = apply_affine(FaceShape(model.mean_shape), p.global);
    const Eigen::Vector4d box = shape_bbox(placed);
    p.global.tx = x + w / 2.0 - (box[0] + box[2] / 2.0);
    p.global.ty = y + h / 2.0 - (box[1] + box[3] / 2.0);
    return p;
}

ShapeParams init_at_center(const UtaamModel& model, std::size_t image_width,
                           std::size_t image_height) {
    const FaceShape mean(model.mean_shape);
    Eigen::Vector2d c = Eigen::Vector2d::Zero();
    for (std::size_t l = 0; l < mean.landmark_count(); ++l) c += mean.point(l);
    c /= static_cast<double>(mean.landmark_count());

    ShapeParams p;
    p.identity = Eigen::VectorXd::Zero(model.shape_identity.cols());
    p.pose = Eigen::VectorXd::Zero(model.shape_pose.cols());
    p.expression = Eigen::VectorXd::Zero(model.shape_expression.cols());
    p.global.tx = static_cast<double>(image_width) / 2.0 - c.x();
    p.global.ty = static_cast<double>(image_height) / 2.0 - c.y();
    return p;
}

double pt_pt_error(const FaceShape& predicted, const FaceShape& truth) {
    const std::size_t n = predicted.landmark_count();
    if (n == 0 || n != truth.landmark_count())
        throw InvalidArgument("pt_pt_error: landmark counts must match");
    double sum = 0.0;
    for (std::size_t l = 0; l < n; ++l) sum += (predicted.point(l) - truth.point(l)).norm();
    return sum / static_cast<double>(n);
}

double normalized_error(const FaceShape& predicted, const FaceShape& truth,
                        std::span<const std::size_t> left_eye,
                        std::span<const std::size_t> right_eye) {
    if (left_eye.empty() || right_eye.empty())
        throw InvalidArgument("normalized_error: eye index sets must be non-empty");
    auto eye_center = [&](std::span<const std::size_t> eye) {
        Eigen::Vector2d c = Eigen::Vector2d::Zero();
        for (std::size_t idx : eye) {
            if (idx >= truth.landmark_count())
                throw InvalidArgument("normalized_error: eye index out of range");
            c += truth.point(idx);
        }
        return Eigen::Vector2d(c / static_cast<double>(eye.size()));
    };
    const double interocular = (eye_center(left_eye) - eye_center(right_eye)).norm();
    if (interocular <= 0.0) throw InvalidArgument("normalized_error: zero inter-ocular distance");
    return pt_pt_error(predicted, truth) / interocular;
}

double aam_fitting_objective(const ImageGray& image, const PcaAamModel& model,
                             const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta,
                             const ReferenceMesh& mesh) {
    if (alpha.size() != model.shape_basis.cols() || beta.size() != model.texture_basis.cols())
        throw InvalidArgument("aam_fitting_objective: coefficient lengths mismatch");
    const FaceShape shape(model.mean_shape + model.shape_basis * alpha);
    const WarpResult warped = warp_to_reference(image, shape, mesh);
    return (model.mean_texture + model.texture_basis * beta - warped.texture).squaredNorm();
}

}  // namespace utaam
