#include <cmath>

#include "doctest.h"
#include "support/oracles.hpp"
#include "utaam/dataio.hpp"
#include "utaam/errors.hpp"
#include "utaam/fitting.hpp"
#include "utaam/model.hpp"

using namespace utaam;

namespace {

FaceShape make_shape(std::initializer_list<double> xy) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(xy.size()));
    Eigen::Index k = 0;
    for (double c : xy) v[k++] = c;
    return FaceShape(std::move(v));
}

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    RandomStream rng(seed);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.normal();
    return m;
}

// A tiny generator-backed model for the end-to-end fitting tests.
struct FittingFixture {
    SyntheticSpec spec;
    SyntheticDataset dataset;
    UtaamModel model;
    std::vector<ImageGray> images;
    std::vector<FaceShape> truths;
};

FittingFixture make_fixture() {
    FittingFixture fx;
    fx.spec.extents = {4, 3, 1, 2};
    fx.spec.landmarks = 10;
    fx.spec.image_side = 64;
    fx.spec.seed = 9;
    fx.spec.yaw_range_deg = 30.0;
    fx.dataset = generate_synthetic(fx.spec);

    SampleGrid grid;
    grid.extents = fx.spec.extents;
    grid.frontal_pose = fx.dataset.frontal_pose;

    std::vector<FaceShape> raw;
    for (const auto& s : fx.dataset.samples) raw.push_back(s.shape);
    const ProcrustesResult gpa = procrustes_align(raw);

    std::vector<FaceShape> frontal;
    for (std::size_t s = 0; s < raw.size(); ++s)
        if (fx.dataset.samples[s].cell[1] == grid.frontal_pose) frontal.push_back(gpa.aligned[s]);
    const ReferenceMesh mesh = build_reference_mesh(frontal, 24.0);

    std::vector<TextureVector> textures(grid.cells());
    fx.images.resize(grid.cells());
    for (std::size_t s = 0; s < raw.size(); ++s) {
        fx.images[s] = render_synthetic_image(fx.dataset, s);
        textures[s] = warp_to_reference(fx.images[s], raw[s], mesh).texture;
    }
    const AssembledTensors tensors = assemble_tensors(grid, gpa.aligned, textures);

    HogSpec hog;
    hog.patch_side = 12;
    hog.cell_side = 6;
    hog.bins = 6;
    fx.model = build_utaam(tensors, mesh, hog);
    fx.truths = raw;
    return fx;
}

}  // namespace

TEST_CASE("train_weak with zero deltas returns zero") {
    const Eigen::MatrixXd f = random_matrix(20, 6, 1);
    const Eigen::MatrixXd d = Eigen::MatrixXd::Zero(20, 3);
    const WeakRegressor w = train_weak(f, d, 0.5);
    CHECK(w.projection.cwiseAbs().maxCoeff() < 1e-14);
    CHECK(w.offset.cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("train_weak recovers an exactly determined linear map") {
    const Eigen::Index nf = 7, np = 3, n = nf + 1;
    const Eigen::MatrixXd f = random_matrix(n, nf, 2);
    const Eigen::MatrixXd a_star = random_matrix(np, nf, 3);
    const Eigen::VectorXd b_star = random_matrix(np, 1, 4);
    Eigen::MatrixXd d(n, np);
    for (Eigen::Index r = 0; r < n; ++r)
        d.row(r) = (a_star * f.row(r).transpose() + b_star).transpose();

    const WeakRegressor w = train_weak(f, d, 0.0);
    double residual = 0.0;
    for (Eigen::Index r = 0; r < n; ++r)
        residual += (w.projection * f.row(r).transpose() + w.offset - d.row(r).transpose()).norm();
    CHECK(residual < 1e-8);
}

TEST_CASE("train_weak satisfies its own normal equations") {
    const Eigen::MatrixXd f = random_matrix(30, 8, 5);
    const Eigen::MatrixXd d = random_matrix(30, 4, 6);
    const double lambda = 0.37;
    const WeakRegressor w = train_weak(f, d, lambda);

    const Eigen::RowVectorXd f_mean = f.colwise().mean();
    const Eigen::RowVectorXd d_mean = d.colwise().mean();
    const Eigen::MatrixXd fc = f.rowwise() - f_mean;
    const Eigen::MatrixXd dc = d.rowwise() - d_mean;

    // Gradient wrt the projection at the solution.
    const Eigen::MatrixXd grad =
        2.0 * (w.projection * (fc.transpose() * fc) - dc.transpose() * fc + lambda * w.projection);
    const double scale = fc.squaredNorm() + dc.squaredNorm();
    CHECK(grad.cwiseAbs().maxCoeff() < 1e-6 * scale);

    // Gradient wrt the offset.
    Eigen::VectorXd goff = Eigen::VectorXd::Zero(4);
    for (Eigen::Index r = 0; r < f.rows(); ++r)
        goff += 2.0 * (w.projection * f.row(r).transpose() + w.offset - d.row(r).transpose());
    CHECK(goff.cwiseAbs().maxCoeff() < 1e-6 * scale);
}

TEST_CASE("train_weak rejects singular systems at lambda zero and shrinks with lambda") {
    Eigen::MatrixXd f = random_matrix(5, 8, 7);  // fewer rows than features
    const Eigen::MatrixXd d = random_matrix(5, 2, 8);
    CHECK_THROWS_AS(train_weak(f, d, 0.0), NumericalError);

    const Eigen::MatrixXd f2 = random_matrix(40, 6, 9);
    const Eigen::MatrixXd d2 = random_matrix(40, 2, 10);
    double lambda = 0.01;
    double last = std::numeric_limits<double>::infinity();
    for (int step = 0; step < 6; ++step) {
        const WeakRegressor w = train_weak(f2, d2, lambda);
        const double norm = w.projection.norm();
        CHECK(norm < last);
        last = norm;
        lambda *= 2.0;
    }
}

TEST_CASE("texture parameter estimation round trips and decreases its residual") {
    const FittingFixture fx = make_fixture();

    // Synthesize from known coefficient rows, then recover. The coefficient
    // projection converges along a flat ridge, so give it enough cycles.
    const TextureParams q = texture_coefficient_rows(fx.model, 2, 1, 0, 1);
    const TextureVector t = synthesize_texture(fx.model, q);
    const TextureEstimate est = estimate_texture_params(t, fx.model, 150);
    const TextureVector back = synthesize_texture(fx.model, est.params);
    CHECK((back - t).norm() < 1e-6 * t.norm());

    // The mean texture needs no coefficients.
    const TextureEstimate mean_est = estimate_texture_params(fx.model.mean_texture, fx.model, 3);
    const TextureVector mean_back = synthesize_texture(fx.model, mean_est.params);
    CHECK((mean_back - fx.model.mean_texture).norm() < 1e-10);

    // Residual trace is non-increasing on random targets.
    RandomStream rng(99);
    for (int trial = 0; trial < 5; ++trial) {
        TextureVector target(fx.model.mean_texture.size());
        for (Eigen::Index k = 0; k < target.size(); ++k) target[k] = rng.uniform01();
        const TextureEstimate e = estimate_texture_params(target, fx.model, 5);
        for (std::size_t k = 1; k < e.residual_trace.size(); ++k)
            CHECK(e.residual_trace[k] <= e.residual_trace[k - 1] + 1e-9);
    }
}

TEST_CASE("project_shape recovers training shapes under arbitrary placement") {
    const FittingFixture fx = make_fixture();
    RandomStream rng(123);
    for (std::size_t trial = 0; trial < 4; ++trial) {
        const std::size_t idx = rng.uniform_index(fx.truths.size());
        const AffineParams g{rng.uniform(0.5, 2.0), rng.uniform(-1.0, 1.0), rng.uniform(-20, 20),
                             rng.uniform(-20, 20)};
        const FaceShape placed = apply_affine(fx.truths[idx], g);
        const ShapeParams p = project_shape(fx.model, placed, 20);
        const FaceShape back = synthesize_shape(fx.model, p);

        double min_x = placed.x(0), max_x = min_x, min_y = placed.y(0), max_y = min_y;
        for (std::size_t l = 1; l < placed.landmark_count(); ++l) {
            min_x = std::min(min_x, placed.x(l));
            max_x = std::max(max_x, placed.x(l));
            min_y = std::min(min_y, placed.y(l));
            max_y = std::max(max_y, placed.y(l));
        }
        const double face_size = std::hypot(max_x - min_x, max_y - min_y);
        CHECK(pt_pt_error(back, placed) < 1e-3 * face_size);
    }
}

TEST_CASE("pt_pt_error and normalized_error") {
    const FaceShape a = make_shape({0, 0, 10, 0, 0, 10});
    CHECK(pt_pt_error(a, a) == 0.0);

    const FaceShape b = apply_affine(a, AffineParams{1.0, 0.0, 3.0, 4.0});
    CHECK(pt_pt_error(b, a) == doctest::Approx(5.0).epsilon(1e-12));

    // Loop oracle on a random pair.
    RandomStream rng(7);
    Eigen::VectorXd pa(8), pb(8);
    for (Eigen::Index k = 0; k < 8; ++k) {
        pa[k] = rng.normal();
        pb[k] = rng.normal();
    }
    const FaceShape ra{pa}, rb{pb};
    double expected = 0.0;
    for (int l = 0; l < 4; ++l)
        expected += std::hypot(pa[2 * l] - pb[2 * l], pa[2 * l + 1] - pb[2 * l + 1]);
    expected /= 4.0;
    CHECK(pt_pt_error(ra, rb) == doctest::Approx(expected).epsilon(1e-12));

    // Normalized: shift (3,4) with inter-ocular distance 50 -> 0.1.
    const FaceShape truth = make_shape({0, 0, 50, 0, 25, 30});
    const FaceShape pred = apply_affine(truth, AffineParams{1.0, 0.0, 3.0, 4.0});
    const std::vector<std::size_t> left{0}, right{1};
    CHECK(normalized_error(pred, truth, left, right) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(normalized_error(truth, truth, left, right) == 0.0);

    // Scaling both shapes leaves the normalized error unchanged.
    const AffineParams big{3.7, 0.0, 0.0, 0.0};
    CHECK(normalized_error(apply_affine(pred, big), apply_affine(truth, big), left, right) ==
          doctest::Approx(0.1).epsilon(1e-12));

    const std::vector<std::size_t> same{0};
    CHECK_THROWS_AS(normalized_error(pred, truth, same, same), InvalidArgument);
    CHECK_THROWS_AS(normalized_error(pred, make_shape({0, 0, 1, 1}), left, right),
                    InvalidArgument);
}

TEST_CASE("aam_fitting_objective at a rendered instance is tiny") {
    // Reference-frame setup where warps hit lattice pixels exactly: shapes
    // are the reference and its integer translation.
    std::vector<FaceShape> frontal{make_shape({0, 0, 30, 0, 36, 15, 30, 30, 0, 30, -6, 15, 15, 10,
                                               15, 20})};
    const ReferenceMesh mesh = build_reference_mesh(frontal, 24.0);

    std::vector<FaceShape> shapes{mesh.reference(),
                                  apply_affine(mesh.reference(), AffineParams{1, 0, 6, 4})};
    RandomStream rng(11);
    TextureVector t0(static_cast<Eigen::Index>(mesh.texture_size()));
    TextureVector t1(static_cast<Eigen::Index>(mesh.texture_size()));
    for (Eigen::Index k = 0; k < t0.size(); ++k) {
        t0[k] = 0.2 + 0.6 * rng.uniform01();
        t1[k] = 0.2 + 0.6 * rng.uniform01();
    }
    std::vector<TextureVector> textures{t0, t1};
    const PcaAamModel model = build_pca_aam(shapes, textures, 1.0);

    // Render sample 1 into an image, then evaluate at its own coefficients.
    const Eigen::VectorXd alpha =
        model.shape_basis.transpose() * (shapes[1].coords - model.mean_shape);
    const Eigen::VectorXd beta = model.texture_basis.transpose() * (t1 - model.mean_texture);
    const ImageGray image = render_from_reference(t1, mesh, shapes[1], 64, 48, 0.0);

    const double objective = aam_fitting_objective(image, model, alpha, beta, mesh);
    CHECK(objective < 1e-6 * static_cast<double>(mesh.texture_size()));

    // Exact projection of the warped texture: objective equals the
    // projection residual.
    const WarpResult warped = warp_to_reference(image, shapes[1], mesh);
    const Eigen::VectorXd beta_star =
        model.texture_basis.transpose() * (warped.texture - model.mean_texture);
    const Eigen::VectorXd residual = model.mean_texture + model.texture_basis * beta_star -
                                     warped.texture;
    CHECK(aam_fitting_objective(image, model, alpha, beta_star, mesh) ==
          doctest::Approx(residual.squaredNorm()).epsilon(1e-10));

    // Permuting texture basis columns together with beta changes nothing.
    PcaAamModel permuted = model;
    if (model.texture_basis.cols() >= 1) {
        permuted.texture_basis.col(0).swap(
            permuted.texture_basis.col(permuted.texture_basis.cols() - 1));
        Eigen::VectorXd beta_perm = beta_star;
        std::swap(beta_perm[0], beta_perm[beta_perm.size() - 1]);
        CHECK(aam_fitting_objective(image, permuted, alpha, beta_perm, mesh) ==
              doctest::Approx(aam_fitting_objective(image, model, alpha, beta_star, mesh))
                  .epsilon(1e-12));
    }
}

TEST_CASE("fit with an empty cascade returns the initialization") {
    const FittingFixture fx = make_fixture();
    CascadeRegressor empty;
    empty.hog = fx.model.hog;
    const ShapeParams init = init_at_center(fx.model, 64, 64);
    const FitResult r = fit(fx.images[0], empty, fx.model, init);
    CHECK((r.params.to_vector() - init.to_vector()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cascade training reduces the training error stage by stage") {
    const FittingFixture fx = make_fixture();

    CascadeTrainingOptions options;
    options.stages = 3;
    options.perturbations = 2;
    options.seed = 5;
    options.lambda = 10.0;  // the tiny training set needs real shrinkage
    const TrainedCascade trained = train_cascade(
        fx.model, [&](std::size_t i) { return fx.images[i]; }, fx.truths, options);

    REQUIRE(trained.stage_errors.size() == 4);
    for (std::size_t m = 1; m < trained.stage_errors.size(); ++m)
        CHECK(trained.stage_errors[m] <= trained.stage_errors[m - 1] + 1e-9);
    CHECK(trained.stage_errors.back() < trained.stage_errors.front());

    // A single-stage cascade equals one weak regressor applied to the
    // initial features: stage 1 errors must match.
    CascadeTrainingOptions one;
    one.stages = 1;
    one.perturbations = 2;
    one.seed = 5;
    one.lambda = 10.0;
    const TrainedCascade single = train_cascade(
        fx.model, [&](std::size_t i) { return fx.images[i]; }, fx.truths, one);
    CHECK(single.stage_errors[1] == doctest::Approx(trained.stage_errors[1]).epsilon(1e-12));
    CHECK(single.cascade.stages.size() == 1);
    CHECK((single.cascade.stages[0].projection - trained.cascade.stages[0].projection)
              .cwiseAbs()
              .maxCoeff() == 0.0);

    // Fitting from detector-style (jittered-box) inits improves over the
    // initialization error in almost every trial.
    RandomStream box_rng(77);
    std::size_t improved = 0;
    for (std::size_t i = 0; i < fx.truths.size(); ++i) {
        double min_x = fx.truths[i].x(0), max_x = min_x, min_y = fx.truths[i].y(0), max_y = min_y;
        for (std::size_t l = 1; l < fx.truths[i].landmark_count(); ++l) {
            min_x = std::min(min_x, fx.truths[i].x(l));
            max_x = std::max(max_x, fx.truths[i].x(l));
            min_y = std::min(min_y, fx.truths[i].y(l));
            max_y = std::max(max_y, fx.truths[i].y(l));
        }
        const double w = max_x - min_x, h = max_y - min_y;
        const double grow = box_rng.uniform(0.9, 1.1);
        const double dx = box_rng.uniform(-0.07, 0.07) * w;
        const double dy = box_rng.uniform(-0.07, 0.07) * h;
        const ShapeParams init = init_from_box(fx.model, trained.cascade, min_x + dx, min_y + dy,
                                               w * grow, h * grow);
        const double init_error = pt_pt_error(synthesize_shape(fx.model, init), fx.truths[i]);
        const FitResult r = fit(fx.images[i], trained.cascade, fx.model, init);
        if (pt_pt_error(r.shape, fx.truths[i]) < init_error) ++improved;
    }
    CHECK(improved * 10 >= fx.truths.size() * 9);  // >= 90 percent improved
}
