// Batch front end: gen | build | complete | train | fit | synth | eval.
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical error.

#include <CLI11.hpp>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "utaam/completion.hpp"
#include "utaam/dataio.hpp"
#include "utaam/errors.hpp"
#include "utaam/fitting.hpp"
#include "utaam/model.hpp"
#include "utaam/model_io.hpp"
#include "utaam/tensor_io.hpp"

namespace fs = std::filesystem;
using namespace utaam;

namespace {

struct GenConfig {
    std::string out_dir;
    SyntheticSpec spec;
};

struct BuildConfig {
    std::string manifest;
    std::string out_model;
    std::string mask_path;
    double ref_height = 128.0;
    std::vector<std::size_t> shape_ranks;
    std::vector<std::size_t> texture_ranks;
    HogSpec hog;
    CompletionPolicy policy;
    std::string solver = "tucker";
    std::string init = "variation";
};

struct CompleteConfig {
    std::string data_path, mask_path, out_path, trace_path;
    std::string solver = "tucker";
    std::string init = "variation";
    std::vector<std::size_t> ranks;
    std::size_t cp_rank = 4;
    std::size_t max_iter = 200;
    double tol = 1e-6;
    std::uint64_t seed = 0;
};

struct TrainConfig {
    std::string model_path;
    std::string manifest;
    std::string out_model;
    CascadeTrainingOptions options;
};

struct FitConfig {
    std::string model_path;
    std::string manifest;
    std::string out_dir;
    std::string report_path;
    std::vector<double> bbox;  // x y w h
    bool bbox_from_truth = false;
    std::size_t threads = 1;
    std::vector<std::size_t> left_eye, right_eye;
};

struct SynthConfig {
    std::string model_path;
    std::string out_image;
    std::string out_pts;
    std::size_t identity_row = 0, pose_row = 0, illum_row = 0, expr_row = 0;
    std::vector<double> interpolate;  // pose_a pose_b t
    std::size_t canvas = 128;
};

struct EvalConfig {
    std::string truth_manifest;
    std::string pred_dir;
    std::string report_path;
    std::vector<std::size_t> left_eye, right_eye;
};

std::vector<std::size_t> default_eyes(std::size_t landmarks, bool left) {
    const auto eyes = synthetic_eye_indices(landmarks);
    return {left ? eyes[0] : eyes[1]};
}

int run_gen(const GenConfig& cfg) {
    const SyntheticDataset dataset = generate_synthetic(cfg.spec);
    write_synthetic_dataset(dataset, cfg.out_dir);
    std::cout << "wrote " << dataset.samples.size() << " samples to " << cfg.out_dir << "\n";
    return 0;
}

// Aligned shapes, textures and the reference mesh for a loaded dataset.
struct PreparedDataset {
    SampleGrid grid;
    std::vector<FaceShape> aligned;      // per cell; zero-filled when missing
    std::vector<TextureVector> textures; // per cell
    std::vector<FaceShape> image_shapes; // per cell, image frame
    std::vector<fs::path> images;        // per cell
    ReferenceMesh mesh;
};

PreparedDataset prepare_dataset(const LoadedDataset& ds, double ref_height,
                                const DenseTensor* cell_mask) {
    PreparedDataset out;
    out.grid.extents = ds.manifest.extents;
    out.grid.frontal_pose = ds.manifest.frontal_pose;
    out.grid.present.assign(out.grid.cells(), 0);

    std::vector<std::size_t> cell_of_sample(ds.samples.size());
    for (std::size_t s = 0; s < ds.samples.size(); ++s) {
        const auto& c = ds.samples[s].row.cell;
        const std::size_t cell = out.grid.cell_index(c[0], c[1], c[2], c[3]);
        cell_of_sample[s] = cell;
        out.grid.present[cell] = 1;
    }
    if (cell_mask) {
        if (cell_mask->size() != out.grid.cells())
            throw IoError("mask cell count does not match the manifest extents");
        for (std::size_t c = 0; c < out.grid.cells(); ++c)
            if ((*cell_mask)[c] == 0.0) out.grid.present[c] = 0;
    }

    std::vector<FaceShape> present_shapes;
    std::vector<std::size_t> present_cells;
    for (std::size_t s = 0; s < ds.samples.size(); ++s) {
        if (!out.grid.present[cell_of_sample[s]]) continue;
        present_shapes.push_back(ds.samples[s].shape);
        present_cells.push_back(cell_of_sample[s]);
    }
    if (present_shapes.size() < 2) throw IoError("need at least 2 present samples");

    const ProcrustesResult gpa = procrustes_align(present_shapes);

    std::vector<FaceShape> frontal;
    for (std::size_t k = 0; k < present_cells.size(); ++k) {
        const std::size_t pose =
            (present_cells[k] / (out.grid.extents[2] * out.grid.extents[3])) % out.grid.extents[1];
        if (pose == out.grid.frontal_pose) frontal.push_back(gpa.aligned[k]);
    }
    if (frontal.empty()) throw IoError("no present sample at the frontal pose");
    out.mesh = build_reference_mesh(frontal, ref_height);

    const std::size_t L = present_shapes[0].landmark_count();
    out.aligned.assign(out.grid.cells(), FaceShape(Eigen::VectorXd::Zero(2 * L)));
    out.textures.assign(out.grid.cells(),
                        Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out.mesh.texture_size())));
    out.image_shapes.assign(out.grid.cells(), FaceShape(Eigen::VectorXd::Zero(2 * L)));
    out.images.assign(out.grid.cells(), fs::path());

    for (std::size_t s = 0, k = 0; s < ds.samples.size(); ++s) {
        const std::size_t cell = cell_of_sample[s];
        if (!out.grid.present[cell]) continue;
        out.aligned[cell] = gpa.aligned[k];
        ++k;
        out.image_shapes[cell] = ds.samples[s].shape;
        out.images[cell] = ds.samples[s].image_file;
        const ImageGray image = load_pgm(ds.samples[s].image_file);
        out.textures[cell] = warp_to_reference(image, ds.samples[s].shape, out.mesh).texture;
    }
    return out;
}

CompletionPolicy make_policy(const std::string& solver, const std::string& init,
                             const std::vector<std::size_t>& ranks, std::size_t cp_rank,
                             std::size_t max_iter, double tol, std::uint64_t seed) {
    CompletionPolicy policy;
    if (solver == "tucker") {
        policy.solver = CompletionPolicy::Solver::TuckerPower;
    } else if (solver == "cpwopt") {
        policy.solver = CompletionPolicy::Solver::CpWeighted;
    } else {
        throw IoError("unknown solver '" + solver + "' (expected tucker or cpwopt)");
    }
    if (init == "variation") {
        policy.variation_aware_init = true;
    } else if (init == "random") {
        policy.variation_aware_init = false;
    } else {
        throw IoError("unknown init '" + init + "' (expected variation or random)");
    }
    policy.ranks = ranks;
    policy.cp_rank = cp_rank;
    policy.max_iter = max_iter;
    policy.tol = tol;
    policy.seed = seed;
    return policy;
}

int run_build(const BuildConfig& cfg) {
    const LoadedDataset ds = load_manifest(cfg.manifest);

    DenseTensor mask;
    const DenseTensor* mask_ptr = nullptr;
    if (!cfg.mask_path.empty()) {
        mask = load_tensor(cfg.mask_path);
        if (mask.order() != 4) throw IoError("mask must be a 4-way cell tensor");
        mask_ptr = &mask;
    }

    PreparedDataset prepared = prepare_dataset(ds, cfg.ref_height, mask_ptr);
    CompletionPolicy policy = cfg.policy;
    const AssembledTensors tensors =
        assemble_tensors(prepared.grid, prepared.aligned, prepared.textures, policy);

    ModelRanks ranks;
    ranks.shape = cfg.shape_ranks;
    ranks.texture = cfg.texture_ranks;
    const UtaamModel model = build_utaam(tensors, prepared.mesh, cfg.hog, ranks);
    save_model(cfg.out_model, model);
    std::cout << "model: L=" << model.landmark_count() << " I_t=" << model.texture_size()
              << " -> " << cfg.out_model << "\n";
    return 0;
}

int run_complete(const CompleteConfig& cfg) {
    DenseTensor data = load_tensor(cfg.data_path);
    DenseTensor mask = load_tensor(cfg.mask_path);
    if (mask.order() + 1 == data.order()) mask = expand_sample_mask(mask, data.dims().back());

    MaskedTensor masked(std::move(data), std::move(mask));
    DenseTensor init;
    if (cfg.init == "variation" || cfg.init == "random") {
        if (masked.data.order() != 5)
            throw IoError("variation-aware or random sample init requires a 5-way tensor");
        init = initialize_missing(masked, {cfg.init == "variation", cfg.seed}).tensor;
    } else {
        throw IoError("unknown init '" + cfg.init + "'");
    }

    std::vector<std::size_t> ranks = cfg.ranks;
    if (ranks.empty()) {
        std::size_t total = 1;
        for (std::size_t d : masked.data.dims()) total *= d;
        for (std::size_t d : masked.data.dims()) ranks.push_back(std::min(d, total / d));
    }

    SolveOptions options;
    options.max_iter = cfg.max_iter;
    options.tol = cfg.tol;
    const CompletionResult result =
        cfg.solver == "tucker"
            ? complete_tucker_power(masked, init, ranks, options)
            : (cfg.solver == "cpwopt"
                   ? complete_cp_weighted(masked, init, cfg.cp_rank, options)
                   : throw IoError("unknown solver '" + cfg.solver + "'"));

    save_tensor(cfg.out_path, result.tensor);
    if (!cfg.trace_path.empty()) {
        std::ofstream trace(cfg.trace_path);
        if (!trace) throw IoError("cannot open trace file " + cfg.trace_path);
        for (double v : result.objective_trace) trace << v << "\n";
    }
    std::cout << "completed in " << result.objective_trace.size() << " iterations\n";
    return 0;
}

int run_train(const TrainConfig& cfg) {
    ModelFile file = load_model(cfg.model_path);
    const LoadedDataset ds = load_manifest(cfg.manifest);
    if (ds.samples.empty()) throw IoError("training manifest has no samples");

    std::vector<FaceShape> truths;
    std::vector<fs::path> images;
    for (const auto& s : ds.samples) {
        truths.push_back(s.shape);
        images.push_back(s.image_file);
    }

    const TrainedCascade trained = train_cascade(
        file.model, [&](std::size_t i) { return load_pgm(images[i]); }, truths, cfg.options);

    for (std::size_t m = 0; m < trained.stage_errors.size(); ++m)
        std::cout << (m == 0 ? "init" : "stage " + std::to_string(m)) << " mean pt-pt "
                  << trained.stage_errors[m] << "\n";

    const std::string out = cfg.out_model.empty() ? cfg.model_path : cfg.out_model;
    save_model(out, file.model, &trained.cascade);
    return 0;
}

int run_fit(const FitConfig& cfg) {
    const ModelFile file = load_model(cfg.model_path);
    if (!file.cascade)
        throw IoError("model file lacks the CASC chunk; run `utaam train` first");

    const LoadedDataset ds = load_manifest(cfg.manifest);
    if (ds.samples.empty()) throw IoError("fit manifest has no samples");
    if (!cfg.out_dir.empty()) fs::create_directories(cfg.out_dir);

    const std::size_t n = ds.samples.size();
    std::vector<FaceShape> fitted(n);

    auto fit_one = [&](std::size_t i) {
        const ImageGray image = load_pgm(ds.samples[i].image_file);
        ShapeParams init;
        if (cfg.bbox.size() == 4) {
            init = init_from_box(file.model, *file.cascade, cfg.bbox[0], cfg.bbox[1], cfg.bbox[2],
                                 cfg.bbox[3]);
        } else if (cfg.bbox_from_truth) {
            const FaceShape& t = ds.samples[i].shape;
            double min_x = t.x(0), max_x = t.x(0), min_y = t.y(0), max_y = t.y(0);
            for (std::size_t l = 1; l < t.landmark_count(); ++l) {
                min_x = std::min(min_x, t.x(l));
                max_x = std::max(max_x, t.x(l));
                min_y = std::min(min_y, t.y(l));
                max_y = std::max(max_y, t.y(l));
            }
            init = init_from_box(file.model, *file.cascade, min_x, min_y, max_x - min_x,
                                 max_y - min_y);
        } else {
            init = init_at_center(file.model, image.width, image.height);
        }
        fitted[i] = fit(image, *file.cascade, file.model, init).shape;
    };

    const std::size_t workers = std::max<std::size_t>(1, cfg.threads);
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fit_one(i);
    } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&]() {
                for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fit_one(i);
            });
        for (auto& t : pool) t.join();
    }

    std::vector<std::size_t> left = cfg.left_eye, right = cfg.right_eye;
    if (left.empty()) left = default_eyes(ds.samples[0].shape.landmark_count(), true);
    if (right.empty()) right = default_eyes(ds.samples[0].shape.landmark_count(), false);

    std::ofstream report;
    if (!cfg.report_path.empty()) {
        report.open(cfg.report_path);
        if (!report) throw IoError("cannot open report file " + cfg.report_path);
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!cfg.out_dir.empty()) {
            const fs::path out =
                fs::path(cfg.out_dir) / fs::path(ds.samples[i].row.pts_path).filename();
            write_pts(out, fitted[i]);
        }
        if (report.is_open()) {
            const double pt = pt_pt_error(fitted[i], ds.samples[i].shape);
            const double norm = normalized_error(fitted[i], ds.samples[i].shape, left, right);
            report << ds.samples[i].row.image_path << " " << pt << " " << norm << "\n";
        }
    }
    return 0;
}

int run_synth(const SynthConfig& cfg) {
    const ModelFile file = load_model(cfg.model_path);
    const UtaamModel& model = file.model;

    ShapeParams p;
    p.identity =
        model.shape_identity.row(static_cast<Eigen::Index>(cfg.identity_row)).transpose();
    p.expression =
        model.shape_expression.row(static_cast<Eigen::Index>(cfg.expr_row)).transpose();
    if (cfg.interpolate.size() == 3) {
        p.pose = interpolate_pose(model, static_cast<std::size_t>(cfg.interpolate[0]),
                                  static_cast<std::size_t>(cfg.interpolate[1]), cfg.interpolate[2]);
    } else {
        p.pose = model.shape_pose.row(static_cast<Eigen::Index>(cfg.pose_row)).transpose();
    }

    TextureParams q = texture_coefficient_rows(model, cfg.identity_row, cfg.pose_row,
                                               cfg.illum_row, cfg.expr_row);
    if (cfg.interpolate.size() == 3) {
        const double t = cfg.interpolate[2];
        q.pose = (1.0 - t) * model.texture_pose
                                 .row(static_cast<Eigen::Index>(cfg.interpolate[0]))
                                 .transpose() +
                 t * model.texture_pose.row(static_cast<Eigen::Index>(cfg.interpolate[1]))
                         .transpose();
    }

    const FaceShape base = synthesize_shape(model, p);
    double min_x = base.x(0), max_x = base.x(0), min_y = base.y(0), max_y = base.y(0);
    for (std::size_t l = 1; l < base.landmark_count(); ++l) {
        min_x = std::min(min_x, base.x(l));
        max_x = std::max(max_x, base.x(l));
        min_y = std::min(min_y, base.y(l));
        max_y = std::max(max_y, base.y(l));
    }
    const double canvas = static_cast<double>(cfg.canvas);
    const double scale =
        0.7 * canvas / std::max({max_x - min_x, max_y - min_y, 1e-9});
    AffineParams place;
    place.scale = scale;
    place.tx = canvas / 2.0 - scale * (min_x + max_x) / 2.0;
    place.ty = canvas / 2.0 - scale * (min_y + max_y) / 2.0;
    const FaceShape placed = apply_affine(base, place);

    const TextureVector texture = synthesize_texture(model, q);
    const ImageGray canvas_img =
        render_from_reference(texture, model.mesh, placed, cfg.canvas, cfg.canvas);
    save_pgm(cfg.out_image, canvas_img);
    if (!cfg.out_pts.empty()) write_pts(cfg.out_pts, placed);
    std::cout << "synthesized " << cfg.out_image << "\n";
    return 0;
}

int run_eval(const EvalConfig& cfg) {
    const LoadedDataset truth = load_manifest(cfg.truth_manifest);
    if (truth.samples.empty()) throw IoError("truth manifest has no samples");

    std::vector<std::size_t> left = cfg.left_eye, right = cfg.right_eye;
    if (left.empty()) left = default_eyes(truth.samples[0].shape.landmark_count(), true);
    if (right.empty()) right = default_eyes(truth.samples[0].shape.landmark_count(), false);

    std::ofstream report(cfg.report_path);
    if (!report) throw IoError("cannot open report file " + cfg.report_path);
    for (const auto& sample : truth.samples) {
        const fs::path pred_path =
            fs::path(cfg.pred_dir) / fs::path(sample.row.pts_path).filename();
        const FaceShape predicted = read_pts(pred_path);
        const double pt = pt_pt_error(predicted, sample.shape);
        const double norm = normalized_error(predicted, sample.shape, left, right);
        report << sample.row.image_path << " " << pt << " " << norm << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Unified tensor-based appearance modeling toolkit"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Flat key = value configuration file");

    GenConfig gen;
    auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic multi-factor dataset");
    gen_cmd->add_option("--out", gen.out_dir, "Output directory")->required();
    gen_cmd->add_option("--ids", gen.spec.extents[0], "Identity count");
    gen_cmd->add_option("--poses", gen.spec.extents[1], "Pose count");
    gen_cmd->add_option("--illums", gen.spec.extents[2], "Illumination count");
    gen_cmd->add_option("--exprs", gen.spec.extents[3], "Expression count");
    gen_cmd->add_option("--landmarks", gen.spec.landmarks, "Landmark count (>= 8)");
    gen_cmd->add_option("--image-side", gen.spec.image_side, "Image side in pixels");
    gen_cmd->add_option("--seed", gen.spec.seed, "Random seed");
    gen_cmd->add_option("--identity-sigma", gen.spec.identity_sigma, "Identity deformation strength");
    gen_cmd->add_option("--yaw-range", gen.spec.yaw_range_deg, "Yaw range in degrees");
    gen_cmd->add_option("--expression-amplitude", gen.spec.expression_amplitude,
                        "Mouth displacement fraction");
    gen_cmd->add_option("--illumination-gain", gen.spec.illumination_gain, "Ramp gain range");
    gen_cmd->add_option("--illumination-bias", gen.spec.illumination_bias, "Bias range");

    BuildConfig build;
    std::size_t build_max_iter = 200;
    double build_tol = 1e-6;
    std::size_t build_cp_rank = 4;
    std::uint64_t build_seed = 0;
    std::vector<std::size_t> build_ranks;
    auto* build_cmd = app.add_subcommand("build", "Build a model from an annotated dataset");
    build_cmd->add_option("--manifest", build.manifest, "Dataset manifest")->required();
    build_cmd->add_option("--out", build.out_model, "Output model file")->required();
    build_cmd->add_option("--mask", build.mask_path, "Optional 4-way cell mask (UTT1)");
    build_cmd->add_option("--ref-height", build.ref_height, "Reference mesh height in pixels");
    build_cmd->add_option("--shape-ranks", build.shape_ranks, "Retained shape ranks (5 values)");
    build_cmd->add_option("--texture-ranks", build.texture_ranks, "Retained texture ranks (5 values)");
    build_cmd->add_option("--hog-patch", build.hog.patch_side, "HOG patch side");
    build_cmd->add_option("--hog-cell", build.hog.cell_side, "HOG cell side");
    build_cmd->add_option("--hog-bins", build.hog.bins, "HOG orientation bins");
    build_cmd->add_option("--solver", build.solver, "Completion solver: tucker | cpwopt");
    build_cmd->add_option("--init", build.init, "Completion init: variation | random");
    build_cmd->add_option("--completion-ranks", build_ranks, "Completion Tucker ranks");
    build_cmd->add_option("--cp-rank", build_cp_rank, "CP rank for cpwopt");
    build_cmd->add_option("--max-iter", build_max_iter, "Completion iteration cap");
    build_cmd->add_option("--tol", build_tol, "Completion relative tolerance");
    build_cmd->add_option("--seed", build_seed, "Random seed");

    CompleteConfig complete;
    auto* complete_cmd = app.add_subcommand("complete", "Complete a masked tensor");
    complete_cmd->add_option("--data", complete.data_path, "Input tensor (UTT1)")->required();
    complete_cmd->add_option("--mask", complete.mask_path, "Mask tensor (UTT1)")->required();
    complete_cmd->add_option("--out", complete.out_path, "Completed tensor output")->required();
    complete_cmd->add_option("--trace", complete.trace_path, "Objective trace output (text)");
    complete_cmd->add_option("--solver", complete.solver, "tucker | cpwopt");
    complete_cmd->add_option("--init", complete.init, "variation | random");
    complete_cmd->add_option("--ranks", complete.ranks, "Tucker ranks");
    complete_cmd->add_option("--cp-rank", complete.cp_rank, "CP rank");
    complete_cmd->add_option("--max-iter", complete.max_iter, "Iteration cap");
    complete_cmd->add_option("--tol", complete.tol, "Relative tolerance");
    complete_cmd->add_option("--seed", complete.seed, "Random seed");

    TrainConfig train;
    auto* train_cmd = app.add_subcommand("train", "Train the cascaded regressor");
    train_cmd->add_option("--model", train.model_path, "Model file (UTAM)")->required();
    train_cmd->add_option("--manifest", train.manifest, "Training manifest")->required();
    train_cmd->add_option("--out", train.out_model, "Output model (default: in place)");
    train_cmd->add_option("--stages", train.options.stages, "Cascade length M");
    train_cmd->add_option("--lambda", train.options.lambda, "Ridge weight (<0: auto)");
    train_cmd->add_option("--perturbations", train.options.perturbations,
                          "Initializations per image");
    train_cmd->add_option("--seed", train.options.seed, "Random seed");

    FitConfig fit_cfg;
    auto* fit_cmd = app.add_subcommand("fit", "Fit the model to images");
    fit_cmd->add_option("--model", fit_cfg.model_path, "Model file with CASC chunk")->required();
    fit_cmd->add_option("--manifest", fit_cfg.manifest, "Manifest of images to fit")->required();
    fit_cmd->add_option("--out-dir", fit_cfg.out_dir, "Directory for fitted pts files");
    fit_cmd->add_option("--report", fit_cfg.report_path, "Error report (needs truth pts)");
    fit_cmd->add_option("--bbox", fit_cfg.bbox, "Init box: x y w h")->expected(4);
    fit_cmd->add_flag("--bbox-from-truth", fit_cfg.bbox_from_truth,
                      "Initialize from the truth bounding box");
    fit_cmd->add_option("--threads", fit_cfg.threads, "Worker threads");
    fit_cmd->add_option("--left-eye", fit_cfg.left_eye, "Left-eye landmark indices");
    fit_cmd->add_option("--right-eye", fit_cfg.right_eye, "Right-eye landmark indices");

    SynthConfig synth;
    auto* synth_cmd = app.add_subcommand("synth", "Synthesize a face instance");
    synth_cmd->add_option("--model", synth.model_path, "Model file")->required();
    synth_cmd->add_option("--out", synth.out_image, "Output PGM image")->required();
    synth_cmd->add_option("--out-pts", synth.out_pts, "Optional pts output for the placed shape");
    synth_cmd->add_option("--identity-row", synth.identity_row, "Identity coefficient row");
    synth_cmd->add_option("--pose-row", synth.pose_row, "Pose coefficient row");
    synth_cmd->add_option("--illum-row", synth.illum_row, "Illumination coefficient row");
    synth_cmd->add_option("--expr-row", synth.expr_row, "Expression coefficient row");
    synth_cmd->add_option("--interpolate", synth.interpolate,
                          "Pose interpolation: row_a row_b t")
        ->expected(3);
    synth_cmd->add_option("--canvas", synth.canvas, "Canvas side in pixels");

    EvalConfig eval;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate predictions against truth");
    eval_cmd->add_option("--truth", eval.truth_manifest, "Truth manifest")->required();
    eval_cmd->add_option("--pred-dir", eval.pred_dir, "Directory of predicted pts")->required();
    eval_cmd->add_option("--report", eval.report_path, "Report output")->required();
    eval_cmd->add_option("--left-eye", eval.left_eye, "Left-eye landmark indices");
    eval_cmd->add_option("--right-eye", eval.right_eye, "Right-eye landmark indices");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
        app.exit(e);
        return 1;
    }

    try {
        if (gen_cmd->parsed()) return run_gen(gen);
        if (build_cmd->parsed()) {
            build.policy = make_policy(build.solver, build.init, build_ranks, build_cp_rank,
                                       build_max_iter, build_tol, build_seed);
            return run_build(build);
        }
        if (complete_cmd->parsed()) return run_complete(complete);
        if (train_cmd->parsed()) return run_train(train);
        if (fit_cmd->parsed()) return run_fit(fit_cfg);
        if (synth_cmd->parsed()) return run_synth(synth);
        if (eval_cmd->parsed()) return run_eval(eval);
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
