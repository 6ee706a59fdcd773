#include "utaam/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "utaam/errors.hpp"
#include "utaam/random.hpp"

namespace utaam {

// ---------------------------------------------------------------------------
// pts and visibility files.
// ---------------------------------------------------------------------------

void write_pts(const std::filesystem::path& path, const FaceShape& shape) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "version: 1\n";
    out << "n_points: " << shape.landmark_count() << "\n{\n";
    char line[96];
    for (std::size_t l = 0; l < shape.landmark_count(); ++l) {
        std::snprintf(line, sizeof line, "%.6f %.6f\n", shape.x(l), shape.y(l));
        out << line;
    }
    out << "}\n";
    if (!out) throw IoError("pts write failed: " + path.string());
}

FaceShape read_pts(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path.string());

    std::string line;
    auto next_line = [&]() {
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) return true;
        }
        return false;
    };

    if (!next_line() || line.rfind("version:", 0) != 0)
        throw IoError("pts: missing version header in " + path.string());
    if (!next_line() || line.rfind("n_points:", 0) != 0)
        throw IoError("pts: missing n_points header in " + path.string());
    const std::size_t n = std::stoul(line.substr(9));
    if (n == 0) throw IoError("pts: zero landmark count in " + path.string());
    if (!next_line() || line.find('{') == std::string::npos)
        throw IoError("pts: missing opening brace in " + path.string());

    Eigen::VectorXd coords(static_cast<Eigen::Index>(2 * n));
    for (std::size_t l = 0; l < n; ++l) {
        if (!next_line()) throw IoError("pts: truncated point list in " + path.string());
        std::istringstream row(line);
        double x, y;
        if (!(row >> x >> y)) throw IoError("pts: malformed point line in " + path.string());
        coords[static_cast<Eigen::Index>(2 * l)] = x;
        coords[static_cast<Eigen::Index>(2 * l + 1)] = y;
    }
    return FaceShape(std::move(coords));
}

void write_visibility(const std::filesystem::path& path, const std::vector<bool>& visibility) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    for (bool v : visibility) out << (v ? '1' : '0') << '\n';
    if (!out) throw IoError("visibility write failed: " + path.string());
}

std::vector<bool> read_visibility(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    std::vector<bool> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line != "0" && line != "1")
            throw IoError("visibility: expected 0 or 1 in " + path.string());
        out.push_back(line == "1");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Manifests.
// ---------------------------------------------------------------------------

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "extents: " << manifest.extents[0] << " " << manifest.extents[1] << " "
        << manifest.extents[2] << " " << manifest.extents[3] << "\n";
    out << "frontal: " << manifest.frontal_pose << "\n";
    for (const auto& row : manifest.rows) {
        out << row.cell[0] << "," << row.cell[1] << "," << row.cell[2] << "," << row.cell[3] << ","
            << row.image_path << "," << row.pts_path;
        if (!row.visibility_path.empty()) out << "," << row.visibility_path;
        out << "\n";
    }
    if (!out) throw IoError("manifest write failed: " + path.string());
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) fields.push_back(field);
    return fields;
}

}  // namespace

DatasetManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path.string());

    DatasetManifest manifest;
    std::string line;
    std::size_t line_no = 0;
    bool have_extents = false, have_frontal = false;

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;

        if (line.rfind("extents:", 0) == 0) {
            std::istringstream row(line.substr(8));
            if (!(row >> manifest.extents[0] >> manifest.extents[1] >> manifest.extents[2] >>
                  manifest.extents[3]))
                throw IoError("manifest line " + std::to_string(line_no) + ": bad extents header");
            have_extents = true;
            continue;
        }
        if (line.rfind("frontal:", 0) == 0) {
            std::istringstream row(line.substr(8));
            if (!(row >> manifest.frontal_pose))
                throw IoError("manifest line " + std::to_string(line_no) + ": bad frontal header");
            have_frontal = true;
            continue;
        }

        if (!have_extents || !have_frontal)
            throw IoError("manifest line " + std::to_string(line_no) +
                          ": data row before extents/frontal headers");
        const auto fields = split_csv(line);
        if (fields.size() != 6 && fields.size() != 7)
            throw IoError("manifest line " + std::to_string(line_no) + ": expected 6 or 7 fields");

        ManifestRow row;
        try {
            for (std::size_t k = 0; k < 4; ++k) row.cell[k] = std::stoul(fields[k]);
        } catch (const std::exception&) {
            throw IoError("manifest line " + std::to_string(line_no) + ": bad cell index");
        }
        for (std::size_t k = 0; k < 4; ++k)
            if (row.cell[k] >= manifest.extents[k])
                throw IoError("manifest line " + std::to_string(line_no) + ": cell (" +
                              std::to_string(row.cell[0]) + "," + std::to_string(row.cell[1]) + "," +
                              std::to_string(row.cell[2]) + "," + std::to_string(row.cell[3]) +
                              ") outside declared extents");
        row.image_path = fields[4];
        row.pts_path = fields[5];
        if (fields.size() == 7) row.visibility_path = fields[6];
        if (row.image_path.empty() || row.pts_path.empty())
            throw IoError("manifest line " + std::to_string(line_no) + ": empty path field");
        manifest.rows.push_back(std::move(row));
    }
    if (!have_extents || !have_frontal) throw IoError("manifest: missing extents/frontal headers");
    for (std::size_t e : manifest.extents)
        if (e == 0) throw IoError("manifest: extents must be >= 1");
    if (manifest.frontal_pose >= manifest.extents[1])
        throw IoError("manifest: frontal pose index outside pose extent");
    return manifest;
}

LoadedDataset load_manifest(const std::filesystem::path& path) {
    LoadedDataset out;
    out.manifest = read_manifest(path);
    out.root = path.parent_path();

    std::vector<bool> seen(out.manifest.extents[0] * out.manifest.extents[1] *
                               out.manifest.extents[2] * out.manifest.extents[3],
                           false);
    auto cell_index = [&](const std::array<std::size_t, 4>& c) {
        return ((c[0] * out.manifest.extents[1] + c[1]) * out.manifest.extents[2] + c[2]) *
                   out.manifest.extents[3] +
               c[3];
    };

    bool any_frontal = false;
    for (const auto& row : out.manifest.rows) {
        const std::size_t idx = cell_index(row.cell);
        if (seen[idx])
            throw IoError("manifest: duplicate cell (" + std::to_string(row.cell[0]) + "," +
                          std::to_string(row.cell[1]) + "," + std::to_string(row.cell[2]) + "," +
                          std::to_string(row.cell[3]) + ")");
        seen[idx] = true;
        if (row.cell[1] == out.manifest.frontal_pose) any_frontal = true;

        LoadedSample sample;
        sample.row = row;
        sample.shape = read_pts(out.root / row.pts_path);
        if (!row.visibility_path.empty()) {
            sample.visibility = read_visibility(out.root / row.visibility_path);
            if (sample.visibility.size() != sample.shape.landmark_count())
                throw IoError("manifest: visibility length mismatch for " + row.visibility_path);
        }
        sample.image_file = out.root / row.image_path;
        out.samples.push_back(std::move(sample));
    }
    if (!out.samples.empty()) {
        const std::size_t L = out.samples[0].shape.landmark_count();
        for (const auto& s : out.samples)
            if (s.shape.landmark_count() != L)
                throw IoError("manifest: inconsistent landmark counts across pts files");
        if (!any_frontal) throw IoError("manifest: no sample at the frontal pose index");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic generator.
// ---------------------------------------------------------------------------

namespace {

struct FaceLayout {
    std::size_t n_outline;
    std::size_t n_mouth;
};

FaceLayout face_layout(std::size_t landmarks) {
    const std::size_t n_inner = std::max<std::size_t>(4, landmarks / 3);
    return {landmarks - n_inner, n_inner - 2};
}

double pose_yaw_deg(const SyntheticSpec& spec, std::size_t pose) {
    if (spec.extents[1] <= 1) return 0.0;
    const double t = static_cast<double>(pose) / static_cast<double>(spec.extents[1] - 1);
    return -spec.yaw_range_deg + 2.0 * spec.yaw_range_deg * t;
}

double illumination_level(const SyntheticSpec& spec, std::size_t illum) {
    if (spec.extents[2] <= 1) return 0.0;
    return 2.0 * static_cast<double>(illum) / static_cast<double>(spec.extents[2] - 1) - 1.0;
}

void validate_spec(const SyntheticSpec& spec) {
    for (std::size_t e : spec.extents)
        if (e == 0) throw InvalidArgument("SyntheticSpec: extents must be >= 1");
    if (spec.landmarks < 8)
        throw InvalidArgument("SyntheticSpec: need at least 8 landmarks (outline plus features)");
    if (spec.image_side < 16) throw InvalidArgument("SyntheticSpec: image side too small");
    if (!(spec.yaw_range_deg > -90.0 && spec.yaw_range_deg <= 90.0) || spec.yaw_range_deg < 0.0)
        throw InvalidArgument("SyntheticSpec: yaw range must lie in [0, 90] degrees");
}

}  // namespace

std::array<std::size_t, 2> synthetic_eye_indices(std::size_t landmarks) {
    const FaceLayout layout = face_layout(landmarks);
    return {layout.n_outline, layout.n_outline + 1};
}

FaceShape synthetic_shape(const SyntheticSpec& spec, std::size_t identity, double yaw_deg,
                          std::size_t expression, std::vector<bool>* visibility, bool remap) {
    validate_spec(spec);
    if (identity >= spec.extents[0]) throw InvalidArgument("synthetic_shape: identity out of range");
    if (expression >= spec.extents[3])
        throw InvalidArgument("synthetic_shape: expression out of range");

    const std::size_t L = spec.landmarks;
    const FaceLayout layout = face_layout(L);
    const double side = static_cast<double>(spec.image_side);
    const double b = 0.32 * side;   // vertical semi-axis
    const double a = 0.78 * b;      // horizontal semi-axis

    // Base landmarks, centered at the origin.
    std::vector<Eigen::Vector2d> pts(L);
    for (std::size_t k = 0; k < layout.n_outline; ++k) {
        const double phi = -std::numbers::pi / 2.0 +
                           2.0 * std::numbers::pi * static_cast<double>(k) /
                               static_cast<double>(layout.n_outline);
        pts[k] = {a * std::cos(phi), b * std::sin(phi)};
    }
    pts[layout.n_outline] = {-0.38 * a, -0.30 * b};      // left eye
    pts[layout.n_outline + 1] = {0.38 * a, -0.30 * b};   // right eye
    for (std::size_t m = 0; m < layout.n_mouth; ++m) {
        const double u = layout.n_mouth == 1
                             ? 0.0
                             : 2.0 * static_cast<double>(m) / static_cast<double>(layout.n_mouth - 1) -
                                   1.0;
        pts[layout.n_outline + 2 + m] = {0.42 * a * u, 0.45 * b + 0.06 * b * (1.0 - u * u)};
    }

    // Identity: smooth per-subject radial deformation, 3 harmonics.
    RandomStream id_rng(spec.seed * 0x9E3779B97F4A7C15ULL + 0x1DULL + identity);
    double harm[6];
    for (double& h : harm) h = id_rng.normal();
    for (auto& p : pts) {
        const double phi = std::atan2(p.y(), p.x());
        double g = 0.0;
        for (int h = 1; h <= 3; ++h)
            g += harm[2 * (h - 1)] * std::cos(h * phi) + harm[2 * (h - 1) + 1] * std::sin(h * phi);
        p *= 1.0 + spec.identity_sigma * g / std::sqrt(3.0);
    }

    // Expression: vertical mouth displacement scaled by the expression index.
    const double expr_scale =
        spec.extents[3] <= 1
            ? 0.0
            : static_cast<double>(expression) / static_cast<double>(spec.extents[3] - 1);
    const double displacement = spec.expression_amplitude * side * expr_scale;
    for (std::size_t m = 0; m < layout.n_mouth; ++m)
        pts[layout.n_outline + 2 + m].y() += displacement;

    // Pose: yaw foreshortening of the x coordinate.
    const double yaw = yaw_deg * std::numbers::pi / 180.0;
    for (auto& p : pts) p.x() *= std::cos(yaw);

    std::vector<bool> vis(L, true);
    if (std::abs(yaw_deg) >= 45.0) {
        for (std::size_t k = layout.n_outline; k < L; ++k)
            if ((yaw_deg > 0.0 && pts[k].x() < 0.0) || (yaw_deg < 0.0 && pts[k].x() > 0.0))
                vis[k] = false;
    }

    Eigen::VectorXd coords(static_cast<Eigen::Index>(2 * L));
    for (std::size_t k = 0; k < L; ++k) {
        coords[static_cast<Eigen::Index>(2 * k)] = pts[k].x() + side / 2.0;
        coords[static_cast<Eigen::Index>(2 * k + 1)] = pts[k].y() + side / 2.0;
    }
    FaceShape shape(std::move(coords));

    if (remap) {
        std::vector<std::size_t> outline(layout.n_outline);
        for (std::size_t k = 0; k < layout.n_outline; ++k) outline[k] = k;
        shape = remap_occluded_landmarks(shape, vis, outline);
    }
    if (visibility) *visibility = std::move(vis);
    return shape;
}

SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
    validate_spec(spec);
    const FaceLayout layout = face_layout(spec.landmarks);

    SyntheticDataset out;
    out.spec = spec;
    out.outline.resize(layout.n_outline);
    for (std::size_t k = 0; k < layout.n_outline; ++k) out.outline[k] = k;
    out.left_eye = layout.n_outline;
    out.right_eye = layout.n_outline + 1;
    out.mouth.resize(layout.n_mouth);
    for (std::size_t m = 0; m < layout.n_mouth; ++m) out.mouth[m] = layout.n_outline + 2 + m;

    double best = std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < spec.extents[1]; ++p) {
        const double y = std::abs(pose_yaw_deg(spec, p));
        if (y < best) {
            best = y;
            out.frontal_pose = p;
        }
    }

    out.samples.reserve(spec.extents[0] * spec.extents[1] * spec.extents[2] * spec.extents[3]);
    for (std::size_t i = 0; i < spec.extents[0]; ++i)
        for (std::size_t p = 0; p < spec.extents[1]; ++p)
            for (std::size_t l = 0; l < spec.extents[2]; ++l)
                for (std::size_t e = 0; e < spec.extents[3]; ++e) {
                    SyntheticSample sample;
                    sample.cell = {i, p, l, e};
                    sample.yaw_deg = pose_yaw_deg(spec, p);
                    sample.shape = synthetic_shape(spec, i, sample.yaw_deg, e, &sample.visibility);
                    const double level = illumination_level(spec, l);
                    sample.gain = spec.illumination_gain * level;
                    sample.bias = spec.illumination_bias * level;
                    out.samples.push_back(std::move(sample));
                }
    return out;
}

namespace {

double polygon_signed_distance(const std::vector<Eigen::Vector2d>& poly, double px, double py) {
    double dist2 = std::numeric_limits<double>::infinity();
    bool inside = false;
    const std::size_t n = poly.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Eigen::Vector2d& p0 = poly[j];
        const Eigen::Vector2d& p1 = poly[i];
        const double ex = p1.x() - p0.x();
        const double ey = p1.y() - p0.y();
        const double wx = px - p0.x();
        const double wy = py - p0.y();
        const double len2 = ex * ex + ey * ey;
        const double t = len2 > 0.0 ? std::clamp((wx * ex + wy * ey) / len2, 0.0, 1.0) : 0.0;
        const double dx = wx - t * ex;
        const double dy = wy - t * ey;
        dist2 = std::min(dist2, dx * dx + dy * dy);
        // Even-odd crossing test.
        if ((p0.y() > py) != (p1.y() > py)) {
            const double xi = p0.x() + (py - p0.y()) / (p1.y() - p0.y()) * ex;
            if (px < xi) inside = !inside;
        }
    }
    const double d = std::sqrt(dist2);
    return inside ? -d : d;
}

}  // namespace

ImageGray render_synthetic_image(const SyntheticDataset& dataset, std::size_t sample_index) {
    if (sample_index >= dataset.samples.size())
        throw InvalidArgument("render_synthetic_image: sample index out of range");
    const SyntheticSample& sample = dataset.samples[sample_index];
    const std::size_t side = dataset.spec.image_side;
    const double blob_r = 0.04 * static_cast<double>(side);
    const double cutoff2 = (4.0 * blob_r) * (4.0 * blob_r);

    std::vector<Eigen::Vector2d> poly;
    poly.reserve(dataset.outline.size());
    for (std::size_t idx : dataset.outline) poly.push_back(sample.shape.point(idx));

    std::vector<Eigen::Vector2d> blobs;
    for (std::size_t k = dataset.outline.size(); k < dataset.spec.landmarks; ++k)
        blobs.push_back(sample.shape.point(k));

    ImageGray image(side, side);
    for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x) {
            const double px = static_cast<double>(x);
            const double py = static_cast<double>(y);
            const double sd = polygon_signed_distance(poly, px, py);
            // Rational sigmoid of the signed distance: smooth silhouette
            // falloff without a transcendental per pixel.
            const double z = sd / 2.0;
            double v = 0.22 + 0.58 * (0.5 - 0.5 * z / (1.0 + std::abs(z)));
            for (const auto& q : blobs) {
                const double dx = px - q.x();
                const double dy = py - q.y();
                const double d2 = dx * dx + dy * dy;
                if (d2 > cutoff2) continue;
                v -= 0.33 * std::exp(-d2 / (2.0 * blob_r * blob_r));
            }
            const double ramp = px / static_cast<double>(side - 1) - 0.5;
            v = v * (1.0 + sample.gain * ramp) + sample.bias;
            image(x, y) = std::clamp(v, 0.0, 1.0);
        }
    return image;
}

void write_synthetic_dataset(const SyntheticDataset& dataset, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "img");
    fs::create_directories(dir / "pts");
    fs::create_directories(dir / "vis");

    DatasetManifest manifest;
    manifest.extents = dataset.spec.extents;
    manifest.frontal_pose = dataset.frontal_pose;

    for (std::size_t s = 0; s < dataset.samples.size(); ++s) {
        const auto& sample = dataset.samples[s];
        char stem[64];
        std::snprintf(stem, sizeof stem, "%03zu_%02zu_%02zu_%02zu", sample.cell[0], sample.cell[1],
                      sample.cell[2], sample.cell[3]);
        ManifestRow row;
        row.cell = sample.cell;
        row.image_path = std::string("img/") + stem + ".pgm";
        row.pts_path = std::string("pts/") + stem + ".pts";
        row.visibility_path = std::string("vis/") + stem + ".vis";

        save_pgm(dir / row.image_path, render_synthetic_image(dataset, s));
        write_pts(dir / row.pts_path, sample.shape);
        write_visibility(dir / row.visibility_path, sample.visibility);
        manifest.rows.push_back(std::move(row));
    }
    write_manifest(dir / "manifest.csv", manifest);
}

// ---------------------------------------------------------------------------
// Missing-sample masks.
// ---------------------------------------------------------------------------

DenseTensor make_missing_mask(const std::array<std::size_t, 4>& grid_extents, double fraction,
                              std::uint64_t seed) {
    for (std::size_t e : grid_extents)
        if (e == 0) throw InvalidArgument("make_missing_mask: extents must be >= 1");
    if (!(fraction >= 0.0 && fraction < 1.0))
        throw InvalidArgument("make_missing_mask: fraction must lie in [0, 1)");

    const std::size_t cells =
        grid_extents[0] * grid_extents[1] * grid_extents[2] * grid_extents[3];
    const std::size_t missing =
        static_cast<std::size_t>(std::llround(fraction * static_cast<double>(cells)));
    if (missing > cells - grid_extents[1])
        throw InvalidArgument("make_missing_mask: fraction leaves a pose with no samples");

    const std::size_t per_pose = cells / grid_extents[1];
    RandomStream rng(seed);
    std::vector<std::size_t> order(cells);

    for (int attempt = 0; attempt < 10000; ++attempt) {
        for (std::size_t c = 0; c < cells; ++c) order[c] = c;
        for (std::size_t c = cells; c > 1; --c)
            std::swap(order[c - 1], order[rng.uniform_index(c)]);

        DenseTensor mask({grid_extents[0], grid_extents[1], grid_extents[2], grid_extents[3]}, 1.0);
        std::vector<std::size_t> kept(grid_extents[1], per_pose);
        for (std::size_t k = 0; k < missing; ++k) {
            mask[order[k]] = 0.0;
            const std::size_t pose =
                (order[k] / (grid_extents[2] * grid_extents[3])) % grid_extents[1];
            --kept[pose];
        }
        if (std::all_of(kept.begin(), kept.end(), [](std::size_t n) { return n >= 1; }))
            return mask;
    }
    throw NumericalError("make_missing_mask: could not draw a mask keeping every pose populated");
}

}  // namespace utaam
