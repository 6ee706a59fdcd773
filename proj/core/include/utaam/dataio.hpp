#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "utaam/geometry.hpp"
#include "utaam/image.hpp"
#include "utaam/tensor.hpp"

namespace utaam {

// ---------------------------------------------------------------------------
// Landmark annotation files (300-W style "pts") and visibility sidecars.
// ---------------------------------------------------------------------------

/// Text format: `version: 1`, `n_points: L`, `{`, L lines `x y`, `}`.
/// Coordinates print with 6 decimal places.
void write_pts(const std::filesystem::path& path, const FaceShape& shape);
FaceShape read_pts(const std::filesystem::path& path);

/// One `0` or `1` line per landmark.
void write_visibility(const std::filesystem::path& path, const std::vector<bool>& visibility);
std::vector<bool> read_visibility(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Dataset manifests.
// ---------------------------------------------------------------------------

struct ManifestRow {
    std::array<std::size_t, 4> cell{};  // identity, pose, illumination, expression
    std::string image_path;
    std::string pts_path;
    std::string visibility_path;  // optional, empty when absent
};

/// Header: `extents: Ii Ip Il Ie` and `frontal: k`, then CSV rows
/// `i,p,l,e,image,pts[,visibility]`. Paths are relative to the manifest.
struct DatasetManifest {
    std::array<std::size_t, 4> extents{};
    std::size_t frontal_pose = 0;
    std::vector<ManifestRow> rows;
};

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

struct LoadedSample {
    ManifestRow row;
    FaceShape shape;
    std::vector<bool> visibility;            // empty when no sidecar
    std::filesystem::path image_file;        // resolved; pixels are loaded lazily
};

struct LoadedDataset {
    DatasetManifest manifest;
    std::vector<LoadedSample> samples;
    std::filesystem::path root;
};

/// Parse and validate a manifest plus every referenced pts/visibility file.
LoadedDataset load_manifest(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Synthetic multi-factor dataset generator.
// ---------------------------------------------------------------------------

struct SyntheticSpec {
    std::array<std::size_t, 4> extents{60, 7, 5, 3};  // identity, pose, illumination, expression
    std::size_t landmarks = 18;
    std::size_t image_side = 128;
    std::uint64_t seed = 0;
    double identity_sigma = 0.05;        // radial deformation strength
    double yaw_range_deg = 60.0;         // poses span [-range, +range]
    double expression_amplitude = 0.05;  // mouth displacement, fraction of image side
    double illumination_gain = 0.35;     // horizontal ramp strength
    double illumination_bias = 0.10;     // additive offset range
};

struct SyntheticSample {
    std::array<std::size_t, 4> cell{};
    FaceShape shape;
    std::vector<bool> visibility;
    double yaw_deg = 0.0;
    double gain = 0.0;
    double bias = 0.0;
};

struct SyntheticDataset {
    SyntheticSpec spec;
    std::vector<SyntheticSample> samples;  // cell layout order (expression fastest)
    std::vector<std::size_t> outline;      // ordered outline landmark indices
    std::vector<std::size_t> mouth;        // displaced by expression
    std::size_t left_eye = 0;
    std::size_t right_eye = 0;
    std::size_t frontal_pose = 0;
};

/// Deterministic under the spec seed. Shapes carry the uniform-landmarking
/// remap for |yaw| >= 45 degrees; illumination affects only the rendering.
SyntheticDataset generate_synthetic(const SyntheticSpec& spec);

/// Ground-truth shape at an arbitrary yaw (the generator's own oracle for
/// pose interpolation tests). No occlusion remapping is applied when
/// `remap` is false.
FaceShape synthetic_shape(const SyntheticSpec& spec, std::size_t identity, double yaw_deg,
                          std::size_t expression, std::vector<bool>* visibility = nullptr,
                          bool remap = true);

/// Render one sample of the dataset (pure function of the sample record).
ImageGray render_synthetic_image(const SyntheticDataset& dataset, std::size_t sample_index);

/// Write images, pts, visibility sidecars and the manifest under `dir`.
void write_synthetic_dataset(const SyntheticDataset& dataset, const std::filesystem::path& dir);

/// Eye landmark indices implied by the generator layout for a given L.
std::array<std::size_t, 2> synthetic_eye_indices(std::size_t landmarks);

// ---------------------------------------------------------------------------
// Missing-sample masks.
// ---------------------------------------------------------------------------

/// 4-way {0,1} cell mask with exactly round(fraction * cells) zeros, drawn
/// uniformly without replacement among configurations that keep at least
/// one sample per pose index.
DenseTensor make_missing_mask(const std::array<std::size_t, 4>& grid_extents, double fraction,
                              std::uint64_t seed);

}  // namespace utaam
