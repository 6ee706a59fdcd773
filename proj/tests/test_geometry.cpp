#include <cmath>
#include <numbers>

#include "doctest.h"
#include "support/oracles.hpp"
#include "utaam/errors.hpp"
#include "utaam/geometry.hpp"

using namespace utaam;

namespace {

FaceShape make_shape(std::initializer_list<double> xy) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(xy.size()));
    Eigen::Index k = 0;
    for (double c : xy) v[k++] = c;
    return FaceShape(std::move(v));
}

FaceShape random_shape(std::size_t landmarks, std::uint64_t seed, double spread = 10.0) {
    RandomStream rng(seed);
    Eigen::VectorXd v(static_cast<Eigen::Index>(2 * landmarks));
    for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = rng.uniform(-spread, spread);
    return FaceShape(std::move(v));
}

double point_to_polyline_distance(const Eigen::Vector2d& p, const FaceShape& shape,
                                  std::span<const std::size_t> outline) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k + 1 < outline.size(); ++k) {
        const Eigen::Vector2d a = shape.point(outline[k]);
        const Eigen::Vector2d b = shape.point(outline[k + 1]);
        const Eigen::Vector2d e = b - a;
        const double len2 = e.squaredNorm();
        const double t = len2 > 0.0 ? std::clamp((p - a).dot(e) / len2, 0.0, 1.0) : 0.0;
        best = std::min(best, (p - (a + t * e)).norm());
    }
    return best;
}

// Sign-of-areas point-in-triangle with the same -1e-9 inclusiveness as the
// lattice convention, written independently of the mesh code.
bool in_triangle_oracle(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                        const Eigen::Vector2d& c, const Eigen::Vector2d& p) {
    const double total = (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
    if (std::abs(total) < 1e-12) return false;
    const double w0 = ((b.x() - p.x()) * (c.y() - p.y()) - (b.y() - p.y()) * (c.x() - p.x())) / total;
    const double w1 = ((c.x() - p.x()) * (a.y() - p.y()) - (c.y() - p.y()) * (a.x() - p.x())) / total;
    const double w2 = 1.0 - w0 - w1;
    return w0 >= -1e-9 && w1 >= -1e-9 && w2 >= -1e-9;
}

}  // namespace

TEST_CASE("apply_affine basics") {
    const FaceShape s = make_shape({1, 1, -2, 3});
    const FaceShape same = apply_affine(s, AffineParams{});
    CHECK((same.coords - s.coords).cwiseAbs().maxCoeff() == 0.0);

    const FaceShape scaled = apply_affine(make_shape({1, 1}), AffineParams{2.0, 0.0, 0.0, 0.0});
    CHECK(scaled.x(0) == doctest::Approx(2.0));
    CHECK(scaled.y(0) == doctest::Approx(2.0));

    const AffineParams g{1.7, 0.6, 3.0, -2.0};
    const FaceShape round = apply_affine(apply_affine(s, g), invert(g));
    CHECK((round.coords - s.coords).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("compose matches sequential application") {
    const FaceShape s = random_shape(6, 1);
    const AffineParams g1{0.8, -0.4, 1.0, 2.0};
    const AffineParams g2{1.5, 1.1, -3.0, 0.5};
    const FaceShape seq = apply_affine(apply_affine(s, g1), g2);
    const FaceShape comp = apply_affine(s, compose(g2, g1));
    CHECK((seq.coords - comp.coords).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("affine linear encoding round trips") {
    const AffineParams g{2.3, -0.7, 4.0, -1.0};
    const AffineParams back = affine_from_linear(affine_to_linear(g));
    CHECK(back.scale == doctest::Approx(g.scale).epsilon(1e-12));
    CHECK(back.theta == doctest::Approx(g.theta).epsilon(1e-12));
    CHECK(back.tx == g.tx);
    CHECK(back.ty == g.ty);
}

TEST_CASE("procrustes of two identical shapes") {
    const FaceShape s = random_shape(8, 7);
    std::vector<FaceShape> shapes{s, s};
    const ProcrustesResult r = procrustes_align(shapes);

    CHECK((r.aligned[0].coords - r.mean.coords).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((r.aligned[1].coords - r.mean.coords).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(r.transforms[0].scale == doctest::Approx(r.transforms[1].scale).epsilon(1e-10));
    CHECK(r.transforms[0].theta == doctest::Approx(r.transforms[1].theta).epsilon(1e-10));

    // Mean is normalized: zero centroid, unit centroid size.
    Eigen::Vector2d c = Eigen::Vector2d::Zero();
    for (std::size_t l = 0; l < r.mean.landmark_count(); ++l) c += r.mean.point(l);
    c /= static_cast<double>(r.mean.landmark_count());
    CHECK(c.norm() < 1e-10);
    double size = 0.0;
    for (std::size_t l = 0; l < r.mean.landmark_count(); ++l)
        size += (r.mean.point(l) - c).squaredNorm();
    CHECK(std::sqrt(size) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("procrustes recovers a planted similarity transform") {
    const FaceShape a = random_shape(10, 21);
    const double planted_theta = 30.0 * std::numbers::pi / 180.0;
    const AffineParams planted{2.0, planted_theta, 5.0, -3.0};
    const FaceShape b = apply_affine(a, planted);

    std::vector<FaceShape> shapes{a, b};
    const ProcrustesResult r = procrustes_align(shapes);
    const AffineParams rel = compose(r.transforms[1], invert(r.transforms[0]));
    CHECK(rel.scale == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(rel.theta == doctest::Approx(planted_theta).epsilon(1e-6));
    CHECK(rel.tx == doctest::Approx(planted.tx).epsilon(1e-6));
    CHECK(rel.ty == doctest::Approx(planted.ty).epsilon(1e-6));

    // original == G(aligned, transform).
    const FaceShape back = apply_affine(r.aligned[1], r.transforms[1]);
    CHECK((back.coords - b.coords).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("procrustes alignment is invariant to pre-transforming every input") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        std::vector<FaceShape> shapes;
        for (std::size_t k = 0; k < 4; ++k) shapes.push_back(random_shape(7, 100 + 10 * seed + k));
        const ProcrustesResult base = procrustes_align(shapes);

        RandomStream rng(500 + seed);
        const AffineParams g{rng.uniform(0.5, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(-9.0, 9.0),
                             rng.uniform(-9.0, 9.0)};
        std::vector<FaceShape> moved;
        for (const auto& s : shapes) moved.push_back(apply_affine(s, g));
        const ProcrustesResult shifted = procrustes_align(moved);

        for (std::size_t k = 0; k < shapes.size(); ++k)
            CHECK((base.aligned[k].coords - shifted.aligned[k].coords).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("procrustes rejects degenerate input") {
    std::vector<FaceShape> shapes{make_shape({1, 1, 1, 1, 1, 1}), random_shape(3, 3)};
    CHECK_THROWS_AS(procrustes_align(shapes), InvalidArgument);
    std::vector<FaceShape> one{random_shape(4, 4)};
    CHECK_THROWS_AS(procrustes_align(one), InvalidArgument);
}

TEST_CASE("delaunay of four points in convex position has two triangles") {
    const std::vector<Eigen::Vector2d> pts{{0, 0}, {10, 0}, {10, 10}, {0, 10}};
    const auto tris = delaunay_triangulate(pts);
    CHECK(tris.size() == 2);

    const std::vector<Eigen::Vector2d> line{{0, 0}, {1, 1}, {2, 2}, {3, 3}};
    CHECK_THROWS_AS(delaunay_triangulate(line), InvalidArgument);
}

TEST_CASE("reference mesh lattice equals the brute-force point-in-triangle count") {
    std::vector<FaceShape> frontal{make_shape({0, 0, 40, 0, 50, 25, 40, 50, 0, 50, -10, 25, 20, 20,
                                               20, 35})};
    const ReferenceMesh mesh = build_reference_mesh(frontal, 48.0);
    CHECK(mesh.texture_size() > 0);

    const FaceShape& ref = mesh.reference();
    double max_x = 0.0, max_y = 0.0;
    for (std::size_t l = 0; l < ref.landmark_count(); ++l) {
        max_x = std::max(max_x, ref.x(l));
        max_y = std::max(max_y, ref.y(l));
    }
    CHECK(max_y == doctest::Approx(48.0).epsilon(1e-9));

    std::size_t count = 0;
    for (int y = 0; y <= static_cast<int>(std::ceil(max_y)); ++y)
        for (int x = 0; x <= static_cast<int>(std::ceil(max_x)); ++x) {
            bool inside = false;
            for (const auto& t : mesh.triangles())
                inside = inside || in_triangle_oracle(ref.point(t[0]), ref.point(t[1]),
                                                      ref.point(t[2]),
                                                      Eigen::Vector2d(x, y));
            if (inside) ++count;
        }
    CHECK(mesh.texture_size() == count);

    // Strictly interior pixels sit in exactly one triangle.
    for (const auto& px : mesh.lattice()) {
        std::size_t hits = 0;
        for (const auto& t : mesh.triangles()) {
            double w0, w1, w2;
            const Eigen::Vector2d a = ref.point(t[0]), b = ref.point(t[1]), c = ref.point(t[2]);
            const double total = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
            if (std::abs(total) < 1e-12) continue;
            w0 = ((b.x() - px.x) * (c.y() - px.y) - (b.y() - px.y) * (c.x() - px.x)) / total;
            w1 = ((c.x() - px.x) * (a.y() - px.y) - (c.y() - px.y) * (a.x() - px.x)) / total;
            w2 = 1.0 - w0 - w1;
            if (w0 > 1e-9 && w1 > 1e-9 && w2 > 1e-9) ++hits;
        }
        CHECK(hits <= 1);
    }
}

TEST_CASE("single frontal shape becomes the reference after rescaling") {
    const FaceShape s = make_shape({0, 0, 20, 0, 20, 10, 0, 10, 10, 5});
    std::vector<FaceShape> frontal{s};
    const ReferenceMesh mesh = build_reference_mesh(frontal, 30.0);
    // Height 10 -> scale 3; the shape is translated to the origin.
    CHECK(mesh.reference().x(1) == doctest::Approx(60.0).epsilon(1e-12));
    CHECK(mesh.reference().y(2) == doctest::Approx(30.0).epsilon(1e-12));
}

TEST_CASE("identity warp reproduces bilinear samples exactly") {
    std::vector<FaceShape> frontal{make_shape({0, 0, 30, 0, 36, 15, 30, 30, 0, 30, -6, 15, 15, 10,
                                               15, 20})};
    const ReferenceMesh mesh = build_reference_mesh(frontal, 40.0);

    ImageGray constant(64, 64, 0.5);
    const WarpResult flat = warp_to_reference(constant, mesh.reference(), mesh);
    for (Eigen::Index k = 0; k < flat.texture.size(); ++k) CHECK(flat.texture[k] == 0.5);

    ImageGray arbitrary(64, 64);
    RandomStream rng(9);
    for (auto& p : arbitrary.pixels) p = rng.uniform01();
    const WarpResult identity = warp_to_reference(arbitrary, mesh.reference(), mesh);
    for (std::size_t i = 0; i < mesh.lattice().size(); ++i) {
        const auto& px = mesh.lattice()[i];
        const double direct = bilinear_sample(arbitrary, px.x, px.y);
        CHECK(std::abs(identity.texture[static_cast<Eigen::Index>(i)] - direct) <= 1e-12);
    }
}

TEST_CASE("warping a translated shape samples a ramp at shifted positions") {
    std::vector<FaceShape> frontal{make_shape({0, 0, 30, 0, 36, 15, 30, 30, 0, 30, -6, 15, 15, 10,
                                               15, 20})};
    const ReferenceMesh mesh = build_reference_mesh(frontal, 40.0);

    ImageGray ramp(96, 96);
    for (std::size_t y = 0; y < 96; ++y)
        for (std::size_t x = 0; x < 96; ++x)
            ramp(x, y) = (static_cast<double>(x) + 2.0 * static_cast<double>(y)) / 400.0;

    const FaceShape shifted = apply_affine(mesh.reference(), AffineParams{1.0, 0.0, 5.0, 3.0});
    const WarpResult warped = warp_to_reference(ramp, shifted, mesh);
    for (std::size_t i = 0; i < mesh.lattice().size(); ++i) {
        const auto& px = mesh.lattice()[i];
        const double expected = (static_cast<double>(px.x) + 5.0 + 2.0 * (px.y + 3.0)) / 400.0;
        CHECK(std::abs(warped.texture[static_cast<Eigen::Index>(i)] - expected) < 1e-6);
    }
}

TEST_CASE("degenerate source triangles fill with zero and are counted") {
    std::vector<FaceShape> frontal{make_shape({0, 0, 30, 0, 36, 15, 30, 30, 0, 30, -6, 15, 15, 10,
                                               15, 20})};
    const ReferenceMesh mesh = build_reference_mesh(frontal, 40.0);

    // Collapse every landmark onto one point: all source triangles degenerate.
    FaceShape collapsed = mesh.reference();
    for (std::size_t l = 0; l < collapsed.landmark_count(); ++l) collapsed.set_point(l, {7.0, 9.0});
    ImageGray image(32, 32, 0.8);
    const WarpResult r = warp_to_reference(image, collapsed, mesh);
    CHECK(r.degenerate_triangles == mesh.triangles().size());
    for (Eigen::Index k = 0; k < r.texture.size(); ++k) CHECK(r.texture[k] == 0.0);
}

TEST_CASE("remap_occluded_landmarks") {
    // All visible: unchanged.
    const FaceShape s = make_shape({0, 5, 10, 0, 10, 10, 4, 20});
    const std::vector<std::size_t> outline{1, 2};
    const std::vector<bool> all(4, true);
    const FaceShape same = remap_occluded_landmarks(s, all, outline);
    CHECK((same.coords - s.coords).cwiseAbs().maxCoeff() == 0.0);

    // Horizontal line through (0,5) crosses the vertical segment x=10.
    std::vector<bool> vis{false, true, true, true};
    const FaceShape mapped = remap_occluded_landmarks(s, vis, outline);
    CHECK(mapped.x(0) == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(mapped.y(0) == doctest::Approx(5.0).epsilon(1e-12));

    // No segment spans y=20: nearest outline vertex.
    std::vector<bool> vis2{true, true, true, false};
    const FaceShape nearest = remap_occluded_landmarks(s, vis2, outline);
    CHECK(nearest.x(3) == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(nearest.y(3) == doctest::Approx(10.0).epsilon(1e-12));

    // Remapped points land on the outline polyline.
    CHECK(point_to_polyline_distance(mapped.point(0), s, outline) < 1e-9);

    CHECK_THROWS_AS(remap_occluded_landmarks(s, vis, std::vector<std::size_t>{}), InvalidArgument);
    std::vector<bool> bad_outline_vis{false, false, true, true};
    CHECK_THROWS_AS(remap_occluded_landmarks(s, bad_outline_vis, outline), InvalidArgument);
}

TEST_CASE("render_from_reference inverts the identity warp on lattice pixels") {
    std::vector<FaceShape> frontal{make_shape({0, 0, 30, 0, 36, 15, 30, 30, 0, 30, -6, 15, 15, 10,
                                               15, 20})};
    const ReferenceMesh mesh = build_reference_mesh(frontal, 40.0);

    TextureVector texture(static_cast<Eigen::Index>(mesh.texture_size()));
    RandomStream rng(77);
    for (Eigen::Index k = 0; k < texture.size(); ++k) texture[k] = rng.uniform01();

    const ImageGray canvas =
        render_from_reference(texture, mesh, mesh.reference(), 64, 64, 0.0);
    for (std::size_t i = 0; i < mesh.lattice().size(); ++i) {
        const auto& px = mesh.lattice()[i];
        CHECK(std::abs(canvas(static_cast<std::size_t>(px.x), static_cast<std::size_t>(px.y)) -
                       texture[static_cast<Eigen::Index>(i)]) < 1e-9);
    }
}
