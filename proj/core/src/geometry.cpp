#include "utaam/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <map>
#include <numbers>

#include "utaam/errors.hpp"

namespace utaam {

namespace {

double wrap_angle(double theta) {
    while (theta <= -std::numbers::pi) theta += 2.0 * std::numbers::pi;
    while (theta > std::numbers::pi) theta -= 2.0 * std::numbers::pi;
    return theta;
}

Eigen::Vector2d centroid(const FaceShape& s) {
    Eigen::Vector2d c = Eigen::Vector2d::Zero();
    const std::size_t n = s.landmark_count();
    for (std::size_t l = 0; l < n; ++l) c += s.point(l);
    return c / static_cast<double>(n);
}

double centroid_size(const FaceShape& s, const Eigen::Vector2d& c) {
    double sum = 0.0;
    for (std::size_t l = 0; l < s.landmark_count(); ++l) sum += (s.point(l) - c).squaredNorm();
    return std::sqrt(sum);
}

}  // namespace

FaceShape apply_affine(const FaceShape& shape, const AffineParams& g) {
    const double a = g.scale * std::cos(g.theta);
    const double b = g.scale * std::sin(g.theta);
    FaceShape out = shape;
    for (std::size_t l = 0; l < shape.landmark_count(); ++l) {
        const double x = shape.x(l);
        const double y = shape.y(l);
        out.set_point(l, {a * x - b * y + g.tx, b * x + a * y + g.ty});
    }
    return out;
}

AffineParams invert(const AffineParams& g) {
    AffineParams inv;
    inv.scale = 1.0 / g.scale;
    inv.theta = wrap_angle(-g.theta);
    const double a = inv.scale * std::cos(inv.theta);
    const double b = inv.scale * std::sin(inv.theta);
    inv.tx = -(a * g.tx - b * g.ty);
    inv.ty = -(b * g.tx + a * g.ty);
    return inv;
}

AffineParams compose(const AffineParams& outer, const AffineParams& inner) {
    AffineParams out;
    out.scale = outer.scale * inner.scale;
    out.theta = wrap_angle(outer.theta + inner.theta);
    const double a = outer.scale * std::cos(outer.theta);
    const double b = outer.scale * std::sin(outer.theta);
    out.tx = a * inner.tx - b * inner.ty + outer.tx;
    out.ty = b * inner.tx + a * inner.ty + outer.ty;
    return out;
}

Eigen::Vector4d affine_to_linear(const AffineParams& g) {
    return {g.scale * std::cos(g.theta), g.scale * std::sin(g.theta), g.tx, g.ty};
}

AffineParams affine_from_linear(const Eigen::Vector4d& v) {
    AffineParams g;
    g.scale = std::hypot(v[0], v[1]);
    g.theta = (g.scale > 0.0) ? std::atan2(v[1], v[0]) : 0.0;
    g.tx = v[2];
    g.ty = v[3];
    return g;
}

AffineParams align_to_target(const FaceShape& shape, const FaceShape& target, FaceShape* aligned) {
    const std::size_t n = shape.landmark_count();
    if (n != target.landmark_count() || n == 0)
        throw InvalidArgument("align_to_target: landmark counts must match");

    const Eigen::Vector2d c = centroid(shape);
    const Eigen::Vector2d ct = centroid(target);

    // Complex least squares for the scale-rotation component.
    std::complex<double> num(0.0, 0.0);
    double den = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
        const std::complex<double> z(shape.x(l) - c.x(), shape.y(l) - c.y());
        const std::complex<double> m(target.x(l) - ct.x(), target.y(l) - ct.y());
        num += std::conj(z) * m;
        den += std::norm(z);
    }
    if (den <= 0.0) throw InvalidArgument("align_to_target: degenerate shape (coincident points)");
    const std::complex<double> a = num / den;
    if (std::abs(a) <= 0.0) throw InvalidArgument("align_to_target: degenerate alignment");

    if (aligned) {
        FaceShape result = shape;
        for (std::size_t l = 0; l < n; ++l) {
            const std::complex<double> z(shape.x(l) - c.x(), shape.y(l) - c.y());
            const std::complex<double> w = a * z;
            result.set_point(l, {w.real() + ct.x(), w.imag() + ct.y()});
        }
        *aligned = std::move(result);
    }

    // original = G(aligned - ct + ct, g): undo the centered scale-rotation.
    AffineParams g;
    g.scale = 1.0 / std::abs(a);
    g.theta = wrap_angle(-std::arg(a));
    const double ca = g.scale * std::cos(g.theta);
    const double cb = g.scale * std::sin(g.theta);
    g.tx = c.x() - (ca * ct.x() - cb * ct.y());
    g.ty = c.y() - (cb * ct.x() + ca * ct.y());
    return g;
}

ProcrustesResult procrustes_align(std::span<const FaceShape> shapes, std::size_t max_iter,
                                  double tol) {
    if (shapes.size() < 2) throw InvalidArgument("procrustes_align: need at least 2 shapes");
    const std::size_t n = shapes[0].landmark_count();
    for (const auto& s : shapes)
        if (s.landmark_count() != n)
            throw InvalidArgument("procrustes_align: landmark counts must match");

    auto normalize = [](FaceShape s) {
        const Eigen::Vector2d c = centroid(s);
        const double size = centroid_size(s, c);
        if (size <= 0.0) throw InvalidArgument("procrustes_align: degenerate shape");
        for (std::size_t l = 0; l < s.landmark_count(); ++l)
            s.set_point(l, (s.point(l) - c) / size);
        return s;
    };

    // Canonical rotation gauge: principal axis along +y (faces are taller
    // than wide), sign fixed by the first non-vanishing odd moment. Makes
    // the aligned set independent of any similarity transform applied to
    // all inputs.
    auto canonicalize = [](FaceShape mean) {
        const std::size_t count = mean.landmark_count();
        double sxx = 0.0, sxy = 0.0, syy = 0.0;
        for (std::size_t l = 0; l < count; ++l) {
            sxx += mean.x(l) * mean.x(l);
            sxy += mean.x(l) * mean.y(l);
            syy += mean.y(l) * mean.y(l);
        }
        const double axis = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
        mean = apply_affine(mean, AffineParams{1.0, std::numbers::pi / 2.0 - axis, 0.0, 0.0});

        double skew = 0.0;
        for (std::size_t l = 0; l < count; ++l) skew += mean.y(l) * mean.y(l) * mean.y(l);
        if (std::abs(skew) < 1e-12) {
            skew = 0.0;
            for (std::size_t l = 0; l < count; ++l) skew += mean.x(l) * mean.x(l) * mean.x(l);
        }
        if (skew < 0.0) mean = apply_affine(mean, AffineParams{1.0, std::numbers::pi, 0.0, 0.0});
        return mean;
    };

    ProcrustesResult result;
    result.mean = normalize(shapes[0]);

    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        ++result.iterations;
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(2 * n));
        for (const auto& s : shapes) {
            FaceShape aligned;
            align_to_target(s, result.mean, &aligned);
            sum += aligned.coords;
        }
        FaceShape new_mean(sum / static_cast<double>(shapes.size()));
        // Remove rotation drift by aligning the new mean onto the previous
        // one before normalizing.
        FaceShape stabilized;
        align_to_target(new_mean, result.mean, &stabilized);
        new_mean = normalize(std::move(stabilized));

        const double change = (new_mean.coords - result.mean.coords).norm();
        result.mean = std::move(new_mean);
        if (change < tol) break;
    }
    result.mean = canonicalize(std::move(result.mean));

    result.aligned.resize(shapes.size());
    result.transforms.resize(shapes.size());
    for (std::size_t k = 0; k < shapes.size(); ++k)
        result.transforms[k] = align_to_target(shapes[k], result.mean, &result.aligned[k]);
    return result;
}

// ---------------------------------------------------------------------------
// Bowyer-Watson Delaunay triangulation.
// ---------------------------------------------------------------------------

namespace {

struct Tri {
    int a, b, c;
    bool alive = true;
};

double orient2d(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
    return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

// > 0 when d is strictly inside the circumcircle of CCW triangle (a,b,c).
double incircle(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c,
                const Eigen::Vector2d& d) {
    const double ax = a.x() - d.x(), ay = a.y() - d.y();
    const double bx = b.x() - d.x(), by = b.y() - d.y();
    const double cx = c.x() - d.x(), cy = c.y() - d.y();
    const double a2 = ax * ax + ay * ay;
    const double b2 = bx * bx + by * by;
    const double c2 = cx * cx + cy * cy;
    return ax * (by * c2 - b2 * cy) - ay * (bx * c2 - b2 * cx) + a2 * (bx * cy - by * cx);
}

std::vector<std::array<int, 3>> bowyer_watson(const std::vector<Eigen::Vector2d>& pts,
                                              double tie_eps, bool* tie_hit) {
    const int n = static_cast<int>(pts.size());
    std::vector<Eigen::Vector2d> v = pts;

    Eigen::Vector2d lo = v[0], hi = v[0];
    for (const auto& p : v) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const Eigen::Vector2d mid = 0.5 * (lo + hi);
    const double span = std::max((hi - lo).maxCoeff(), 1.0) * 64.0;
    v.push_back(mid + Eigen::Vector2d(-span, -span / 2.0));
    v.push_back(mid + Eigen::Vector2d(span, -span / 2.0));
    v.push_back(mid + Eigen::Vector2d(0.0, span));

    std::vector<Tri> tris;
    tris.push_back({n, n + 1, n + 2});

    auto ccw = [&](Tri& t) {
        if (orient2d(v[t.a], v[t.b], v[t.c]) < 0.0) std::swap(t.b, t.c);
    };
    ccw(tris[0]);

    for (int p = 0; p < n; ++p) {
        std::map<std::pair<int, int>, int> edge_count;
        auto add_edge = [&](int s, int t) {
            auto key = std::minmax(s, t);
            edge_count[{key.first, key.second}]++;
        };

        bool any_bad = false;
        for (auto& t : tris) {
            if (!t.alive) continue;
            const double det = incircle(v[t.a], v[t.b], v[t.c], v[p]);
            if (std::abs(det) <= tie_eps && tie_hit) *tie_hit = true;
            if (det > 0.0) {
                t.alive = false;
                any_bad = true;
                add_edge(t.a, t.b);
                add_edge(t.b, t.c);
                add_edge(t.c, t.a);
            }
        }
        if (!any_bad) continue;  // duplicate or degenerate point, nothing to split

        // The cavity boundary consists of edges referenced exactly once.
        for (const auto& [edge, count] : edge_count) {
            if (count != 1) continue;
            Tri nt{edge.first, edge.second, p};
            if (std::abs(orient2d(v[nt.a], v[nt.b], v[nt.c])) <= 0.0) continue;
            ccw(nt);
            tris.push_back(nt);
        }
        std::erase_if(tris, [](const Tri& t) { return !t.alive; });
    }

    std::vector<std::array<int, 3>> out;
    for (const auto& t : tris) {
        if (!t.alive || t.a >= n || t.b >= n || t.c >= n) continue;
        std::array<int, 3> tri{t.a, t.b, t.c};
        std::sort(tri.begin(), tri.end());
        out.push_back(tri);
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

std::vector<std::array<int, 3>> delaunay_triangulate(const std::vector<Eigen::Vector2d>& points,
                                                     bool* jittered) {
    if (points.size() < 3) throw InvalidArgument("delaunay_triangulate: need at least 3 points");
    if (jittered) *jittered = false;

    Eigen::Vector2d lo = points[0], hi = points[0];
    for (const auto& p : points) {
        if (!p.allFinite()) throw InvalidArgument("delaunay_triangulate: non-finite point");
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const double diag = std::max((hi - lo).norm(), 1.0);
    const double tie_eps = 1e-13 * diag * diag * diag * diag;

    std::vector<Eigen::Vector2d> pts = points;
    double jitter = 1e-9;
    for (int attempt = 0; attempt < 6; ++attempt) {
        bool tie = false;
        auto tris = bowyer_watson(pts, tie_eps, &tie);
        if (!tie && !tris.empty()) return tris;
        if (!tie && tris.empty())
            throw InvalidArgument("delaunay_triangulate: collinear point set");
        // Deterministic jitter to break exact cocircularity.
        if (jittered) *jittered = true;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const double phi = 2.399963229728653 * static_cast<double>(i + 1);  // golden angle
            pts[i] = points[i] + jitter * Eigen::Vector2d(std::cos(phi), std::sin(phi));
        }
        jitter *= 10.0;
    }
    auto tris = bowyer_watson(pts, tie_eps, nullptr);
    if (tris.empty()) throw InvalidArgument("delaunay_triangulate: degenerate point set");
    return tris;
}

// ---------------------------------------------------------------------------
// Reference mesh and piecewise-affine warping.
// ---------------------------------------------------------------------------

namespace {

bool barycentric(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c,
                 double px, double py, double* w0, double* w1, double* w2) {
    const double det = orient2d(a, b, c);
    if (std::abs(det) < 1e-12) return false;
    const Eigen::Vector2d p(px, py);
    const double l0 = orient2d(b, c, p) / det;
    const double l1 = orient2d(c, a, p) / det;
    const double l2 = 1.0 - l0 - l1;
    constexpr double kEps = 1e-9;
    if (l0 < -kEps || l1 < -kEps || l2 < -kEps) return false;
    *w0 = l0;
    *w1 = l1;
    *w2 = l2;
    return true;
}

}  // namespace

ReferenceMesh::ReferenceMesh(FaceShape reference, std::vector<std::array<int, 3>> triangles)
    : reference_(std::move(reference)), triangles_(std::move(triangles)) {
    const std::size_t n = reference_.landmark_count();
    if (n < 3) throw InvalidArgument("ReferenceMesh: need at least 3 landmarks");
    for (const auto& t : triangles_)
        for (int idx : t)
            if (idx < 0 || static_cast<std::size_t>(idx) >= n)
                throw InvalidArgument("ReferenceMesh: triangle index out of range");

    Eigen::Vector2d lo = reference_.point(0), hi = reference_.point(0);
    for (std::size_t l = 1; l < n; ++l) {
        lo = lo.cwiseMin(reference_.point(l));
        hi = hi.cwiseMax(reference_.point(l));
    }
    raster_width_ = static_cast<std::size_t>(std::max(0.0, std::floor(hi.x()))) + 1;
    raster_height_ = static_cast<std::size_t>(std::max(0.0, std::floor(hi.y()))) + 1;

    const int x_min = static_cast<int>(std::ceil(lo.x()));
    const int x_max = static_cast<int>(std::floor(hi.x()));
    const int y_min = static_cast<int>(std::ceil(lo.y()));
    const int y_max = static_cast<int>(std::floor(hi.y()));

    for (int y = y_min; y <= y_max; ++y)
        for (int x = x_min; x <= x_max; ++x)
            for (std::size_t t = 0; t < triangles_.size(); ++t) {
                double w0, w1, w2;
                if (barycentric(reference_.point(triangles_[t][0]),
                                reference_.point(triangles_[t][1]),
                                reference_.point(triangles_[t][2]), static_cast<double>(x),
                                static_cast<double>(y), &w0, &w1, &w2)) {
                    lattice_.push_back({x, y, static_cast<int>(t), w0, w1, w2});
                    break;  // lowest triangle index wins boundary ties
                }
            }
}

ReferenceMesh build_reference_mesh(std::span<const FaceShape> frontal_shapes,
                                   double target_height) {
    if (frontal_shapes.empty())
        throw InvalidArgument("build_reference_mesh: need at least one frontal shape");
    if (target_height <= 1.0) throw InvalidArgument("build_reference_mesh: target height too small");

    FaceShape mean;
    if (frontal_shapes.size() == 1) {
        mean = frontal_shapes[0];
    } else {
        mean = procrustes_align(frontal_shapes).mean;
    }

    const std::size_t n = mean.landmark_count();
    if (n < 3) throw InvalidArgument("build_reference_mesh: need at least 3 landmarks");
    Eigen::Vector2d lo = mean.point(0), hi = mean.point(0);
    for (std::size_t l = 1; l < n; ++l) {
        lo = lo.cwiseMin(mean.point(l));
        hi = hi.cwiseMax(mean.point(l));
    }
    const double height = hi.y() - lo.y();
    if (height <= 0.0) throw InvalidArgument("build_reference_mesh: degenerate (flat) mean shape");
    const double scale = target_height / height;
    for (std::size_t l = 0; l < n; ++l) mean.set_point(l, (mean.point(l) - lo) * scale);

    std::vector<Eigen::Vector2d> pts(n);
    for (std::size_t l = 0; l < n; ++l) pts[l] = mean.point(l);
    auto tris = delaunay_triangulate(pts);
    return ReferenceMesh(std::move(mean), std::move(tris));
}

WarpResult warp_to_reference(const ImageGray& image, const FaceShape& shape,
                             const ReferenceMesh& mesh) {
    if (shape.landmark_count() != mesh.reference().landmark_count())
        throw InvalidArgument("warp_to_reference: landmark count does not match the mesh");

    const auto& tris = mesh.triangles();
    std::vector<bool> degenerate(tris.size(), false);
    std::size_t degenerate_count = 0;
    for (std::size_t t = 0; t < tris.size(); ++t) {
        const double area = 0.5 * std::abs(orient2d(shape.point(tris[t][0]),
                                                    shape.point(tris[t][1]),
                                                    shape.point(tris[t][2])));
        if (area < 1e-9) {
            degenerate[t] = true;
            ++degenerate_count;
        }
    }

    WarpResult out;
    out.degenerate_triangles = degenerate_count;
    out.texture.resize(static_cast<Eigen::Index>(mesh.texture_size()));
    for (std::size_t i = 0; i < mesh.lattice().size(); ++i) {
        const LatticePixel& px = mesh.lattice()[i];
        if (degenerate[static_cast<std::size_t>(px.triangle)]) {
            out.texture[static_cast<Eigen::Index>(i)] = 0.0;
            continue;
        }
        const auto& tri = tris[static_cast<std::size_t>(px.triangle)];
        const Eigen::Vector2d src = px.w0 * shape.point(tri[0]) + px.w1 * shape.point(tri[1]) +
                                    px.w2 * shape.point(tri[2]);
        bool clamped = false;
        out.texture[static_cast<Eigen::Index>(i)] = bilinear_sample(image, src.x(), src.y(), &clamped);
        if (clamped) ++out.clamped_samples;
    }
    return out;
}

ImageGray texture_to_raster(const TextureVector& texture, const ReferenceMesh& mesh,
                            double background) {
    if (static_cast<std::size_t>(texture.size()) != mesh.texture_size())
        throw InvalidArgument("texture_to_raster: texture length does not match the mesh");
    ImageGray raster(mesh.raster_width(), mesh.raster_height(), background);
    for (std::size_t i = 0; i < mesh.lattice().size(); ++i) {
        const LatticePixel& px = mesh.lattice()[i];
        if (px.x >= 0 && px.y >= 0 && static_cast<std::size_t>(px.x) < raster.width &&
            static_cast<std::size_t>(px.y) < raster.height)
            raster(static_cast<std::size_t>(px.x), static_cast<std::size_t>(px.y)) =
                texture[static_cast<Eigen::Index>(i)];
    }
    return raster;
}

ImageGray render_from_reference(const TextureVector& texture, const ReferenceMesh& mesh,
                                const FaceShape& shape, std::size_t width, std::size_t height,
                                double background) {
    if (shape.landmark_count() != mesh.reference().landmark_count())
        throw InvalidArgument("render_from_reference: landmark count does not match the mesh");
    const ImageGray ref_raster = texture_to_raster(texture, mesh, background);
    const auto& tris = mesh.triangles();

    ImageGray canvas(width, height, background);
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x)
            for (std::size_t t = 0; t < tris.size(); ++t) {
                double w0, w1, w2;
                if (!barycentric(shape.point(tris[t][0]), shape.point(tris[t][1]),
                                 shape.point(tris[t][2]), static_cast<double>(x),
                                 static_cast<double>(y), &w0, &w1, &w2))
                    continue;
                const Eigen::Vector2d ref = w0 * mesh.reference().point(tris[t][0]) +
                                            w1 * mesh.reference().point(tris[t][1]) +
                                            w2 * mesh.reference().point(tris[t][2]);
                canvas(x, y) = bilinear_sample(ref_raster, ref.x(), ref.y());
                break;
            }
    return canvas;
}

FaceShape remap_occluded_landmarks(const FaceShape& shape, const std::vector<bool>& visibility,
                                   std::span<const std::size_t> outline) {
    const std::size_t n = shape.landmark_count();
    if (visibility.size() != n)
        throw InvalidArgument("remap_occluded_landmarks: visibility length must equal L");
    if (outline.size() < 2) throw InvalidArgument("remap_occluded_landmarks: empty outline");
    for (std::size_t idx : outline) {
        if (idx >= n) throw InvalidArgument("remap_occluded_landmarks: outline index out of range");
        if (!visibility[idx])
            throw InvalidArgument("remap_occluded_landmarks: outline landmarks must be visible");
    }

    FaceShape out = shape;
    for (std::size_t l = 0; l < n; ++l) {
        if (visibility[l]) continue;
        const double px = shape.x(l);
        const double py = shape.y(l);

        double best_x = 0.0;
        double best_dx = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k + 1 < outline.size(); ++k) {
            const Eigen::Vector2d p0 = shape.point(outline[k]);
            const Eigen::Vector2d p1 = shape.point(outline[k + 1]);
            const double y0 = p0.y(), y1 = p1.y();
            if (py < std::min(y0, y1) || py > std::max(y0, y1)) continue;
            if (y0 == y1) {
                // Horizontal segment at this height: both endpoints are candidates.
                for (const auto& q : {p0, p1}) {
                    const double dx = std::abs(q.x() - px);
                    if (dx < best_dx) {
                        best_dx = dx;
                        best_x = q.x();
                    }
                }
                continue;
            }
            const double t = (py - y0) / (y1 - y0);
            const double xi = p0.x() + t * (p1.x() - p0.x());
            const double dx = std::abs(xi - px);
            if (dx < best_dx) {
                best_dx = dx;
                best_x = xi;
            }
        }

        if (std::isfinite(best_dx)) {
            out.set_point(l, {best_x, py});
        } else {
            double best_d = std::numeric_limits<double>::infinity();
            Eigen::Vector2d best = shape.point(outline[0]);
            for (std::size_t idx : outline) {
                const double d = (shape.point(idx) - Eigen::Vector2d(px, py)).norm();
                if (d < best_d) {
                    best_d = d;
                    best = shape.point(idx);
                }
            }
            out.set_point(l, best);
        }
    }
    return out;
}

}  // namespace utaam
