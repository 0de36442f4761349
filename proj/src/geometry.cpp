#include "ocgraf/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "ocgraf/synthdata.hpp"

namespace ocgraf::geom {

namespace {

constexpr double kExtentFloor = 1e-6;

int64_t cell_key(int ix, int iy, int iz) {
    // 21 bits per axis, offset to keep indices positive
    const int64_t off = 1 << 20;
    return ((ix + off) << 42) | ((iy + off) << 21) | (iz + off);
}

}  // namespace

bool OrientedBox::contains(const Vector3d& p, double tol) const {
    Vector3d local = R.transpose() * (p - center);
    return std::abs(local.x()) <= extents.x() / 2 + tol &&
           std::abs(local.y()) <= extents.y() / 2 + tol &&
           std::abs(local.z()) <= extents.z() / 2 + tol;
}

std::array<Vector3d, 8> OrientedBox::corners() const {
    std::array<Vector3d, 8> out;
    int i = 0;
    for (int sx : {-1, 1})
        for (int sy : {-1, 1})
            for (int sz : {-1, 1})
                out[i++] = center + R * Vector3d(sx * extents.x() / 2, sy * extents.y() / 2,
                                                 sz * extents.z() / 2);
    return out;
}

PointCloud backproject(const synth::RenderedView& view, int stride,
                       std::vector<int>* pixel_indices) {
    if (stride < 1) throw Error("backproject: stride must be >= 1");
    const auto& cam = view.camera;
    PointCloud out;
    if (pixel_indices) pixel_indices->clear();
    const bool has_rgb = !view.rgb.empty();
    for (int v = 0; v < cam.height; v += stride) {
        for (int u = 0; u < cam.width; u += stride) {
            const int idx = v * cam.width + u;
            const double d = view.depth[idx];
            if (!(d > 0.0)) continue;
            Vector3d pc((u - cam.cx) / cam.fx * d, (v - cam.cy) / cam.fy * d, d);
            out.positions.push_back(cam.R * pc + cam.t);
            if (has_rgb)
                out.colors.emplace_back(view.rgb[3 * idx], view.rgb[3 * idx + 1],
                                        view.rgb[3 * idx + 2]);
            if (pixel_indices) pixel_indices->push_back(idx);
        }
    }
    return out;
}

std::vector<uint8_t> dbscan_filter(const PointCloud& cloud, double eps, int min_pts) {
    if (eps <= 0) throw Error("dbscan_filter: eps must be > 0");
    if (min_pts < 1) throw Error("dbscan_filter: min_pts must be >= 1");
    const int n = cloud.size();
    std::vector<uint8_t> mask(n, 0);
    if (n == 0) return mask;

    Vector3d lo = cloud.positions[0];
    for (const auto& p : cloud.positions) lo = lo.cwiseMin(p);
    std::unordered_map<int64_t, std::vector<int>> grid;
    auto cell_of = [&](const Vector3d& p) {
        return std::array<int, 3>{static_cast<int>(std::floor((p.x() - lo.x()) / eps)),
                                  static_cast<int>(std::floor((p.y() - lo.y()) / eps)),
                                  static_cast<int>(std::floor((p.z() - lo.z()) / eps))};
    };
    for (int i = 0; i < n; ++i) {
        auto c = cell_of(cloud.positions[i]);
        grid[cell_key(c[0], c[1], c[2])].push_back(i);
    }

    const double eps2 = eps * eps;
    auto for_each_neighbor = [&](int i, auto&& fn) {
        auto c = cell_of(cloud.positions[i]);
        for (int dx = -1; dx <= 1; ++dx)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dz = -1; dz <= 1; ++dz) {
                    auto it = grid.find(cell_key(c[0] + dx, c[1] + dy, c[2] + dz));
                    if (it == grid.end()) continue;
                    for (int j : it->second)
                        if ((cloud.positions[i] - cloud.positions[j]).squaredNorm() <= eps2) fn(j);
                }
    };

    // Core points, then border points (within eps of a core). Cluster ids are
    // irrelevant for filtering, which keeps the result permutation stable.
    std::vector<uint8_t> core(n, 0);
    for (int i = 0; i < n; ++i) {
        int count = 0;
        for_each_neighbor(i, [&](int) { ++count; });
        core[i] = count >= min_pts;
    }
    for (int i = 0; i < n; ++i) {
        if (core[i]) {
            mask[i] = 1;
            continue;
        }
        bool near_core = false;
        for_each_neighbor(i, [&](int j) { near_core = near_core || core[j]; });
        mask[i] = near_core;
    }
    return mask;
}

DownsampleResult downsample(const PointCloud& cloud, int n, uint64_t seed) {
    if (n < 1) throw Error("downsample: n must be >= 1");
    const int m = cloud.size();
    if (m == 0) throw Error("downsample: empty input cloud");

    Rng rng = rng_for(seed, "downsample");
    std::vector<int> picked;
    picked.reserve(n);
    if (m <= n) {
        for (int i = 0; i < m; ++i) picked.push_back(i);
        std::uniform_int_distribution<int> uni(0, m - 1);
        while (static_cast<int>(picked.size()) < n) picked.push_back(uni(rng));
    } else {
        std::uniform_int_distribution<int> uni(0, m - 1);
        int current = uni(rng);
        picked.push_back(current);
        std::vector<double> min_d2(m, std::numeric_limits<double>::infinity());
        for (int it = 1; it < n; ++it) {
            int best = -1;
            double best_d2 = -1.0;
            for (int i = 0; i < m; ++i) {
                const double d2 = (cloud.positions[i] - cloud.positions[current]).squaredNorm();
                if (d2 < min_d2[i]) min_d2[i] = d2;
                if (min_d2[i] > best_d2) {
                    best_d2 = min_d2[i];
                    best = i;
                }
            }
            current = best;
            picked.push_back(current);
        }
    }

    DownsampleResult out;
    out.indices = picked;
    out.cloud.positions.reserve(n);
    for (int i : picked) out.cloud.positions.push_back(cloud.positions[i]);
    if (cloud.has_colors()) {
        out.cloud.colors.reserve(n);
        for (int i : picked) out.cloud.colors.push_back(cloud.colors[i]);
    }
    return out;
}

Plane ransac_plane(const PointCloud& cloud, int iters, double dist_thresh, uint64_t seed) {
    const int n = cloud.size();
    if (n < 3) throw Error("ransac_plane: need at least 3 points");
    if (iters < 1) throw Error("ransac_plane: iters must be >= 1");

    Rng rng = rng_for(seed, "ransac_plane");
    std::uniform_int_distribution<int> uni(0, n - 1);

    double scale = 0.0;
    for (const auto& p : cloud.positions) scale = std::max(scale, p.norm());
    const double degenerate_eps = std::max(1e-12, 1e-12 * scale);

    int best_count = -1;
    double best_mean = std::numeric_limits<double>::infinity();
    Vector3d best_n = Vector3d::UnitZ();
    double best_o = 0.0;
    bool found = false;

    for (int it = 0; it < iters; ++it) {
        int a = uni(rng), b = uni(rng), c = uni(rng);
        if (a == b || b == c || a == c) continue;
        Vector3d nrm = (cloud.positions[b] - cloud.positions[a])
                           .cross(cloud.positions[c] - cloud.positions[a]);
        const double nn = nrm.norm();
        if (nn < degenerate_eps) continue;
        nrm /= nn;
        const double off = nrm.dot(cloud.positions[a]);
        int count = 0;
        double sum = 0.0;
        for (const auto& p : cloud.positions) {
            const double d = std::abs(nrm.dot(p) - off);
            if (d <= dist_thresh) {
                ++count;
                sum += d;
            }
        }
        const double mean = count > 0 ? sum / count : std::numeric_limits<double>::infinity();
        if (count > best_count || (count == best_count && mean < best_mean)) {
            best_count = count;
            best_mean = mean;
            best_n = nrm;
            best_o = off;
            found = true;
        }
    }
    if (!found) throw Error("ransac_plane: all sampled triples were degenerate");

    Plane plane;
    plane.normal = best_n;
    plane.offset = best_o;
    plane.inlier_mask.resize(n);
    for (int i = 0; i < n; ++i)
        plane.inlier_mask[i] = std::abs(best_n.dot(cloud.positions[i]) - best_o) <= dist_thresh;
    return plane;
}

// ---------------------------------------------------------------------------
// Convex hull (quickhull, triangulated faces)

namespace {

struct HullFace {
    int a, b, c;
    Vector3d n;
    double d;
    std::vector<int> outside;
    bool alive = true;
};

double point_face_dist(const HullFace& f, const Vector3d& p) { return f.n.dot(p) - f.d; }

}  // namespace

std::vector<std::array<int, 3>> convex_hull_faces(const std::vector<Vector3d>& points) {
    const int n = static_cast<int>(points.size());
    std::vector<std::array<int, 3>> result;
    if (n < 4) return result;

    Vector3d lo = points[0], hi = points[0];
    for (const auto& p : points) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const double diag = (hi - lo).norm();
    if (diag <= 0.0) return result;
    const double eps = 1e-10 * diag;

    // Initial simplex from extreme points.
    std::array<int, 6> ext{};
    for (int axis = 0; axis < 3; ++axis) {
        int imin = 0, imax = 0;
        for (int i = 1; i < n; ++i) {
            if (points[i][axis] < points[imin][axis]) imin = i;
            if (points[i][axis] > points[imax][axis]) imax = i;
        }
        ext[2 * axis] = imin;
        ext[2 * axis + 1] = imax;
    }
    int v0 = -1, v1 = -1;
    double best = -1.0;
    for (int i = 0; i < 6; ++i)
        for (int j = i + 1; j < 6; ++j) {
            const double d = (points[ext[i]] - points[ext[j]]).squaredNorm();
            if (d > best) {
                best = d;
                v0 = ext[i];
                v1 = ext[j];
            }
        }
    if (best < eps * eps) return result;

    const Vector3d dir = (points[v1] - points[v0]).normalized();
    int v2 = -1;
    best = -1.0;
    for (int i = 0; i < n; ++i) {
        const Vector3d rel = points[i] - points[v0];
        const double d = (rel - rel.dot(dir) * dir).squaredNorm();
        if (d > best) {
            best = d;
            v2 = i;
        }
    }
    if (best < eps * eps) return result;

    Vector3d n012 = (points[v1] - points[v0]).cross(points[v2] - points[v0]).normalized();
    int v3 = -1;
    best = -1.0;
    for (int i = 0; i < n; ++i) {
        const double d = std::abs(n012.dot(points[i] - points[v0]));
        if (d > best) {
            best = d;
            v3 = i;
        }
    }
    if (best < eps) return result;

    const Vector3d interior =
        (points[v0] + points[v1] + points[v2] + points[v3]) / 4.0;

    std::vector<HullFace> faces;
    auto add_face = [&](int a, int b, int c, const Vector3d* fallback_n) {
        HullFace f;
        f.a = a;
        f.b = b;
        f.c = c;
        Vector3d nrm = (points[b] - points[a]).cross(points[c] - points[a]);
        if (nrm.norm() < 1e-14 * diag * diag && fallback_n) {
            f.n = *fallback_n;
        } else {
            f.n = nrm.normalized();
        }
        f.d = f.n.dot(points[a]);
        if (point_face_dist(f, interior) > 0) {
            std::swap(f.b, f.c);
            f.n = -f.n;
            f.d = -f.d;
        }
        faces.push_back(std::move(f));
        return static_cast<int>(faces.size()) - 1;
    };

    add_face(v0, v1, v2, nullptr);
    add_face(v0, v1, v3, nullptr);
    add_face(v0, v2, v3, nullptr);
    add_face(v1, v2, v3, nullptr);

    for (int i = 0; i < n; ++i) {
        if (i == v0 || i == v1 || i == v2 || i == v3) continue;
        for (auto& f : faces) {
            if (point_face_dist(f, points[i]) > eps) {
                f.outside.push_back(i);
                break;
            }
        }
    }

    for (int iter = 0; iter < 8 * n + 64; ++iter) {
        int fi = -1;
        for (int i = 0; i < static_cast<int>(faces.size()); ++i)
            if (faces[i].alive && !faces[i].outside.empty()) {
                fi = i;
                break;
            }
        if (fi < 0) break;

        int apex = -1;
        double apex_d = -1.0;
        for (int i : faces[fi].outside) {
            const double d = point_face_dist(faces[fi], points[i]);
            if (d > apex_d) {
                apex_d = d;
                apex = i;
            }
        }

        std::vector<int> visible;
        for (int i = 0; i < static_cast<int>(faces.size()); ++i)
            if (faces[i].alive && point_face_dist(faces[i], points[apex]) > eps)
                visible.push_back(i);
        if (visible.empty()) {  // numeric corner: drop the point
            auto& out = faces[fi].outside;
            out.erase(std::remove(out.begin(), out.end(), apex), out.end());
            continue;
        }

        // Horizon = directed edges of visible faces whose twin is not visible.
        std::unordered_map<int64_t, int> edge_owner;
        auto ekey = [](int u, int v) { return (static_cast<int64_t>(u) << 32) | uint32_t(v); };
        for (int i : visible) {
            const auto& f = faces[i];
            edge_owner[ekey(f.a, f.b)] = i;
            edge_owner[ekey(f.b, f.c)] = i;
            edge_owner[ekey(f.c, f.a)] = i;
        }
        std::vector<std::pair<int, int>> horizon;
        for (const auto& [key, owner] : edge_owner) {
            const int u = static_cast<int>(key >> 32);
            const int v = static_cast<int>(key & 0xffffffff);
            if (!edge_owner.count(ekey(v, u))) horizon.emplace_back(u, v);
        }

        std::vector<int> orphans;
        for (int i : visible) {
            faces[i].alive = false;
            for (int p : faces[i].outside)
                if (p != apex) orphans.push_back(p);
            faces[i].outside.clear();
        }

        std::vector<int> fresh;
        for (const auto& [u, v] : horizon) {
            const Vector3d fb = faces[visible[0]].n;
            fresh.push_back(add_face(u, v, apex, &fb));
        }
        for (int p : orphans) {
            for (int i : fresh) {
                if (point_face_dist(faces[i], points[p]) > eps) {
                    faces[i].outside.push_back(p);
                    break;
                }
            }
        }
    }

    for (const auto& f : faces)
        if (f.alive) result.push_back({f.a, f.b, f.c});
    return result;
}

// ---------------------------------------------------------------------------
// Minimum-volume oriented box

namespace {

using Eigen::Vector2d;

std::vector<Vector2d> hull_2d(std::vector<Vector2d> pts) {
    std::sort(pts.begin(), pts.end(), [](const Vector2d& a, const Vector2d& b) {
        return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
    });
    pts.erase(std::unique(pts.begin(), pts.end(),
                          [](const Vector2d& a, const Vector2d& b) { return a == b; }),
              pts.end());
    const int n = static_cast<int>(pts.size());
    if (n <= 2) return pts;
    auto cross = [](const Vector2d& o, const Vector2d& a, const Vector2d& b) {
        return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
    };
    std::vector<Vector2d> h(2 * n);
    int k = 0;
    for (int i = 0; i < n; ++i) {
        while (k >= 2 && cross(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
        h[k++] = pts[i];
    }
    const int lower = k + 1;
    for (int i = n - 2; i >= 0; --i) {
        while (k >= lower && cross(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
        h[k++] = pts[i];
    }
    h.resize(k - 1);
    return h;
}

// Rotating-calipers result: the minimum-area rectangle over a 2D point set is
// aligned with some hull edge.
double min_area_rect_angle(const std::vector<Vector2d>& pts) {
    auto h = hull_2d(pts);
    if (h.size() <= 1) return 0.0;
    if (h.size() == 2) {
        const Vector2d e = h[1] - h[0];
        return std::atan2(e.y(), e.x());
    }
    double best_area = std::numeric_limits<double>::infinity();
    double best_theta = 0.0;
    for (size_t i = 0; i < h.size(); ++i) {
        const Vector2d e = h[(i + 1) % h.size()] - h[i];
        const double theta = std::atan2(e.y(), e.x());
        const double ct = std::cos(theta), st = std::sin(theta);
        double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
        double ymin = xmin, ymax = -xmin;
        for (const auto& p : h) {
            const double x = ct * p.x() + st * p.y();
            const double y = -st * p.x() + ct * p.y();
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
        const double area = (xmax - xmin) * (ymax - ymin);
        if (area < best_area) {
            best_area = area;
            best_theta = theta;
        }
    }
    return best_theta;
}

double box_volume_for_rotation(const std::vector<Vector3d>& points, const Matrix3d& R,
                               Vector3d* lo_out = nullptr, Vector3d* hi_out = nullptr) {
    Vector3d lo(std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                std::numeric_limits<double>::infinity());
    Vector3d hi = -lo;
    for (const auto& p : points) {
        const Vector3d q = R.transpose() * p;
        lo = lo.cwiseMin(q);
        hi = hi.cwiseMax(q);
    }
    if (lo_out) *lo_out = lo;
    if (hi_out) *hi_out = hi;
    const Vector3d e = (hi - lo).cwiseMax(kExtentFloor);
    return e.x() * e.y() * e.z();
}

Matrix3d orthonormal_basis_from_normal(const Vector3d& nrm) {
    Vector3d n = nrm.normalized();
    Vector3d ref = std::abs(n.z()) < 0.9 ? Vector3d::UnitZ() : Vector3d::UnitX();
    const Vector3d u = ref.cross(n).normalized();
    const Vector3d v = n.cross(u);
    Matrix3d B;
    B.col(0) = u;
    B.col(1) = v;
    B.col(2) = n;
    return B;
}

Matrix3d face_candidate(const std::vector<Vector3d>& points, const Vector3d& normal) {
    const Matrix3d B = orthonormal_basis_from_normal(normal);
    std::vector<Vector2d> proj;
    proj.reserve(points.size());
    for (const auto& p : points) proj.emplace_back(B.col(0).dot(p), B.col(1).dot(p));
    const double theta = min_area_rect_angle(proj);
    const double ct = std::cos(theta), st = std::sin(theta);
    Matrix3d R;
    R.col(0) = ct * B.col(0) + st * B.col(1);
    R.col(1) = -st * B.col(0) + ct * B.col(1);
    R.col(2) = B.col(2);
    return R;
}

}  // namespace

OrientedBox min_volume_obb(const std::vector<Vector3d>& points) {
    const int n = static_cast<int>(points.size());
    if (n == 0) throw Error("min_volume_obb: empty point set");

    Vector3d mean = Vector3d::Zero();
    for (const auto& p : points) mean += p;
    mean /= n;
    Matrix3d cov = Matrix3d::Zero();
    for (const auto& p : points) cov += (p - mean) * (p - mean).transpose();
    cov /= n;
    Eigen::SelfAdjointEigenSolver<Matrix3d> eig(cov);
    const Vector3d evals = eig.eigenvalues().cwiseMax(0.0);
    const double sigma_max = std::sqrt(evals.maxCoeff());

    std::vector<Matrix3d> candidates;
    candidates.push_back(Matrix3d::Identity());
    {
        Matrix3d pca = eig.eigenvectors();
        if (pca.determinant() < 0) pca.col(0) = -pca.col(0);
        candidates.push_back(pca);
    }

    const double degen_eps = std::max(1e-12, 1e-9 * sigma_max);
    const bool rank3 = std::sqrt(evals.minCoeff()) > degen_eps && sigma_max > 0;

    if (!rank3) {
        // Coplanar / collinear / repeated points: caliper the dominant plane.
        if (sigma_max <= 1e-15) {
            OrientedBox box;
            box.center = points[0];
            box.extents = Vector3d::Constant(kExtentFloor);
            return box;
        }
        const Vector3d normal = eig.eigenvectors().col(0);  // smallest eigenvalue
        candidates.push_back(face_candidate(points, normal));
    } else {
        auto faces = convex_hull_faces(points);
        std::vector<Vector3d> normals;
        for (const auto& f : faces) {
            Vector3d nrm =
                (points[f[1]] - points[f[0]]).cross(points[f[2]] - points[f[0]]);
            if (nrm.norm() < 1e-18) continue;
            normals.push_back(nrm.normalized());
        }
        // Cap the candidate count; near-duplicate normals add nothing.
        const size_t max_faces = 200;
        const size_t stride = std::max<size_t>(1, normals.size() / max_faces);
        for (size_t i = 0; i < normals.size(); i += stride)
            candidates.push_back(face_candidate(points, normals[i]));
    }

    Matrix3d best_R = candidates[0];
    double best_vol = box_volume_for_rotation(points, best_R);
    for (const auto& R : candidates) {
        const double vol = box_volume_for_rotation(points, R);
        if (vol < best_vol) {
            best_vol = vol;
            best_R = R;
        }
    }

    // Local refinement: coordinate descent on Euler perturbations.
    for (double step = 5.0 * M_PI / 180.0; step >= 0.1 * M_PI / 180.0 - 1e-12; step /= 2) {
        bool improved = true;
        int guard = 0;
        while (improved && guard++ < 64) {
            improved = false;
            for (int axis = 0; axis < 3; ++axis) {
                for (double sign : {1.0, -1.0}) {
                    const Matrix3d Rp =
                        best_R * Eigen::AngleAxisd(sign * step, Vector3d::Unit(axis)).toRotationMatrix();
                    const double vol = box_volume_for_rotation(points, Rp);
                    if (vol < best_vol * (1 - 1e-12)) {
                        best_vol = vol;
                        best_R = Rp;
                        improved = true;
                    }
                }
            }
        }
    }

    Vector3d lo, hi;
    box_volume_for_rotation(points, best_R, &lo, &hi);
    OrientedBox box;
    box.R = best_R;
    box.center = best_R * ((lo + hi) / 2);
    box.extents = (hi - lo).cwiseMax(kExtentFloor);
    return box;
}

// ---------------------------------------------------------------------------

Vector3d canonical_transform(const Vector3d& p, const ObjectPose& pose) {
    return (2.0 / pose.b) * (pose.R.transpose() * (p - pose.T));
}

Vector3d world_transform(const Vector3d& p_can, const ObjectPose& pose) {
    return pose.R * (pose.b / 2.0 * p_can) + pose.T;
}

PointCloud canonical_transform(const PointCloud& cloud, const ObjectPose& pose) {
    PointCloud out;
    out.positions.reserve(cloud.positions.size());
    for (const auto& p : cloud.positions) out.positions.push_back(canonical_transform(p, pose));
    out.colors = cloud.colors;
    return out;
}

VoxelGrid voxel_centers(const ObjectPose& pose, int S) {
    if (S < 1) throw Error("voxel_centers: S must be >= 1");
    VoxelGrid grid;
    grid.S = S;
    grid.canonical.reserve(S * S * S);
    grid.world.reserve(S * S * S);
    for (int ix = 0; ix < S; ++ix)
        for (int iy = 0; iy < S; ++iy)
            for (int iz = 0; iz < S; ++iz) {
                const Vector3d c(-1.0 + (2.0 * ix + 1.0) / S, -1.0 + (2.0 * iy + 1.0) / S,
                                 -1.0 + (2.0 * iz + 1.0) / S);
                grid.canonical.push_back(c);
                grid.world.push_back(world_transform(c, pose));
            }
    return grid;
}

double trilinear_interp(const std::vector<double>& grid, int S, const Vector3d& query) {
    if (S < 1 || static_cast<int>(grid.size()) != S * S * S)
        throw Error("trilinear_interp: grid size must be S^3");
    if (S == 1) return grid[0];

    auto at = [&](int ix, int iy, int iz) { return grid[(ix * S + iy) * S + iz]; };

    // Cell centers: c_i = -1 + (2i+1)/S; continuous index t = (q+1)*S/2 - 1/2.
    double t[3], f[3];
    int i0[3];
    for (int a = 0; a < 3; ++a) {
        t[a] = (query[a] + 1.0) * S / 2.0 - 0.5;
        t[a] = std::clamp(t[a], 0.0, static_cast<double>(S - 1));
        i0[a] = std::min(static_cast<int>(std::floor(t[a])), S - 2);
        f[a] = t[a] - i0[a];
    }
    double out = 0.0;
    for (int dx = 0; dx <= 1; ++dx)
        for (int dy = 0; dy <= 1; ++dy)
            for (int dz = 0; dz <= 1; ++dz) {
                const double w = (dx ? f[0] : 1 - f[0]) * (dy ? f[1] : 1 - f[1]) *
                                 (dz ? f[2] : 1 - f[2]);
                out += w * at(i0[0] + dx, i0[1] + dy, i0[2] + dz);
            }
    return out;
}

double directed_hausdorff(const std::vector<Vector3d>& A, const std::vector<Vector3d>& B) {
    if (A.empty() || B.empty()) throw Error("directed_hausdorff: empty point set");

    const size_t pairs = A.size() * B.size();
    double sum = 0.0;
    if (pairs <= 1000000) {
        for (const auto& a : A) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& b : B) best = std::min(best, (a - b).squaredNorm());
            sum += std::sqrt(best);
        }
        return sum / A.size();
    }

    Vector3d lo = B[0], hi = B[0];
    for (const auto& b : B) {
        lo = lo.cwiseMin(b);
        hi = hi.cwiseMax(b);
    }
    const double h = std::max((hi - lo).norm() / 64.0, 1e-9);
    std::unordered_map<int64_t, std::vector<int>> grid;
    auto cell_of = [&](const Vector3d& p) {
        return std::array<int, 3>{static_cast<int>(std::floor((p.x() - lo.x()) / h)),
                                  static_cast<int>(std::floor((p.y() - lo.y()) / h)),
                                  static_cast<int>(std::floor((p.z() - lo.z()) / h))};
    };
    for (int i = 0; i < static_cast<int>(B.size()); ++i) {
        auto c = cell_of(B[i]);
        grid[cell_key(c[0], c[1], c[2])].push_back(i);
    }

    for (const auto& a : A) {
        auto c = cell_of(a);
        double best2 = std::numeric_limits<double>::infinity();
        for (int r = 0;; ++r) {
            if (r > 0 && best2 <= (r - 1.0) * h * ((r - 1.0) * h)) break;
            bool any_cell = false;
            for (int dx = -r; dx <= r; ++dx)
                for (int dy = -r; dy <= r; ++dy)
                    for (int dz = -r; dz <= r; ++dz) {
                        if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != r) continue;
                        auto it = grid.find(cell_key(c[0] + dx, c[1] + dy, c[2] + dz));
                        if (it == grid.end()) continue;
                        any_cell = true;
                        for (int i : it->second)
                            best2 = std::min(best2, (a - B[i]).squaredNorm());
                    }
            // Expand until a hit exists and the ring bound exceeds it.
            if (r > 128 && !any_cell && best2 == std::numeric_limits<double>::infinity()) {
                for (const auto& b : B) best2 = std::min(best2, (a - b).squaredNorm());
                break;
            }
        }
        sum += std::sqrt(best2);
    }
    return sum / A.size();
}

Matrix3d euler_zyx(double az, double ay, double ax) {
    return (Eigen::AngleAxisd(az, Vector3d::UnitZ()) * Eigen::AngleAxisd(ay, Vector3d::UnitY()) *
            Eigen::AngleAxisd(ax, Vector3d::UnitX()))
        .toRotationMatrix();
}

Matrix3d random_rotation(Rng& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::Quaterniond q(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
    q.normalize();
    return q.toRotationMatrix();
}

}  // namespace ocgraf::geom
