#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <vector>

#include "ocgraf/common.hpp"

namespace ocgraf::synth {
struct RenderedView;
}

namespace ocgraf::geom {

using Eigen::Matrix3d;
using Eigen::Vector3d;

struct PointCloud {
    std::vector<Vector3d> positions;
    std::vector<Vector3d> colors;  // empty or length-matched, values in [0,1]

    int size() const { return static_cast<int>(positions.size()); }
    bool has_colors() const { return !colors.empty(); }
};

// Rigid pose plus isotropic box scale b. Canonical coordinates are
// p_can = (2/b) R^T (p - T), so an object of extent b maps into [-1,1]^3.
struct ObjectPose {
    Matrix3d R = Matrix3d::Identity();
    Vector3d T = Vector3d::Zero();
    double b = 1.0;
};

struct OrientedBox {
    Matrix3d R = Matrix3d::Identity();
    Vector3d center = Vector3d::Zero();
    Vector3d extents = Vector3d::Ones();  // full side lengths

    double volume() const { return extents.x() * extents.y() * extents.z(); }
    bool contains(const Vector3d& p, double tol = 1e-9) const;
    std::array<Vector3d, 8> corners() const;
};

struct Plane {
    Vector3d normal = Vector3d::UnitZ();  // unit length
    double offset = 0.0;                  // n . x = offset
    std::vector<uint8_t> inlier_mask;

    double distance(const Vector3d& p) const { return std::abs(normal.dot(p) - offset); }
};

struct DownsampleResult {
    PointCloud cloud;
    std::vector<int> indices;  // row in the input cloud each output point came from
};

struct VoxelGrid {
    int S = 0;
    std::vector<Vector3d> canonical;  // S^3 cell centers over [-1,1]^3, z fastest
    std::vector<Vector3d> world;
};

PointCloud backproject(const synth::RenderedView& view, int stride = 1,
                       std::vector<int>* pixel_indices = nullptr);

// True for points that belong to some DBSCAN cluster (core or border), false
// for noise. Neighborhood counts include the point itself.
std::vector<uint8_t> dbscan_filter(const PointCloud& cloud, double eps, int min_pts);

// Farthest-point sampling to exactly n points (seeded start). Inputs smaller
// than n are padded by seeded resampling with replacement.
DownsampleResult downsample(const PointCloud& cloud, int n, uint64_t seed);

Plane ransac_plane(const PointCloud& cloud, int iters, double dist_thresh, uint64_t seed);

// Approximate minimum-volume oriented bounding box: convex hull face normals
// + rotating-calipers 2D rectangles, then coordinate-descent rotation
// refinement (5 deg halving to 0.1 deg). Degenerate inputs get extents
// floored at 1e-6 instead of an error.
OrientedBox min_volume_obb(const std::vector<Vector3d>& points);

Vector3d canonical_transform(const Vector3d& p, const ObjectPose& pose);
Vector3d world_transform(const Vector3d& p_can, const ObjectPose& pose);
PointCloud canonical_transform(const PointCloud& cloud, const ObjectPose& pose);

VoxelGrid voxel_centers(const ObjectPose& pose, int S);

// grid holds S^3 values at the voxel_centers layout ((ix*S+iy)*S+iz).
// Queries are clamped to the cell-center hull.
double trilinear_interp(const std::vector<double>& grid, int S, const Vector3d& query);

// Mean over a in A of the distance to the nearest b in B. Brute force up to
// |A||B| = 1e6 pairs, grid-accelerated above with identical results.
double directed_hausdorff(const std::vector<Vector3d>& A, const std::vector<Vector3d>& B);

// Triangulated 3D convex hull (indices into `points`). Degenerate inputs
// (rank < 3) yield an empty face list.
std::vector<std::array<int, 3>> convex_hull_faces(const std::vector<Vector3d>& points);

Matrix3d euler_zyx(double az, double ay, double ax);
Matrix3d random_rotation(Rng& rng);

}  // namespace ocgraf::geom
