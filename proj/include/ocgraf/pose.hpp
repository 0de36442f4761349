#pragma once

#include <functional>

#include "ocgraf/ad.hpp"
#include "ocgraf/geometry.hpp"

namespace ocgraf::pose {

using geom::ObjectPose;
using geom::OrientedBox;
using geom::PointCloud;
using geom::Vector3d;

struct PoseOptions {
    double b_init = 0.5;      // stage-1 canonical scale
    int S = 16;               // completion voxels per axis
    double phi_threshold = 0.5;
    double drop_frac = 0.0;   // fraction of observed points dropped in stage 2
    bool use_completion = true;
    uint64_t seed = 0;
};

struct ObjectState {
    ObjectPose pose;        // stage-2 estimate (box rotation/center, b = max extent)
    ObjectPose shape_pose;  // stage-1 frame the shape embedding lives in
    OrientedBox box;        // the fitted minimum-volume box
    PointCloud P_obs;       // observed world points
    PointCloud P_comp;      // completion points, world
    PointCloud P_can;       // observed points in the stage-2 canonical frame
    ad::Tensor shape_embedding;  // 1xZ
    ad::Tensor z_mean, z_log_std;
    int mask_index = -1;
    int seed_index = -1;
};

// Model hooks so the two-stage flow stays testable without trained fields.
struct PoseCallbacks {
    // Shape embedding of the stage-1 canonical cloud.
    std::function<ad::Tensor(const PointCloud& P_can, const ObjectPose& pose)> encode_shape;
    // Occupied voxel centers (world) for an embedding in the given frame.
    std::function<PointCloud(const ad::Tensor& e, const ObjectPose& pose)> complete_shape;
};

// Stage 1: canonical transform with R=I, T=seed, b=b_init; encode; complete.
// Stage 2: minimum-volume box over (retained observed points + completion),
// pose from the box, canonical cloud recomputed. Empty completions degrade to
// the observation-only box.
ObjectState estimate_pose(const PointCloud& P_obs, const Vector3d& seed_position,
                          const PoseOptions& opt, const PoseCallbacks& callbacks);

// Canonical points clamped to [-1,1]^3 for the encoders.
std::vector<Vector3d> clamped_canonical(const PointCloud& cloud, const ObjectPose& pose);

}  // namespace ocgraf::pose
