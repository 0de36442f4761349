#include "ocgraf/pose.hpp"

#include <algorithm>

namespace ocgraf::pose {

std::vector<Vector3d> clamped_canonical(const PointCloud& cloud, const ObjectPose& pose) {
    std::vector<Vector3d> out;
    out.reserve(cloud.positions.size());
    for (const auto& p : cloud.positions)
        out.push_back(geom::canonical_transform(p, pose).cwiseMax(-1.0).cwiseMin(1.0));
    return out;
}

ObjectState estimate_pose(const PointCloud& P_obs, const Vector3d& seed_position,
                          const PoseOptions& opt, const PoseCallbacks& callbacks) {
    if (P_obs.positions.empty()) throw Error("estimate_pose: empty observed cloud");

    ObjectState state;
    state.P_obs = P_obs;

    // Stage 1: identity rotation, seed translation, generous scale.
    state.shape_pose.R = geom::Matrix3d::Identity();
    state.shape_pose.T = seed_position;
    state.shape_pose.b = opt.b_init;

    if (callbacks.encode_shape)
        state.shape_embedding = callbacks.encode_shape(P_obs, state.shape_pose);
    if (opt.use_completion && callbacks.complete_shape && !state.shape_embedding.empty())
        state.P_comp = callbacks.complete_shape(state.shape_embedding, state.shape_pose);

    // Stage 2: drop a fraction of the observations, box the rest plus the
    // completion. With nothing left we fall back to the full observation.
    std::vector<Vector3d> box_points;
    if (opt.drop_frac > 0.0) {
        Rng rng = rng_for(opt.seed, "pose_drop");
        std::uniform_real_distribution<double> uni01(0.0, 1.0);
        for (const auto& p : P_obs.positions)
            if (uni01(rng) >= opt.drop_frac) box_points.push_back(p);
    } else {
        box_points = P_obs.positions;
    }
    box_points.insert(box_points.end(), state.P_comp.positions.begin(),
                      state.P_comp.positions.end());
    if (box_points.empty()) box_points = P_obs.positions;

    state.box = geom::min_volume_obb(box_points);
    state.pose.R = state.box.R;
    state.pose.T = state.box.center;
    state.pose.b = state.box.extents.maxCoeff();
    state.P_can = geom::canonical_transform(P_obs, state.pose);
    return state;
}

}  // namespace ocgraf::pose
