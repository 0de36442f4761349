#pragma once

#include "ocgraf/pipeline.hpp"

namespace ocgraf::metrics {

using geom::OrientedBox;
using geom::Vector3d;

struct ReconstructOptions {
    bool fg_only = false;
    double plane_sample_spacing = 0.02;
};

struct Reconstruction {
    geom::PointCloud cloud;
    std::vector<pose::ObjectState> objects;
    std::vector<int> object_gt_ids;  // majority ground-truth instance per object
    double wall_seconds = 0;         // inference time, excluding any rendering
};

Reconstruction reconstruct_scene(pipeline::Models& models, const synth::RenderedView& view,
                                 uint64_t seed, const ReconstructOptions& opt);

struct DhdEval {
    std::vector<double> per_scene;
    double mean = 0, stddev = 0;
    double mean_wall_seconds = 0;
    double scene_diameter = 0;  // mean ground-truth cloud AABB diagonal
};

// A = noiseless multi-view ground-truth cloud, B = single-view reconstruction.
DhdEval eval_reconstruction(pipeline::Models& models,
                            const std::vector<synth::SceneRecord>& test_scenes,
                            const synth::GeneratorConfig& gen_cfg, uint64_t seed, bool fg_only);

// Seeded Monte-Carlo IoU over the union AABB.
double obb_iou_monte_carlo(const OrientedBox& a, const OrientedBox& b, int samples,
                           uint64_t seed);

struct PoseEval {
    double drop_frac = 0;
    bool completion = true;
    double accuracy[3] = {0, 0, 0};  // IoU thresholds 0.3 / 0.5 / 0.7
    double mean_iou = 0;
    int n_objects = 0;
};

PoseEval eval_pose(pipeline::Models& models, const std::vector<synth::SceneRecord>& scenes,
                   double drop_frac, bool completion, uint64_t seed, int mc_samples = 200000);

enum class MatchMetric { Cosine, L2 };

struct MatchResult {
    std::vector<int> assignment;  // per row of a: column in b, or -1
    double accuracy = 0;          // matched id agreements / max(|a|,|b|)
};

// Latents are unit-normalized; optimal assignment via the Hungarian
// algorithm on the pairwise cost matrix.
MatchResult match_objects(const std::vector<std::vector<double>>& latents_a,
                          const std::vector<std::vector<double>>& latents_b, MatchMetric metric,
                          const std::vector<int>& ids_a, const std::vector<int>& ids_b);

// Min-cost assignment of rows to distinct columns (rows <= cols after an
// internal transpose); returns the column per row.
std::vector<int> hungarian_assignment(const std::vector<std::vector<double>>& cost);

struct MatchingEval {
    double accuracy_cosine = 0;
    double accuracy_l2 = 0;
    double random_baseline = 0;  // mean over scenes of 1/n
    bool assignments_identical = true;
    int scene_pairs = 0;
};

// Two viewpoints of each scene act as (current, goal); detected objects are
// matched by latent mean and scored against ground-truth instance ids.
MatchingEval eval_matching(pipeline::Models& models,
                           const std::vector<synth::SceneRecord>& scenes,
                           const synth::GeneratorConfig& gen_cfg, uint64_t seed);

}  // namespace ocgraf::metrics
