#pragma once

#include <optional>

#include "ocgraf/pipeline.hpp"

namespace ocgraf::train {

using geom::Vector3d;

struct LossConfig {
    double sigma_std = 0.1;
    double lambda_sparsity = 0.01;
    int n_r = 1024;
    double learning_rate = 2e-4;
    int steps = 30000;
    int sparsity_probes = 256;
    double empty_margin_vox = 0.5;  // in voxel edges
    bool eta_sampled = false;       // sampled Bernoulli exponent instead of the relaxation
    bool att_stopgrad_masks = false;
    bool att_stopgrad_fields = false;
    double grad_clip = 1.0;
};

struct SamplePoints {
    std::vector<Vector3d> p_surf;
    std::vector<Vector3d> surf_color;
    std::vector<Vector3d> surf_dir;   // unit, camera to surface
    std::vector<int> surf_nearest;    // nearest downsampled point index
    std::vector<Vector3d> p_empty;    // strictly between camera and surface
    std::vector<double> rho_empty;    // 1 / ray length
    std::vector<std::vector<int>> object_empty_voxels;  // aligned with run.objects
};

// N_r surface/empty pairs drawn across all views, plus each object's box
// voxels (S per axis) that some view observes as free space.
SamplePoints sample_points(const std::vector<synth::RenderedView>& views,
                           const pipeline::PipelineRun& run, int n_r, int S,
                           double empty_margin_vox, uint64_t seed);

// Background L_obs gradient gate: 1.0 for surface points on the detected
// plane, 0.0 elsewhere. A failed plane keeps everything and warns.
std::vector<double> constrain_background(const SamplePoints& sample, const geom::Plane& plane,
                                         double dist_thresh);

struct LossBreakdown {
    double obs = 0, empty = 0, shape = 0, att = 0, sparsity = 0, total = 0;
};

struct LossVars {
    ad::Var obs, empty, shape, att, sparsity, total;
};

LossVars build_losses(pipeline::PipelineRun& run, pipeline::Models& models,
                      const SamplePoints& sample, const LossConfig& cfg, uint64_t seed);

LossBreakdown read_breakdown(const ad::Graph& g, const LossVars& vars);

struct StepResult {
    LossBreakdown losses;
    bool applied = true;  // false when a non-finite loss skipped the update
    double wall_ms = 0;
    int n_objects = 0;
};

// One optimizer step on one scene (all views supervise, one seeded view is
// the pipeline input).
StepResult train_step(pipeline::Models& models, const synth::SceneRecord& scene,
                      const pipeline::PreprocessedView* cached_pre, int input_view,
                      const LossConfig& cfg, uint64_t step_seed);

// Owns the per-scene preprocessing cache and the seeded scene/view schedule.
class Trainer {
  public:
    Trainer(pipeline::Models& models, std::vector<synth::SceneRecord> scenes, LossConfig cfg,
            uint64_t seed);
    StepResult step(int64_t step_index);

    const LossConfig& config() const { return cfg_; }
    size_t scene_count() const { return scenes_.size(); }

  private:
    pipeline::Models& models_;
    std::vector<synth::SceneRecord> scenes_;
    std::vector<std::vector<pipeline::PreprocessedView>> pre_cache_;  // [scene][view]
    LossConfig cfg_;
    uint64_t seed_;
};

}  // namespace ocgraf::train
