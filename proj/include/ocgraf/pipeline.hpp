#pragma once

#include <memory>

#include "ocgraf/ad.hpp"
#include "ocgraf/backbone.hpp"
#include "ocgraf/geometry.hpp"
#include "ocgraf/pose.hpp"
#include "ocgraf/radiance.hpp"
#include "ocgraf/segmentation.hpp"
#include "ocgraf/synthdata.hpp"

namespace ocgraf::pipeline {

using geom::Vector3d;

struct ModelConfig {
    nn::BackboneConfig backbone;
    seg::SegmentationConfig segmentation;
    field::FieldConfig field;
    field::EncoderConfig encoder;

    double b_init = 0.5;
    double drop_frac = 0.0;
    bool use_completion = true;

    int backproject_stride = 1;
    double dbscan_eps = 0.01;
    int dbscan_min_pts = 8;
    int ransac_iters = 64;
    double ransac_thresh = 0.008;

    Vector3d scene_center = Vector3d(0.0, 0.0, 0.25);
    double scene_extent = 1.8;

    geom::ObjectPose scene_pose() const {
        geom::ObjectPose pose;
        pose.T = scene_center;
        pose.b = scene_extent;
        return pose;
    }

    // Keeps the cross-module dimensions consistent.
    void finalize() {
        encoder.feat_dim = backbone.feature_dim;
        encoder.latent_dim = field.latent_dim;
    }
};

struct Models {
    ModelConfig cfg;
    ad::ParamStore params;

    explicit Models(ModelConfig config) : cfg(std::move(config)) { cfg.finalize(); }
    void init_params(uint64_t seed);
};

struct PreprocessedView {
    geom::PointCloud downsampled;    // exactly backbone.n_points world points
    std::vector<int32_t> gt_labels;  // gt instance id per downsampled point
    geom::Plane plane;               // dominant plane on the downsampled cloud
    nn::ScenePlans plans;
};

PreprocessedView preprocess_view(const synth::RenderedView& view, const ModelConfig& cfg,
                                 uint64_t seed);

struct ObjectRun {
    pose::ObjectState state;
    ad::Var e;                      // shape embedding (graph)
    field::ObjectLatent z;
    field::PlaneSet shape_planes;   // conditioned on e
    field::PlaneSet object_planes;  // conditioned on z (sample in training, mean at test)
};

// One full single-view forward pass. The graph owns every Var; keep the run
// alive while they are used.
struct PipelineRun {
    std::unique_ptr<ad::Graph> graph;
    PreprocessedView pre;
    nn::FeatureMaps fm;
    seg::MaskSet masks;
    std::vector<ObjectRun> objects;
    field::ObjectLatent z_bg;
    field::PlaneSet bg_planes;
    geom::ObjectPose scene_pose;
};

PipelineRun run_pipeline(Models& models, PreprocessedView pre, uint64_t seed, bool training);
PipelineRun run_pipeline(Models& models, const synth::RenderedView& view, uint64_t seed,
                         bool training);

}  // namespace ocgraf::pipeline
