#include "ocgraf/pipeline.hpp"

#include <unordered_map>

namespace ocgraf::pipeline {

void Models::init_params(uint64_t seed) {
    nn::Backbone backbone(cfg.backbone);
    backbone.create_params(params, seed);
    seg::create_segmentation_params(params, cfg.segmentation, seed);
    field::create_field_params(params, "field/object", field::FieldKind::Object, cfg.field, seed);
    field::create_field_params(params, "field/shape", field::FieldKind::Shape, cfg.field, seed);
    field::create_field_params(params, "field/bg", field::FieldKind::Background, cfg.field, seed);
    field::create_object_encoder_params(params, "enc/object", cfg.encoder, seed);
    field::create_shape_encoder_params(params, "enc/shape", cfg.encoder, seed);
    field::create_object_encoder_params(params, "enc/bg", cfg.encoder, seed);
}

PreprocessedView preprocess_view(const synth::RenderedView& view, const ModelConfig& cfg,
                                 uint64_t seed) {
    std::vector<int> pixels;
    geom::PointCloud raw = geom::backproject(view, cfg.backproject_stride, &pixels);
    if (raw.size() == 0) throw Error("preprocess_view: view has no depth");

    const auto keep = geom::dbscan_filter(raw, cfg.dbscan_eps, cfg.dbscan_min_pts);
    geom::PointCloud filtered;
    std::vector<int> filtered_pixels;
    for (int i = 0; i < raw.size(); ++i) {
        if (!keep[i]) continue;
        filtered.positions.push_back(raw.positions[i]);
        if (raw.has_colors()) filtered.colors.push_back(raw.colors[i]);
        filtered_pixels.push_back(pixels[i]);
    }
    if (filtered.size() == 0) {
        filtered = raw;  // fully noisy view: better to keep everything
        filtered_pixels = pixels;
    }

    geom::DownsampleResult down =
        geom::downsample(filtered, cfg.backbone.n_points, hash_combine(seed, fnv1a64("fps")));

    PreprocessedView pre;
    pre.downsampled = std::move(down.cloud);
    pre.gt_labels.reserve(down.indices.size());
    for (int row : down.indices)
        pre.gt_labels.push_back(view.gt_instance[filtered_pixels[row]]);
    pre.plane = geom::ransac_plane(pre.downsampled, cfg.ransac_iters, cfg.ransac_thresh,
                                   hash_combine(seed, fnv1a64("ransac")));
    pre.plans = nn::build_scene_plans(pre.downsampled.positions, cfg.backbone);
    return pre;
}

PipelineRun run_pipeline(Models& models, PreprocessedView pre, uint64_t seed, bool training) {
    const ModelConfig& cfg = models.cfg;
    PipelineRun run;
    run.graph = std::make_unique<ad::Graph>();
    ad::Graph& g = *run.graph;
    run.pre = std::move(pre);
    run.scene_pose = cfg.scene_pose();

    nn::Backbone backbone(cfg.backbone);
    run.fm = backbone.encode_scene(g, models.params, run.pre.plans, run.pre.downsampled);
    run.masks = seg::icsbp(g, models.params, run.fm, cfg.segmentation,
                           hash_combine(seed, fnv1a64("icsbp")), &run.pre.plane.inlier_mask);
    const auto extracted = seg::extract_object_clouds(g, run.masks, cfg.segmentation);

    for (size_t oi = 0; oi < extracted.size(); ++oi) {
        const auto& ext = extracted[oi];
        ObjectRun obj;

        geom::PointCloud P_obs;
        for (int row : ext.point_indices) {
            P_obs.positions.push_back(run.pre.downsampled.positions[row]);
            if (run.pre.downsampled.has_colors())
                P_obs.colors.push_back(run.pre.downsampled.colors[row]);
        }
        ad::Var masked_feats = g.mul_colvec(run.fm.zeta_feat, run.masks.masks[ext.mask_index]);
        ad::Var feats_k = g.gather_rows(masked_feats, ext.point_indices);

        pose::PoseOptions opt;
        opt.b_init = cfg.b_init;
        opt.S = cfg.field.S;
        opt.phi_threshold = cfg.field.phi_threshold;
        opt.drop_frac = cfg.drop_frac;
        opt.use_completion = cfg.use_completion;
        opt.seed = hash_combine(seed, hash_combine(fnv1a64("drop"), oi));

        pose::PoseCallbacks callbacks;
        callbacks.encode_shape = [&](const geom::PointCloud& cloud,
                                     const geom::ObjectPose& pose1) {
            const auto canonical = pose::clamped_canonical(cloud, pose1);
            obj.e = field::encode_shape(g, models.params, "enc/shape", cfg.encoder, canonical,
                                        feats_k);
            return g.value(obj.e);
        };
        callbacks.complete_shape = [&](const ad::Tensor& e, const geom::ObjectPose& pose1) {
            return field::complete_shape(models.params, cfg.field, e, pose1, cfg.field.S,
                                         cfg.field.phi_threshold);
        };
        obj.state = pose::estimate_pose(P_obs, ext.seed_position, opt, callbacks);
        obj.state.mask_index = ext.mask_index;
        obj.state.seed_index = ext.seed_index;

        const auto canonical2 = pose::clamped_canonical(P_obs, obj.state.pose);
        obj.z = field::encode_object(g, models.params, "enc/object", cfg.encoder, canonical2,
                                     feats_k, hash_combine(seed, hash_combine(fnv1a64("z"), oi)));
        obj.state.z_mean = g.value(obj.z.mean);
        obj.state.z_log_std = g.value(obj.z.log_std);

        obj.shape_planes = field::decode_planes(g, models.params, "field/shape", cfg.field, obj.e);
        obj.object_planes = field::decode_planes(g, models.params, "field/object", cfg.field,
                                                 training ? obj.z.sample : obj.z.mean);
        run.objects.push_back(std::move(obj));
    }

    // Background: the whole downsampled cloud in the scene frame, features
    // masked by m_0.
    const auto scene_canonical =
        pose::clamped_canonical(run.pre.downsampled, run.scene_pose);
    ad::Var bg_feats = g.mul_colvec(run.fm.zeta_feat, run.masks.masks[0]);
    run.z_bg = field::encode_object(g, models.params, "enc/bg", cfg.encoder, scene_canonical,
                                    bg_feats, hash_combine(seed, fnv1a64("zbg")));
    run.bg_planes = field::decode_planes(g, models.params, "field/bg", cfg.field,
                                         training ? run.z_bg.sample : run.z_bg.mean);
    return run;
}

PipelineRun run_pipeline(Models& models, const synth::RenderedView& view, uint64_t seed,
                         bool training) {
    return run_pipeline(models, preprocess_view(view, models.cfg, seed), seed, training);
}

}  // namespace ocgraf::pipeline
