#include "ocgraf/training.hpp"

#include <chrono>
#include <cmath>
#include <limits>

namespace ocgraf::train {

namespace {

constexpr double kOffLogit = -40.0;  // softplus(-40) ~ 4e-18

struct SurfQuery {
    ad::Var sigma;  // Qx1, off-logit outside the component's box
    ad::Var rgb;    // Qx3
};

// Query one component at world points, mapping into its canonical frame and
// masking out-of-box samples down to an inert logit.
SurfQuery query_component_at(ad::Graph& g, ad::ParamStore& params, const std::string& prefix,
                             field::FieldKind kind, const field::FieldConfig& fcfg,
                             const field::PlaneSet& planes, const geom::ObjectPose& pose,
                             const std::vector<Vector3d>& world_pts,
                             const std::vector<Vector3d>* dirs, bool box_mask) {
    const int Q = static_cast<int>(world_pts.size());
    std::vector<Vector3d> canonical(Q);
    ad::Tensor inside(Q, 1);
    ad::Tensor offset(Q, 1);
    for (int i = 0; i < Q; ++i) {
        Vector3d c = geom::canonical_transform(world_pts[i], pose);
        const bool in = !box_mask || c.cwiseAbs().maxCoeff() <= 1.0;
        canonical[i] = c.cwiseMax(-1.0).cwiseMin(1.0);
        inside.at(i, 0) = in ? 1.0 : 0.0;
        offset.at(i, 0) = in ? 0.0 : kOffLogit;
    }
    field::FieldSamples fs =
        field::query_field(g, params, prefix, kind, fcfg, planes, canonical, dirs);
    SurfQuery out;
    out.sigma = g.add(g.mul(fs.sigma, g.constant(std::move(inside))), g.constant(std::move(offset)));
    out.rgb = fs.rgb;
    return out;
}

ad::Var gaussian_likelihood(ad::Graph& g, ad::Var rgb, const ad::Tensor& observed,
                            double sigma_std) {
    ad::Var diff = g.sub(rgb, g.constant(observed));
    ad::Var ssq = g.row_sum(g.square(diff));
    const double log_norm = -3.0 * std::log(sigma_std * std::sqrt(2.0 * M_PI));
    ad::Var log_n = g.add_scalar(g.mul_scalar(ssq, -0.5 / (sigma_std * sigma_std)), log_norm);
    return g.exp_(log_n);
}

}  // namespace

SamplePoints sample_points(const std::vector<synth::RenderedView>& views,
                           const pipeline::PipelineRun& run, int n_r, int S,
                           double empty_margin_vox, uint64_t seed) {
    if (n_r < 1) throw Error("sample_points: n_r must be >= 1");
    if (S < 1) throw Error("sample_points: S must be >= 1");

    std::vector<std::vector<int>> valid(views.size());
    size_t total_valid = 0;
    for (size_t v = 0; v < views.size(); ++v) {
        for (int i = 0; i < static_cast<int>(views[v].depth.size()); ++i)
            if (views[v].depth[i] > 0) valid[v].push_back(i);
        total_valid += valid[v].size();
    }
    if (total_valid == 0) throw Error("sample_points: no valid depth in any view");

    Rng rng = rng_for(seed, "sample_points");
    std::uniform_int_distribution<int> view_dist(0, static_cast<int>(views.size()) - 1);
    std::uniform_real_distribution<double> uni01(0.0, 1.0);

    SamplePoints out;
    out.p_surf.reserve(n_r);
    for (int s = 0; s < n_r; ++s) {
        int v = view_dist(rng);
        while (valid[v].empty()) v = (v + 1) % static_cast<int>(views.size());
        const auto& view = views[v];
        const auto& cam = view.camera;
        std::uniform_int_distribution<int> pix_dist(0, static_cast<int>(valid[v].size()) - 1);
        const int idx = valid[v][pix_dist(rng)];
        const int px = idx % cam.width, py = idx / cam.width;
        const double d = view.depth[idx];
        const Vector3d pc((px - cam.cx) / cam.fx * d, (py - cam.cy) / cam.fy * d, d);
        const Vector3d p = cam.R * pc + cam.t;

        out.p_surf.push_back(p);
        out.surf_color.emplace_back(view.rgb[3 * idx], view.rgb[3 * idx + 1],
                                    view.rgb[3 * idx + 2]);
        const Vector3d ray = p - cam.t;
        const double len = ray.norm();
        out.surf_dir.push_back(ray / len);
        const double t = uni01(rng) * len;
        out.p_empty.push_back(cam.t + (t / len) * ray);
        out.rho_empty.push_back(1.0 / len);
    }

    // Nearest downsampled point for mask lookups.
    const auto& down = run.pre.downsampled.positions;
    out.surf_nearest.reserve(n_r);
    for (const auto& p : out.p_surf) {
        int best = 0;
        double best_d2 = (p - down[0]).squaredNorm();
        for (int i = 1; i < static_cast<int>(down.size()); ++i) {
            const double d2 = (p - down[i]).squaredNorm();
            if (d2 < best_d2) {
                best_d2 = d2;
                best = i;
            }
        }
        out.surf_nearest.push_back(best);
    }

    // Object box voxels some view observes as free space.
    for (const auto& obj : run.objects) {
        const geom::VoxelGrid grid = geom::voxel_centers(obj.state.pose, S);
        const double margin = empty_margin_vox * obj.state.pose.b / S;
        std::vector<int> empty;
        for (int i = 0; i < static_cast<int>(grid.world.size()); ++i) {
            const Vector3d& w = grid.world[i];
            bool seen_empty = false;
            for (const auto& view : views) {
                const auto& cam = view.camera;
                const Vector3d pc = cam.R.transpose() * (w - cam.t);
                if (pc.z() <= 1e-6) continue;
                const int u = static_cast<int>(std::lround(cam.cx + cam.fx * pc.x() / pc.z()));
                const int v = static_cast<int>(std::lround(cam.cy + cam.fy * pc.y() / pc.z()));
                if (u < 0 || u >= cam.width || v < 0 || v >= cam.height) continue;
                const double d_obs = view.depth[v * cam.width + u];
                if (d_obs > 0 && pc.z() < d_obs - margin) {
                    seen_empty = true;
                    break;
                }
            }
            if (seen_empty) empty.push_back(i);
        }
        out.object_empty_voxels.push_back(std::move(empty));
    }
    return out;
}

std::vector<double> constrain_background(const SamplePoints& sample, const geom::Plane& plane,
                                         double dist_thresh) {
    std::vector<double> keep(sample.p_surf.size(), 1.0);
    if (plane.normal.norm() < 0.5) {
        OCGRAF_WARN("constrain_background: no plane available, background trained on all points");
        return keep;
    }
    for (size_t i = 0; i < sample.p_surf.size(); ++i)
        keep[i] = plane.distance(sample.p_surf[i]) <= dist_thresh ? 1.0 : 0.0;
    return keep;
}

LossVars build_losses(pipeline::PipelineRun& run, pipeline::Models& models,
                      const SamplePoints& sample, const LossConfig& cfg, uint64_t seed) {
    ad::Graph& g = *run.graph;
    ad::ParamStore& params = models.params;
    const field::FieldConfig& fcfg = models.cfg.field;
    const int Q = static_cast<int>(sample.p_surf.size());
    const int S = fcfg.S;
    const int n_obj = static_cast<int>(run.objects.size());

    // ---- surface queries -------------------------------------------------
    SurfQuery bg = query_component_at(g, params, "field/bg", field::FieldKind::Background, fcfg,
                                      run.bg_planes, run.scene_pose, sample.p_surf,
                                      &sample.surf_dir, false);
    const auto keep_bg = std::make_shared<const std::vector<double>>(
        constrain_background(sample, run.pre.plane, models.cfg.ransac_thresh));
    ad::Var bg_sigma_obs = g.detach_rows_where(bg.sigma, keep_bg);
    ad::Var bg_rgb_obs = g.detach_rows_where(bg.rgb, keep_bg);

    std::vector<ad::Var> sigmas_obs{bg_sigma_obs}, colors_obs{bg_rgb_obs};
    std::vector<ad::Var> sigmas_att{bg.sigma};
    for (const auto& obj : run.objects) {
        SurfQuery q = query_component_at(g, params, "field/object", field::FieldKind::Object,
                                         fcfg, obj.object_planes, obj.state.pose, sample.p_surf,
                                         &sample.surf_dir, true);
        sigmas_obs.push_back(q.sigma);
        colors_obs.push_back(q.rgb);
        sigmas_att.push_back(q.sigma);
    }
    field::Composition comp_obs = field::compose_scene(g, sigmas_obs, colors_obs);
    field::Composition comp_att = field::compose_scene(g, sigmas_att, {});

    // ---- L_obs -----------------------------------------------------------
    ad::Tensor observed(Q, 3);
    for (int i = 0; i < Q; ++i)
        for (int c = 0; c < 3; ++c) observed.at(i, c) = sample.surf_color[i][c];
    ad::Var mixture;
    for (size_t k = 0; k < sigmas_obs.size(); ++k) {
        ad::Var nk = gaussian_likelihood(g, colors_obs[k], observed, cfg.sigma_std);
        ad::Var weighted = g.mul(comp_obs.phi_hat[k], nk);
        mixture = k == 0 ? weighted : g.add(mixture, weighted);
    }
    ad::Var phi_clamped = g.clamp_min(comp_obs.phi_scene, 1e-12);
    ad::Var mix_clamped = g.clamp_min(mixture, 1e-12);
    ad::Var eta;
    if (cfg.eta_sampled) {
        Rng rng = rng_for(seed, "eta");
        std::uniform_real_distribution<double> uni01(0.0, 1.0);
        ad::Tensor eta_t(Q, 1);
        const ad::Tensor& phi_val = g.value(comp_obs.phi_scene);
        for (int i = 0; i < Q; ++i) eta_t.at(i, 0) = uni01(rng) < phi_val.at(i, 0) ? 1.0 : 0.0;
        eta = g.constant(std::move(eta_t));
    } else {
        eta = g.detach(comp_obs.phi_scene);
    }
    ad::Var obs_pp = g.sub(g.neg(g.log_(phi_clamped)), g.mul(eta, g.log_(mix_clamped)));
    ad::Var loss_obs = g.mean_all(obs_pp);

    // ---- L_empty ----------------------------------------------------------
    SurfQuery bg_empty = query_component_at(g, params, "field/bg", field::FieldKind::Background,
                                            fcfg, run.bg_planes, run.scene_pose, sample.p_empty,
                                            nullptr, false);
    ad::Var phi0_empty = field::occupancy_prob(g, bg_empty.sigma);
    ad::Tensor inv_rho(Q, 1);
    for (int i = 0; i < Q; ++i) inv_rho.at(i, 0) = 1.0 / sample.rho_empty[i];
    ad::Var loss_empty = g.mean_all(g.mul(phi0_empty, g.constant(std::move(inv_rho))));

    // Per-object voxel grids: evaluated once, reused by L_empty's free-space
    // term and as the (detached) teacher for L_shape.
    std::vector<ad::Var> object_vox_phi(n_obj);
    for (int k = 0; k < n_obj; ++k) {
        const auto& obj = run.objects[k];
        const geom::VoxelGrid grid = geom::voxel_centers(obj.state.pose, S);
        field::FieldSamples fs = field::query_field(g, params, "field/object",
                                                    field::FieldKind::Object, fcfg,
                                                    obj.object_planes, grid.canonical, nullptr);
        object_vox_phi[k] = field::occupancy_prob(g, fs.sigma);
        const auto& empty_idx = sample.object_empty_voxels[k];
        if (!empty_idx.empty()) {
            ad::Var phi_e = g.gather_rows(object_vox_phi[k], empty_idx);
            ad::Var one_minus = g.clamp_min(g.add_scalar(g.neg(phi_e), 1.0), 1e-7);
            loss_empty = g.add(loss_empty, g.neg(g.mean_all(g.log_(one_minus))));
        }
    }

    // ---- L_shape ----------------------------------------------------------
    ad::Var loss_shape = g.constant(ad::Tensor::zeros(1, 1));
    for (int k = 0; k < n_obj; ++k) {
        const auto& obj = run.objects[k];
        // Teacher grid: detached object-field occupancies on the final box.
        const ad::Tensor& phi_val = g.value(object_vox_phi[k]);
        std::vector<double> teacher_grid(phi_val.rows);
        for (int i = 0; i < phi_val.rows; ++i) teacher_grid[i] = phi_val.at(i, 0);

        // Student: the shape field on its own (stage-1) grid; the teacher is
        // interpolated at those points expressed in the final frame.
        const geom::VoxelGrid sgrid = geom::voxel_centers(obj.state.shape_pose, S);
        field::FieldSamples fs = field::query_field(g, params, "field/shape",
                                                    field::FieldKind::Shape, fcfg,
                                                    obj.shape_planes, sgrid.canonical, nullptr);
        ad::Var q = field::occupancy_prob(g, fs.sigma);
        q = g.clamp_max(g.clamp_min(q, 1e-6), 1.0 - 1e-6);

        const int V = static_cast<int>(sgrid.world.size());
        ad::Tensor p_t(V, 1), neg_p(V, 1), neg_1mp(V, 1), entropy(V, 1);
        for (int i = 0; i < V; ++i) {
            const Vector3d c2 = geom::canonical_transform(sgrid.world[i], obj.state.pose);
            double p = geom::trilinear_interp(teacher_grid, S,
                                              c2.cwiseMax(-1.0).cwiseMin(1.0));
            p = std::clamp(p, 1e-6, 1.0 - 1e-6);
            p_t.at(i, 0) = p;
            neg_p.at(i, 0) = -p;
            neg_1mp.at(i, 0) = -(1.0 - p);
            entropy.at(i, 0) = p * std::log(p) + (1.0 - p) * std::log(1.0 - p);
        }
        ad::Var one_minus_q = g.clamp_min(g.add_scalar(g.neg(q), 1.0), 1e-7);
        ad::Var kl = g.add(g.constant(std::move(entropy)),
                           g.add(g.mul(g.constant(std::move(neg_p)), g.log_(q)),
                                 g.mul(g.constant(std::move(neg_1mp)), g.log_(one_minus_q))));
        loss_shape = g.add(loss_shape, g.mean_all(kl));
    }
    if (n_obj > 0) loss_shape = g.mul_scalar(loss_shape, 1.0 / n_obj);

    // ---- L_att ------------------------------------------------------------
    auto maybe_sg_mask = [&](ad::Var m) { return cfg.att_stopgrad_masks ? g.detach(m) : m; };
    auto maybe_sg_field = [&](ad::Var f) { return cfg.att_stopgrad_fields ? g.detach(f) : f; };

    // component index per drawn mask; -1 means no field instantiated
    std::vector<int> mask_component(run.masks.K, -1);
    mask_component[0] = 0;
    for (int k = 0; k < n_obj; ++k)
        mask_component[run.objects[k].state.mask_index] = 1 + k;

    ad::Var loss_att;
    for (int mk = 0; mk < run.masks.K; ++mk) {
        ad::Var m_surf = maybe_sg_mask(g.gather_rows(run.masks.masks[mk], sample.surf_nearest));
        ad::Var target = mask_component[mk] >= 0
                             ? maybe_sg_field(comp_att.phi_hat[mask_component[mk]])
                             : g.constant(ad::Tensor::zeros(Q, 1));
        ad::Var term = g.mean_all(g.square(g.sub(m_surf, target)));
        loss_att = mk == 0 ? term : g.add(loss_att, term);
    }
    {
        ad::Var scope_surf =
            maybe_sg_mask(g.gather_rows(run.masks.masks[run.masks.K], sample.surf_nearest));
        ad::Var target = maybe_sg_field(g.add_scalar(g.neg(comp_att.phi_scene), 1.0));
        loss_att = g.add(loss_att, g.mean_all(g.square(g.sub(scope_surf, target))));
    }

    // ---- L_sparsity ---------------------------------------------------------
    Rng rng = rng_for(seed, "sparsity_probes");
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    std::vector<Vector3d> probes(cfg.sparsity_probes);
    for (auto& p : probes)
        p = geom::world_transform(Vector3d(uni(rng), uni(rng), uni(rng)), run.scene_pose);

    ad::Var density_total;
    {
        SurfQuery q = query_component_at(g, params, "field/bg", field::FieldKind::Background,
                                         fcfg, run.bg_planes, run.scene_pose, probes, nullptr,
                                         false);
        density_total = g.softplus(q.sigma);
    }
    for (const auto& obj : run.objects) {
        SurfQuery q = query_component_at(g, params, "field/object", field::FieldKind::Object,
                                         fcfg, obj.object_planes, obj.state.pose, probes,
                                         nullptr, true);
        density_total = g.add(density_total, g.softplus(q.sigma));
    }
    ad::Var loss_sparsity = g.mul_scalar(
        g.mean_all(g.log_(g.add_scalar(g.mul_scalar(g.square(density_total), 2.0), 1.0))),
        cfg.lambda_sparsity);

    LossVars out;
    out.obs = loss_obs;
    out.empty = loss_empty;
    out.shape = loss_shape;
    out.att = loss_att;
    out.sparsity = loss_sparsity;
    out.total = g.add(g.add(g.add(g.add(loss_obs, loss_empty), loss_shape), loss_att),
                      loss_sparsity);
    return out;
}

LossBreakdown read_breakdown(const ad::Graph& g, const LossVars& vars) {
    LossBreakdown b;
    b.obs = g.scalar(vars.obs);
    b.empty = g.scalar(vars.empty);
    b.shape = g.scalar(vars.shape);
    b.att = g.scalar(vars.att);
    b.sparsity = g.scalar(vars.sparsity);
    b.total = g.scalar(vars.total);
    return b;
}

StepResult train_step(pipeline::Models& models, const synth::SceneRecord& scene,
                      const pipeline::PreprocessedView* cached_pre, int input_view,
                      const LossConfig& cfg, uint64_t step_seed) {
    const auto t0 = std::chrono::steady_clock::now();
    StepResult result;

    pipeline::PipelineRun run =
        cached_pre ? pipeline::run_pipeline(models, *cached_pre, step_seed, true)
                   : pipeline::run_pipeline(models, scene.views.at(input_view), step_seed, true);
    result.n_objects = static_cast<int>(run.objects.size());

    SamplePoints sample = sample_points(scene.views, run, cfg.n_r, models.cfg.field.S,
                                        cfg.empty_margin_vox, step_seed);
    LossVars losses = build_losses(run, models, sample, cfg, step_seed);
    result.losses = read_breakdown(*run.graph, losses);

    if (!std::isfinite(result.losses.total)) {
        OCGRAF_WARN("train_step: non-finite loss, step skipped");
        result.applied = false;
    } else {
        models.params.zero_grad();
        run.graph->backward(losses.total);
        models.params.clip_grad_norm(cfg.grad_clip);
        models.params.adam_step(cfg.learning_rate);
    }

    result.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

Trainer::Trainer(pipeline::Models& models, std::vector<synth::SceneRecord> scenes,
                 LossConfig cfg, uint64_t seed)
    : models_(models), scenes_(std::move(scenes)), cfg_(cfg), seed_(seed) {
    if (scenes_.empty()) throw Error("Trainer: no scenes");
    pre_cache_.resize(scenes_.size());
    for (size_t s = 0; s < scenes_.size(); ++s) {
        for (size_t v = 0; v < scenes_[s].views.size(); ++v) {
            const uint64_t pre_seed = hash_combine(hash_combine(seed_, fnv1a64("pre")),
                                                   hash_combine(s, v));
            pre_cache_[s].push_back(
                pipeline::preprocess_view(scenes_[s].views[v], models_.cfg, pre_seed));
        }
    }
}

StepResult Trainer::step(int64_t step_index) {
    Rng rng = rng_for(seed_, "schedule", static_cast<uint64_t>(step_index));
    std::uniform_int_distribution<int> scene_dist(0, static_cast<int>(scenes_.size()) - 1);
    const int s = scene_dist(rng);
    std::uniform_int_distribution<int> view_dist(
        0, static_cast<int>(scenes_[s].views.size()) - 1);
    const int v = view_dist(rng);
    const uint64_t step_seed =
        hash_combine(hash_combine(seed_, fnv1a64("step")), static_cast<uint64_t>(step_index));
    return train_step(models_, scenes_[s], &pre_cache_[s][v], v, cfg_, step_seed);
}

}  // namespace ocgraf::train
