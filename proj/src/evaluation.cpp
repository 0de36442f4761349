#include "ocgraf/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>

namespace ocgraf::metrics {

namespace {

int majority_gt_id(const std::vector<int>& point_indices, const std::vector<int32_t>& labels) {
    std::map<int, int> counts;
    for (int i : point_indices)
        if (labels[i] > 0) ++counts[labels[i]];
    int best_id = 0, best_count = 0;
    for (const auto& [id, count] : counts)
        if (count > best_count) {
            best_count = count;
            best_id = id;
        }
    return best_id;
}

geom::PointCloud plane_samples(const pipeline::PreprocessedView& pre, double spacing) {
    geom::PointCloud out;
    const auto& plane = pre.plane;
    geom::Vector3d ref = std::abs(plane.normal.z()) < 0.9 ? geom::Vector3d::UnitZ()
                                                          : geom::Vector3d::UnitX();
    const geom::Vector3d u = ref.cross(plane.normal).normalized();
    const geom::Vector3d v = plane.normal.cross(u);
    const geom::Vector3d origin = plane.offset * plane.normal;

    double umin = std::numeric_limits<double>::infinity(), umax = -umin;
    double vmin = umin, vmax = -umin;
    bool any = false;
    for (int i = 0; i < pre.downsampled.size(); ++i) {
        if (!plane.inlier_mask[i]) continue;
        const geom::Vector3d& p = pre.downsampled.positions[i];
        umin = std::min(umin, u.dot(p));
        umax = std::max(umax, u.dot(p));
        vmin = std::min(vmin, v.dot(p));
        vmax = std::max(vmax, v.dot(p));
        any = true;
    }
    if (!any) return out;
    for (double uu = umin; uu <= umax; uu += spacing)
        for (double vv = vmin; vv <= vmax; vv += spacing)
            out.positions.push_back(origin + uu * u + vv * v);
    return out;
}

}  // namespace

Reconstruction reconstruct_scene(pipeline::Models& models, const synth::RenderedView& view,
                                 uint64_t seed, const ReconstructOptions& opt) {
    const auto t0 = std::chrono::steady_clock::now();
    pipeline::PipelineRun run = pipeline::run_pipeline(models, view, seed, false);

    Reconstruction rec;
    const field::FieldConfig& fcfg = models.cfg.field;
    for (const auto& obj : run.objects) {
        const auto occ = field::field_occupancy_grid(models.params, "field/object",
                                                     field::FieldKind::Object, fcfg,
                                                     obj.state.z_mean, fcfg.S);
        const geom::VoxelGrid grid = geom::voxel_centers(obj.state.pose, fcfg.S);
        for (size_t i = 0; i < occ.size(); ++i)
            if (occ[i] > fcfg.phi_threshold) rec.cloud.positions.push_back(grid.world[i]);
        rec.objects.push_back(obj.state);
        rec.object_gt_ids.push_back(0);
    }
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    // Ground-truth ids from the points each object claimed (not timed; only
    // used for evaluation bookkeeping).
    {
        const auto extracted = seg::extract_object_clouds(*run.graph, run.masks,
                                                          models.cfg.segmentation);
        for (size_t i = 0; i < extracted.size() && i < rec.objects.size(); ++i)
            rec.object_gt_ids[i] = majority_gt_id(extracted[i].point_indices, run.pre.gt_labels);
    }

    if (!opt.fg_only) {
        geom::PointCloud bg = plane_samples(run.pre, opt.plane_sample_spacing);
        rec.cloud.positions.insert(rec.cloud.positions.end(), bg.positions.begin(),
                                   bg.positions.end());
    } else {
        geom::PointCloud filtered;
        for (const auto& p : rec.cloud.positions)
            if (run.pre.plane.distance(p) > models.cfg.ransac_thresh)
                filtered.positions.push_back(p);
        rec.cloud = std::move(filtered);
    }
    if (rec.cloud.positions.empty()) {
        // No detections: fall back to the observed background so DHD stays defined.
        geom::PointCloud bg = plane_samples(run.pre, opt.plane_sample_spacing);
        rec.cloud = bg.positions.empty() ? run.pre.downsampled : bg;
    }
    return rec;
}

DhdEval eval_reconstruction(pipeline::Models& models,
                            const std::vector<synth::SceneRecord>& test_scenes,
                            const synth::GeneratorConfig& gen_cfg, uint64_t seed, bool fg_only) {
    DhdEval out;
    ReconstructOptions opt;
    opt.fg_only = fg_only;
    double diam_sum = 0;
    for (size_t s = 0; s < test_scenes.size(); ++s) {
        const auto& scene = test_scenes[s];
        Reconstruction rec = reconstruct_scene(models, scene.views.at(0),
                                               hash_combine(seed, s), opt);
        geom::PointCloud gt = synth::ground_truth_cloud(scene.spec, gen_cfg, 4, 2);
        if (fg_only) {
            geom::PointCloud fg;
            for (size_t i = 0; i < gt.positions.size(); ++i)
                if (gt.positions[i].z() > 1e-4) fg.positions.push_back(gt.positions[i]);
            gt = std::move(fg);
        }
        out.per_scene.push_back(geom::directed_hausdorff(gt.positions, rec.cloud.positions));
        out.mean_wall_seconds += rec.wall_seconds;

        geom::Vector3d lo = gt.positions[0], hi = gt.positions[0];
        for (const auto& p : gt.positions) {
            lo = lo.cwiseMin(p);
            hi = hi.cwiseMax(p);
        }
        diam_sum += (hi - lo).norm();
    }
    const int n = static_cast<int>(out.per_scene.size());
    for (double d : out.per_scene) out.mean += d;
    out.mean /= n;
    for (double d : out.per_scene) out.stddev += (d - out.mean) * (d - out.mean);
    out.stddev = std::sqrt(out.stddev / n);
    out.mean_wall_seconds /= n;
    out.scene_diameter = diam_sum / n;
    return out;
}

double obb_iou_monte_carlo(const OrientedBox& a, const OrientedBox& b, int samples,
                           uint64_t seed) {
    Vector3d lo(std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                std::numeric_limits<double>::infinity());
    Vector3d hi = -lo;
    for (const auto& c : a.corners()) {
        lo = lo.cwiseMin(c);
        hi = hi.cwiseMax(c);
    }
    for (const auto& c : b.corners()) {
        lo = lo.cwiseMin(c);
        hi = hi.cwiseMax(c);
    }
    Rng rng = rng_for(seed, "obb_iou");
    std::uniform_real_distribution<double> ux(lo.x(), hi.x()), uy(lo.y(), hi.y()),
        uz(lo.z(), hi.z());
    int64_t inter = 0, uni = 0;
    for (int s = 0; s < samples; ++s) {
        const Vector3d p(ux(rng), uy(rng), uz(rng));
        const bool in_a = a.contains(p, 0.0);
        const bool in_b = b.contains(p, 0.0);
        if (in_a && in_b) ++inter;
        if (in_a || in_b) ++uni;
    }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

PoseEval eval_pose(pipeline::Models& models, const std::vector<synth::SceneRecord>& scenes,
                   double drop_frac, bool completion, uint64_t seed, int mc_samples) {
    PoseEval out;
    out.drop_frac = drop_frac;
    out.completion = completion;
    const double saved_drop = models.cfg.drop_frac;
    const bool saved_comp = models.cfg.use_completion;
    models.cfg.drop_frac = drop_frac;
    models.cfg.use_completion = completion;

    const double thresholds[3] = {0.3, 0.5, 0.7};
    int hits[3] = {0, 0, 0};
    double iou_sum = 0;
    int n_objects = 0;

    for (size_t s = 0; s < scenes.size(); ++s) {
        const auto& scene = scenes[s];
        pipeline::PipelineRun run =
            pipeline::run_pipeline(models, scene.views.at(0), hash_combine(seed, s), false);
        const auto extracted =
            seg::extract_object_clouds(*run.graph, run.masks, models.cfg.segmentation);

        // Predicted box per ground-truth object (largest point support wins).
        std::map<int, std::pair<int, const pose::ObjectState*>> by_id;
        for (size_t oi = 0; oi < run.objects.size(); ++oi) {
            const int id = majority_gt_id(extracted[oi].point_indices, run.pre.gt_labels);
            if (id <= 0) continue;
            const int support = static_cast<int>(extracted[oi].point_indices.size());
            auto it = by_id.find(id);
            if (it == by_id.end() || support > it->second.first)
                by_id[id] = {support, &run.objects[oi].state};
        }

        const auto& gt_obbs = scene.views.at(0).gt_obbs;
        for (size_t k = 0; k < gt_obbs.size(); ++k) {
            double iou = 0.0;
            auto it = by_id.find(static_cast<int>(k) + 1);
            if (it != by_id.end())
                iou = obb_iou_monte_carlo(it->second.second->box, gt_obbs[k], mc_samples,
                                          hash_combine(seed, hash_combine(s, k)));
            iou_sum += iou;
            ++n_objects;
            for (int t = 0; t < 3; ++t)
                if (iou > thresholds[t]) ++hits[t];
        }
    }

    models.cfg.drop_frac = saved_drop;
    models.cfg.use_completion = saved_comp;

    out.n_objects = n_objects;
    out.mean_iou = n_objects ? iou_sum / n_objects : 0.0;
    for (int t = 0; t < 3; ++t)
        out.accuracy[t] = n_objects ? static_cast<double>(hits[t]) / n_objects : 0.0;
    return out;
}

// ---------------------------------------------------------------------------
// Matching

std::vector<int> hungarian_assignment(const std::vector<std::vector<double>>& cost) {
    const int n = static_cast<int>(cost.size());
    if (n == 0) return {};
    const int m = static_cast<int>(cost[0].size());
    if (n > m) {
        // Transpose so rows <= cols, then invert the mapping.
        std::vector<std::vector<double>> t(m, std::vector<double>(n));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) t[j][i] = cost[i][j];
        const auto col_to_row = hungarian_assignment(t);
        std::vector<int> row_to_col(n, -1);
        for (int j = 0; j < m; ++j)
            if (col_to_row[j] >= 0) row_to_col[col_to_row[j]] = j;
        return row_to_col;
    }

    // Potentials method, 1-indexed internally.
    const double INF = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0), v(m + 1, 0);
    std::vector<int> p(m + 1, 0), way(m + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(m + 1, INF);
        std::vector<char> used(m + 1, false);
        do {
            used[j0] = true;
            const int i0 = p[j0];
            double delta = INF;
            int j1 = 0;
            for (int j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> row_to_col(n, -1);
    for (int j = 1; j <= m; ++j)
        if (p[j] > 0) row_to_col[p[j] - 1] = j - 1;
    return row_to_col;
}

namespace {

std::vector<std::vector<double>> normalize_rows(const std::vector<std::vector<double>>& v) {
    std::vector<std::vector<double>> out = v;
    for (auto& row : out) {
        double norm = 0;
        for (double x : row) norm += x * x;
        norm = std::sqrt(norm);
        if (norm > 0)
            for (double& x : row) x /= norm;
    }
    return out;
}

}  // namespace

MatchResult match_objects(const std::vector<std::vector<double>>& latents_a,
                          const std::vector<std::vector<double>>& latents_b, MatchMetric metric,
                          const std::vector<int>& ids_a, const std::vector<int>& ids_b) {
    if (latents_a.empty() || latents_b.empty())
        throw Error("match_objects: empty latent list");
    const auto a = normalize_rows(latents_a);
    const auto b = normalize_rows(latents_b);
    const int na = static_cast<int>(a.size()), nb = static_cast<int>(b.size());

    std::vector<std::vector<double>> cost(na, std::vector<double>(nb));
    for (int i = 0; i < na; ++i)
        for (int j = 0; j < nb; ++j) {
            double dot = 0;
            for (size_t d = 0; d < a[i].size(); ++d) dot += a[i][d] * b[j][d];
            cost[i][j] = metric == MatchMetric::Cosine
                             ? 1.0 - dot
                             : std::sqrt(std::max(0.0, 2.0 - 2.0 * dot));
        }

    MatchResult out;
    out.assignment = hungarian_assignment(cost);
    int correct = 0;
    for (int i = 0; i < na; ++i)
        if (out.assignment[i] >= 0 && ids_a[i] > 0 && ids_a[i] == ids_b[out.assignment[i]])
            ++correct;
    out.accuracy = static_cast<double>(correct) / std::max(na, nb);
    return out;
}

MatchingEval eval_matching(pipeline::Models& models,
                           const std::vector<synth::SceneRecord>& scenes,
                           const synth::GeneratorConfig& gen_cfg, uint64_t seed) {
    MatchingEval out;
    double acc_cos = 0, acc_l2 = 0, baseline = 0;
    int counted = 0;

    for (size_t s = 0; s < scenes.size(); ++s) {
        const auto& scene = scenes[s];
        // Two viewpoints: the stored one and the next ring position (rendered
        // on demand when the dataset stores a single view).
        synth::RenderedView view_a = scene.views.at(0);
        synth::RenderedView view_b;
        if (scene.views.size() > 1) {
            view_b = scene.views.at(1);
        } else {
            auto cams = synth::camera_ring(gen_cfg, 4);
            synth::NoiseConfig noise = gen_cfg.noise;
            noise.seed = hash_combine(scene.spec.rng_seed, 2001);
            view_b = synth::render_view(scene.spec, cams.at(1), noise);
        }

        auto infer = [&](const synth::RenderedView& view, uint64_t salt,
                         std::vector<std::vector<double>>& latents, std::vector<int>& ids) {
            pipeline::PipelineRun run =
                pipeline::run_pipeline(models, view, hash_combine(seed, salt), false);
            const auto extracted =
                seg::extract_object_clouds(*run.graph, run.masks, models.cfg.segmentation);
            for (size_t oi = 0; oi < run.objects.size(); ++oi) {
                latents.push_back(run.objects[oi].state.z_mean.data);
                ids.push_back(majority_gt_id(extracted[oi].point_indices, run.pre.gt_labels));
            }
        };
        std::vector<std::vector<double>> la, lb;
        std::vector<int> ia, ib;
        infer(view_a, 2 * s, la, ia);
        infer(view_b, 2 * s + 1, lb, ib);
        if (la.empty() || lb.empty()) continue;

        MatchResult mc = match_objects(la, lb, MatchMetric::Cosine, ia, ib);
        MatchResult ml = match_objects(la, lb, MatchMetric::L2, ia, ib);
        acc_cos += mc.accuracy;
        acc_l2 += ml.accuracy;
        baseline += 1.0 / std::max<size_t>({la.size(), lb.size(), 1});
        if (mc.assignment != ml.assignment) out.assignments_identical = false;
        ++counted;
    }
    out.scene_pairs = counted;
    if (counted) {
        out.accuracy_cosine = acc_cos / counted;
        out.accuracy_l2 = acc_l2 / counted;
        out.random_baseline = baseline / counted;
    }
    return out;
}

}  // namespace ocgraf::metrics
