#include "ocgraf/segmentation.hpp"

#include <cmath>

namespace ocgraf::seg {

void create_segmentation_params(ad::ParamStore& params, const SegmentationConfig& cfg,
                                uint64_t seed) {
    (void)seed;
    params.create_filled("icsbp/tau", 1, 1, cfg.tau_init);
}

MaskSet icsbp(ad::Graph& g, ad::ParamStore& params, const nn::FeatureMaps& fm,
              const SegmentationConfig& cfg, uint64_t seed,
              const std::vector<uint8_t>* plane_inliers) {
    if (cfg.K < 2) throw Error("icsbp: K must be >= 2");
    const int N = static_cast<int>(fm.positions.size());

    Rng rng = rng_for(seed, "icsbp");
    std::uniform_real_distribution<double> uni01(0.0, 1.0);

    ad::Var tau = g.param(*params.find("icsbp/tau"));
    // 2*tau^2 + eps, broadcast to Nx1 so the kernel exponent is a plain div.
    ad::Var denom = g.add_scalar(g.mul_scalar(g.square(tau), 2.0), 1e-8);
    ad::Var denom_col = g.matmul(g.constant(ad::Tensor::full(N, 1, 1.0)), denom);

    MaskSet out;
    out.K = cfg.K;
    ad::Var scope = g.constant(ad::Tensor::full(N, 1, 1.0));
    bool exhausted = false;

    for (int k = 0; k < cfg.K; ++k) {
        const ad::Tensor& scope_val = g.value(scope);
        std::vector<double> weights(N);
        double total = 0.0;
        for (int i = 0; i < N; ++i) {
            double w = std::max(0.0, scope_val.at(i, 0));
            if (k == 0 && plane_inliers && (*plane_inliers)[i]) w *= cfg.plane_bias;
            weights[i] = w;
            total += w;
        }
        if (exhausted || total < cfg.min_scope_mass) {
            exhausted = true;
            out.masks.push_back(g.constant(ad::Tensor::zeros(N, 1)));
            out.seed_indices.push_back(-1);
            out.seed_positions.push_back(Vector3d::Zero());
            continue;
        }

        double u = uni01(rng) * total;
        int seed_idx = N - 1;
        for (int i = 0; i < N; ++i) {
            u -= weights[i];
            if (u <= 0.0) {
                seed_idx = i;
                break;
            }
        }
        out.seed_indices.push_back(seed_idx);
        out.seed_positions.push_back(fm.positions[seed_idx]);

        // alpha_i = exp(-|zeta_i - zeta_seed|^2 / (2 tau^2))
        ad::Var seed_row = g.gather_rows(fm.zeta_seg, {seed_idx});
        ad::Var diff = g.add_rowvec(fm.zeta_seg, g.neg(seed_row));
        ad::Var d2 = g.row_sum(g.square(diff));
        ad::Var alpha = g.exp_(g.neg(g.div(d2, denom_col)));

        ad::Var mask = g.mul(scope, alpha);
        out.masks.push_back(mask);
        scope = g.sub(scope, mask);  // telescopes exactly
    }
    out.masks.push_back(scope);  // redundant scope m_K
    return out;
}

std::vector<ExtractedObject> extract_object_clouds(const ad::Graph& g, const MaskSet& mask_set,
                                                   const SegmentationConfig& cfg) {
    if (cfg.assign_threshold <= 0.0 || cfg.assign_threshold >= 1.0)
        throw Error("extract_object_clouds: threshold must be in (0,1)");
    const int n_masks = static_cast<int>(mask_set.masks.size());
    const int N = g.value(mask_set.masks[0]).rows;

    std::vector<ExtractedObject> objects(mask_set.K);
    for (int k = 0; k < mask_set.K; ++k) {
        objects[k].mask_index = k;
        objects[k].seed_index = mask_set.seed_indices[k];
        objects[k].seed_position = mask_set.seed_positions[k];
    }

    for (int i = 0; i < N; ++i) {
        int best_k = 0;
        double best_v = g.value(mask_set.masks[0]).at(i, 0);
        for (int k = 1; k < n_masks; ++k) {
            const double v = g.value(mask_set.masks[k]).at(i, 0);
            if (v > best_v) {
                best_v = v;
                best_k = k;
            }
        }
        // Index 0 is background, index K the redundant scope.
        if (best_k >= 1 && best_k < mask_set.K && best_v >= cfg.assign_threshold)
            objects[best_k].point_indices.push_back(i);
    }

    std::vector<ExtractedObject> kept;
    for (auto& obj : objects)
        if (obj.mask_index >= 1 &&
            static_cast<int>(obj.point_indices.size()) >= cfg.min_points)
            kept.push_back(std::move(obj));
    return kept;
}

}  // namespace ocgraf::seg
