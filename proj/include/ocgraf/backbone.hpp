#pragma once

#include <memory>

#include "ocgraf/ad.hpp"
#include "ocgraf/geometry.hpp"

namespace ocgraf::nn {

using geom::Vector3d;

struct BackboneConfig {
    int n_points = 2048;
    int feature_dim = 64;
    int levels = 3;  // number of 4x poolings
    int kernel_points = 15;
    double base_radius = 0.05;  // meters; doubles per level
    int max_neighbors = 24;
    int head_hidden = 64;

    double radius_at(int stage) const { return base_radius * (1 << stage); }
};

// Rigid kernel layout: one point at the origin plus a Fibonacci shell at
// `radius`. Correlation is linear: max(0, 1 - d/sigma), sigma = radius/2.
std::vector<Vector3d> kernel_point_layout(int kp, double radius);
double kernel_correlation(const Vector3d& offset, const Vector3d& kernel_point, double sigma);

// In-radius neighbors sorted by (distance, position lex) and capped, so the
// result depends only on geometry, never on input order.
std::vector<std::vector<int>> radius_neighbors(const std::vector<Vector3d>& queries,
                                               const std::vector<Vector3d>& supports,
                                               double radius, int max_neighbors);

std::shared_ptr<ad::KpPlan> make_kp_plan(const std::vector<Vector3d>& positions,
                                         const std::vector<std::vector<int>>& neighbors,
                                         int kp, double radius);

// f'_i = sum_j sum_k max(0, 1 - |(p_j - p_i) - kappa_k| / sigma) W_k f_j
ad::Var point_conv(ad::Graph& g, ad::Var features, std::shared_ptr<const ad::KpPlan> plan,
                   ad::Parameter& weights);

// Geometry-deterministic farthest point subset (lexicographic start/ties).
std::vector<int> fps_deterministic(const std::vector<Vector3d>& positions, int count);

// Per-scene connectivity cache for the U-Net; built once per point cloud.
struct ScenePlans {
    std::vector<std::vector<Vector3d>> positions;             // per stage
    std::vector<std::shared_ptr<ad::KpPlan>> conv_plans;      // per stage
    std::vector<std::shared_ptr<std::vector<std::vector<int>>>> pool_groups;  // stage s -> s+1
    std::vector<std::vector<int>> unpool_idx;                 // per stage s: fine -> coarse row
};
ScenePlans build_scene_plans(const std::vector<Vector3d>& positions, const BackboneConfig& cfg);

struct FeatureMaps {
    ad::Var zeta;
    ad::Var zeta_seg;
    ad::Var zeta_feat;
    std::vector<Vector3d> positions;
};

class Backbone {
  public:
    explicit Backbone(const BackboneConfig& cfg) : cfg_(cfg) {}

    void create_params(ad::ParamStore& params, uint64_t seed) const;

    // cloud must have exactly cfg.n_points points with colors.
    FeatureMaps encode_scene(ad::Graph& g, ad::ParamStore& params, const ScenePlans& plans,
                             const geom::PointCloud& cloud) const;

    const BackboneConfig& config() const { return cfg_; }

  private:
    BackboneConfig cfg_;
};

// Shared building block for the object/shape/background encoders: a small
// point-conv stack over an arbitrary cloud followed by global max pooling.
struct PointEncoderConfig {
    int in_dim = 0;       // feature columns fed in
    int hidden = 64;
    int out_dim = 64;     // pooled embedding size
    int kernel_points = 15;
    double radius = 0.5;  // canonical-frame units
    int max_neighbors = 16;
};

void create_point_encoder_params(ad::ParamStore& params, const std::string& prefix,
                                 const PointEncoderConfig& cfg, uint64_t seed);

// features: MxC (C == cfg.in_dim). Returns pooled 1 x out_dim embedding.
ad::Var point_encoder_forward(ad::Graph& g, ad::ParamStore& params, const std::string& prefix,
                              const PointEncoderConfig& cfg,
                              const std::vector<Vector3d>& positions, ad::Var features);

}  // namespace ocgraf::nn
