#pragma once

#include <optional>

#include "ocgraf/ad.hpp"
#include "ocgraf/backbone.hpp"
#include "ocgraf/geometry.hpp"

namespace ocgraf::seg {

using geom::Vector3d;

struct SegmentationConfig {
    int K = 6;                      // drawn masks (index 0 = background)
    double tau_init = 1.0;          // attention kernel temperature (learnable)
    double plane_bias = 10.0;       // seed-draw bias toward plane inliers for mask 0
    double min_scope_mass = 1e-8;
    double assign_threshold = 0.2;  // minimum mask value for hard assignment
    int min_points = 20;
};

// masks[0..K-1] are the drawn attention masks, masks[K] is the redundant
// scope; they telescope to exactly one at every point.
struct MaskSet {
    std::vector<ad::Var> masks;        // K+1 vars, each Nx1
    std::vector<int> seed_indices;     // K entries, -1 when scope ran out
    std::vector<Vector3d> seed_positions;
    int K = 0;
};

void create_segmentation_params(ad::ParamStore& params, const SegmentationConfig& cfg,
                                uint64_t seed);

// Stick-breaking clustering of zeta_seg. Seeds are drawn from the categorical
// distribution proportional to the current scope (optionally biased toward
// plane inliers for the first draw); gradients do not flow through the draw
// itself, only through the attention kernel.
MaskSet icsbp(ad::Graph& g, ad::ParamStore& params, const nn::FeatureMaps& fm,
              const SegmentationConfig& cfg, uint64_t seed,
              const std::vector<uint8_t>* plane_inliers = nullptr);

struct ExtractedObject {
    int mask_index = -1;
    std::vector<int> point_indices;  // rows of the downsampled cloud
    int seed_index = -1;
    Vector3d seed_position = Vector3d::Zero();
};

// Hard argmax assignment over all masks; objects below min_points or whose
// winning mask value stays under assign_threshold lose those points.
std::vector<ExtractedObject> extract_object_clouds(const ad::Graph& g, const MaskSet& mask_set,
                                                   const SegmentationConfig& cfg);

}  // namespace ocgraf::seg
