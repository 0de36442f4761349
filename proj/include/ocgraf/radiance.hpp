#pragma once

#include <optional>
#include <string>

#include "ocgraf/ad.hpp"
#include "ocgraf/backbone.hpp"
#include "ocgraf/geometry.hpp"

namespace ocgraf::synth {
struct CameraView;
}

namespace ocgraf::field {

using geom::ObjectPose;
using geom::Vector3d;

enum class FieldKind { Object, Shape, Background };

struct FieldConfig {
    int latent_dim = 64;     // Z
    int plane_res = 32;      // P
    int plane_channels = 16; // C
    int decoder_hidden = 64;
    int head_hidden = 64;
    bool concat_fusion = false;  // sum fusion by default
    int posenc_freqs = 4;
    int S = 16;
    double phi_threshold = 0.5;

    int fused_dim() const { return concat_fusion ? 3 * plane_channels : plane_channels; }
    int posenc_dim() const { return 3 * 2 * posenc_freqs; }
};

bool field_has_color(FieldKind kind);

void create_field_params(ad::ParamStore& params, const std::string& prefix, FieldKind kind,
                         const FieldConfig& cfg, uint64_t seed);

struct PlaneSet {
    ad::Var xy, xz, yz;  // each (P*P) x C
};

PlaneSet decode_planes(ad::Graph& g, ad::ParamStore& params, const std::string& prefix,
                       const FieldConfig& cfg, ad::Var latent);

struct FieldSamples {
    ad::Var sigma;  // Qx1 occupancy logits
    ad::Var rgb;    // Qx3 in [0,1]; invalid Var for color-free fields
};

// Queries at canonical points (clamped to [-1,1]^3). dirs (world, unit) feed
// the color head through a 4-frequency positional encoding.
FieldSamples query_field(ad::Graph& g, ad::ParamStore& params, const std::string& prefix,
                         FieldKind kind, const FieldConfig& cfg, const PlaneSet& planes,
                         const std::vector<Vector3d>& canonical_pts,
                         const std::vector<Vector3d>* dirs);

double occupancy_prob(double sigma_logit);           // tanh(softplus(sigma))
ad::Var occupancy_prob(ad::Graph& g, ad::Var sigma);

struct Composition {
    ad::Var phi_scene;             // Qx1
    ad::Var c_scene;               // Qx3, invalid when colors absent
    std::vector<ad::Var> phi_hat;  // per component, Qx1, sums to phi_scene
};

Composition compose_scene(ad::Graph& g, const std::vector<ad::Var>& sigmas,
                          const std::vector<ad::Var>& colors);

struct ObjectLatent {
    ad::Var mean, log_std, sample;  // each 1xZ; log_std clamped to [-6, 2]
    ad::Tensor eps;                 // recorded reparameterization noise
};

struct EncoderConfig {
    int feat_dim = 64;   // masked backbone feature columns
    int hidden = 64;
    int latent_dim = 64; // Z
    int kernel_points = 15;
    double radius = 0.5; // canonical units
    int max_neighbors = 16;

    nn::PointEncoderConfig point_encoder() const {
        return {4 + feat_dim, hidden, hidden, kernel_points, radius, max_neighbors};
    }
};

void create_object_encoder_params(ad::ParamStore& params, const std::string& prefix,
                                  const EncoderConfig& cfg, uint64_t seed);
void create_shape_encoder_params(ad::ParamStore& params, const std::string& prefix,
                                 const EncoderConfig& cfg, uint64_t seed);

// positions: canonical points (callers clamp); feats: Mx(feat_dim) masked
// backbone rows. The input to the conv stack is [1 | p_can | feats].
ObjectLatent encode_object(ad::Graph& g, ad::ParamStore& params, const std::string& prefix,
                           const EncoderConfig& cfg, const std::vector<Vector3d>& positions,
                           ad::Var feats, uint64_t eps_seed);
ad::Var encode_shape(ad::Graph& g, ad::ParamStore& params, const std::string& prefix,
                     const EncoderConfig& cfg, const std::vector<Vector3d>& positions,
                     ad::Var feats);

// Thresholded occupancy voxels of the shape field, mapped to world. No
// gradients; runs in a private graph.
geom::PointCloud complete_shape(ad::ParamStore& params, const FieldConfig& cfg,
                                const ad::Tensor& shape_embedding, const ObjectPose& pose,
                                int S, double phi_threshold);

// Occupancy probabilities of a field at the canonical voxel grid (no grad).
std::vector<double> field_occupancy_grid(ad::ParamStore& params, const std::string& prefix,
                                         FieldKind kind, const FieldConfig& cfg,
                                         const ad::Tensor& latent, int S);

struct RenderedImage {
    int width = 0, height = 0;
    std::vector<float> rgb;    // H*W*3
    std::vector<float> depth;  // H*W, 0 where transmittance stays ~1
};

struct ComponentField {
    std::string prefix;
    FieldKind kind = FieldKind::Object;
    ad::Tensor latent;
    ObjectPose pose;
};

struct RenderOptions {
    int samples = 64;
    double near = 0.1, far = 2.5;
    Vector3d fill_color = Vector3d(0.9, 0.9, 0.9);
    uint64_t seed = 0;  // stratified jitter
};

// Ray-marched novel view from trained fields (inference-only path; training
// never ray marches).
RenderedImage render_view_from_fields(ad::ParamStore& params, const FieldConfig& cfg,
                                      const std::vector<ComponentField>& components,
                                      const synth::CameraView& camera,
                                      const RenderOptions& opt);

}  // namespace ocgraf::field
