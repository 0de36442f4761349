#include "ocgraf/radiance.hpp"

#include <chrono>
#include <cmath>

#include "ocgraf/synthdata.hpp"

namespace ocgraf::field {

bool field_has_color(FieldKind kind) { return kind != FieldKind::Shape; }

void create_field_params(ad::ParamStore& params, const std::string& prefix, FieldKind kind,
                         const FieldConfig& cfg, uint64_t seed) {
    const int Z = cfg.latent_dim, H = cfg.decoder_hidden, HH = cfg.head_hidden;
    const int plane_out = 3 * cfg.plane_res * cfg.plane_res * cfg.plane_channels;
    auto lin = [&](const std::string& name, int din, int dout, double scale) {
        params.create(prefix + name + "/W", din, dout, scale * std::sqrt(2.0 / din), seed);
        params.create(prefix + name + "/b", 1, dout, 0.0, seed);
    };
    lin("/dec/l0", Z, H, 1.0);
    lin("/dec/l1", H, plane_out, 0.5);
    lin("/occ/l0", cfg.fused_dim(), HH, 1.0);
    lin("/occ/l1", HH, 1, 0.5);
    if (field_has_color(kind)) {
        lin("/rgb/l0", cfg.fused_dim() + cfg.posenc_dim(), HH, 1.0);
        lin("/rgb/l1", HH, 3, 0.5);
    }
}

namespace {

ad::Var linear(ad::Graph& g, ad::ParamStore& params, ad::Var x, const std::string& name) {
    ad::Var y = g.matmul(x, g.param(*params.find(name + "/W")));
    return g.add_rowvec(y, g.param(*params.find(name + "/b")));
}

ad::Tensor positional_encoding(const std::vector<Vector3d>& dirs, int freqs) {
    ad::Tensor out(static_cast<int>(dirs.size()), 3 * 2 * freqs);
    for (int i = 0; i < out.rows; ++i)
        for (int a = 0; a < 3; ++a)
            for (int j = 0; j < freqs; ++j) {
                const double arg = std::ldexp(M_PI * dirs[i][a], j);  // 2^j * pi * d
                out.at(i, (a * freqs + j) * 2) = std::sin(arg);
                out.at(i, (a * freqs + j) * 2 + 1) = std::cos(arg);
            }
    return out;
}

}  // namespace

PlaneSet decode_planes(ad::Graph& g, ad::ParamStore& params, const std::string& prefix,
                       const FieldConfig& cfg, ad::Var latent) {
    const int P = cfg.plane_res, C = cfg.plane_channels;
    ad::Var h = g.relu(linear(g, params, latent, prefix + "/dec/l0"));
    ad::Var flat = linear(g, params, h, prefix + "/dec/l1");  // 1 x 3*P*P*C
    ad::Var stacked = g.reshape(flat, 3 * P * P, C);

    auto slice = [&](int plane) {
        std::vector<int> idx(P * P);
        for (int i = 0; i < P * P; ++i) idx[i] = plane * P * P + i;
        return g.gather_rows(stacked, idx);
    };
    return PlaneSet{slice(0), slice(1), slice(2)};
}

FieldSamples query_field(ad::Graph& g, ad::ParamStore& params, const std::string& prefix,
                         FieldKind kind, const FieldConfig& cfg, const PlaneSet& planes,
                         const std::vector<Vector3d>& canonical_pts,
                         const std::vector<Vector3d>* dirs) {
    const int P = cfg.plane_res;
    const int Q = static_cast<int>(canonical_pts.size());
    std::vector<std::array<double, 2>> uv_xy(Q), uv_xz(Q), uv_yz(Q);
    for (int i = 0; i < Q; ++i) {
        const Vector3d& p = canonical_pts[i];
        uv_xy[i] = {p.x(), p.y()};
        uv_xz[i] = {p.x(), p.z()};
        uv_yz[i] = {p.y(), p.z()};
    }
    ad::Var sxy = g.bilinear(planes.xy, std::make_shared<ad::BilinearPlan>(
                                            ad::make_bilinear_plan(P, uv_xy)));
    ad::Var sxz = g.bilinear(planes.xz, std::make_shared<ad::BilinearPlan>(
                                            ad::make_bilinear_plan(P, uv_xz)));
    ad::Var syz = g.bilinear(planes.yz, std::make_shared<ad::BilinearPlan>(
                                            ad::make_bilinear_plan(P, uv_yz)));
    ad::Var fused = cfg.concat_fusion ? g.concat_cols(g.concat_cols(sxy, sxz), syz)
                                      : g.add(g.add(sxy, sxz), syz);

    FieldSamples out;
    ad::Var h = g.relu(linear(g, params, fused, prefix + "/occ/l0"));
    out.sigma = linear(g, params, h, prefix + "/occ/l1");
    // Occupancy-only queries may skip the color head by passing no directions.
    if (field_has_color(kind) && dirs) {
        if (static_cast<int>(dirs->size()) != Q)
            throw Error("query_field: direction count mismatch");
        ad::Var pe = g.constant(positional_encoding(*dirs, cfg.posenc_freqs));
        ad::Var hc = g.relu(linear(g, params, g.concat_cols(fused, pe), prefix + "/rgb/l0"));
        out.rgb = g.sigmoid(linear(g, params, hc, prefix + "/rgb/l1"));
    }
    return out;
}

double occupancy_prob(double sigma_logit) {
    const double sp = sigma_logit > 0 ? sigma_logit + std::log1p(std::exp(-sigma_logit))
                                      : std::log1p(std::exp(sigma_logit));
    return std::tanh(sp);
}

ad::Var occupancy_prob(ad::Graph& g, ad::Var sigma) { return g.tanh_(g.softplus(sigma)); }

Composition compose_scene(ad::Graph& g, const std::vector<ad::Var>& sigmas,
                          const std::vector<ad::Var>& colors) {
    if (sigmas.empty()) throw Error("compose_scene: need at least one component");
    Composition out;
    ad::Var total;
    for (size_t k = 0; k < sigmas.size(); ++k) {
        ad::Var sp = g.softplus(sigmas[k]);
        total = k == 0 ? sp : g.add(total, sp);
    }
    out.phi_scene = g.tanh_(total);

    const std::vector<ad::Var> smax = ad::softmax_components(g, sigmas);
    for (size_t k = 0; k < sigmas.size(); ++k)
        out.phi_hat.push_back(g.mul(out.phi_scene, smax[k]));

    if (!colors.empty()) {
        if (colors.size() != sigmas.size())
            throw Error("compose_scene: color/sigma count mismatch");
        for (size_t k = 0; k < colors.size(); ++k) {
            ad::Var weighted = g.mul_colvec(colors[k], out.phi_hat[k]);
            out.c_scene = k == 0 ? weighted : g.add(out.c_scene, weighted);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Encoders

void create_object_encoder_params(ad::ParamStore& params, const std::string& prefix,
                                  const EncoderConfig& cfg, uint64_t seed) {
    nn::create_point_encoder_params(params, prefix, cfg.point_encoder(), seed);
    params.create(prefix + "/mean/W", cfg.hidden, cfg.latent_dim,
                  std::sqrt(1.0 / cfg.hidden), seed);
    params.create(prefix + "/mean/b", 1, cfg.latent_dim, 0.0, seed);
    params.create(prefix + "/logstd/W", cfg.hidden, cfg.latent_dim,
                  std::sqrt(1.0 / cfg.hidden), seed);
    params.create(prefix + "/logstd/b", 1, cfg.latent_dim, 0.0, seed);
}

void create_shape_encoder_params(ad::ParamStore& params, const std::string& prefix,
                                 const EncoderConfig& cfg, uint64_t seed) {
    nn::create_point_encoder_params(params, prefix, cfg.point_encoder(), seed);
    params.create(prefix + "/out/W", cfg.hidden, cfg.latent_dim, std::sqrt(1.0 / cfg.hidden),
                  seed);
    params.create(prefix + "/out/b", 1, cfg.latent_dim, 0.0, seed);
}

namespace {

ad::Var encoder_trunk(ad::Graph& g, ad::ParamStore& params, const std::string& prefix,
                      const EncoderConfig& cfg, const std::vector<Vector3d>& positions,
                      ad::Var feats) {
    if (positions.empty()) throw Error("encoder: empty point cloud");
    const int M = static_cast<int>(positions.size());
    ad::Tensor geom_feats(M, 4);
    for (int i = 0; i < M; ++i) {
        geom_feats.at(i, 0) = 1.0;
        for (int a = 0; a < 3; ++a) geom_feats.at(i, 1 + a) = positions[i][a];
    }
    ad::Var input = g.concat_cols(g.constant(std::move(geom_feats)), feats);
    ad::Var pooled =
        nn::point_encoder_forward(g, params, prefix, cfg.point_encoder(), positions, input);
    return g.relu(pooled);
}

}  // namespace

ObjectLatent encode_object(ad::Graph& g, ad::ParamStore& params, const std::string& prefix,
                           const EncoderConfig& cfg, const std::vector<Vector3d>& positions,
                           ad::Var feats, uint64_t eps_seed) {
    ad::Var h = encoder_trunk(g, params, prefix, cfg, positions, feats);
    ObjectLatent out;
    out.mean = linear(g, params, h, prefix + "/mean");
    out.log_std = g.clamp_max(g.clamp_min(linear(g, params, h, prefix + "/logstd"), -6.0), 2.0);

    Rng rng = rng_for(eps_seed, "latent_eps");
    std::normal_distribution<double> gauss(0.0, 1.0);
    out.eps = ad::Tensor(1, cfg.latent_dim);
    for (auto& e : out.eps.data) e = gauss(rng);
    out.sample = g.add(out.mean, g.mul(g.exp_(out.log_std), g.constant(out.eps)));
    return out;
}

ad::Var encode_shape(ad::Graph& g, ad::ParamStore& params, const std::string& prefix,
                     const EncoderConfig& cfg, const std::vector<Vector3d>& positions,
                     ad::Var feats) {
    ad::Var h = encoder_trunk(g, params, prefix, cfg, positions, feats);
    return linear(g, params, h, prefix + "/out");
}

// ---------------------------------------------------------------------------
// Value-level field utilities (no gradients)

std::vector<double> field_occupancy_grid(ad::ParamStore& params, const std::string& prefix,
                                         FieldKind kind, const FieldConfig& cfg,
                                         const ad::Tensor& latent, int S) {
    ad::Graph g;
    ad::Var z = g.constant(latent);
    PlaneSet planes = decode_planes(g, params, prefix, cfg, z);
    const geom::VoxelGrid grid = geom::voxel_centers(geom::ObjectPose{}, S);
    FieldSamples samples = query_field(g, params, prefix, kind, cfg, planes, grid.canonical,
                                       nullptr);
    const ad::Tensor& sigma = g.value(samples.sigma);
    std::vector<double> occ(sigma.rows);
    for (int i = 0; i < sigma.rows; ++i) occ[i] = occupancy_prob(sigma.at(i, 0));
    return occ;
}

geom::PointCloud complete_shape(ad::ParamStore& params, const FieldConfig& cfg,
                                const ad::Tensor& shape_embedding, const ObjectPose& pose,
                                int S, double phi_threshold) {
    if (S < 1) throw Error("complete_shape: S must be >= 1");
    if (phi_threshold <= 0.0 || phi_threshold >= 1.0)
        throw Error("complete_shape: threshold must be in (0,1)");
    const std::vector<double> occ =
        field_occupancy_grid(params, "field/shape", FieldKind::Shape, cfg, shape_embedding, S);
    const geom::VoxelGrid grid = geom::voxel_centers(pose, S);
    geom::PointCloud out;
    for (size_t i = 0; i < occ.size(); ++i)
        if (occ[i] > phi_threshold) out.positions.push_back(grid.world[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Ray-marched rendering

RenderedImage render_view_from_fields(ad::ParamStore& params, const FieldConfig& cfg,
                                      const std::vector<ComponentField>& components,
                                      const synth::CameraView& camera,
                                      const RenderOptions& opt) {
    RenderedImage img;
    img.width = camera.width;
    img.height = camera.height;
    img.rgb.assign(static_cast<size_t>(camera.width) * camera.height * 3, 0.0f);
    img.depth.assign(static_cast<size_t>(camera.width) * camera.height, 0.0f);

    // Decode every component's planes once.
    ad::Graph g;
    std::vector<PlaneSet> planes;
    planes.reserve(components.size());
    for (const auto& comp : components)
        planes.push_back(decode_planes(g, params, comp.prefix, cfg, g.constant(comp.latent)));

    Rng rng = rng_for(opt.seed, "render_jitter");
    std::uniform_real_distribution<double> uni01(0.0, 1.0);
    const int M = opt.samples;

    for (int v = 0; v < camera.height; ++v) {
        for (int u = 0; u < camera.width; ++u) {
            const Vector3d dir_cam((u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0);
            const Vector3d dir = (camera.R * dir_cam).normalized();

            std::vector<double> ts(M);
            for (int s = 0; s < M; ++s) {
                const double jitter = uni01(rng);
                ts[s] = opt.near + (opt.far - opt.near) * (s + jitter) / M;
            }
            std::vector<Vector3d> world(M);
            for (int s = 0; s < M; ++s) world[s] = camera.t + ts[s] * dir;

            // Composed occupancy (Eq. 4) and softmax colour mixture (Eq. 5).
            std::vector<double> phi(M, 0.0);
            std::vector<Vector3d> color(M, Vector3d::Zero());
            std::vector<double> sp_total(M, 0.0);
            std::vector<std::vector<double>> comp_sigma(components.size());
            std::vector<std::vector<Vector3d>> comp_rgb(components.size());

            for (size_t ci = 0; ci < components.size(); ++ci) {
                const auto& comp = components[ci];
                std::vector<Vector3d> canonical(M);
                std::vector<uint8_t> inside(M, 1);
                for (int s = 0; s < M; ++s) {
                    Vector3d c = geom::canonical_transform(world[s], comp.pose);
                    if (c.cwiseAbs().maxCoeff() > 1.0) inside[s] = 0;
                    canonical[s] = c.cwiseMax(-1.0).cwiseMin(1.0);
                }
                std::vector<Vector3d> dirs(M, dir);
                FieldSamples fs = query_field(g, params, comp.prefix, comp.kind, cfg,
                                              planes[ci], canonical, &dirs);
                const ad::Tensor& sig = g.value(fs.sigma);
                const ad::Tensor* rgb =
                    field_has_color(comp.kind) ? &g.value(fs.rgb) : nullptr;
                comp_sigma[ci].resize(M);
                comp_rgb[ci].resize(M, Vector3d::Zero());
                for (int s = 0; s < M; ++s) {
                    const double x = inside[s] ? sig.at(s, 0) : -1e30;
                    comp_sigma[ci][s] = x;
                    sp_total[s] += inside[s] ? (x > 0 ? x + std::log1p(std::exp(-x))
                                                      : std::log1p(std::exp(x)))
                                             : 0.0;
                    if (rgb)
                        comp_rgb[ci][s] =
                            Vector3d(rgb->at(s, 0), rgb->at(s, 1), rgb->at(s, 2));
                }
            }
            for (int s = 0; s < M; ++s) {
                phi[s] = std::tanh(sp_total[s]);
                double smax = -1e30;
                for (size_t ci = 0; ci < components.size(); ++ci)
                    smax = std::max(smax, comp_sigma[ci][s]);
                double denom = 0.0;
                for (size_t ci = 0; ci < components.size(); ++ci)
                    denom += std::exp(comp_sigma[ci][s] - smax);
                for (size_t ci = 0; ci < components.size(); ++ci)
                    color[s] += (std::exp(comp_sigma[ci][s] - smax) / denom) * comp_rgb[ci][s];
            }

            // Over-compositing front to back.
            double trans = 1.0;
            Vector3d out_color = Vector3d::Zero();
            double out_depth = 0.0, weight_sum = 0.0;
            for (int s = 0; s < M; ++s) {
                const double w = trans * phi[s];
                out_color += w * color[s];
                out_depth += w * ts[s];
                weight_sum += w;
                trans *= (1.0 - phi[s]);
                if (trans < 1e-4) break;
            }
            out_color += trans * opt.fill_color;
            const int idx = v * camera.width + u;
            for (int ch = 0; ch < 3; ++ch)
                img.rgb[3 * idx + ch] = static_cast<float>(std::clamp(out_color[ch], 0.0, 1.0));
            img.depth[idx] = static_cast<float>(weight_sum > 1e-6 ? out_depth / weight_sum : 0.0);
        }
    }
    return img;
}

}  // namespace ocgraf::field
