#include "ocgraf/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace ocgraf::nn {

namespace {

bool lex_less(const Vector3d& a, const Vector3d& b) {
    if (a.x() != b.x()) return a.x() < b.x();
    if (a.y() != b.y()) return a.y() < b.y();
    return a.z() < b.z();
}

int64_t cell_key(int ix, int iy, int iz) {
    const int64_t off = 1 << 20;
    return ((ix + off) << 42) | ((iy + off) << 21) | (iz + off);
}

}  // namespace

std::vector<Vector3d> kernel_point_layout(int kp, double radius) {
    if (kp < 1) throw Error("kernel_point_layout: kp must be >= 1");
    std::vector<Vector3d> pts;
    pts.emplace_back(0, 0, 0);
    const int shell = kp - 1;
    const double golden = M_PI * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < shell; ++i) {
        const double z = 1.0 - 2.0 * (i + 0.5) / shell;
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double phi = golden * i;
        pts.emplace_back(radius * r * std::cos(phi), radius * r * std::sin(phi), radius * z);
    }
    return pts;
}

double kernel_correlation(const Vector3d& offset, const Vector3d& kernel_point, double sigma) {
    return std::max(0.0, 1.0 - (offset - kernel_point).norm() / sigma);
}

std::vector<std::vector<int>> radius_neighbors(const std::vector<Vector3d>& queries,
                                               const std::vector<Vector3d>& supports,
                                               double radius, int max_neighbors) {
    std::unordered_map<int64_t, std::vector<int>> grid;
    Vector3d lo = supports.empty() ? Vector3d::Zero() : supports[0];
    for (const auto& p : supports) lo = lo.cwiseMin(p);
    auto cell_of = [&](const Vector3d& p) {
        return std::array<int, 3>{static_cast<int>(std::floor((p.x() - lo.x()) / radius)),
                                  static_cast<int>(std::floor((p.y() - lo.y()) / radius)),
                                  static_cast<int>(std::floor((p.z() - lo.z()) / radius))};
    };
    for (int i = 0; i < static_cast<int>(supports.size()); ++i) {
        auto c = cell_of(supports[i]);
        grid[cell_key(c[0], c[1], c[2])].push_back(i);
    }

    const double r2 = radius * radius;
    std::vector<std::vector<int>> out(queries.size());
    std::vector<std::pair<double, int>> cand;
    for (int i = 0; i < static_cast<int>(queries.size()); ++i) {
        cand.clear();
        auto c = cell_of(queries[i]);
        for (int dx = -1; dx <= 1; ++dx)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dz = -1; dz <= 1; ++dz) {
                    auto it = grid.find(cell_key(c[0] + dx, c[1] + dy, c[2] + dz));
                    if (it == grid.end()) continue;
                    for (int j : it->second) {
                        const double d2 = (queries[i] - supports[j]).squaredNorm();
                        if (d2 <= r2) cand.emplace_back(d2, j);
                    }
                }
        std::sort(cand.begin(), cand.end(), [&](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first < b.first;
            return lex_less(supports[a.second], supports[b.second]);
        });
        if (static_cast<int>(cand.size()) > max_neighbors) cand.resize(max_neighbors);
        for (const auto& [d2, j] : cand) out[i].push_back(j);
    }
    return out;
}

std::shared_ptr<ad::KpPlan> make_kp_plan(const std::vector<Vector3d>& positions,
                                         const std::vector<std::vector<int>>& neighbors,
                                         int kp, double radius) {
    auto plan = std::make_shared<ad::KpPlan>();
    plan->rows_out = static_cast<int>(positions.size());
    plan->kp = kp;
    const auto kernel = kernel_point_layout(kp, radius);
    const double sigma = radius / 2.0;
    for (int i = 0; i < static_cast<int>(positions.size()); ++i) {
        for (int j : neighbors[i]) {
            const Vector3d offset = positions[j] - positions[i];
            for (int k = 0; k < kp; ++k) {
                const double w = kernel_correlation(offset, kernel[k], sigma);
                if (w > 0.0) plan->entries.push_back({i, j, k, w});
            }
        }
    }
    return plan;
}

ad::Var point_conv(ad::Graph& g, ad::Var features, std::shared_ptr<const ad::KpPlan> plan,
                   ad::Parameter& weights) {
    return g.matmul(g.kp_gather(features, std::move(plan)), g.param(weights));
}

std::vector<int> fps_deterministic(const std::vector<Vector3d>& positions, int count) {
    const int n = static_cast<int>(positions.size());
    if (count >= n) {
        std::vector<int> all(n);
        for (int i = 0; i < n; ++i) all[i] = i;
        return all;
    }
    int start = 0;
    for (int i = 1; i < n; ++i)
        if (lex_less(positions[i], positions[start])) start = i;

    std::vector<int> picked{start};
    std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
    int current = start;
    for (int it = 1; it < count; ++it) {
        int best = -1;
        for (int i = 0; i < n; ++i) {
            const double d2 = (positions[i] - positions[current]).squaredNorm();
            if (d2 < min_d2[i]) min_d2[i] = d2;
            if (best < 0 || min_d2[i] > min_d2[best] ||
                (min_d2[i] == min_d2[best] && lex_less(positions[i], positions[best])))
                best = i;
        }
        picked.push_back(best);
        current = best;
    }
    return picked;
}

ScenePlans build_scene_plans(const std::vector<Vector3d>& positions, const BackboneConfig& cfg) {
    ScenePlans plans;
    plans.positions.push_back(positions);
    for (int s = 0; s <= cfg.levels; ++s) {
        const auto& pos = plans.positions[s];
        auto nbrs = radius_neighbors(pos, pos, cfg.radius_at(s), cfg.max_neighbors);
        plans.conv_plans.push_back(make_kp_plan(pos, nbrs, cfg.kernel_points, cfg.radius_at(s)));
        if (s == cfg.levels) break;

        const int coarse_n = std::max(1, static_cast<int>(pos.size()) / 4);
        const auto subset = fps_deterministic(pos, coarse_n);
        std::vector<Vector3d> coarse;
        coarse.reserve(subset.size());
        for (int i : subset) coarse.push_back(pos[i]);

        // Assign each fine point to its nearest coarse point (lex ties).
        std::vector<int> assign(pos.size(), 0);
        auto groups = std::make_shared<std::vector<std::vector<int>>>(coarse.size());
        for (int i = 0; i < static_cast<int>(pos.size()); ++i) {
            int best = 0;
            double best_d2 = (pos[i] - coarse[0]).squaredNorm();
            for (int j = 1; j < static_cast<int>(coarse.size()); ++j) {
                const double d2 = (pos[i] - coarse[j]).squaredNorm();
                if (d2 < best_d2 || (d2 == best_d2 && lex_less(coarse[j], coarse[best]))) {
                    best = j;
                    best_d2 = d2;
                }
            }
            assign[i] = best;
            (*groups)[best].push_back(i);
        }
        plans.pool_groups.push_back(groups);
        plans.unpool_idx.push_back(assign);
        plans.positions.push_back(std::move(coarse));
    }
    return plans;
}

// ---------------------------------------------------------------------------
// U-Net

namespace {

std::string conv_name(int stage, int idx) {
    return "backbone/s" + std::to_string(stage) + "/conv" + std::to_string(idx);
}

ad::Var conv_block(ad::Graph& g, ad::ParamStore& params, ad::Var x,
                   std::shared_ptr<const ad::KpPlan> plan, const std::string& name) {
    ad::Var y = point_conv(g, x, std::move(plan), *params.find(name + "/W"));
    y = g.add_rowvec(y, g.param(*params.find(name + "/b")));
    return g.relu(y);
}

ad::Var linear(ad::Graph& g, ad::ParamStore& params, ad::Var x, const std::string& name) {
    ad::Var y = g.matmul(x, g.param(*params.find(name + "/W")));
    return g.add_rowvec(y, g.param(*params.find(name + "/b")));
}

}  // namespace

void Backbone::create_params(ad::ParamStore& params, uint64_t seed) const {
    const int D = cfg_.feature_dim;
    const int kp = cfg_.kernel_points;
    auto conv = [&](const std::string& name, int din, int dout) {
        params.create(name + "/W", kp * din, dout, std::sqrt(2.0 / (3.0 * din)), seed);
        params.create(name + "/b", 1, dout, 0.0, seed);
    };
    auto lin = [&](const std::string& name, int din, int dout, double scale) {
        params.create(name + "/W", din, dout, scale * std::sqrt(2.0 / din), seed);
        params.create(name + "/b", 1, dout, 0.0, seed);
    };

    for (int s = 0; s <= cfg_.levels; ++s) {
        conv(conv_name(s, 0), s == 0 ? 4 : D, D);
        conv(conv_name(s, 1), D, D);
    }
    for (int s = 0; s < cfg_.levels; ++s) {
        lin("backbone/up" + std::to_string(s) + "/merge", 2 * D, D, 1.0);
        conv("backbone/up" + std::to_string(s) + "/conv", D, D);
    }
    const int H = cfg_.head_hidden;
    for (const char* head : {"seg", "feat"}) {
        lin(std::string("backbone/head_") + head + "/l0", D, H, 1.0);
        lin(std::string("backbone/head_") + head + "/l1", H, D, 1.0);
    }
}

FeatureMaps Backbone::encode_scene(ad::Graph& g, ad::ParamStore& params, const ScenePlans& plans,
                                   const geom::PointCloud& cloud) const {
    if (cloud.size() != cfg_.n_points)
        throw Error("encode_scene: expected exactly " + std::to_string(cfg_.n_points) +
                    " points, got " + std::to_string(cloud.size()));
    if (!cloud.has_colors()) throw Error("encode_scene: cloud must carry colors");

    const int N = cloud.size();
    ad::Tensor feats0(N, 4);
    for (int i = 0; i < N; ++i) {
        feats0.at(i, 0) = 1.0;
        for (int c = 0; c < 3; ++c) feats0.at(i, 1 + c) = cloud.colors[i][c];
    }

    std::vector<ad::Var> skips;
    ad::Var x = g.constant(std::move(feats0));
    for (int s = 0; s <= cfg_.levels; ++s) {
        x = conv_block(g, params, x, plans.conv_plans[s], conv_name(s, 0));
        x = conv_block(g, params, x, plans.conv_plans[s], conv_name(s, 1));
        if (s == cfg_.levels) break;
        skips.push_back(x);
        x = g.segment_max(x, plans.pool_groups[s]);
    }

    for (int s = cfg_.levels - 1; s >= 0; --s) {
        ad::Var up = g.gather_rows(x, plans.unpool_idx[s]);
        ad::Var merged = g.concat_cols(up, skips[s]);
        const std::string prefix = "backbone/up" + std::to_string(s);
        x = g.relu(linear(g, params, merged, prefix + "/merge"));
        x = conv_block(g, params, x, plans.conv_plans[s], prefix + "/conv");
    }

    FeatureMaps out;
    out.zeta = x;
    out.positions = plans.positions[0];
    auto head = [&](const char* name) {
        ad::Var h = g.relu(linear(g, params, x, std::string("backbone/head_") + name + "/l0"));
        return linear(g, params, h, std::string("backbone/head_") + name + "/l1");
    };
    out.zeta_seg = head("seg");
    out.zeta_feat = head("feat");
    return out;
}

// ---------------------------------------------------------------------------
// Generic pooled point encoder

void create_point_encoder_params(ad::ParamStore& params, const std::string& prefix,
                                 const PointEncoderConfig& cfg, uint64_t seed) {
    const int kp = cfg.kernel_points;
    params.create(prefix + "/conv0/W", kp * cfg.in_dim, cfg.hidden,
                  std::sqrt(2.0 / (3.0 * cfg.in_dim)), seed);
    params.create(prefix + "/conv0/b", 1, cfg.hidden, 0.0, seed);
    params.create(prefix + "/conv1/W", kp * cfg.hidden, cfg.hidden,
                  std::sqrt(2.0 / (3.0 * cfg.hidden)), seed);
    params.create(prefix + "/conv1/b", 1, cfg.hidden, 0.0, seed);
    params.create(prefix + "/post/W", cfg.hidden, cfg.out_dim, std::sqrt(2.0 / cfg.hidden), seed);
    params.create(prefix + "/post/b", 1, cfg.out_dim, 0.0, seed);
}

ad::Var point_encoder_forward(ad::Graph& g, ad::ParamStore& params, const std::string& prefix,
                              const PointEncoderConfig& cfg,
                              const std::vector<Vector3d>& positions, ad::Var features) {
    auto nbrs = radius_neighbors(positions, positions, cfg.radius, cfg.max_neighbors);
    auto plan = make_kp_plan(positions, nbrs, cfg.kernel_points, cfg.radius);

    ad::Var x = point_conv(g, features, plan, *params.find(prefix + "/conv0/W"));
    x = g.relu(g.add_rowvec(x, g.param(*params.find(prefix + "/conv0/b"))));
    x = point_conv(g, x, plan, *params.find(prefix + "/conv1/W"));
    x = g.relu(g.add_rowvec(x, g.param(*params.find(prefix + "/conv1/b"))));

    auto all_rows = std::make_shared<std::vector<std::vector<int>>>(1);
    (*all_rows)[0].resize(positions.size());
    for (int i = 0; i < static_cast<int>(positions.size()); ++i) (*all_rows)[0][i] = i;
    ad::Var pooled = g.segment_max(x, all_rows);

    ad::Var y = g.matmul(pooled, g.param(*params.find(prefix + "/post/W")));
    return g.add_rowvec(y, g.param(*params.find(prefix + "/post/b")));
}

}  // namespace ocgraf::nn
