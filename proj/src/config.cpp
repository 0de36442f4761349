#include "ocgraf/config.hpp"

#include <fstream>
#include <set>

namespace ocgraf::io {

using nlohmann::json;

namespace {

// Tracks which keys a section consumed so leftovers can be reported by path.
class Section {
  public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw Error("config: " + path_ + " must be an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (j_.contains(key)) {
            try {
                out = j_.at(key).get<T>();
            } catch (const json::exception& e) {
                throw Error("config: bad value at " + path_ + "." + key + ": " + e.what());
            }
        }
    }

    json sub(const char* key) {
        seen_.insert(key);
        return j_.contains(key) ? j_.at(key) : json::object();
    }

    void finish() const {
        for (const auto& [key, _] : j_.items())
            if (!seen_.count(key))
                throw Error("config: unknown key " + path_ + "." + key);
    }

  private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void parse_vec3(Section& s, const char* key, geom::Vector3d& out) {
    std::vector<double> v{out.x(), out.y(), out.z()};
    s.get(key, v);
    if (v.size() != 3) throw Error(std::string("config: ") + key + " must have 3 entries");
    out = geom::Vector3d(v[0], v[1], v[2]);
}

}  // namespace

RunConfig parse_run_config(const json& j) {
    RunConfig cfg;
    Section root(j, "$");
    root.get("seed", cfg.seed);
    root.get("out_dir", cfg.out_dir);

    {
        Section s(root.sub("data"), "$.data");
        auto& d = cfg.data;
        s.get("n_scenes", d.n_scenes);
        s.get("n_views", d.n_views);
        s.get("n_test_scenes", d.n_test_scenes);
        s.get("n_test_views", d.n_test_views);
        s.get("object_count_min", d.object_count_min);
        s.get("object_count_max", d.object_count_max);
        s.get("half_extent_min", d.half_extent_min);
        s.get("half_extent_max", d.half_extent_max);
        s.get("placement_half", d.placement_half);
        s.get("min_separation", d.min_separation);
        s.get("table_half_size", d.table_half_size);
        s.get("resolution", d.resolution);
        s.get("fov_deg", d.fov_deg);
        s.get("camera_radius", d.camera_radius);
        s.get("camera_height", d.camera_height);
        {
            Section n(s.sub("noise"), "$.data.noise");
            n.get("enabled", d.noise.enabled);
            n.get("depth_std", d.noise.depth_std);
            n.get("edge_prob", d.noise.edge_prob);
            n.get("edge_radius", d.noise.edge_radius);
            n.finish();
        }
        s.finish();
    }
    {
        Section s(root.sub("backbone"), "$.backbone");
        auto& b = cfg.model.backbone;
        s.get("n_points", b.n_points);
        s.get("feature_dim", b.feature_dim);
        s.get("levels", b.levels);
        s.get("kernel_points", b.kernel_points);
        s.get("base_radius", b.base_radius);
        s.get("max_neighbors", b.max_neighbors);
        s.get("head_hidden", b.head_hidden);
        s.get("backproject_stride", cfg.model.backproject_stride);
        s.get("dbscan_eps", cfg.model.dbscan_eps);
        s.get("dbscan_min_pts", cfg.model.dbscan_min_pts);
        s.get("ransac_iters", cfg.model.ransac_iters);
        s.get("ransac_thresh", cfg.model.ransac_thresh);
        s.finish();
    }
    {
        Section s(root.sub("segmentation"), "$.segmentation");
        auto& g = cfg.model.segmentation;
        s.get("K", g.K);
        s.get("tau_init", g.tau_init);
        s.get("plane_bias", g.plane_bias);
        s.get("assign_threshold", g.assign_threshold);
        s.get("min_points", g.min_points);
        s.finish();
    }
    {
        Section s(root.sub("radiance"), "$.radiance");
        auto& f = cfg.model.field;
        s.get("latent_dim", f.latent_dim);
        s.get("plane_res", f.plane_res);
        s.get("plane_channels", f.plane_channels);
        s.get("decoder_hidden", f.decoder_hidden);
        s.get("head_hidden", f.head_hidden);
        s.get("concat_fusion", f.concat_fusion);
        s.get("posenc_freqs", f.posenc_freqs);
        s.get("S", f.S);
        s.get("phi_threshold", f.phi_threshold);
        s.get("encoder_hidden", cfg.model.encoder.hidden);
        s.get("encoder_radius", cfg.model.encoder.radius);
        s.get("encoder_max_neighbors", cfg.model.encoder.max_neighbors);
        s.get("encoder_kernel_points", cfg.model.encoder.kernel_points);
        parse_vec3(s, "scene_center", cfg.model.scene_center);
        s.get("scene_extent", cfg.model.scene_extent);
        s.finish();
    }
    {
        Section s(root.sub("pose"), "$.pose");
        s.get("b_init", cfg.model.b_init);
        s.get("drop_frac", cfg.model.drop_frac);
        s.get("use_completion", cfg.model.use_completion);
        s.finish();
    }
    {
        Section s(root.sub("training"), "$.training");
        auto& t = cfg.training;
        s.get("sigma_std", t.sigma_std);
        s.get("lambda_sparsity", t.lambda_sparsity);
        s.get("n_r", t.n_r);
        s.get("learning_rate", t.learning_rate);
        s.get("steps", t.steps);
        s.get("sparsity_probes", t.sparsity_probes);
        s.get("empty_margin_vox", t.empty_margin_vox);
        s.get("eta_sampled", t.eta_sampled);
        s.get("att_stopgrad_masks", t.att_stopgrad_masks);
        s.get("att_stopgrad_fields", t.att_stopgrad_fields);
        s.get("grad_clip", t.grad_clip);
        s.get("checkpoint_every", cfg.checkpoint_every);
        s.finish();
    }
    {
        Section s(root.sub("eval"), "$.eval");
        s.get("mc_samples", cfg.eval.mc_samples);
        s.get("matching_scenes", cfg.eval.matching_scenes);
        s.get("fg_only", cfg.eval.fg_only);
        s.finish();
    }
    root.finish();
    cfg.model.finalize();
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("config: cannot open " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw Error("config: parse failure in " + path.string() + ": " + e.what());
    }
    return parse_run_config(j);
}

json run_config_to_json(const RunConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["out_dir"] = cfg.out_dir;
    const auto& d = cfg.data;
    j["data"] = {{"n_scenes", d.n_scenes},
                 {"n_views", d.n_views},
                 {"n_test_scenes", d.n_test_scenes},
                 {"n_test_views", d.n_test_views},
                 {"object_count_min", d.object_count_min},
                 {"object_count_max", d.object_count_max},
                 {"half_extent_min", d.half_extent_min},
                 {"half_extent_max", d.half_extent_max},
                 {"placement_half", d.placement_half},
                 {"min_separation", d.min_separation},
                 {"table_half_size", d.table_half_size},
                 {"resolution", d.resolution},
                 {"fov_deg", d.fov_deg},
                 {"camera_radius", d.camera_radius},
                 {"camera_height", d.camera_height},
                 {"noise",
                  {{"enabled", d.noise.enabled},
                   {"depth_std", d.noise.depth_std},
                   {"edge_prob", d.noise.edge_prob},
                   {"edge_radius", d.noise.edge_radius}}}};
    const auto& b = cfg.model.backbone;
    j["backbone"] = {{"n_points", b.n_points},
                     {"feature_dim", b.feature_dim},
                     {"levels", b.levels},
                     {"kernel_points", b.kernel_points},
                     {"base_radius", b.base_radius},
                     {"max_neighbors", b.max_neighbors},
                     {"head_hidden", b.head_hidden},
                     {"backproject_stride", cfg.model.backproject_stride},
                     {"dbscan_eps", cfg.model.dbscan_eps},
                     {"dbscan_min_pts", cfg.model.dbscan_min_pts},
                     {"ransac_iters", cfg.model.ransac_iters},
                     {"ransac_thresh", cfg.model.ransac_thresh}};
    const auto& sg = cfg.model.segmentation;
    j["segmentation"] = {{"K", sg.K},
                         {"tau_init", sg.tau_init},
                         {"plane_bias", sg.plane_bias},
                         {"assign_threshold", sg.assign_threshold},
                         {"min_points", sg.min_points}};
    const auto& f = cfg.model.field;
    j["radiance"] = {{"latent_dim", f.latent_dim},
                     {"plane_res", f.plane_res},
                     {"plane_channels", f.plane_channels},
                     {"decoder_hidden", f.decoder_hidden},
                     {"head_hidden", f.head_hidden},
                     {"concat_fusion", f.concat_fusion},
                     {"posenc_freqs", f.posenc_freqs},
                     {"S", f.S},
                     {"phi_threshold", f.phi_threshold},
                     {"encoder_hidden", cfg.model.encoder.hidden},
                     {"encoder_radius", cfg.model.encoder.radius},
                     {"encoder_max_neighbors", cfg.model.encoder.max_neighbors},
                     {"encoder_kernel_points", cfg.model.encoder.kernel_points},
                     {"scene_center",
                      {cfg.model.scene_center.x(), cfg.model.scene_center.y(),
                       cfg.model.scene_center.z()}},
                     {"scene_extent", cfg.model.scene_extent}};
    j["pose"] = {{"b_init", cfg.model.b_init},
                 {"drop_frac", cfg.model.drop_frac},
                 {"use_completion", cfg.model.use_completion}};
    const auto& t = cfg.training;
    j["training"] = {{"sigma_std", t.sigma_std},
                     {"lambda_sparsity", t.lambda_sparsity},
                     {"n_r", t.n_r},
                     {"learning_rate", t.learning_rate},
                     {"steps", t.steps},
                     {"sparsity_probes", t.sparsity_probes},
                     {"empty_margin_vox", t.empty_margin_vox},
                     {"eta_sampled", t.eta_sampled},
                     {"att_stopgrad_masks", t.att_stopgrad_masks},
                     {"att_stopgrad_fields", t.att_stopgrad_fields},
                     {"grad_clip", t.grad_clip},
                     {"checkpoint_every", cfg.checkpoint_every}};
    j["eval"] = {{"mc_samples", cfg.eval.mc_samples},
                 {"matching_scenes", cfg.eval.matching_scenes},
                 {"fg_only", cfg.eval.fg_only}};
    return j;
}

std::string config_digest(const RunConfig& cfg) {
    json j = run_config_to_json(cfg);
    j.erase("out_dir");  // pure output location, not numerics
    const uint64_t h = fnv1a64(j.dump());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace ocgraf::io
