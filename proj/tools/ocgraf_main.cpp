#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "ocgraf/checkpoint.hpp"
#include "ocgraf/config.hpp"
#include "ocgraf/evaluation.hpp"
#include "ocgraf/pipeline.hpp"
#include "ocgraf/synthdata.hpp"
#include "ocgraf/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ocgraf;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    int64_t seed = -1;  // <0: keep config seed
};

io::RunConfig load_config_or_exit(const CommonArgs& args) {
    if (!fs::exists(args.config_path)) {
        std::cerr << "error: config file not found: " << args.config_path << "\n";
        std::exit(2);
    }
    io::RunConfig cfg = io::load_run_config(args.config_path);
    if (args.seed >= 0) cfg.seed = static_cast<uint64_t>(args.seed);
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    return cfg;
}

std::vector<synth::SceneRecord> load_split(const fs::path& dataset_dir,
                                           const std::vector<std::string>& names,
                                           const std::string& split, int limit = -1) {
    std::vector<synth::SceneRecord> scenes;
    for (const auto& name : names) {
        if (limit >= 0 && static_cast<int>(scenes.size()) >= limit) break;
        scenes.push_back(synth::load_scene(dataset_dir, name, split));
    }
    return scenes;
}

void write_ppm(const fs::path& path, const std::vector<float>& rgb, int width, int height) {
    std::ofstream out(path, std::ios::binary);
    out << "P6\n" << width << " " << height << "\n255\n";
    for (size_t i = 0; i < static_cast<size_t>(width) * height * 3; ++i) {
        const int v = static_cast<int>(std::lround(std::clamp(rgb[i], 0.0f, 1.0f) * 255.0f));
        out.put(static_cast<char>(v));
    }
}

void write_ply(const fs::path& path, const geom::PointCloud& cloud) {
    std::ofstream out(path);
    out << "ply\nformat ascii 1.0\nelement vertex " << cloud.positions.size()
        << "\nproperty float x\nproperty float y\nproperty float z\n"
        << "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
    for (int i = 0; i < cloud.size(); ++i) {
        const auto& p = cloud.positions[i];
        int r = 200, g = 200, b = 200;
        if (cloud.has_colors()) {
            r = static_cast<int>(std::lround(std::clamp(cloud.colors[i].x(), 0.0, 1.0) * 255));
            g = static_cast<int>(std::lround(std::clamp(cloud.colors[i].y(), 0.0, 1.0) * 255));
            b = static_cast<int>(std::lround(std::clamp(cloud.colors[i].z(), 0.0, 1.0) * 255));
        }
        out << p.x() << " " << p.y() << " " << p.z() << " " << r << " " << g << " " << b << "\n";
    }
}

int cmd_synth(const CommonArgs& args) {
    io::RunConfig cfg = load_config_or_exit(args);
    const fs::path out = fs::path(cfg.out_dir);
    const fs::path manifest = synth::make_dataset(cfg.data, cfg.seed, out);
    std::cout << manifest.string() << "\n";
    return 0;
}

int cmd_train(const CommonArgs& args, const std::string& dataset, bool resume) {
    io::RunConfig cfg = load_config_or_exit(args);
    const std::string digest = io::config_digest(cfg);
    const fs::path out(cfg.out_dir);
    fs::create_directories(out);

    const auto manifest = synth::load_manifest(dataset);
    auto scenes = load_split(dataset, manifest.train_scenes, "train");
    if (scenes.empty()) throw Error("train: dataset has no train scenes");

    pipeline::Models models(cfg.model);
    models.init_params(cfg.seed);

    int64_t start_step = 0;
    if (resume) {
        if (auto ckpt = io::latest_checkpoint(out)) {
            const auto info = io::load_checkpoint(*ckpt, models.params, digest);
            start_step = info.step;
            OCGRAF_INFO("resumed from %s at step %lld", ckpt->string().c_str(),
                        static_cast<long long>(start_step));
        }
    }

    train::Trainer trainer(models, std::move(scenes), cfg.training, cfg.seed);
    std::ofstream log(out / "train_log.jsonl", start_step > 0 ? std::ios::app : std::ios::trunc);

    for (int64_t step = start_step; step < cfg.training.steps; ++step) {
        const auto result = trainer.step(step);
        json line = {{"step", step},
                     {"L_obs", result.losses.obs},
                     {"L_empty", result.losses.empty},
                     {"L_shape", result.losses.shape},
                     {"L_att", result.losses.att},
                     {"L_sparsity", result.losses.sparsity},
                     {"total", result.losses.total},
                     {"wall_ms", result.wall_ms}};
        log << line.dump() << "\n";
        log.flush();
        if ((step + 1) % 100 == 0 || step == start_step)
            OCGRAF_INFO("step %lld total %.4f (obs %.3f empty %.3f shape %.3f att %.3f)",
                        static_cast<long long>(step), result.losses.total, result.losses.obs,
                        result.losses.empty, result.losses.shape, result.losses.att);
        const int64_t done = step + 1;
        if (done % cfg.checkpoint_every == 0 || done == cfg.training.steps) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "ckpt_%08lld", static_cast<long long>(done));
            io::save_checkpoint(out / buf, models.params, done, digest);
        }
    }
    std::cout << "trained to step " << cfg.training.steps << ", checkpoints in " << out << "\n";
    return 0;
}

fs::path resolve_checkpoint(const std::string& arg) {
    fs::path p(arg);
    if (fs::exists(p / "manifest.json")) return p;
    if (auto latest = io::latest_checkpoint(p)) return *latest;
    throw Error("no checkpoint found at " + arg);
}

int cmd_infer(const CommonArgs& args, const std::string& checkpoint, const std::string& dataset,
              const std::string& scene_name, int view_idx, int render_views, bool per_object) {
    io::RunConfig cfg = load_config_or_exit(args);
    pipeline::Models models(cfg.model);
    models.init_params(cfg.seed);
    io::load_checkpoint(resolve_checkpoint(checkpoint), models.params, "");

    const auto scene = synth::load_scene(dataset, scene_name, "test");
    const auto& view = scene.views.at(view_idx);

    const fs::path out(cfg.out_dir);
    fs::create_directories(out);

    const auto t0 = std::chrono::steady_clock::now();
    pipeline::PipelineRun run = pipeline::run_pipeline(models, view, cfg.seed, false);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    json objects = json::array();
    for (const auto& obj : run.objects) {
        json entry;
        entry["mask_index"] = obj.state.mask_index;
        json R = json::array();
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) R.push_back(obj.state.pose.R(r, c));
        entry["R"] = R;
        entry["T"] = {obj.state.pose.T.x(), obj.state.pose.T.y(), obj.state.pose.T.z()};
        entry["b"] = obj.state.pose.b;
        entry["box_extents"] = {obj.state.box.extents.x(), obj.state.box.extents.y(),
                                obj.state.box.extents.z()};
        entry["z_mean"] = obj.state.z_mean.data;
        objects.push_back(entry);
    }
    json result = {{"objects", objects}, {"wall_seconds", wall}, {"format_version", 1}};

    // Reconstructed cloud: occupied object voxels plus plane samples.
    metrics::ReconstructOptions ropt;
    metrics::Reconstruction rec = metrics::reconstruct_scene(models, view, cfg.seed, ropt);
    write_ply(out / "reconstruction.ply", rec.cloud);
    result["cloud"] = "reconstruction.ply";

    if (render_views > 0) {
        std::vector<field::ComponentField> components;
        components.push_back({"field/bg", field::FieldKind::Background,
                              run.graph->value(run.z_bg.mean), run.scene_pose});
        for (const auto& obj : run.objects)
            components.push_back(
                {"field/object", field::FieldKind::Object, obj.state.z_mean, obj.state.pose});

        synth::GeneratorConfig ring_cfg = cfg.data;
        auto cams = synth::camera_ring(ring_cfg, render_views);
        field::RenderOptions render_opt;
        render_opt.seed = cfg.seed;
        for (int i = 0; i < render_views; ++i) {
            const auto img =
                field::render_view_from_fields(models.params, cfg.model.field, components,
                                               cams[i], render_opt);
            char buf[48];
            std::snprintf(buf, sizeof(buf), "render_%02d.ppm", i);
            write_ppm(out / buf, img.rgb, img.width, img.height);
            std::snprintf(buf, sizeof(buf), "render_%02d_depth.bin", i);
            std::ofstream d(out / buf, std::ios::binary);
            d.write(reinterpret_cast<const char*>(img.depth.data()),
                    img.depth.size() * sizeof(float));
        }
        if (per_object) {
            for (size_t oi = 0; oi < run.objects.size(); ++oi) {
                std::vector<field::ComponentField> solo = {
                    {"field/object", field::FieldKind::Object, run.objects[oi].state.z_mean,
                     run.objects[oi].state.pose}};
                const auto img = field::render_view_from_fields(models.params, cfg.model.field,
                                                                solo, cams[0], render_opt);
                char buf[48];
                std::snprintf(buf, sizeof(buf), "render_object_%02zu.ppm", oi);
                write_ppm(out / buf, img.rgb, img.width, img.height);
            }
        }
    }

    std::ofstream jf(out / "inference.json");
    jf << result.dump(2) << "\n";
    std::cout << "objects: " << run.objects.size() << ", wall_seconds: " << wall << "\n";
    return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint, const std::string& dataset,
             bool pose_only) {
    io::RunConfig cfg = load_config_or_exit(args);
    pipeline::Models models(cfg.model);
    models.init_params(cfg.seed);
    io::load_checkpoint(resolve_checkpoint(checkpoint), models.params, "");

    const auto manifest = synth::load_manifest(dataset);
    auto test_scenes = load_split(dataset, manifest.test_scenes, "test");
    if (test_scenes.empty()) throw Error("eval: dataset has no test scenes");

    const fs::path out(cfg.out_dir);
    fs::create_directories(out);
    json report;
    std::ofstream csv(out / "tables.csv");

    if (!pose_only) {
        const auto dhd = metrics::eval_reconstruction(models, test_scenes, cfg.data, cfg.seed,
                                                      cfg.eval.fg_only);
        report["dhd"] = {{"per_scene", dhd.per_scene},
                         {"mean", dhd.mean},
                         {"std", dhd.stddev},
                         {"mean_wall_seconds", dhd.mean_wall_seconds},
                         {"scene_diameter", dhd.scene_diameter},
                         {"fg_only", cfg.eval.fg_only}};
        csv << "section,model,views,test_time_s,dhd_mean,dhd_std\n";
        csv << "reconstruction,ocgraf,1," << dhd.mean_wall_seconds << "," << dhd.mean << ","
            << dhd.stddev << "\n";
    }

    json pose_rows = json::array();
    csv << "section,completion,drop_frac,miou_0.3,miou_0.5,miou_0.7,mean_iou,n_objects\n";
    auto add_row = [&](double drop, bool completion) {
        const auto row = metrics::eval_pose(models, test_scenes, drop, completion, cfg.seed,
                                            cfg.eval.mc_samples);
        pose_rows.push_back({{"drop_frac", row.drop_frac},
                             {"completion", row.completion},
                             {"miou_0.3", row.accuracy[0]},
                             {"miou_0.5", row.accuracy[1]},
                             {"miou_0.7", row.accuracy[2]},
                             {"mean_iou", row.mean_iou},
                             {"n_objects", row.n_objects}});
        csv << "pose," << (completion ? "yes" : "no") << "," << drop << "," << row.accuracy[0]
            << "," << row.accuracy[1] << "," << row.accuracy[2] << "," << row.mean_iou << ","
            << row.n_objects << "\n";
    };
    add_row(0.0, false);  // observation-only baseline row
    for (double drop : {0.0, 0.3, 0.5, 0.7, 0.9, 1.0}) add_row(drop, true);
    report["pose_miou"] = pose_rows;

    {
        std::vector<synth::SceneRecord> matching_scenes = test_scenes;
        if (static_cast<int>(matching_scenes.size()) > cfg.eval.matching_scenes)
            matching_scenes.resize(cfg.eval.matching_scenes);
        const auto match = metrics::eval_matching(models, matching_scenes, cfg.data, cfg.seed);
        report["matching"] = {{"accuracy_cosine", match.accuracy_cosine},
                              {"accuracy_l2", match.accuracy_l2},
                              {"random_baseline", match.random_baseline},
                              {"assignments_identical", match.assignments_identical},
                              {"scene_pairs", match.scene_pairs}};
    }

    std::ofstream jf(out / "report.json");
    jf << report.dump(2) << "\n";
    std::cout << "report written to " << (out / "report.json").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"object-centric generative radiance fields for tabletop RGB-D scenes"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string dataset, checkpoint, scene_name = "test_00000";
    int view_idx = 0, render_views = 0;
    bool resume = false, per_object = false, pose_only = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", args.config_path, "run configuration (JSON)")->required();
        cmd->add_option("--out", args.out_dir, "output directory override");
        cmd->add_option("--seed", args.seed, "seed override");
    };

    CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
    add_common(synth_cmd);

    CLI::App* train_cmd = app.add_subcommand("train", "train the model");
    add_common(train_cmd);
    train_cmd->add_option("--dataset", dataset, "dataset directory")->required();
    train_cmd->add_flag("--resume", resume, "resume from the latest checkpoint in --out");

    CLI::App* infer_cmd = app.add_subcommand("infer", "single-view inference");
    add_common(infer_cmd);
    infer_cmd->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
    infer_cmd->add_option("--dataset", dataset, "dataset directory")->required();
    infer_cmd->add_option("--scene", scene_name, "scene name within the dataset");
    infer_cmd->add_option("--view", view_idx, "view index");
    infer_cmd->add_option("--render-views", render_views, "ray-marched novel views to emit");
    infer_cmd->add_flag("--per-object", per_object, "also render each component alone");

    CLI::App* eval_cmd = app.add_subcommand("eval", "run the evaluation protocols");
    add_common(eval_cmd);
    eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
    eval_cmd->add_option("--dataset", dataset, "dataset directory")->required();
    eval_cmd->add_flag("--pose-only", pose_only, "skip the reconstruction metric");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth_cmd->parsed()) return cmd_synth(args);
        if (train_cmd->parsed()) return cmd_train(args, dataset, resume);
        if (infer_cmd->parsed())
            return cmd_infer(args, checkpoint, dataset, scene_name, view_idx, render_views,
                             per_object);
        if (eval_cmd->parsed()) return cmd_eval(args, checkpoint, dataset, pose_only);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
