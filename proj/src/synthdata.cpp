#include "ocgraf/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "json.hpp"

namespace ocgraf::synth {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(PrimitiveKind kind) {
    switch (kind) {
        case PrimitiveKind::Box: return "box";
        case PrimitiveKind::Sphere: return "sphere";
        case PrimitiveKind::Cylinder: return "cylinder";
    }
    return "box";
}

PrimitiveKind primitive_kind_from_string(const std::string& s) {
    if (s == "box") return PrimitiveKind::Box;
    if (s == "sphere") return PrimitiveKind::Sphere;
    if (s == "cylinder") return PrimitiveKind::Cylinder;
    throw Error("unknown primitive kind: " + s);
}

OrientedBox PrimitiveSpec::ground_truth_obb() const {
    OrientedBox box;
    box.center = T;
    switch (kind) {
        case PrimitiveKind::Box:
            box.R = R;
            box.extents = 2.0 * half_extents;
            break;
        case PrimitiveKind::Sphere:
            box.R = Matrix3d::Identity();
            box.extents = Vector3d::Constant(2.0 * half_extents.x());
            break;
        case PrimitiveKind::Cylinder:
            box.R = R;
            box.extents = Vector3d(2.0 * half_extents.x(), 2.0 * half_extents.x(),
                                   2.0 * half_extents.z());
            break;
    }
    return box;
}

CameraView look_at_camera(const Vector3d& eye, const Vector3d& target, int width, int height,
                          double fov_deg) {
    CameraView cam;
    cam.width = width;
    cam.height = height;
    const double f = width / (2.0 * std::tan(fov_deg * M_PI / 360.0));
    cam.fx = cam.fy = f;
    cam.cx = (width - 1) / 2.0;
    cam.cy = (height - 1) / 2.0;

    Vector3d z = (target - eye).normalized();
    Vector3d x = z.cross(Vector3d::UnitZ());
    if (x.norm() < 1e-9) x = Vector3d::UnitX();
    x.normalize();
    const Vector3d y = z.cross(x);
    cam.R.col(0) = x;
    cam.R.col(1) = y;
    cam.R.col(2) = z;
    cam.t = eye;
    return cam;
}

std::vector<CameraView> camera_ring(const GeneratorConfig& config, int n_views) {
    std::vector<CameraView> cams;
    for (int i = 0; i < n_views; ++i) {
        const double angle = 2.0 * M_PI * i / std::max(1, n_views);
        const Vector3d eye(config.camera_radius * std::cos(angle),
                           config.camera_radius * std::sin(angle), config.camera_height);
        cams.push_back(look_at_camera(eye, Vector3d::Zero(), config.resolution,
                                      config.resolution, config.fov_deg));
    }
    return cams;
}

SceneSpec make_scene(const GeneratorConfig& config, uint64_t seed) {
    if (config.object_count_min > config.object_count_max || config.object_count_min < 1)
        throw Error("make_scene: bad object count range");
    if (config.half_extent_min > config.half_extent_max || config.half_extent_min <= 0)
        throw Error("make_scene: bad size range");

    Rng rng = rng_for(seed, "make_scene");
    std::uniform_int_distribution<int> count_dist(config.object_count_min,
                                                  config.object_count_max);
    std::uniform_int_distribution<int> kind_dist(0, 2);
    std::uniform_real_distribution<double> size_dist(config.half_extent_min,
                                                     config.half_extent_max);
    std::uniform_real_distribution<double> pos_dist(-config.placement_half,
                                                    config.placement_half);
    std::uniform_real_distribution<double> yaw_dist(0.0, 2.0 * M_PI);
    std::uniform_real_distribution<double> color_dist(0.15, 0.95);

    SceneSpec scene;
    scene.rng_seed = seed;
    scene.table_half_size = config.table_half_size;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "scene_%016llx", static_cast<unsigned long long>(seed));
    scene.scene_id = buf;

    const int count = count_dist(rng);
    for (int k = 0; k < count; ++k) {
        bool placed = false;
        for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
            PrimitiveSpec obj;
            obj.kind = static_cast<PrimitiveKind>(kind_dist(rng));
            switch (obj.kind) {
                case PrimitiveKind::Box:
                    obj.half_extents =
                        Vector3d(size_dist(rng), size_dist(rng), size_dist(rng));
                    break;
                case PrimitiveKind::Sphere: {
                    const double r = size_dist(rng);
                    obj.half_extents = Vector3d::Constant(r);
                    break;
                }
                case PrimitiveKind::Cylinder: {
                    const double r = size_dist(rng);
                    obj.half_extents = Vector3d(r, r, size_dist(rng));
                    break;
                }
            }
            // Upright placement: yaw about z, resting on the table plane.
            obj.R = geom::euler_zyx(yaw_dist(rng), 0.0, 0.0);
            if (obj.kind == PrimitiveKind::Sphere) obj.R = Matrix3d::Identity();
            obj.T = Vector3d(pos_dist(rng), pos_dist(rng), obj.half_extents.z());
            obj.albedo = Vector3d(color_dist(rng), color_dist(rng), color_dist(rng));

            bool ok = true;
            for (const auto& other : scene.objects)
                if ((other.T - obj.T).norm() < config.min_separation) ok = false;
            if (ok) {
                scene.objects.push_back(obj);
                placed = true;
            }
        }
        if (!placed) throw Error("make_scene: placement failed after 1000 attempts");
    }
    return scene;
}

// ---------------------------------------------------------------------------
// Ray casting

namespace {

struct Hit {
    double t = std::numeric_limits<double>::infinity();
    Vector3d normal = Vector3d::UnitZ();
    int instance = -1;  // 0 table, k>=1 object
    bool valid() const { return std::isfinite(t); }
};

bool intersect_sphere(const Vector3d& o, const Vector3d& d, const Vector3d& c, double r,
                      double& t, Vector3d& n) {
    const Vector3d oc = o - c;
    const double b = d.dot(oc);
    const double disc = b * b - (oc.squaredNorm() - r * r);
    if (disc < 0) return false;
    const double sq = std::sqrt(disc);
    double tt = -b - sq;
    if (tt < 1e-9) tt = -b + sq;
    if (tt < 1e-9) return false;
    t = tt;
    n = (o + t * d - c).normalized();
    return true;
}

bool intersect_box_local(const Vector3d& o, const Vector3d& d, const Vector3d& h, double& t,
                         Vector3d& n_local) {
    double tmin = -std::numeric_limits<double>::infinity();
    double tmax = std::numeric_limits<double>::infinity();
    int axis_min = -1;
    double sign_min = 1;
    for (int a = 0; a < 3; ++a) {
        if (std::abs(d[a]) < 1e-12) {
            if (std::abs(o[a]) > h[a]) return false;
            continue;
        }
        double t1 = (-h[a] - o[a]) / d[a];
        double t2 = (h[a] - o[a]) / d[a];
        double s = -1;
        if (t1 > t2) {
            std::swap(t1, t2);
            s = 1;
        }
        if (t1 > tmin) {
            tmin = t1;
            axis_min = a;
            sign_min = s;
        }
        tmax = std::min(tmax, t2);
        if (tmin > tmax) return false;
    }
    if (tmax < 1e-9) return false;
    if (tmin < 1e-9 || axis_min < 0) return false;  // origin inside: ignore
    t = tmin;
    n_local = Vector3d::Zero();
    n_local[axis_min] = sign_min;
    return true;
}

bool intersect_cylinder_local(const Vector3d& o, const Vector3d& d, double r, double hz,
                              double& t, Vector3d& n_local) {
    double best = std::numeric_limits<double>::infinity();
    Vector3d best_n;
    const double a = d.x() * d.x() + d.y() * d.y();
    if (a > 1e-14) {
        const double b = o.x() * d.x() + o.y() * d.y();
        const double c = o.x() * o.x() + o.y() * o.y() - r * r;
        const double disc = b * b - a * c;
        if (disc >= 0) {
            const double sq = std::sqrt(disc);
            for (double tt : {(-b - sq) / a, (-b + sq) / a}) {
                if (tt < 1e-9 || tt >= best) continue;
                const double z = o.z() + tt * d.z();
                if (std::abs(z) <= hz) {
                    best = tt;
                    const Vector3d p = o + tt * d;
                    best_n = Vector3d(p.x(), p.y(), 0).normalized();
                }
            }
        }
    }
    if (std::abs(d.z()) > 1e-12) {
        for (double zcap : {-hz, hz}) {
            const double tt = (zcap - o.z()) / d.z();
            if (tt < 1e-9 || tt >= best) continue;
            const Vector3d p = o + tt * d;
            if (p.x() * p.x() + p.y() * p.y() <= r * r) {
                best = tt;
                best_n = Vector3d(0, 0, zcap > 0 ? 1.0 : -1.0);
            }
        }
    }
    if (!std::isfinite(best)) return false;
    t = best;
    n_local = best_n;
    return true;
}

Hit cast_ray(const SceneSpec& scene, const Vector3d& origin, const Vector3d& dir) {
    Hit hit;
    // Table: finite square at z=0.
    if (std::abs(dir.z()) > 1e-12) {
        const double t = -origin.z() / dir.z();
        if (t > 1e-9) {
            const Vector3d p = origin + t * dir;
            if (std::abs(p.x()) <= scene.table_half_size &&
                std::abs(p.y()) <= scene.table_half_size) {
                hit.t = t;
                hit.normal = Vector3d::UnitZ();
                hit.instance = 0;
            }
        }
    }
    for (int k = 0; k < static_cast<int>(scene.objects.size()); ++k) {
        const auto& obj = scene.objects[k];
        double t;
        Vector3d n;
        bool ok = false;
        switch (obj.kind) {
            case PrimitiveKind::Sphere:
                ok = intersect_sphere(origin, dir, obj.T, obj.half_extents.x(), t, n);
                break;
            case PrimitiveKind::Box: {
                const Vector3d ol = obj.R.transpose() * (origin - obj.T);
                const Vector3d dl = obj.R.transpose() * dir;
                Vector3d nl;
                ok = intersect_box_local(ol, dl, obj.half_extents, t, nl);
                if (ok) n = obj.R * nl;
                break;
            }
            case PrimitiveKind::Cylinder: {
                const Vector3d ol = obj.R.transpose() * (origin - obj.T);
                const Vector3d dl = obj.R.transpose() * dir;
                Vector3d nl;
                ok = intersect_cylinder_local(ol, dl, obj.half_extents.x(),
                                              obj.half_extents.z(), t, nl);
                if (ok) n = obj.R * nl;
                break;
            }
        }
        if (ok && t < hit.t) {
            hit.t = t;
            hit.normal = n;
            hit.instance = k + 1;
        }
    }
    return hit;
}

}  // namespace

RenderedView render_view(const SceneSpec& scene, const CameraView& camera,
                         const NoiseConfig& noise) {
    RenderedView view;
    view.camera = camera;
    const int H = camera.height, W = camera.width;
    view.rgb.assign(H * W * 3, 0.0f);
    view.depth.assign(H * W, 0.0f);
    view.gt_instance.assign(H * W, 0);
    for (const auto& obj : scene.objects) view.gt_obbs.push_back(obj.ground_truth_obb());

    const Vector3d light = Vector3d(0.4, -0.3, -0.85).normalized();
    for (int v = 0; v < H; ++v) {
        for (int u = 0; u < W; ++u) {
            const Vector3d dir_cam((u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0);
            const Vector3d dir = (camera.R * dir_cam).normalized();
            const Hit hit = cast_ray(scene, camera.t, dir);
            const int idx = v * W + u;
            if (!hit.valid()) continue;
            const Vector3d p = camera.t + hit.t * dir;
            view.depth[idx] = static_cast<float>((camera.R.transpose() * (p - camera.t)).z());
            view.gt_instance[idx] = hit.instance;
            const Vector3d albedo =
                hit.instance == 0 ? scene.table_color : scene.objects[hit.instance - 1].albedo;
            const double shade = 0.35 + 0.65 * std::max(0.0, hit.normal.dot(-light));
            for (int ch = 0; ch < 3; ++ch)
                view.rgb[3 * idx + ch] =
                    static_cast<float>(std::clamp(albedo[ch] * shade, 0.0, 1.0));
        }
    }

    if (noise.enabled) {
        Rng rng = rng_for(noise.seed, "render_noise");
        std::normal_distribution<double> gauss(0.0, noise.depth_std);
        const std::vector<float> clean_depth = view.depth;
        const std::vector<int32_t>& inst = view.gt_instance;
        for (int i = 0; i < H * W; ++i)
            if (clean_depth[i] > 0) view.depth[i] = static_cast<float>(clean_depth[i] + gauss(rng));

        std::uniform_real_distribution<double> uni01(0.0, 1.0);
        const int r = noise.edge_radius;
        for (int v = 0; v < H; ++v) {
            for (int u = 0; u < W; ++u) {
                const int idx = v * W + u;
                if (clean_depth[idx] <= 0) continue;
                bool boundary = false;
                float dmin = clean_depth[idx], dmax = clean_depth[idx];
                for (int dv = -r; dv <= r; ++dv) {
                    for (int du = -r; du <= r; ++du) {
                        const int vv = v + dv, uu = u + du;
                        if (vv < 0 || vv >= H || uu < 0 || uu >= W) continue;
                        const int j = vv * W + uu;
                        if (inst[j] != inst[idx]) boundary = true;
                        if (clean_depth[j] > 0) {
                            dmin = std::min(dmin, clean_depth[j]);
                            dmax = std::max(dmax, clean_depth[j]);
                        }
                    }
                }
                if (!boundary) continue;
                if (uni01(rng) < noise.edge_prob && dmax > dmin)
                    view.depth[idx] =
                        static_cast<float>(dmin + uni01(rng) * (dmax - dmin));
            }
        }
    }
    return view;
}

// ---------------------------------------------------------------------------
// Dataset IO

namespace {

json mat3_to_json(const Matrix3d& m) {
    json arr = json::array();
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) arr.push_back(m(r, c));
    return arr;
}

Matrix3d mat3_from_json(const json& arr) {
    Matrix3d m;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) m(r, c) = arr.at(3 * r + c).get<double>();
    return m;
}

json vec3_to_json(const Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

Vector3d vec3_from_json(const json& arr) {
    return Vector3d(arr.at(0).get<double>(), arr.at(1).get<double>(), arr.at(2).get<double>());
}

template <typename T>
void write_blob(const fs::path& path, const std::vector<T>& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open for write: " + path.string());
    out.write(reinterpret_cast<const char*>(data.data()), data.size() * sizeof(T));
    if (!out) throw Error("write failed: " + path.string());
}

template <typename T>
std::vector<T> read_blob(const fs::path& path, size_t count) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open for read: " + path.string());
    std::vector<T> data(count);
    in.read(reinterpret_cast<char*>(data.data()), count * sizeof(T));
    if (static_cast<size_t>(in.gcount()) != count * sizeof(T))
        throw Error("short read: " + path.string());
    return data;
}

json camera_to_json(const CameraView& cam) {
    return json{{"fx", cam.fx},     {"fy", cam.fy},         {"cx", cam.cx},
                {"cy", cam.cy},     {"width", cam.width},   {"height", cam.height},
                {"R", mat3_to_json(cam.R)}, {"t", vec3_to_json(cam.t)}};
}

CameraView camera_from_json(const json& j) {
    CameraView cam;
    cam.fx = j.at("fx");
    cam.fy = j.at("fy");
    cam.cx = j.at("cx");
    cam.cy = j.at("cy");
    cam.width = j.at("width");
    cam.height = j.at("height");
    cam.R = mat3_from_json(j.at("R"));
    cam.t = vec3_from_json(j.at("t"));
    return cam;
}

void write_scene(const fs::path& dir, const SceneSpec& scene,
                 const std::vector<RenderedView>& views) {
    fs::create_directories(dir);
    json manifest;
    manifest["format_version"] = 1;
    manifest["scene_id"] = scene.scene_id;
    manifest["rng_seed"] = scene.rng_seed;
    manifest["table"] = {{"half_size", scene.table_half_size},
                         {"color", vec3_to_json(scene.table_color)}};
    json objs = json::array();
    for (const auto& obj : scene.objects) {
        const OrientedBox obb = obj.ground_truth_obb();
        objs.push_back({{"kind", to_string(obj.kind)},
                        {"half_extents", vec3_to_json(obj.half_extents)},
                        {"R", mat3_to_json(obj.R)},
                        {"T", vec3_to_json(obj.T)},
                        {"albedo", vec3_to_json(obj.albedo)},
                        {"obb",
                         {{"R", mat3_to_json(obb.R)},
                          {"center", vec3_to_json(obb.center)},
                          {"extents", vec3_to_json(obb.extents)}}}});
    }
    manifest["objects"] = objs;

    json jviews = json::array();
    for (int i = 0; i < static_cast<int>(views.size()); ++i) {
        const auto& view = views[i];
        const int H = view.camera.height, W = view.camera.width;
        const std::string rgb_file = "rgb_v" + std::to_string(i) + ".bin";
        const std::string depth_file = "depth_v" + std::to_string(i) + ".bin";
        const std::string inst_file = "inst_v" + std::to_string(i) + ".bin";
        write_blob(dir / rgb_file, view.rgb);
        write_blob(dir / depth_file, view.depth);
        write_blob(dir / inst_file, view.gt_instance);
        jviews.push_back(
            {{"camera", camera_to_json(view.camera)},
             {"rgb", {{"file", rgb_file}, {"dtype", "float32"}, {"shape", {H, W, 3}}}},
             {"depth", {{"file", depth_file}, {"dtype", "float32"}, {"shape", {H, W}}}},
             {"gt_instance",
              {{"file", inst_file}, {"dtype", "int32"}, {"shape", {H, W}}}}});
    }
    manifest["views"] = jviews;

    std::ofstream out(dir / "manifest.json");
    if (!out) throw Error("cannot write scene manifest in " + dir.string());
    out << manifest.dump(2) << "\n";
    if (!out) throw Error("scene manifest write failed in " + dir.string());
}

}  // namespace

std::filesystem::path make_dataset(const GeneratorConfig& config, uint64_t seed,
                                   const fs::path& out_dir) {
    fs::create_directories(out_dir);
    DatasetManifest manifest;
    manifest.seed = seed;

    auto emit_split = [&](const std::string& split, int n_scenes, int n_views,
                          std::vector<std::string>& names) {
        for (int s = 0; s < n_scenes; ++s) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%s_%05d", split.c_str(), s);
            const std::string name = buf;
            const fs::path dir = out_dir / name;
            const uint64_t scene_seed = hash_combine(hash_combine(seed, fnv1a64(split)), s);
            try {
                SceneSpec scene = make_scene(config, scene_seed);
                scene.scene_id = name;
                auto cams = camera_ring(config, n_views);
                std::vector<RenderedView> views;
                for (int v = 0; v < n_views; ++v) {
                    NoiseConfig noise = config.noise;
                    noise.seed = hash_combine(scene_seed, 1000 + v);
                    views.push_back(render_view(scene, cams[v], noise));
                }
                write_scene(dir, scene, views);
            } catch (...) {
                std::error_code ec;
                fs::remove_all(dir, ec);
                throw;
            }
            names.push_back(name);
        }
    };

    emit_split("train", config.n_scenes, config.n_views, manifest.train_scenes);
    emit_split("test", config.n_test_scenes, config.n_test_views, manifest.test_scenes);

    json j;
    j["format_version"] = manifest.format_version;
    j["seed"] = manifest.seed;
    j["splits"] = {{"train", manifest.train_scenes}, {"test", manifest.test_scenes}};
    const fs::path manifest_path = out_dir / "dataset.json";
    std::ofstream out(manifest_path);
    if (!out) throw Error("cannot write dataset manifest: " + manifest_path.string());
    out << j.dump(2) << "\n";
    if (!out) throw Error("dataset manifest write failed");
    return manifest_path;
}

DatasetManifest load_manifest(const fs::path& dataset_dir) {
    std::ifstream in(dataset_dir / "dataset.json");
    if (!in) throw Error("cannot open dataset manifest in " + dataset_dir.string());
    json j = json::parse(in);
    if (j.at("format_version").get<int>() != 1)
        throw Error("unsupported dataset format_version");
    DatasetManifest manifest;
    manifest.seed = j.at("seed");
    manifest.train_scenes = j.at("splits").at("train").get<std::vector<std::string>>();
    manifest.test_scenes = j.at("splits").at("test").get<std::vector<std::string>>();
    return manifest;
}

SceneRecord load_scene(const fs::path& dataset_dir, const std::string& scene_name,
                       const std::string& split) {
    const fs::path dir = dataset_dir / scene_name;
    std::ifstream in(dir / "manifest.json");
    if (!in) throw Error("cannot open scene manifest: " + (dir / "manifest.json").string());
    json j = json::parse(in);

    SceneRecord rec;
    rec.split = split;
    rec.spec.scene_id = j.at("scene_id");
    rec.spec.rng_seed = j.at("rng_seed");
    rec.spec.table_half_size = j.at("table").at("half_size");
    rec.spec.table_color = vec3_from_json(j.at("table").at("color"));
    for (const auto& jo : j.at("objects")) {
        PrimitiveSpec obj;
        obj.kind = primitive_kind_from_string(jo.at("kind"));
        obj.half_extents = vec3_from_json(jo.at("half_extents"));
        obj.R = mat3_from_json(jo.at("R"));
        obj.T = vec3_from_json(jo.at("T"));
        obj.albedo = vec3_from_json(jo.at("albedo"));
        rec.spec.objects.push_back(obj);
    }
    for (const auto& jv : j.at("views")) {
        RenderedView view;
        view.camera = camera_from_json(jv.at("camera"));
        const int H = view.camera.height, W = view.camera.width;
        view.rgb = read_blob<float>(dir / jv.at("rgb").at("file").get<std::string>(),
                                    static_cast<size_t>(H) * W * 3);
        view.depth = read_blob<float>(dir / jv.at("depth").at("file").get<std::string>(),
                                      static_cast<size_t>(H) * W);
        view.gt_instance =
            read_blob<int32_t>(dir / jv.at("gt_instance").at("file").get<std::string>(),
                               static_cast<size_t>(H) * W);
        for (const auto& obj : rec.spec.objects) view.gt_obbs.push_back(obj.ground_truth_obb());
        rec.views.push_back(std::move(view));
    }
    return rec;
}

geom::PointCloud ground_truth_cloud(const SceneSpec& scene, const GeneratorConfig& config,
                                    int n_views, int stride) {
    NoiseConfig clean;
    clean.enabled = false;
    geom::PointCloud merged;
    for (const auto& cam : camera_ring(config, n_views)) {
        const RenderedView view = render_view(scene, cam, clean);
        geom::PointCloud cloud = geom::backproject(view, stride);
        merged.positions.insert(merged.positions.end(), cloud.positions.begin(),
                                cloud.positions.end());
        merged.colors.insert(merged.colors.end(), cloud.colors.begin(), cloud.colors.end());
    }
    return merged;
}

}  // namespace ocgraf::synth
