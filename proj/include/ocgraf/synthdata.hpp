#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ocgraf/geometry.hpp"

namespace ocgraf::synth {

using geom::Matrix3d;
using geom::OrientedBox;
using geom::Vector3d;

enum class PrimitiveKind { Box, Sphere, Cylinder };

const char* to_string(PrimitiveKind kind);
PrimitiveKind primitive_kind_from_string(const std::string& s);

struct PrimitiveSpec {
    PrimitiveKind kind = PrimitiveKind::Box;
    // box: half side lengths; sphere: (r,r,r); cylinder: (r,r,h/2)
    Vector3d half_extents = Vector3d::Constant(0.05);
    Matrix3d R = Matrix3d::Identity();
    Vector3d T = Vector3d::Zero();
    Vector3d albedo = Vector3d::Constant(0.7);

    OrientedBox ground_truth_obb() const;
};

struct SceneSpec {
    std::vector<PrimitiveSpec> objects;
    double table_half_size = 0.45;
    Vector3d table_color = Vector3d(0.45, 0.42, 0.40);
    std::string scene_id;
    uint64_t rng_seed = 0;
};

struct CameraView {
    double fx = 0, fy = 0, cx = 0, cy = 0;
    int width = 0, height = 0;
    Matrix3d R = Matrix3d::Identity();  // camera-to-world
    Vector3d t = Vector3d::Zero();      // camera origin in world
};

struct RenderedView {
    CameraView camera;
    std::vector<float> rgb;           // H*W*3 row-major in [0,1]
    std::vector<float> depth;         // H*W camera-z depth in meters, 0 = no hit
    std::vector<int32_t> gt_instance; // H*W, 0 = table/no-hit, k >= 1 = object k
    std::vector<OrientedBox> gt_obbs; // index k-1
};

struct NoiseConfig {
    bool enabled = true;
    double depth_std = 0.002;  // meters
    double edge_prob = 0.3;
    int edge_radius = 1;  // pixels
    uint64_t seed = 0;
};

struct GeneratorConfig {
    int n_scenes = 200;  // train scenes
    int n_views = 4;
    int n_test_scenes = 12;
    int n_test_views = 1;
    int object_count_min = 2;
    int object_count_max = 4;
    double half_extent_min = 0.03;
    double half_extent_max = 0.08;
    double placement_half = 0.30;
    double min_separation = 0.16;
    double table_half_size = 0.45;
    int resolution = 128;
    double fov_deg = 58.0;
    double camera_radius = 0.9;
    double camera_height = 0.6;
    NoiseConfig noise;
};

CameraView look_at_camera(const Vector3d& eye, const Vector3d& target, int width, int height,
                          double fov_deg);
std::vector<CameraView> camera_ring(const GeneratorConfig& config, int n_views);

SceneSpec make_scene(const GeneratorConfig& config, uint64_t seed);
RenderedView render_view(const SceneSpec& scene, const CameraView& camera,
                         const NoiseConfig& noise);

struct DatasetManifest {
    int format_version = 1;
    uint64_t seed = 0;
    std::vector<std::string> train_scenes;  // directory names relative to root
    std::vector<std::string> test_scenes;
};

struct SceneRecord {
    SceneSpec spec;
    std::vector<RenderedView> views;
    std::string split;  // "train" | "test"
};

// Writes config.n_scenes x config.n_views train views plus the test split in
// the versioned on-disk format. Partially written scenes are removed on
// failure. Returns the manifest path.
std::filesystem::path make_dataset(const GeneratorConfig& config, uint64_t seed,
                                   const std::filesystem::path& out_dir);

DatasetManifest load_manifest(const std::filesystem::path& dataset_dir);
SceneRecord load_scene(const std::filesystem::path& dataset_dir, const std::string& scene_name,
                       const std::string& split);

// Noiseless re-render of all ring viewpoints, merged into one world cloud.
// Used as the ground-truth reference set for reconstruction metrics.
geom::PointCloud ground_truth_cloud(const SceneSpec& scene, const GeneratorConfig& config,
                                    int n_views, int stride);

}  // namespace ocgraf::synth
