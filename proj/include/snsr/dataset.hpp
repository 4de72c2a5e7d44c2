#pragma once

#include <string>
#include <vector>

#include "snsr/camera.hpp"
#include "snsr/vec3.hpp"

namespace snsr {

/// One calibrated view: world-space normal map (float32, h*w*3) and binary mask.
struct View {
    Camera camera;
    std::vector<float> normals;
    std::vector<uint8_t> mask;
    std::string name;
    std::string tag = "regular";  // "regular" | "closeup"
    bool held_out = false;

    Vec3 normal_at(int row, int col) const {
        size_t i = (size_t(row) * camera.width + col) * 3;
        return {normals[i], normals[i + 1], normals[i + 2]};
    }
    uint8_t mask_at(int row, int col) const { return mask[size_t(row) * camera.width + col]; }
};

/// Cameras, normal maps, masks, tags. The scene is expected to live inside the
/// [-1,1]^3 cube; `scene_center`/`scene_scale` record the normalization that
/// produced it. `s_min`/`s_max` are the sphere-radius range over the training
/// cone footprints, filled by compute_scale_range.
struct SceneDataset {
    std::vector<View> views;
    Vec3 scene_center{0.0, 0.0, 0.0};
    double scene_scale = 1.0;
    std::string ground_truth_mesh;  // file name inside the dataset dir, may be empty
    std::string shape;              // generator shape id, informational
    double s_min = 0.0, s_max = 0.0;

    size_t train_view_count() const;
    void validate() const;
};

/// Min/max inscribed-sphere radius over every training pixel's cone, taken at
/// the cone's entry/exit of the scene cube. Degenerate ranges are widened so
/// the log-spaced scale axis stays usable.
void compute_scale_range(SceneDataset& dataset, double near_floor = 0.05);

/// Dataset directory round-trip. Layout:
///   manifest.json   view list, tags, splits, normalization, shape, gt mesh
///   cameras.txt     plain-text camera records (documented in the writer)
///   <view>_normal.f32   raw float32 image container (SNSRIMG1)
///   <view>_mask.pgm     binary PGM, 0 background / 255 foreground
SceneDataset load_dataset(const std::string& dir);
void save_dataset(const SceneDataset& dataset, const std::string& dir);

// raw float image container: magic "SNSRIMG1", u32 height/width/channels, f32 data
void save_float_image(const std::string& path, const float* data, int height, int width,
                      int channels);
std::vector<float> load_float_image(const std::string& path, int& height, int& width,
                                    int& channels);

void save_pgm(const std::string& path, const uint8_t* data, int height, int width);
std::vector<uint8_t> load_pgm(const std::string& path, int& height, int& width);

std::vector<Camera> load_cameras(const std::string& path);
void save_cameras(const std::string& path, const std::vector<Camera>& cameras);

}  // namespace snsr
