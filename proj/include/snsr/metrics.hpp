#pragma once

#include <limits>
#include <string>
#include <vector>

#include "snsr/dataset.hpp"
#include "snsr/field.hpp"
#include "snsr/mesh.hpp"
#include "snsr/vec3.hpp"

namespace snsr {

/// Mean angular error in degrees over masked pixels:
/// mean of arccos(clamp(<predicted, truth>, -1, 1)). Errors on an empty mask.
double mean_angular_error(std::span<const Vec3> predicted, std::span<const Vec3> truth,
                          std::span<const uint8_t> mask);

struct RenderedView {
    std::vector<Vec3> normals;    // unit length where opacity is meaningful, else zero
    std::vector<double> opacity;  // accumulated per pixel
};

/// Full-image volume rendering of normals through a camera (deterministic
/// mid-stratum sampling, parallel over pixel chunks).
RenderedView render_view(const ScaleField& field, const Camera& camera, int samples_per_ray,
                         double near_floor = 0.05);

struct ViewEval {
    std::string name;
    std::string tag;
    double mae_deg = 0.0;
};

struct EvalReport {
    std::vector<ViewEval> views;  // held-out views
    double mean_mae_deg = std::numeric_limits<double>::quiet_NaN();
    double mean_mae_closeup_deg = std::numeric_limits<double>::quiet_NaN();
    double chamfer = std::numeric_limits<double>::quiet_NaN();  // world units
    double runtime_s = 0.0;
    std::string config_echo;
    std::string note;  // e.g. missing ground truth
};

/// MAE over the dataset's held-out views; NaN when there are none.
double held_out_mae(const ScaleField& field, const SceneDataset& dataset, int samples_per_ray,
                    double near_floor = 0.05, const std::string& tag_filter = "");

/// Renders every held-out view, computes per-view MAE, and (when both a mesh
/// and dataset ground truth are available) the chamfer distance.
EvalReport evaluate(const ScaleField& field, const SceneDataset& dataset, const Mesh* mesh,
                    const Mesh* ground_truth, int samples_per_ray, int chamfer_samples,
                    uint64_t seed);

void write_report_csv(const EvalReport& report, const std::string& path);
void write_report_text(const EvalReport& report, const std::string& path);

}  // namespace snsr
