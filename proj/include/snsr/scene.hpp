#pragma once

#include <string>

#include "snsr/dataset.hpp"
#include "snsr/mesh.hpp"
#include "snsr/vec3.hpp"

namespace snsr {

/// Analytic test shapes, all contained well inside the unit cube.
enum class ShapeId { Sphere, Torus, Box, SphereBump };

ShapeId shape_from_string(const std::string& name);
std::string shape_name(ShapeId shape);

double analytic_sdf(ShapeId shape, const Vec3& p);

/// Normalized central-difference gradient of the analytic field.
Vec3 analytic_normal(ShapeId shape, const Vec3& p);

/// Center of the high-frequency displacement patch of SphereBump (on the
/// +++-octant of the sphere); close-up views aim here.
Vec3 bump_patch_center();
double bump_patch_radius();

struct SceneGenConfig {
    ShapeId shape = ShapeId::Sphere;
    int regular_views = 16;
    int closeup_views = 0;
    int eval_regular = 4;   // extra held-out views on the regular ring
    int eval_closeup = 0;   // extra held-out close-up views
    int resolution = 800;
    int supersampling = 8;  // k x k sub-pixel rays averaged per pixel
    double regular_distance = 3.0;
    double closeup_factor = 4.0;  // close-up distance = regular_distance / factor
    double focal_factor = 1.2;    // fx = fy = focal_factor * resolution
    uint64_t seed = 0;
};

/// Renders normal maps and masks of an analytic shape from a ring of regular
/// views plus close-up views aimed at the detail patch. Per-pixel normals are
/// footprint-averaged over the supersampling grid and renormalized, which is
/// what makes regular and close-up observations of high-frequency relief
/// genuinely disagree.
SceneDataset generate_synthetic_scene(const SceneGenConfig& config);

/// Marching cubes over the analytic field (scale-free), for evaluation ground
/// truth.
Mesh ground_truth_mesh(ShapeId shape, int resolution);

/// Sphere-trace the analytic field. Returns true on a hit within max_steps.
bool sphere_trace(ShapeId shape, const Vec3& origin, const Vec3& dir, double t_near, double t_far,
                  double& t_hit);

}  // namespace snsr
