#include "snsr/scene.hpp"

#include <omp.h>

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "snsr/marching_cubes.hpp"

namespace snsr {

namespace {

constexpr double kBumpAmplitude = 0.02;
constexpr double kBumpFrequency = 50.0;
constexpr double kBumpWindow = 0.12;  // fade-in width from the octant boundary

double smoothstep(double edge0, double edge1, double x) {
    double t = (x - edge0) / (edge1 - edge0);
    t = t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
    return t * t * (3.0 - 2.0 * t);
}

double sphere_sdf(const Vec3& p) { return norm(p) - 0.5; }

double torus_sdf(const Vec3& p) {
    double ring = std::sqrt(p.x * p.x + p.y * p.y) - 0.35;
    return std::sqrt(ring * ring + p.z * p.z) - 0.15;
}

double box_sdf(const Vec3& p) {
    const Vec3 half{0.35, 0.25, 0.3};
    const double round = 0.02;
    Vec3 q{std::fabs(p.x) - half.x + round, std::fabs(p.y) - half.y + round,
           std::fabs(p.z) - half.z + round};
    Vec3 qp{std::fmax(q.x, 0.0), std::fmax(q.y, 0.0), std::fmax(q.z, 0.0)};
    return norm(qp) + std::fmin(std::fmax(q.x, std::fmax(q.y, q.z)), 0.0) - round;
}

double bump_sdf(const Vec3& p) {
    double window = smoothstep(0.0, kBumpWindow, p.x) * smoothstep(0.0, kBumpWindow, p.y) *
                    smoothstep(0.0, kBumpWindow, p.z);
    double relief = kBumpAmplitude * window * std::sin(kBumpFrequency * p.x) *
                    std::sin(kBumpFrequency * p.y) * std::sin(kBumpFrequency * p.z);
    return norm(p) - (0.5 + relief);
}

// conservative sphere-tracing step factor per shape (bump field is not 1-Lipschitz)
double trace_step_factor(ShapeId shape) {
    return shape == ShapeId::SphereBump ? 0.3 : 0.9;
}

}  // namespace

ShapeId shape_from_string(const std::string& name) {
    if (name == "sphere") return ShapeId::Sphere;
    if (name == "torus") return ShapeId::Torus;
    if (name == "box") return ShapeId::Box;
    if (name == "sphere_bump") return ShapeId::SphereBump;
    throw std::invalid_argument("unknown shape '" + name +
                                "' (expected sphere|torus|box|sphere_bump)");
}

std::string shape_name(ShapeId shape) {
    switch (shape) {
        case ShapeId::Sphere: return "sphere";
        case ShapeId::Torus: return "torus";
        case ShapeId::Box: return "box";
        case ShapeId::SphereBump: return "sphere_bump";
    }
    return "unknown";
}

double analytic_sdf(ShapeId shape, const Vec3& p) {
    switch (shape) {
        case ShapeId::Sphere: return sphere_sdf(p);
        case ShapeId::Torus: return torus_sdf(p);
        case ShapeId::Box: return box_sdf(p);
        case ShapeId::SphereBump: return bump_sdf(p);
    }
    return 0.0;
}

Vec3 analytic_normal(ShapeId shape, const Vec3& p) {
    const double h = 1e-6;
    Vec3 g;
    for (int d = 0; d < 3; ++d) {
        Vec3 lo = p, hi = p;
        lo[d] -= h;
        hi[d] += h;
        g[d] = analytic_sdf(shape, hi) - analytic_sdf(shape, lo);
    }
    return normalized(g);
}

Vec3 bump_patch_center() {
    double k = 0.5 / std::sqrt(3.0);
    return {k, k, k};
}

double bump_patch_radius() { return 0.3; }

bool sphere_trace(ShapeId shape, const Vec3& origin, const Vec3& dir, double t_near, double t_far,
                  double& t_hit) {
    constexpr int kMaxSteps = 256;
    constexpr double kHitEps = 1e-5;
    const double step = trace_step_factor(shape);
    double t = t_near;
    for (int i = 0; i < kMaxSteps && t <= t_far; ++i) {
        double d = analytic_sdf(shape, origin + t * dir);
        if (d < kHitEps) {
            t_hit = t;
            return true;
        }
        t += d * step;
    }
    return false;
}

namespace {

Camera make_camera(const SceneGenConfig& cfg, const Vec3& eye, const Vec3& target) {
    Camera cam;
    cam.width = cam.height = cfg.resolution;
    cam.fx = cam.fy = cfg.focal_factor * cfg.resolution;
    cam.cx = cam.cy = 0.5 * cfg.resolution;
    cam.pitch_x = cam.pitch_y = 1.0 / cfg.resolution;
    cam.center = eye;
    cam.rotation = look_at_rotation(eye, target, Vec3{0.0, 0.0, 1.0});
    cam.validate();
    return cam;
}

void render_view(ShapeId shape, View& view, int supersampling) {
    const Camera& cam = view.camera;
    const int res = cam.width;
    view.normals.assign(size_t(res) * res * 3, 0.0f);
    view.mask.assign(size_t(res) * res, 0);
    const int k = std::max(1, supersampling);

#pragma omp parallel for schedule(dynamic, 4)
    for (int row = 0; row < res; ++row) {
        for (int col = 0; col < res; ++col) {
            // supersampled footprint: average analytic normals over the k x k
            // sub-pixel hits, majority vote for the mask
            int hits = 0;
            Vec3 sum;
            for (int sy = 0; sy < k; ++sy)
                for (int sx = 0; sx < k; ++sx) {
                    Vec3 dir_cam{(col + (sx + 0.5) / k - cam.cx) * cam.pitch_x,
                                 (row + (sy + 0.5) / k - cam.cy) * cam.pitch_y, cam.focal_world()};
                    Vec3 dir = normalized(cam.rotation * dir_cam);
                    auto span = intersect_cube(cam.center, dir, 1.2);
                    if (!span) continue;
                    double t_hit;
                    if (!sphere_trace(shape, cam.center, dir, std::fmax(span->first, 0.0),
                                      span->second, t_hit))
                        continue;
                    ++hits;
                    sum += analytic_normal(shape, cam.center + t_hit * dir);
                }
            size_t at = size_t(row) * res + col;
            if (hits * 2 > k * k) {
                view.mask[at] = 255;
                Vec3 n = norm(sum) > 1e-12 ? normalized(sum) : Vec3{0.0, 0.0, 1.0};
                view.normals[at * 3 + 0] = float(n.x);
                view.normals[at * 3 + 1] = float(n.y);
                view.normals[at * 3 + 2] = float(n.z);
            }
        }
    }
}

}  // namespace

SceneDataset generate_synthetic_scene(const SceneGenConfig& config) {
    if (config.resolution < 8) throw std::invalid_argument("scene: resolution too small");
    if (config.regular_views < 1) throw std::invalid_argument("scene: need at least one regular view");
    if (config.supersampling < 1) throw std::invalid_argument("scene: supersampling must be >= 1");

    SceneDataset dataset;
    dataset.shape = shape_name(config.shape);

    const double golden = M_PI * (3.0 - std::sqrt(5.0));
    const Vec3 target{0.0, 0.0, 0.0};
    const Vec3 patch = bump_patch_center();
    const Vec3 patch_dir = normalized(patch);

    auto ring_eye = [&](int i, int count, double azimuth_offset) {
        static const double elevations[4] = {-45.0, -15.0, 15.0, 45.0};
        double az = 2.0 * M_PI * i / count + azimuth_offset;
        double el = elevations[i % 4] * M_PI / 180.0;
        return Vec3{config.regular_distance * std::cos(el) * std::cos(az),
                    config.regular_distance * std::cos(el) * std::sin(az),
                    config.regular_distance * std::sin(el)};
    };

    auto closeup_eye = [&](int i, double azimuth_offset) {
        // directions on a cap around the patch normal
        double polar = (12.0 + 18.0 * ((i * 7) % 5) / 4.0) * M_PI / 180.0;
        double az = golden * i + azimuth_offset;
        Vec3 axis_a = normalized(cross(patch_dir, Vec3{0.0, 0.0, 1.0}));
        Vec3 axis_b = cross(patch_dir, axis_a);
        Vec3 dir = patch_dir * std::cos(polar) +
                   (axis_a * std::cos(az) + axis_b * std::sin(az)) * std::sin(polar);
        return patch + dir * (config.regular_distance / config.closeup_factor);
    };

    int view_id = 0;
    auto add_view = [&](const Vec3& eye, const Vec3& aim, const char* tag, bool held_out) {
        View view;
        view.camera = make_camera(config, eye, aim);
        view.tag = tag;
        view.held_out = held_out;
        char name[32];
        std::snprintf(name, sizeof(name), "view_%03d", view_id++);
        view.name = name;
        render_view(config.shape, view, config.supersampling);
        dataset.views.push_back(std::move(view));
    };

    for (int i = 0; i < config.regular_views; ++i)
        add_view(ring_eye(i, config.regular_views, 0.0), target, "regular", false);
    for (int i = 0; i < config.closeup_views; ++i)
        add_view(closeup_eye(i, 0.0), patch, "closeup", false);
    for (int i = 0; i < config.eval_regular; ++i)
        add_view(ring_eye(i, std::max(config.eval_regular, 1),
                          M_PI / std::max(config.regular_views, 1)),
                 target, "regular", true);
    for (int i = 0; i < config.eval_closeup; ++i)
        add_view(closeup_eye(i, 0.5 * golden), patch, "closeup", true);

    compute_scale_range(dataset);
    dataset.validate();
    return dataset;
}

Mesh ground_truth_mesh(ShapeId shape, int resolution) {
    FieldSampler sampler = [shape](std::span<const Vec3> pts, std::span<const double>,
                                   std::span<double> out) {
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < int64_t(pts.size()); ++i) out[i] = analytic_sdf(shape, pts[i]);
    };
    return marching_cubes_constant_scale(sampler, resolution, 1.0);
}

}  // namespace snsr
