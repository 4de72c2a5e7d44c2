#pragma once

#include <ostream>
#include <span>
#include <vector>

#include "snsr/camera.hpp"
#include "snsr/field.hpp"
#include "snsr/vec3.hpp"

namespace snsr {

/// One renderable cone: its samples sorted by t plus the supervision attached
/// to the pixel (world-space unit normal where the mask is set).
struct RenderRay {
    std::vector<ConeSample> samples;
    Vec3 gt_normal;
    uint8_t gt_mask = 0;
};

struct RayBundle {
    std::vector<RenderRay> rays;
    void validate() const;  // samples sorted, unit gt normals on foreground rays
};

/// Opacity of the segment between two consecutive SDF samples. `sharpness` is
/// the sigmoid steepness a; the denominator is floored at 1e-7.
double sdf_to_alpha(double f_k, double f_next, double sharpness);

struct CompositeResult {
    Vec3 normal;                        // sum_k T_k alpha_k n_k, not normalized
    double opacity = 0.0;               // sum_k T_k alpha_k
    std::vector<double> weights;        // T_k alpha_k
    std::vector<double> transmittance;  // T_k
};

/// Front-to-back compositing of per-sample (alpha, normal) pairs.
CompositeResult composite_ray(std::span<const double> alphas, std::span<const Vec3> normals);

/// Everything rendered for one ray; sample-level arrays are kept for the
/// training backward pass and for weight-profile diagnostics.
struct RayRender {
    Vec3 normal;
    double opacity = 0.0;
    std::vector<double> sdf;
    std::vector<Vec3> grad;
    std::vector<double> alpha;  // per sample; the last sample has no successor, alpha = 0
    std::vector<double> trans;
    std::vector<double> weight;
};

struct RenderOutput {
    std::vector<RayRender> rays;
};

/// Evaluates the field (value and spatial gradient) at every sample and
/// composites per ray. Per-sample normals are the raw field gradients.
/// Parallel over rays.
RenderOutput render_bundle(const ScaleField& field, const RayBundle& bundle);

/// Adjoint of the compositing chain for one ray: given dL/d(normal) and
/// dL/d(opacity), accumulates dL/df and dL/d(grad f) per sample and returns the
/// dL/d(rho) contribution (rho = log sharpness).
double composite_backward(const RayRender& render, const Vec3& normal_bar, double opacity_bar,
                          double sharpness, std::span<double> f_bar, std::span<Vec3> g_bar);

/// Plain-text weight profile (t, f, alpha, T, w) for plotting.
void dump_ray_profile(std::ostream& os, const RenderRay& ray, const RayRender& render);

}  // namespace snsr
