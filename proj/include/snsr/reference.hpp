#pragma once

#include <functional>
#include <span>
#include <vector>

#include "snsr/field.hpp"
#include "snsr/vec3.hpp"

namespace snsr::reference {

// Plain serial re-implementations of the numerical kernels, written directly
// from their definitions and kept deliberately independent of the optimized
// code paths. Tests use them as oracles; the benchmark uses them as the serial
// baseline. Keep them simple — clarity over speed.

/// Brute-force multi-level trilinear hash-grid interpolation.
std::vector<double> hash_lookup(const ScaleField& field, const Vec3& p);

/// Brute-force bilinear scale-triplane interpolation.
std::vector<double> triplane_lookup(const ScaleField& field, const Vec3& p, double s);

/// Scalar re-implementation of the full decoder: position + interpolated
/// features through the one-hidden-layer MLP.
double field_forward(const ScaleField& field, const Vec3& p, double s);

/// Serial batch evaluation via field_forward (benchmark baseline).
void eval_batch(const ScaleField& field, std::span<const Vec3> points,
                std::span<const double> scales, std::span<double> out);

/// Central finite differences of the field value w.r.t. position.
Vec3 fd_spatial_gradient(const ScaleField& field, const Vec3& p, double s, double h);

/// O(M^2) compositing: every weight recomputed from scratch as
/// alpha_k * prod_{l<k}(1 - alpha_l).
struct CompositeRef {
    Vec3 normal;
    double opacity = 0.0;
    std::vector<double> weights;
};
CompositeRef composite(std::span<const double> alphas, std::span<const Vec3> normals);

/// Accumulated opacity along a ray over an arbitrary SDF, using the paper
/// opacity formula on M uniform mid-point samples.
double ray_opacity(const std::function<double(const Vec3&)>& sdf, const Vec3& origin,
                   const Vec3& dir, double near, double far, int steps, double sharpness);

// elementwise loss re-implementations
double normal_loss(std::span<const Vec3> rendered, std::span<const Vec3> truth,
                   std::span<const uint8_t> mask);
double mask_loss(std::span<const double> opacity, std::span<const uint8_t> mask);
double eikonal_loss(std::span<const Vec3> gradients);
double csr_loss(std::span<const double> values, int points, int scales);

/// Exact symmetric chamfer between two point sets by exhaustive search.
double chamfer_bruteforce(std::span<const Vec3> a, std::span<const Vec3> b);

/// Naive per-vertex scale-triplane response: for every scale bin, the sum over
/// vertices and planes of the spatially interpolated features (channels
/// summed).
std::vector<double> unit_scale_response(const ScaleField& field, std::span<const Vec3> vertices);

}  // namespace snsr::reference
