#pragma once

#include <span>
#include <vector>

#include "snsr/field.hpp"
#include "snsr/vec3.hpp"

namespace snsr {

constexpr double kMaskEpsilon = 1e-4;  // BCE clamp

struct LossTerms {
    double normal = 0.0;
    double mask = 0.0;
    double eikonal = 0.0;
    double csr = 0.0;
    double lambda = 0.0;
    double total = 0.0;
};

/// Weighted sum of the four terms; throws on a non-finite term, naming it.
LossTerms total_loss(double normal, double mask, double eikonal, double csr, double lambda);

struct NormalLossResult {
    double value = 0.0;
    int included = 0;  // foreground rays entering the mean
    int skipped = 0;   // foreground rays dropped for a vanishing rendered normal
};

/// Mean L1 difference between unit-normalized rendered normals and ground
/// truth, restricted to foreground rays. Rays whose rendered normal has
/// (near-)zero length are skipped and counted.
NormalLossResult normal_loss(std::span<const Vec3> rendered, std::span<const Vec3> truth,
                             std::span<const uint8_t> mask);

/// Binary cross-entropy between accumulated opacity and the mask bit, with the
/// prediction clamped to [eps, 1-eps].
double mask_loss(std::span<const double> opacity, std::span<const uint8_t> mask);

/// Mean squared deviation of the gradient norm from 1 over all samples.
double eikonal_loss(std::span<const Vec3> gradients);

/// Cross-scale variance penalty from precomputed SDF values, row-major [K][S]:
/// mean over points and scales of (f - per-point mean)^2.
double csr_loss_from_values(std::span<const double> values, int points, int scales);

/// Evaluates the field at `points[k]` x `scales[k*S + i]` (parallel) and
/// reduces with csr_loss_from_values. Optionally returns the raw values.
double csr_loss(const ScaleField& field, std::span<const Vec3> points,
                std::span<const double> scales, int S, std::vector<double>* values_out = nullptr);

// ----- adjoints used by the trainer (and the finite-difference oracle) -----

/// d(normal_loss)/d(rendered normal) per ray; zero for excluded rays.
std::vector<Vec3> normal_loss_backward(std::span<const Vec3> rendered, std::span<const Vec3> truth,
                                       std::span<const uint8_t> mask);

/// d(mask_loss)/d(opacity) per ray (zero where the clamp is active).
std::vector<double> mask_loss_backward(std::span<const double> opacity,
                                       std::span<const uint8_t> mask);

/// d(eikonal_loss)/d(gradient) per sample.
std::vector<Vec3> eikonal_loss_backward(std::span<const Vec3> gradients);

/// d(csr)/d(value) per [K][S] entry.
std::vector<double> csr_loss_backward(std::span<const double> values, int points, int scales);

}  // namespace snsr
