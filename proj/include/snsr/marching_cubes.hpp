#pragma once

#include <functional>
#include <span>

#include "snsr/mesh.hpp"
#include "snsr/smem.hpp"

namespace snsr {

/// Batched field evaluator: fills f for (point, scale) pairs. Implementations
/// are expected to parallelize internally.
using FieldSampler =
    std::function<void(std::span<const Vec3>, std::span<const double>, std::span<double>)>;

/// Classic 256-case marching cubes over the [-1,1]^3 cube with `resolution`
/// vertices per axis. Every grid vertex is evaluated at its unit's selected
/// scale; linear interpolation on SDF values places the surface, vertices are
/// welded across cube faces and carry their unit's scale attribute. An
/// all-positive (or all-negative) field yields an empty mesh.
Mesh marching_cubes(const FieldSampler& sampler, int resolution, const ScaleAssignment& assignment);

/// Same grid, one global scale.
Mesh marching_cubes_constant_scale(const FieldSampler& sampler, int resolution, double scale);

/// Adapter: batched (and internally parallel) evaluation of a trained field.
FieldSampler make_field_sampler(const ScaleField& field);

/// Position of grid vertex index i in [0, resolution) along one axis.
inline double grid_coord(int i, int resolution) {
    return -1.0 + 2.0 * double(i) / double(resolution - 1);
}

namespace mc_tables {
extern const int kEdgeTable[256];
extern const int kTriTable[256][16];
}  // namespace mc_tables

}  // namespace snsr
