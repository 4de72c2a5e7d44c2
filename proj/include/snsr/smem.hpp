#pragma once

#include <span>
#include <vector>

#include "snsr/field.hpp"
#include "snsr/vec3.hpp"

namespace snsr {

/// Per-unit scale selection for mesh extraction: the marching-cubes grid is
/// partitioned into unit blocks of `unit_size`^3 vertices (the last unit per
/// axis may be partial) and every vertex in a unit is evaluated at the unit's
/// selected scale.
struct ScaleAssignment {
    int resolution = 0;  // grid vertices per axis
    int unit_size = 0;   // vertices per unit per axis
    int units[3] = {0, 0, 0};
    std::vector<int> unit_bin;      // argmax scale bin per unit
    std::vector<double> unit_scale; // bin center scale value, world units

    int unit_index(int ux, int uy, int uz) const {
        return (ux * units[1] + uy) * units[2] + uz;
    }
    int vertex_unit(int vx, int vy, int vz) const {
        return unit_index(vx / unit_size, vy / unit_size, vz / unit_size);
    }
    double vertex_scale(int vx, int vy, int vz) const {
        return unit_scale[vertex_unit(vx, vy, vz)];
    }

    /// Constant-scale assignment (the single-scale extraction baseline).
    static ScaleAssignment constant(int resolution, int unit_size, double scale);
};

/// Scale value at triplane row `bin` (log-spaced axis).
double scale_bin_value(const FieldConfig& config, int bin);

/// Number of candidate extraction scales: one per interval between adjacent
/// triplane rows. Training only ever reads the scale axis through
/// interpolation, so the candidates sit mid-interval (geometric mean of the
/// neighboring row scales) where the lookup is fully supervised; exact row
/// values carry an interpolation null mode the data never constrains.
int scale_candidate_count(const FieldConfig& config);
double scale_candidate_value(const FieldConfig& config, int candidate);

/// Aggregated triplane response per candidate scale for a set of vertices:
/// for every candidate, the sum over vertices and planes of |channel-summed
/// features interpolated at that scale|. Zero-initialized planes grow away
/// from zero only where training touched them, but the growth direction is
/// sign-free (trained bands often come out negative), so the magnitude of the
/// interpolated response is what marks a well-trained scale.
std::vector<double> unit_scale_response(const ScaleField& field, std::span<const Vec3> vertices);

/// Argmax over the response vector; ties break toward the coarsest (largest)
/// scale.
int select_response_bin(std::span<const double> response);

/// Scale selection for the full extraction grid. Equivalent to calling
/// unit_scale_response on every unit's vertex set but factored through the
/// grid structure (per-axis response tables), which is what makes dense grids
/// cheap.
ScaleAssignment select_scales(const ScaleField& field, int resolution, int unit_size);

}  // namespace snsr
