#include "snsr/smem.hpp"

#include <omp.h>

#include <cmath>
#include <stdexcept>

#include "snsr/marching_cubes.hpp"

namespace snsr {

ScaleAssignment ScaleAssignment::constant(int resolution, int unit_size, double scale) {
    ScaleAssignment a;
    a.resolution = resolution;
    a.unit_size = unit_size;
    for (int d = 0; d < 3; ++d) a.units[d] = (resolution + unit_size - 1) / unit_size;
    a.unit_bin.assign(size_t(a.units[0]) * a.units[1] * a.units[2], -1);
    a.unit_scale.assign(size_t(a.units[0]) * a.units[1] * a.units[2], scale);
    return a;
}

double scale_bin_value(const FieldConfig& config, int bin) {
    const int bins = config.triplane.scale_bins;
    if (bin < 0 || bin >= bins) throw std::invalid_argument("scale_bin_value: bin out of range");
    double u = bins > 1 ? double(bin) / (bins - 1) : 0.0;
    return config.s_min * std::exp(u * std::log(config.s_max / config.s_min));
}

int scale_candidate_count(const FieldConfig& config) { return config.triplane.scale_bins - 1; }

double scale_candidate_value(const FieldConfig& config, int candidate) {
    if (candidate < 0 || candidate >= scale_candidate_count(config))
        throw std::invalid_argument("scale_candidate_value: candidate out of range");
    return std::sqrt(scale_bin_value(config, candidate) * scale_bin_value(config, candidate + 1));
}

int select_response_bin(std::span<const double> response) {
    if (response.empty()) throw std::invalid_argument("select_response_bin: empty response");
    // scan from the coarsest scale down so exact ties keep the coarsest bin
    int best = int(response.size()) - 1;
    for (int bin = int(response.size()) - 2; bin >= 0; --bin)
        if (response[bin] > response[best]) best = bin;
    return best;
}

namespace {

// channel-summed plane: q[i][bin] = sum_f plane[i][bin][f]
std::vector<double> reduced_plane(const ScaleField& field, int plane) {
    const auto& tc = field.config().triplane;
    const auto& data = field.params().planes[plane];
    std::vector<double> q(size_t(tc.spatial_resolution) * tc.scale_bins, 0.0);
    for (int i = 0; i < tc.spatial_resolution; ++i)
        for (int b = 0; b < tc.scale_bins; ++b) {
            const double* entry =
                data.data() + (size_t(i) * tc.scale_bins + b) * tc.features_per_plane;
            double sum = 0.0;
            for (int f = 0; f < tc.features_per_plane; ++f) sum += entry[f];
            q[size_t(i) * tc.scale_bins + b] = sum;
        }
    return q;
}

// linear interpolation of a reduced plane along the spatial axis at a fixed bin
inline double sample_reduced(const std::vector<double>& q, int spatial_res, int bins, double coord,
                             int bin) {
    double u = (std::fmin(std::fmax(coord, -1.0), 1.0) + 1.0) * 0.5 * (spatial_res - 1);
    int i = int(u);
    if (i > spatial_res - 2) i = spatial_res - 2;
    if (i < 0) i = 0;
    double w = u - i;
    return (1.0 - w) * q[size_t(i) * bins + bin] + w * q[size_t(i + 1) * bins + bin];
}

}  // namespace

std::vector<double> unit_scale_response(const ScaleField& field, std::span<const Vec3> vertices) {
    const auto& tc = field.config().triplane;
    const int candidates = scale_candidate_count(field.config());
    std::vector<double> response(candidates, 0.0);
    for (int plane = 0; plane < 3; ++plane) {
        std::vector<double> q = reduced_plane(field, plane);
        for (const Vec3& v : vertices)
            for (int c = 0; c < candidates; ++c) {
                double lo = sample_reduced(q, tc.spatial_resolution, tc.scale_bins, v[plane], c);
                double hi = sample_reduced(q, tc.spatial_resolution, tc.scale_bins, v[plane], c + 1);
                response[c] += std::fabs(0.5 * (lo + hi));
            }
    }
    return response;
}

ScaleAssignment select_scales(const ScaleField& field, int resolution, int unit_size) {
    if (resolution < 2) throw std::invalid_argument("select_scales: resolution must be >= 2");
    if (unit_size < 1) throw std::invalid_argument("select_scales: unit size must be >= 1");
    const auto& tc = field.config().triplane;
    const int bins = tc.scale_bins;

    ScaleAssignment a;
    a.resolution = resolution;
    a.unit_size = unit_size;
    for (int d = 0; d < 3; ++d) a.units[d] = (resolution + unit_size - 1) / unit_size;
    const size_t unit_count = size_t(a.units[0]) * a.units[1] * a.units[2];
    a.unit_bin.resize(unit_count);
    a.unit_scale.resize(unit_count);
    const int candidates = scale_candidate_count(field.config());

    // per-axis response of every grid coordinate, then prefix sums, so a unit's
    // aggregate is O(candidates) instead of O(n^3 * candidates)
    std::vector<std::vector<double>> prefix(3);
    for (int axis = 0; axis < 3; ++axis) {
        std::vector<double> q = reduced_plane(field, axis);
        auto& pre = prefix[axis];
        pre.assign(size_t(resolution + 1) * candidates, 0.0);
        for (int v = 0; v < resolution; ++v) {
            double coord = grid_coord(v, resolution);
            for (int c = 0; c < candidates; ++c) {
                double lo = sample_reduced(q, tc.spatial_resolution, bins, coord, c);
                double hi = sample_reduced(q, tc.spatial_resolution, bins, coord, c + 1);
                pre[size_t(v + 1) * candidates + c] =
                    pre[size_t(v) * candidates + c] + std::fabs(0.5 * (lo + hi));
            }
        }
    }

    auto unit_range = [&](int unit) {
        int begin = unit * unit_size;
        int end = std::min(begin + unit_size, resolution);
        return std::pair<int, int>(begin, end);
    };

#pragma omp parallel for collapse(2) schedule(static)
    for (int ux = 0; ux < a.units[0]; ++ux)
        for (int uy = 0; uy < a.units[1]; ++uy) {
            std::vector<double> response(candidates);
            for (int uz = 0; uz < a.units[2]; ++uz) {
                auto [x0, x1] = unit_range(ux);
                auto [y0, y1] = unit_range(uy);
                auto [z0, z1] = unit_range(uz);
                const double nx = x1 - x0, ny = y1 - y0, nz = z1 - z0;
                for (int c = 0; c < candidates; ++c) {
                    double rx = prefix[0][size_t(x1) * candidates + c] -
                                prefix[0][size_t(x0) * candidates + c];
                    double ry = prefix[1][size_t(y1) * candidates + c] -
                                prefix[1][size_t(y0) * candidates + c];
                    double rz = prefix[2][size_t(z1) * candidates + c] -
                                prefix[2][size_t(z0) * candidates + c];
                    response[c] = rx * ny * nz + ry * nx * nz + rz * nx * ny;
                }
                int candidate = select_response_bin(response);
                size_t unit = a.unit_index(ux, uy, uz);
                a.unit_bin[unit] = candidate;
                a.unit_scale[unit] = scale_candidate_value(field.config(), candidate);
            }
        }
    return a;
}

}  // namespace snsr
