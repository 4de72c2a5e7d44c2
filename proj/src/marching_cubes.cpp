#include "snsr/marching_cubes.hpp"

#include <omp.h>

#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace snsr {

namespace {

// Bourke cube layout: vertex 0 at the cube origin, 1..3 counterclockwise on
// the z=0 face, 4..7 above. A corner's bit is set when f < 0 (inside).
constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                               {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
// edge -> (corner a, corner b); a is the canonical (lower) endpoint used for
// the shared-edge key
constexpr int kEdgeCorner[12][2] = {{0, 1}, {1, 2}, {3, 2}, {0, 3}, {4, 5}, {5, 6},
                                    {7, 6}, {4, 7}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};
constexpr int kEdgeAxis[12] = {0, 1, 0, 1, 0, 1, 0, 1, 2, 2, 2, 2};

struct EdgeVertex {
    uint64_t key = 0;
    Vec3 pos;
    float scale = 0.0f;
};

struct EmittedTriangle {
    EdgeVertex v[3];
};

inline uint64_t edge_key(int x, int y, int z, int axis) {
    return (uint64_t(axis) << 60) | (uint64_t(x) << 40) | (uint64_t(y) << 20) | uint64_t(z);
}

}  // namespace

Mesh marching_cubes(const FieldSampler& sampler, int resolution,
                    const ScaleAssignment& assignment) {
    if (resolution < 2) throw std::invalid_argument("marching_cubes: resolution must be >= 2");
    if (assignment.resolution != resolution)
        throw std::invalid_argument("marching_cubes: scale assignment built for a different grid");
    const int R = resolution;
    if (R > (1 << 20)) throw std::invalid_argument("marching_cubes: resolution too large");

    // two z-slices of field values, evaluated at each vertex's unit scale
    std::vector<double> slice[2];
    slice[0].resize(size_t(R) * R);
    slice[1].resize(size_t(R) * R);
    std::vector<Vec3> points(size_t(R) * R);
    std::vector<double> scales(size_t(R) * R);

    auto eval_slice = [&](int z, std::vector<double>& out) {
        for (int ix = 0; ix < R; ++ix)
            for (int iy = 0; iy < R; ++iy) {
                size_t at = size_t(ix) * R + iy;
                points[at] = {grid_coord(ix, R), grid_coord(iy, R), grid_coord(z, R)};
                scales[at] = assignment.vertex_scale(ix, iy, z);
            }
        sampler(points, scales, out);
    };

    eval_slice(0, slice[0]);

    std::vector<EmittedTriangle> triangles;
    std::vector<std::vector<EmittedTriangle>> row_buffers(R - 1);

    for (int z = 0; z + 1 < R; ++z) {
        eval_slice(z + 1, slice[(z + 1) & 1]);
        const std::vector<double>& lo = slice[z & 1];
        const std::vector<double>& hi = slice[(z + 1) & 1];

#pragma omp parallel for schedule(static)
        for (int ix = 0; ix < R - 1; ++ix) {
            auto& rows = row_buffers[ix];
            rows.clear();
            for (int iy = 0; iy + 1 < R; ++iy) {
                double corner_f[8];
                for (int c = 0; c < 8; ++c) {
                    const int cx = ix + kCorner[c][0], cy = iy + kCorner[c][1];
                    corner_f[c] = (kCorner[c][2] ? hi : lo)[size_t(cx) * R + cy];
                }
                int cube_index = 0;
                for (int c = 0; c < 8; ++c)
                    if (corner_f[c] < 0.0) cube_index |= 1 << c;
                const int edges = mc_tables::kEdgeTable[cube_index];
                if (edges == 0) continue;

                EdgeVertex edge_vertex[12];
                for (int e = 0; e < 12; ++e) {
                    if (!(edges & (1 << e))) continue;
                    const int ca = kEdgeCorner[e][0], cb = kEdgeCorner[e][1];
                    const double fa = corner_f[ca], fb = corner_f[cb];
                    double t = fa == fb ? 0.5 : (0.0 - fa) / (fb - fa);
                    t = t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
                    const int ax = ix + kCorner[ca][0], ay = iy + kCorner[ca][1],
                              az = z + kCorner[ca][2];
                    const int axis = kEdgeAxis[e];
                    Vec3 pa{grid_coord(ax, R), grid_coord(ay, R), grid_coord(az, R)};
                    Vec3 pb = pa;
                    const int upper[3] = {ax + 1, ay + 1, az + 1};
                    pb[axis] = grid_coord(upper[axis], R);
                    EdgeVertex& ev = edge_vertex[e];
                    ev.key = edge_key(ax, ay, az, axis);
                    ev.pos = pa + t * (pb - pa);
                    ev.scale = float(assignment.vertex_scale(ax, ay, az));
                }
                const int* tri = mc_tables::kTriTable[cube_index];
                for (int i = 0; tri[i] != -1; i += 3) {
                    // table order winds inward for our f<0 = inside convention;
                    // swap two corners so normals point toward f > 0
                    EmittedTriangle et;
                    et.v[0] = edge_vertex[tri[i]];
                    et.v[1] = edge_vertex[tri[i + 2]];
                    et.v[2] = edge_vertex[tri[i + 1]];
                    rows.push_back(et);
                }
            }
        }
        for (int ix = 0; ix < R - 1; ++ix)
            triangles.insert(triangles.end(), row_buffers[ix].begin(), row_buffers[ix].end());
    }

    // weld across cubes by shared-edge key, in emission order
    Mesh mesh;
    std::unordered_map<uint64_t, int> vertex_of_edge;
    vertex_of_edge.reserve(triangles.size() * 2);
    mesh.vertex_scale.clear();
    for (const auto& et : triangles) {
        std::array<int, 3> idx;
        for (int c = 0; c < 3; ++c) {
            auto [it, inserted] = vertex_of_edge.try_emplace(et.v[c].key, int(mesh.vertices.size()));
            if (inserted) {
                mesh.vertices.push_back(et.v[c].pos);
                mesh.vertex_scale.push_back(et.v[c].scale);
            }
            idx[c] = it->second;
        }
        mesh.triangles.push_back(idx);
    }

    cleanup_mesh(mesh);
    return mesh;
}

Mesh marching_cubes_constant_scale(const FieldSampler& sampler, int resolution, double scale) {
    return marching_cubes(sampler, resolution,
                          ScaleAssignment::constant(resolution, resolution, scale));
}

FieldSampler make_field_sampler(const ScaleField& field) {
    return [&field](std::span<const Vec3> points, std::span<const double> scales,
                    std::span<double> out) { field.eval_batch(points, scales, out, nullptr); };
}

}  // namespace snsr
