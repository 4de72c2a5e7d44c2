#pragma once

#include <array>
#include <string>
#include <vector>

#include "snsr/vec3.hpp"

namespace snsr {

/// Triangle mesh with an optional per-vertex scale attribute (the SMEM scale a
/// vertex was extracted at).
struct Mesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> triangles;
    std::vector<float> vertex_scale;  // empty, or one entry per vertex

    bool has_scale() const { return vertex_scale.size() == vertices.size(); }
    void validate() const;  // index ranges, scale attribute size
};

/// ASCII OBJ (v/f records, 1-based indices); the scale attribute is dropped.
void save_mesh_obj(const Mesh& mesh, const std::string& path);
Mesh load_mesh_obj(const std::string& path);

/// Binary little-endian PLY; per-vertex scale written as a float property
/// "scale" when present. Round-trips bit-exactly through load_mesh_ply.
void save_mesh_ply(const Mesh& mesh, const std::string& path);
Mesh load_mesh_ply(const std::string& path);

/// PLY with uchar RGB encoding each vertex's scale on a color ramp
/// (purple = finest scale through yellow = coarsest), for inspecting where the
/// extraction used close-up detail.
void save_scale_visualization_ply(const Mesh& mesh, const std::string& path, double s_min,
                                  double s_max);

/// Drops zero-area triangles and merges vertices within `weld_tolerance`.
void cleanup_mesh(Mesh& mesh, double weld_tolerance = 1e-7);

/// Signed volume via the divergence theorem; sign exposes orientation.
double signed_volume(const Mesh& mesh);

/// True when every triangle edge is shared by exactly two triangles.
bool is_watertight(const Mesh& mesh);

}  // namespace snsr
