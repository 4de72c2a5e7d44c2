#include "snsr/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace snsr {

void Mesh::validate() const {
    for (const auto& t : triangles)
        for (int i : t)
            if (i < 0 || size_t(i) >= vertices.size())
                throw std::invalid_argument("mesh: triangle index out of range");
    if (!vertex_scale.empty() && vertex_scale.size() != vertices.size())
        throw std::invalid_argument("mesh: scale attribute size mismatch");
}

void cleanup_mesh(Mesh& mesh, double weld_tolerance) {
    // weld by quantized position
    struct Key {
        int64_t x, y, z;
        bool operator<(const Key& o) const {
            return std::tie(x, y, z) < std::tie(o.x, o.y, o.z);
        }
    };
    std::map<Key, int> first_at;
    std::vector<int> remap(mesh.vertices.size());
    std::vector<Vec3> vertices;
    std::vector<float> scales;
    const bool has_scale = mesh.has_scale();
    for (size_t i = 0; i < mesh.vertices.size(); ++i) {
        const Vec3& p = mesh.vertices[i];
        Key k{int64_t(std::llround(p.x / weld_tolerance)), int64_t(std::llround(p.y / weld_tolerance)),
              int64_t(std::llround(p.z / weld_tolerance))};
        auto [it, inserted] = first_at.try_emplace(k, int(vertices.size()));
        if (inserted) {
            vertices.push_back(p);
            if (has_scale) scales.push_back(mesh.vertex_scale[i]);
        }
        remap[i] = it->second;
    }

    std::vector<std::array<int, 3>> triangles;
    triangles.reserve(mesh.triangles.size());
    for (auto t : mesh.triangles) {
        for (int& i : t) i = remap[i];
        if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) continue;  // degenerate
        triangles.push_back(t);
    }

    // drop unreferenced vertices
    std::vector<int> used(vertices.size(), -1);
    Mesh out;
    for (auto& t : triangles) {
        for (int& i : t) {
            if (used[i] < 0) {
                used[i] = int(out.vertices.size());
                out.vertices.push_back(vertices[i]);
                if (has_scale) out.vertex_scale.push_back(scales[i]);
            }
            i = used[i];
        }
        out.triangles.push_back(t);
    }
    mesh = std::move(out);
}

double signed_volume(const Mesh& mesh) {
    double v = 0.0;
    for (const auto& t : mesh.triangles)
        v += dot(mesh.vertices[t[0]], cross(mesh.vertices[t[1]], mesh.vertices[t[2]]));
    return v / 6.0;
}

bool is_watertight(const Mesh& mesh) {
    if (mesh.triangles.empty()) return false;
    std::unordered_map<uint64_t, int> edge_count;
    edge_count.reserve(mesh.triangles.size() * 3);
    for (const auto& t : mesh.triangles)
        for (int e = 0; e < 3; ++e) {
            uint64_t a = t[e], b = t[(e + 1) % 3];
            if (a > b) std::swap(a, b);
            ++edge_count[(a << 32) | b];
        }
    for (const auto& [key, count] : edge_count)
        if (count != 2) return false;
    return true;
}

// ---------------------------------------------------------------------------
// OBJ
// ---------------------------------------------------------------------------

void save_mesh_obj(const Mesh& mesh, const std::string& path) {
    mesh.validate();
    std::ofstream os(path);
    if (!os) throw std::runtime_error("mesh: cannot open '" + path + "' for writing");
    char line[128];
    for (const Vec3& v : mesh.vertices) {
        std::snprintf(line, sizeof(line), "v %.9g %.9g %.9g\n", v.x, v.y, v.z);
        os << line;
    }
    for (const auto& t : mesh.triangles) os << "f " << t[0] + 1 << " " << t[1] + 1 << " " << t[2] + 1 << "\n";
    if (!os) throw std::runtime_error("mesh: write to '" + path + "' failed");
}

Mesh load_mesh_obj(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("mesh: cannot open '" + path + "'");
    Mesh mesh;
    std::string line;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "v") {
            Vec3 v;
            ls >> v.x >> v.y >> v.z;
            mesh.vertices.push_back(v);
        } else if (tag == "f") {
            std::array<int, 3> t;
            for (int i = 0; i < 3; ++i) {
                std::string tok;
                ls >> tok;
                t[i] = std::stoi(tok.substr(0, tok.find('/'))) - 1;
            }
            mesh.triangles.push_back(t);
        }
    }
    mesh.validate();
    return mesh;
}

// ---------------------------------------------------------------------------
// PLY (binary little-endian)
// ---------------------------------------------------------------------------

namespace {

void write_ply(const Mesh& mesh, const std::string& path, bool with_scale, bool with_color,
               double s_min = 0.0, double s_max = 1.0) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("mesh: cannot open '" + path + "' for writing");
    os << "ply\nformat binary_little_endian 1.0\n";
    os << "element vertex " << mesh.vertices.size() << "\n";
    os << "property float x\nproperty float y\nproperty float z\n";
    if (with_scale) os << "property float scale\n";
    if (with_color) os << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    os << "element face " << mesh.triangles.size() << "\n";
    os << "property list uchar int vertex_indices\nend_header\n";
    for (size_t i = 0; i < mesh.vertices.size(); ++i) {
        float xyz[3] = {float(mesh.vertices[i].x), float(mesh.vertices[i].y),
                        float(mesh.vertices[i].z)};
        os.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
        if (with_scale) {
            float s = mesh.vertex_scale[i];
            os.write(reinterpret_cast<const char*>(&s), sizeof(s));
        }
        if (with_color) {
            // log ramp, purple (fine) -> yellow (coarse)
            double s = std::fmax(double(mesh.vertex_scale[i]), s_min);
            double u = std::log(s / s_min) / std::log(s_max / s_min);
            u = u < 0.0 ? 0.0 : (u > 1.0 ? 1.0 : u);
            uint8_t rgb[3] = {uint8_t(128 + 127 * u), uint8_t(255 * u), uint8_t(255 * (1.0 - u))};
            os.write(reinterpret_cast<const char*>(rgb), sizeof(rgb));
        }
    }
    for (const auto& t : mesh.triangles) {
        uint8_t n = 3;
        os.write(reinterpret_cast<const char*>(&n), 1);
        int32_t idx[3] = {t[0], t[1], t[2]};
        os.write(reinterpret_cast<const char*>(idx), sizeof(idx));
    }
    if (!os) throw std::runtime_error("mesh: write to '" + path + "' failed");
}

}  // namespace

void save_mesh_ply(const Mesh& mesh, const std::string& path) {
    mesh.validate();
    write_ply(mesh, path, mesh.has_scale(), false);
}

void save_scale_visualization_ply(const Mesh& mesh, const std::string& path, double s_min,
                                  double s_max) {
    mesh.validate();
    if (!mesh.has_scale())
        throw std::invalid_argument("scale visualization: mesh has no scale attribute");
    write_ply(mesh, path, true, true, s_min, s_max);
}

Mesh load_mesh_ply(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("mesh: cannot open '" + path + "'");
    std::string line;
    std::getline(is, line);
    if (line != "ply") throw std::runtime_error("mesh: '" + path + "' is not a PLY file");
    std::getline(is, line);
    if (line != "format binary_little_endian 1.0")
        throw std::runtime_error("mesh: unsupported PLY format in '" + path + "'");

    size_t n_vertices = 0, n_faces = 0;
    struct Prop { std::string type, name; };
    std::vector<Prop> vertex_props;
    std::string element;
    while (std::getline(is, line) && line != "end_header") {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "element") {
            size_t count;
            ls >> element >> count;
            if (element == "vertex") n_vertices = count;
            else if (element == "face") n_faces = count;
        } else if (tag == "property" && element == "vertex") {
            Prop p;
            ls >> p.type >> p.name;
            if (p.type == "list") throw std::runtime_error("mesh: unsupported vertex list property");
            vertex_props.push_back(p);
        }
    }
    Mesh mesh;
    mesh.vertices.resize(n_vertices);
    bool has_scale = false;
    for (const auto& p : vertex_props) has_scale |= p.name == "scale";
    if (has_scale) mesh.vertex_scale.resize(n_vertices);
    for (size_t i = 0; i < n_vertices; ++i) {
        for (const auto& p : vertex_props) {
            if (p.type == "float") {
                float v;
                is.read(reinterpret_cast<char*>(&v), 4);
                if (p.name == "x") mesh.vertices[i].x = v;
                else if (p.name == "y") mesh.vertices[i].y = v;
                else if (p.name == "z") mesh.vertices[i].z = v;
                else if (p.name == "scale") mesh.vertex_scale[i] = v;
            } else if (p.type == "uchar") {
                char c;
                is.read(&c, 1);
            } else {
                throw std::runtime_error("mesh: unsupported property type '" + p.type + "'");
            }
        }
    }
    mesh.triangles.resize(n_faces);
    for (size_t i = 0; i < n_faces; ++i) {
        uint8_t n;
        is.read(reinterpret_cast<char*>(&n), 1);
        if (n != 3) throw std::runtime_error("mesh: non-triangle face in '" + path + "'");
        int32_t idx[3];
        is.read(reinterpret_cast<char*>(idx), sizeof(idx));
        mesh.triangles[i] = {idx[0], idx[1], idx[2]};
    }
    if (!is) throw std::runtime_error("mesh: truncated PLY '" + path + "'");
    mesh.validate();
    return mesh;
}

}  // namespace snsr
