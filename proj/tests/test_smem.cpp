#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "snsr/chamfer.hpp"
#include "snsr/marching_cubes.hpp"
#include "snsr/mesh.hpp"
#include "snsr/reference.hpp"
#include "snsr/rng.hpp"
#include "snsr/smem.hpp"

using namespace snsr;

namespace {

FieldSampler sphere_sampler(double radius, double sign = 1.0) {
    return [radius, sign](std::span<const Vec3> pts, std::span<const double>,
                          std::span<double> out) {
        for (size_t i = 0; i < pts.size(); ++i) out[i] = sign * (norm(pts[i]) - radius);
    };
}

FieldConfig smem_config() {
    FieldConfig cfg;
    cfg.hash.levels = 2;
    cfg.hash.features_per_level = 2;
    cfg.hash.base_resolution = 2;
    cfg.hash.finest_resolution = 4;
    cfg.hash.table_log2 = 6;
    cfg.triplane.spatial_resolution = 32;
    cfg.triplane.scale_bins = 16;
    cfg.triplane.features_per_plane = 8;
    cfg.hidden_width = 8;
    cfg.s_min = 1e-3;
    cfg.s_max = 1e-1;
    return cfg;
}

Mesh tetrahedron() {
    Mesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    m.triangles = {{0, 2, 1}, {0, 1, 3}, {0, 3, 2}, {1, 2, 3}};
    return m;
}

}  // namespace

TEST_CASE("marching cubes on the analytic sphere") {
    const int R = 64;
    Mesh mesh = marching_cubes_constant_scale(sphere_sampler(0.5), R, 0.01);
    REQUIRE(!mesh.vertices.empty());

    SUBCASE("every vertex sits on the sphere within two cells") {
        const double tol = 2.0 * (2.0 / R);
        for (const Vec3& v : mesh.vertices) CHECK(std::fabs(norm(v) - 0.5) < tol);
    }
    SUBCASE("watertight") {
        CHECK(is_watertight(mesh));
    }
    SUBCASE("consistent outward orientation") {
        int outward = 0, inward = 0;
        for (const auto& t : mesh.triangles) {
            Vec3 c = (mesh.vertices[t[0]] + mesh.vertices[t[1]] + mesh.vertices[t[2]]) / 3.0;
            Vec3 n = cross(mesh.vertices[t[1]] - mesh.vertices[t[0]],
                           mesh.vertices[t[2]] - mesh.vertices[t[0]]);
            (dot(n, c) > 0.0 ? outward : inward)++;
        }
        CHECK(inward == 0);
        CHECK(signed_volume(mesh) > 0.0);
        CHECK(signed_volume(mesh) ==
              doctest::Approx(4.0 / 3.0 * M_PI * 0.125).epsilon(0.01));
    }
    SUBCASE("sign-flipped field gives the same surface with reversed orientation") {
        Mesh flipped = marching_cubes_constant_scale(sphere_sampler(0.5, -1.0), R, 0.01);
        REQUIRE(!flipped.vertices.empty());
        CHECK(signed_volume(flipped) == doctest::Approx(-signed_volume(mesh)).epsilon(1e-9));
        KdTree tree(mesh.vertices);
        double worst = 0.0;
        for (const Vec3& v : flipped.vertices) worst = std::fmax(worst, tree.nearest_sq(v));
        CHECK(worst < 1e-18);
    }
    SUBCASE("all-positive field yields an empty mesh") {
        auto positive = [](std::span<const Vec3> pts, std::span<const double>,
                           std::span<double> out) {
            for (size_t i = 0; i < pts.size(); ++i) out[i] = 1.0;
        };
        Mesh empty = marching_cubes_constant_scale(positive, 32, 0.01);
        CHECK(empty.vertices.empty());
        CHECK(empty.triangles.empty());
    }
    SUBCASE("vertices carry the scale attribute") {
        REQUIRE(mesh.has_scale());
        for (float s : mesh.vertex_scale) CHECK(s == doctest::Approx(0.01f));
    }
}

TEST_CASE("scale bin values are log-spaced over the training range") {
    FieldConfig cfg = smem_config();
    CHECK(scale_bin_value(cfg, 0) == doctest::Approx(cfg.s_min));
    CHECK(scale_bin_value(cfg, cfg.triplane.scale_bins - 1) == doctest::Approx(cfg.s_max));
    double ratio = scale_bin_value(cfg, 1) / scale_bin_value(cfg, 0);
    for (int b = 1; b + 1 < cfg.triplane.scale_bins; ++b)
        CHECK(scale_bin_value(cfg, b + 1) / scale_bin_value(cfg, b) ==
              doctest::Approx(ratio).epsilon(1e-12));
}

TEST_CASE("unit scale response") {
    ScaleField field(smem_config());
    std::vector<Vec3> vertices;
    for (int i = 0; i < 27; ++i)
        vertices.push_back({-0.2 + 0.05 * (i % 3), 0.1 + 0.05 * ((i / 3) % 3), 0.3 + 0.05 * (i / 9)});

    SUBCASE("all-zero triplanes give a flat zero response") {
        auto response = unit_scale_response(field, vertices);
        for (double r : response) CHECK(r == 0.0);
        CHECK(select_response_bin(response) == scale_candidate_count(field.config()) - 1);
    }
    SUBCASE("a planted scale bin wins the argmax") {
        const auto& tc = field.config().triplane;
        const int planted = 7;
        for (int plane = 0; plane < 3; ++plane)
            for (int i = 0; i < tc.spatial_resolution; ++i)
                for (int f = 0; f < tc.features_per_plane; ++f)
                    field.params().planes[plane][(size_t(i) * tc.scale_bins + planted) *
                                                     tc.features_per_plane +
                                                 f] = 0.25;
        auto response = unit_scale_response(field, vertices);
        // the planted row feeds the two adjacent mid-interval candidates
        // equally; the tie breaks toward the coarser one, whose index equals
        // the planted row
        CHECK(select_response_bin(response) == planted);
        auto ref = reference::unit_scale_response(field, vertices);
        REQUIRE(response.size() == ref.size());
        for (size_t b = 0; b < response.size(); ++b)
            CHECK(response[b] == doctest::Approx(ref[b]).epsilon(1e-9));
    }
    SUBCASE("trained bands that grew negative still win on magnitude") {
        const auto& tc = field.config().triplane;
        const int planted = 4;
        for (int plane = 0; plane < 3; ++plane)
            for (int i = 0; i < tc.spatial_resolution; ++i)
                for (int f = 0; f < tc.features_per_plane; ++f)
                    field.params().planes[plane][(size_t(i) * tc.scale_bins + planted) *
                                                     tc.features_per_plane +
                                                 f] = -0.5;
        CHECK(select_response_bin(unit_scale_response(field, vertices)) == planted);
    }
    SUBCASE("argmax is invariant to positive feature scaling") {
        Pcg32 rng(31);
        for (auto& plane : field.params().planes)
            for (double& v : plane) v = rng.uniform(-1.0, 1.0);
        auto before = unit_scale_response(field, vertices);
        int bin_before = select_response_bin(before);
        for (auto& plane : field.params().planes)
            for (double& v : plane) v *= 37.5;
        auto after = unit_scale_response(field, vertices);
        CHECK(select_response_bin(after) == bin_before);
    }
    SUBCASE("response matches the naive oracle on random planes") {
        Pcg32 rng(33);
        for (auto& plane : field.params().planes)
            for (double& v : plane) v = rng.uniform(-1.0, 1.0);
        auto fast = unit_scale_response(field, vertices);
        auto ref = reference::unit_scale_response(field, vertices);
        for (size_t b = 0; b < fast.size(); ++b)
            CHECK(fast[b] == doctest::Approx(ref[b]).epsilon(1e-9));
    }
}

TEST_CASE("select_scales") {
    ScaleField field(smem_config());
    SUBCASE("uniform response selects the coarsest scale everywhere") {
        ScaleAssignment a = select_scales(field, 17, 5);
        CHECK(a.units[0] == 4);  // ceil(17/5), last unit partial
        const int coarsest = scale_candidate_count(field.config()) - 1;
        for (int bin : a.unit_bin) CHECK(bin == coarsest);
        for (double s : a.unit_scale)
            CHECK(s == doctest::Approx(scale_candidate_value(field.config(), coarsest)));
    }
    SUBCASE("factored responses agree with per-vertex aggregation, partial units included") {
        Pcg32 rng(41);
        for (auto& plane : field.params().planes)
            for (double& v : plane) v = rng.uniform(-1.0, 1.0);
        const int R = 17, n = 5;
        ScaleAssignment a = select_scales(field, R, n);
        for (int ux = 0; ux < a.units[0]; ++ux)
            for (int uy = 0; uy < a.units[1]; ++uy)
                for (int uz = 0; uz < a.units[2]; ++uz) {
                    std::vector<Vec3> vertices;
                    for (int vx = ux * n; vx < std::min((ux + 1) * n, R); ++vx)
                        for (int vy = uy * n; vy < std::min((uy + 1) * n, R); ++vy)
                            for (int vz = uz * n; vz < std::min((uz + 1) * n, R); ++vz)
                                vertices.push_back({grid_coord(vx, R), grid_coord(vy, R),
                                                    grid_coord(vz, R)});
                    auto ref = reference::unit_scale_response(field, vertices);
                    CHECK(a.unit_bin[a.unit_index(ux, uy, uz)] == select_response_bin(ref));
                }
    }
    SUBCASE("vertex scale lookup respects unit boundaries") {
        ScaleAssignment a = ScaleAssignment::constant(16, 4, 0.02);
        a.unit_scale[a.unit_index(1, 0, 0)] = 0.05;
        CHECK(a.vertex_scale(3, 0, 0) == 0.02);
        CHECK(a.vertex_scale(4, 0, 0) == 0.05);
        CHECK(a.vertex_scale(7, 3, 3) == 0.05);
        CHECK(a.vertex_scale(8, 0, 0) == 0.02);
    }
}

TEST_CASE("mesh extracted at a constant SMEM assignment equals constant-scale extraction") {
    // degenerate consistency: when select_scales returns one scale everywhere
    // the SMEM mesh must match the constant-scale mesh exactly
    ScaleField field(smem_config());  // zero triplanes -> coarsest bin everywhere
    ScaleAssignment a = select_scales(field, 24, 8);
    double s0 = a.unit_scale[0];
    auto sampler = sphere_sampler(0.4);
    Mesh smem_mesh = marching_cubes(sampler, 24, a);
    Mesh const_mesh = marching_cubes_constant_scale(sampler, 24, s0);
    REQUIRE(smem_mesh.vertices.size() == const_mesh.vertices.size());
    REQUIRE(smem_mesh.triangles.size() == const_mesh.triangles.size());
    for (size_t i = 0; i < smem_mesh.vertices.size(); ++i)
        CHECK(norm(smem_mesh.vertices[i] - const_mesh.vertices[i]) == 0.0);
}

TEST_CASE("mesh cleanup") {
    Mesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1e-9, 0, 0}};
    m.triangles = {{0, 1, 2}, {3, 1, 2}, {0, 1, 1}};
    cleanup_mesh(m, 1e-7);
    // vertex 3 welds onto vertex 0 making triangle 1 a duplicate of 0; the
    // repeated-index triangle disappears
    CHECK(m.vertices.size() == 3);
    CHECK(m.triangles.size() == 2);
}

TEST_CASE("mesh io") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "snsr_mesh_test";
    fs::create_directories(dir);

    SUBCASE("tetrahedron OBJ has 4 vertex and 4 face records") {
        std::string path = (dir / "tet.obj").string();
        save_mesh_obj(tetrahedron(), path);
        std::ifstream is(path);
        int v = 0, f = 0;
        std::string line;
        while (std::getline(is, line)) {
            if (line.rfind("v ", 0) == 0) ++v;
            if (line.rfind("f ", 0) == 0) ++f;
        }
        CHECK(v == 4);
        CHECK(f == 4);
        Mesh back = load_mesh_obj(path);
        CHECK(back.vertices.size() == 4);
        CHECK(back.triangles.size() == 4);
    }
    SUBCASE("binary PLY file round-trips bit-exactly through the loader") {
        Mesh mesh = marching_cubes_constant_scale(sphere_sampler(0.45), 24, 0.02);
        std::string path_a = (dir / "a.ply").string();
        std::string path_b = (dir / "b.ply").string();
        save_mesh_ply(mesh, path_a);
        Mesh loaded = load_mesh_ply(path_a);
        save_mesh_ply(loaded, path_b);
        auto bytes = [](const std::string& p) {
            std::ifstream is(p, std::ios::binary);
            return std::string(std::istreambuf_iterator<char>(is),
                               std::istreambuf_iterator<char>());
        };
        CHECK(bytes(path_a) == bytes(path_b));
        CHECK(loaded.vertices.size() == mesh.vertices.size());
        CHECK(loaded.has_scale());
    }
    SUBCASE("scale visualization PLY is loadable") {
        Mesh mesh = marching_cubes_constant_scale(sphere_sampler(0.45), 16, 0.02);
        std::string path = (dir / "viz.ply").string();
        save_scale_visualization_ply(mesh, path, 1e-3, 1e-1);
        Mesh back = load_mesh_ply(path);  // color properties are skipped on load
        CHECK(back.vertices.size() == mesh.vertices.size());
    }
    fs::remove_all(dir);
}

TEST_CASE("watertightness check") {
    Mesh tet = tetrahedron();
    CHECK(is_watertight(tet));
    tet.triangles.pop_back();
    CHECK(!is_watertight(tet));
}

TEST_CASE("chamfer distance") {
    SUBCASE("point-set fixture: unit separation costs exactly 1") {
        std::vector<Vec3> a{{0, 0, 0}};
        std::vector<Vec3> b{{1, 0, 0}};
        CHECK(chamfer_between(a, b) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("identical meshes are within sampling noise of zero") {
        Mesh mesh = marching_cubes_constant_scale(sphere_sampler(0.5), 48, 0.02);
        CHECK(chamfer_between(mesh, mesh, 100000, 7) < 1e-3);
    }
    SUBCASE("matches the brute-force oracle on random point sets") {
        Pcg32 rng(55);
        for (int trial = 0; trial < 5; ++trial) {
            std::vector<Vec3> a(500), b(437);
            for (auto& p : a) p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
            for (auto& p : b) p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
            CHECK(chamfer_between(a, b) ==
                  doctest::Approx(reference::chamfer_bruteforce(a, b)).epsilon(1e-9));
        }
    }
    SUBCASE("empty inputs are rejected") {
        std::vector<Vec3> a{{0, 0, 0}}, empty;
        CHECK_THROWS_AS(chamfer_between(a, empty), std::invalid_argument);
        CHECK_THROWS_AS(chamfer_between(Mesh{}, tetrahedron(), 100, 1), std::invalid_argument);
    }
}
