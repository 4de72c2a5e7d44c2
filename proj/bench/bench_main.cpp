// Timing harness comparing the OpenMP kernels against their serial reference
// implementations on identical workloads. Run with --quick for a smoke-sized
// pass (used by CI), no flag for the full sizes.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#include "snsr/chamfer.hpp"
#include "snsr/marching_cubes.hpp"
#include "snsr/reference.hpp"
#include "snsr/renderer.hpp"
#include "snsr/rng.hpp"
#include "snsr/scene.hpp"
#include "snsr/smem.hpp"

using namespace snsr;

namespace {

double now_s() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

template <class F>
double time_call(F&& fn) {
    double t0 = now_s();
    fn();
    return now_s() - t0;
}

void report(const char* name, double serial_s, double parallel_s, bool match) {
    std::printf("%-28s serial %8.3f ms   openmp %8.3f ms   speedup %5.2fx   %s\n", name,
                serial_s * 1e3, parallel_s * 1e3, serial_s / parallel_s,
                match ? "results match" : "MISMATCH");
}

FieldConfig bench_field_config() {
    FieldConfig cfg;
    cfg.hash.levels = 14;
    cfg.hash.features_per_level = 2;
    cfg.hash.base_resolution = 16;
    cfg.hash.finest_resolution = 512;
    cfg.hash.table_log2 = 15;
    cfg.s_min = 1e-3;
    cfg.s_max = 1e-1;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    const bool quick = argc > 1 && std::strcmp(argv[1], "--quick") == 0;
    const int scale = quick ? 8 : 1;
    std::printf("threads: %d%s\n\n", omp_get_max_threads(), quick ? " (quick mode)" : "");

    Pcg32 rng(2024);

    // ---- field batch evaluation ----
    {
        ScaleField field(bench_field_config());
        field.geometric_init(0.5, 1);
        const int n = 200000 / scale;
        std::vector<Vec3> pts(n);
        std::vector<double> scales(n), out_ref(n), out_fast(n);
        for (int i = 0; i < n; ++i) {
            pts[i] = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
            scales[i] = rng.uniform(1e-3, 1e-1);
        }
        double t_ref = time_call([&] { reference::eval_batch(field, pts, scales, out_ref); });
        double t_fast = time_call([&] { field.eval_batch(pts, scales, out_fast, nullptr); });
        bool match = true;
        for (int i = 0; i < n; ++i) match &= std::fabs(out_ref[i] - out_fast[i]) < 1e-9;
        report("field batch eval", t_ref, t_fast, match);
    }

    // ---- ray compositing ----
    {
        const int rays = 20000 / scale, samples = 64;
        std::vector<std::vector<double>> alphas(rays);
        std::vector<std::vector<Vec3>> normals(rays);
        for (int j = 0; j < rays; ++j) {
            alphas[j].resize(samples);
            normals[j].resize(samples);
            for (int k = 0; k < samples; ++k) {
                alphas[j][k] = rng.next_double() * 0.3;
                normals[j][k] = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
            }
        }
        std::vector<double> opacity_ref(rays), opacity_fast(rays);
        double t_ref = time_call([&] {
            for (int j = 0; j < rays; ++j)
                opacity_ref[j] = reference::composite(alphas[j], normals[j]).opacity;
        });
        double t_fast = time_call([&] {
#pragma omp parallel for schedule(static)
            for (int j = 0; j < rays; ++j)
                opacity_fast[j] = composite_ray(alphas[j], normals[j]).opacity;
        });
        bool match = true;
        for (int j = 0; j < rays; ++j) match &= std::fabs(opacity_ref[j] - opacity_fast[j]) < 1e-9;
        report("ray compositing", t_ref, t_fast, match);
    }

    // ---- chamfer distance ----
    {
        const int n = 20000 / scale;
        std::vector<Vec3> a(n), b(n);
        for (int i = 0; i < n; ++i) {
            a[i] = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
            b[i] = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        }
        // brute force is O(n^2); run it on a slice and compare on that slice
        const int m = quick ? n : 2000;
        std::span<const Vec3> sa(a.data(), m), sb(b.data(), m);
        double ref_value = 0.0, fast_small = 0.0, fast_value = 0.0;
        double t_ref = time_call([&] { ref_value = reference::chamfer_bruteforce(sa, sb); });
        double t_small = time_call([&] { fast_small = chamfer_between(sa, sb); });
        double t_fast = time_call([&] { fast_value = chamfer_between(a, b); });
        bool match = std::fabs(ref_value - fast_small) < 1e-9;
        report("chamfer (same slice)", t_ref, t_small, match);
        std::printf("%-28s full %dk points in %.3f ms (value %.6f)\n", "chamfer (kd-tree, full)",
                    n / 1000, t_fast * 1e3, fast_value);
    }

    // ---- scale selection ----
    {
        ScaleField field(bench_field_config());
        field.geometric_init(0.5, 2);
        for (auto& plane : field.params().planes)
            for (double& v : plane) v = rng.uniform(-1.0, 1.0);
        const int R = quick ? 33 : 129, unit = 16;
        ScaleAssignment fast;
        double t_fast = time_call([&] { fast = select_scales(field, R, unit); });
        // naive path: per-unit vertex aggregation
        std::vector<int> naive_bins(fast.unit_bin.size());
        double t_ref = time_call([&] {
            for (int ux = 0; ux < fast.units[0]; ++ux)
                for (int uy = 0; uy < fast.units[1]; ++uy)
                    for (int uz = 0; uz < fast.units[2]; ++uz) {
                        std::vector<Vec3> vertices;
                        for (int vx = ux * unit; vx < std::min((ux + 1) * unit, R); ++vx)
                            for (int vy = uy * unit; vy < std::min((uy + 1) * unit, R); ++vy)
                                for (int vz = uz * unit; vz < std::min((uz + 1) * unit, R); ++vz)
                                    vertices.push_back({grid_coord(vx, R), grid_coord(vy, R),
                                                        grid_coord(vz, R)});
                        naive_bins[fast.unit_index(ux, uy, uz)] = select_response_bin(
                            reference::unit_scale_response(field, vertices));
                    }
        });
        bool match = naive_bins == fast.unit_bin;
        report("smem scale selection", t_ref, t_fast, match);
    }

    // ---- marching cubes ----
    {
        const int R = quick ? 48 : 128;
        FieldSampler sampler = [](std::span<const Vec3> pts, std::span<const double>,
                                  std::span<double> out) {
#pragma omp parallel for schedule(static)
            for (int64_t i = 0; i < int64_t(pts.size()); ++i)
                out[i] = analytic_sdf(ShapeId::SphereBump, pts[i]);
        };
        Mesh serial_mesh, parallel_mesh;
        int max_threads = omp_get_max_threads();
        omp_set_num_threads(1);
        double t_ref = time_call(
            [&] { serial_mesh = marching_cubes_constant_scale(sampler, R, 0.01); });
        omp_set_num_threads(max_threads);
        double t_fast = time_call(
            [&] { parallel_mesh = marching_cubes_constant_scale(sampler, R, 0.01); });
        bool match = serial_mesh.vertices.size() == parallel_mesh.vertices.size() &&
                     serial_mesh.triangles.size() == parallel_mesh.triangles.size();
        report("marching cubes", t_ref, t_fast, match);
    }

    return 0;
}
