#include <CLI11.hpp>

#include <omp.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "snsr/chamfer.hpp"
#include "snsr/dataset.hpp"
#include "snsr/marching_cubes.hpp"
#include "snsr/mesh.hpp"
#include "snsr/metrics.hpp"
#include "snsr/renderer.hpp"
#include "snsr/scene.hpp"
#include "snsr/smem.hpp"
#include "snsr/trainer.hpp"

namespace fs = std::filesystem;
using namespace snsr;

namespace {

int cmd_generate(const std::string& shape_name_arg, int regular, int closeup, int eval_regular,
                 int eval_closeup, int resolution, int supersampling, double distance,
                 double closeup_factor, uint64_t seed, int gt_resolution, const std::string& out) {
    SceneGenConfig cfg;
    cfg.shape = shape_from_string(shape_name_arg);
    cfg.regular_views = regular;
    cfg.closeup_views = closeup;
    cfg.eval_regular = eval_regular;
    cfg.eval_closeup = eval_closeup;
    cfg.resolution = resolution;
    cfg.supersampling = supersampling;
    cfg.regular_distance = distance;
    cfg.closeup_factor = closeup_factor;
    cfg.seed = seed;
    std::printf("generating %s scene: %d regular + %d close-up train views, %d+%d held out, %dx%d\n",
                shape_name_arg.c_str(), regular, closeup, eval_regular, eval_closeup, resolution,
                resolution);
    SceneDataset dataset = generate_synthetic_scene(cfg);
    if (gt_resolution > 0) {
        Mesh gt = ground_truth_mesh(cfg.shape, gt_resolution);
        fs::create_directories(out);
        save_mesh_ply(gt, out + "/gt_mesh.ply");
        dataset.ground_truth_mesh = "gt_mesh.ply";
    }
    save_dataset(dataset, out);
    std::printf("wrote %zu views to %s (scale range %.6g .. %.6g)\n", dataset.views.size(),
                out.c_str(), dataset.s_min, dataset.s_max);
    return 0;
}

int cmd_train(const std::string& data_dir, const std::string& config_path, const std::string& out,
              int64_t seed_override, int threads_override) {
    TrainConfig config = config_path.empty() ? TrainConfig{} : load_train_config(config_path);
    if (seed_override >= 0) config.seed = uint64_t(seed_override);
    if (threads_override > 0) config.threads = threads_override;
    SceneDataset dataset = load_dataset(data_dir);
    std::printf("training on %zu views (%zu train) for %d iterations\n", dataset.views.size(),
                dataset.train_view_count(), config.iterations);
    TrainResult result = train(dataset, config, out);
    if (!result.log.empty()) {
        const auto& last = result.log.back();
        std::printf("final losses: total %.5f (normal %.5f mask %.5f eikonal %.5f csr %.5f)\n",
                    last.losses.total, last.losses.normal, last.losses.mask, last.losses.eikonal,
                    last.losses.csr);
    }
    std::printf("checkpoint: %s\n", result.checkpoint_path.c_str());
    return 0;
}

int cmd_extract(const std::string& checkpoint, const std::string& out, int resolution, int unit,
                const std::string& scale_mode, double constant_scale, const std::string& scale_viz,
                int threads) {
    if (threads > 0) omp_set_num_threads(threads);
    ScaleField field = ScaleField::load_checkpoint(checkpoint);
    ScaleAssignment assignment;
    if (scale_mode == "smem") {
        assignment = select_scales(field, resolution, unit);
    } else if (scale_mode == "constant") {
        if (!(constant_scale > 0.0))
            throw std::runtime_error("extract: --scale must be positive in constant mode");
        assignment = ScaleAssignment::constant(resolution, unit, constant_scale);
    } else {
        throw std::runtime_error("extract: unknown scale mode '" + scale_mode + "'");
    }
    std::printf("extracting at resolution %d, unit %d, mode %s\n", resolution, unit,
                scale_mode.c_str());
    Mesh mesh = marching_cubes(make_field_sampler(field), resolution, assignment);
    std::printf("mesh: %zu vertices, %zu triangles\n", mesh.vertices.size(), mesh.triangles.size());
    if (out.size() >= 4 && out.substr(out.size() - 4) == ".obj")
        save_mesh_obj(mesh, out);
    else
        save_mesh_ply(mesh, out);
    if (!scale_viz.empty())
        save_scale_visualization_ply(mesh, scale_viz, field.config().s_min, field.config().s_max);
    return 0;
}

int cmd_render(const std::string& checkpoint, const std::string& data_dir, int view_index,
               const std::string& out, int samples, const std::string& dump_pixel,
               const std::string& dump_path) {
    ScaleField field = ScaleField::load_checkpoint(checkpoint);
    SceneDataset dataset = load_dataset(data_dir);
    if (view_index < 0 || size_t(view_index) >= dataset.views.size())
        throw std::runtime_error("render: view index out of range");
    const View& view = dataset.views[view_index];
    RenderedView rendered = render_view(field, view.camera, samples);
    std::vector<float> image(rendered.normals.size() * 3);
    for (size_t i = 0; i < rendered.normals.size(); ++i) {
        image[i * 3 + 0] = float(rendered.normals[i].x);
        image[i * 3 + 1] = float(rendered.normals[i].y);
        image[i * 3 + 2] = float(rendered.normals[i].z);
    }
    save_float_image(out, image.data(), view.camera.height, view.camera.width, 3);
    std::printf("rendered view %d (%s) to %s\n", view_index, view.name.c_str(), out.c_str());

    if (!dump_pixel.empty()) {
        int row, col;
        if (std::sscanf(dump_pixel.c_str(), "%d,%d", &row, &col) != 2)
            throw std::runtime_error("render: --dump-pixel expects 'row,col'");
        Cone cone = cast_cone(view.camera, row, col);
        auto span = intersect_cube(cone.origin, cone.axis, 1.0);
        if (!span) throw std::runtime_error("render: pixel ray misses the scene cube");
        RenderRay ray;
        double near = std::fmax(span->first, 0.05), far = span->second;
        double stride = (far - near) / samples;
        for (int k = 0; k < samples; ++k) {
            double t = near + (k + 0.5) * stride;
            ray.samples.push_back(
                {t, cone.origin + t * cone.axis, sphere_radius(cone, t, view.camera.focal_world())});
        }
        RayBundle bundle;
        bundle.rays.push_back(ray);
        RenderOutput ro = render_bundle(field, bundle);
        std::ofstream os(dump_path.empty() ? "ray_profile.txt" : dump_path);
        dump_ray_profile(os, bundle.rays[0], ro.rays[0]);
        std::printf("wrote weight profile for pixel (%d, %d)\n", row, col);
    }
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_dir, const std::string& mesh_path,
             const std::string& out, int samples, int chamfer_samples, uint64_t seed) {
    ScaleField field = ScaleField::load_checkpoint(checkpoint);
    SceneDataset dataset = load_dataset(data_dir);
    Mesh mesh, gt;
    bool have_mesh = !mesh_path.empty();
    bool have_gt = !dataset.ground_truth_mesh.empty();
    if (have_mesh) {
        mesh = mesh_path.size() >= 4 && mesh_path.substr(mesh_path.size() - 4) == ".obj"
                   ? load_mesh_obj(mesh_path)
                   : load_mesh_ply(mesh_path);
    }
    if (have_gt) gt = load_mesh_ply(data_dir + "/" + dataset.ground_truth_mesh);
    EvalReport report = evaluate(field, dataset, have_mesh ? &mesh : nullptr,
                                 have_gt ? &gt : nullptr, samples, chamfer_samples, seed);
    fs::create_directories(out);
    write_report_csv(report, out + "/report.csv");
    write_report_text(report, out + "/report.txt");
    std::printf("held-out MAE: %.4f deg", report.mean_mae_deg);
    if (std::isfinite(report.chamfer)) std::printf(", chamfer: %.6g", report.chamfer);
    if (!report.note.empty()) std::printf(" (%s)", report.note.c_str());
    std::printf("\nreports in %s\n", out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"scale-aware multi-view normal integration"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "render a synthetic multi-scale dataset");
    std::string g_shape = "sphere", g_out;
    int g_regular = 16, g_closeup = 0, g_eval_regular = 6, g_eval_closeup = 0;
    int g_resolution = 800, g_supersampling = 8, g_gt_res = 192;
    double g_distance = 3.0, g_closeup_factor = 4.0;
    uint64_t g_seed = 0;
    gen->add_option("--shape", g_shape, "sphere|torus|box|sphere_bump");
    gen->add_option("--regular", g_regular, "regular training views");
    gen->add_option("--closeup", g_closeup, "close-up training views");
    gen->add_option("--eval-regular", g_eval_regular, "held-out regular views");
    gen->add_option("--eval-closeup", g_eval_closeup, "held-out close-up views");
    gen->add_option("--resolution", g_resolution, "image resolution");
    gen->add_option("--supersampling", g_supersampling, "sub-pixel rays per axis");
    gen->add_option("--distance", g_distance, "regular camera distance");
    gen->add_option("--closeup-factor", g_closeup_factor, "close-up distance divisor");
    gen->add_option("--gt-mesh-resolution", g_gt_res, "ground-truth mesh grid (0 disables)");
    gen->add_option("--seed", g_seed, "random seed");
    gen->add_option("--out", g_out, "output dataset directory")->required();

    // train
    auto* tr = app.add_subcommand("train", "optimize the field on a dataset");
    std::string t_data, t_config, t_out = "run";
    int64_t t_seed = -1;
    int t_threads = 0;
    tr->add_option("--data", t_data, "dataset directory")->required();
    tr->add_option("--config", t_config, "training config file (defaults when omitted)");
    tr->add_option("--out", t_out, "output directory");
    tr->add_option("--seed", t_seed, "override config seed");
    tr->add_option("--threads", t_threads, "override config threads");

    // extract
    auto* ex = app.add_subcommand("extract", "marching-cubes mesh from a checkpoint");
    std::string e_checkpoint, e_out = "mesh.ply", e_mode = "smem", e_viz;
    int e_resolution = 512, e_unit = 64, e_threads = 0;
    double e_scale = -1.0;
    ex->add_option("--checkpoint", e_checkpoint, "field checkpoint")->required();
    ex->add_option("--out", e_out, "output mesh (.ply or .obj)");
    ex->add_option("--resolution", e_resolution, "grid vertices per axis");
    ex->add_option("--unit", e_unit, "scale-selection unit size (vertices per axis)");
    ex->add_option("--scale-mode", e_mode, "smem|constant");
    ex->add_option("--scale", e_scale, "scale for constant mode");
    ex->add_option("--scale-viz", e_viz, "also write a scale color-ramp PLY");
    ex->add_option("--threads", e_threads, "OpenMP thread override");

    // render
    auto* re = app.add_subcommand("render", "render a normal map through a dataset camera");
    std::string r_checkpoint, r_data, r_out = "normals.f32", r_dump_pixel, r_dump_path;
    int r_view = 0, r_samples = 32;
    re->add_option("--checkpoint", r_checkpoint, "field checkpoint")->required();
    re->add_option("--data", r_data, "dataset directory")->required();
    re->add_option("--view", r_view, "view index");
    re->add_option("--samples", r_samples, "samples per ray");
    re->add_option("--out", r_out, "output float image");
    re->add_option("--dump-pixel", r_dump_pixel, "row,col: dump that ray's weight profile");
    re->add_option("--dump-path", r_dump_path, "weight profile output path");

    // eval
    auto* ev = app.add_subcommand("eval", "held-out MAE and chamfer report");
    std::string v_checkpoint, v_data, v_mesh, v_out = "eval";
    int v_samples = 32, v_chamfer = 100000;
    uint64_t v_seed = 0;
    ev->add_option("--checkpoint", v_checkpoint, "field checkpoint")->required();
    ev->add_option("--data", v_data, "dataset directory")->required();
    ev->add_option("--mesh", v_mesh, "extracted mesh for chamfer");
    ev->add_option("--out", v_out, "report directory");
    ev->add_option("--samples", v_samples, "samples per ray");
    ev->add_option("--chamfer-samples", v_chamfer, "surface samples per mesh");
    ev->add_option("--seed", v_seed, "chamfer sampling seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed())
            return cmd_generate(g_shape, g_regular, g_closeup, g_eval_regular, g_eval_closeup,
                                g_resolution, g_supersampling, g_distance, g_closeup_factor, g_seed,
                                g_gt_res, g_out);
        if (tr->parsed()) return cmd_train(t_data, t_config, t_out, t_seed, t_threads);
        if (ex->parsed())
            return cmd_extract(e_checkpoint, e_out, e_resolution, e_unit, e_mode, e_scale, e_viz,
                               e_threads);
        if (re->parsed())
            return cmd_render(r_checkpoint, r_data, r_view, r_out, r_samples, r_dump_pixel,
                              r_dump_path);
        if (ev->parsed())
            return cmd_eval(v_checkpoint, v_data, v_mesh, v_out, v_samples, v_chamfer, v_seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
