#include "snsr/metrics.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "snsr/chamfer.hpp"
#include "snsr/renderer.hpp"

namespace snsr {

double mean_angular_error(std::span<const Vec3> predicted, std::span<const Vec3> truth,
                          std::span<const uint8_t> mask) {
    if (predicted.size() != truth.size() || predicted.size() != mask.size())
        throw std::invalid_argument("mean_angular_error: size mismatch");
    double sum = 0.0;
    size_t n = 0;
    for (size_t i = 0; i < predicted.size(); ++i) {
        if (!mask[i]) continue;
        sum += angle_deg(predicted[i], truth[i]);
        ++n;
    }
    if (n == 0) throw std::invalid_argument("mean_angular_error: empty mask");
    return sum / double(n);
}

RenderedView render_view(const ScaleField& field, const Camera& camera, int samples_per_ray,
                         double near_floor) {
    camera.validate();
    if (samples_per_ray < 2) throw std::invalid_argument("render_view: need >= 2 samples per ray");
    const size_t pixels = size_t(camera.width) * camera.height;
    RenderedView out;
    out.normals.assign(pixels, Vec3{});
    out.opacity.assign(pixels, 0.0);

    // chunked so the bundle's per-sample buffers stay small
    const size_t chunk = std::max<size_t>(1, 16384 / size_t(samples_per_ray)) * 16;
    std::vector<size_t> pixel_of_ray;
    RayBundle bundle;
    for (size_t begin = 0; begin < pixels; begin += chunk) {
        const size_t end = std::min(pixels, begin + chunk);
        bundle.rays.clear();
        pixel_of_ray.clear();
        for (size_t px = begin; px < end; ++px) {
            int row = int(px / camera.width), col = int(px % camera.width);
            Cone cone = cast_cone(camera, row, col);
            auto span = intersect_cube(cone.origin, cone.axis, 1.0);
            if (!span) continue;
            double near = std::fmax(span->first, near_floor);
            double far = span->second;
            if (!(near < far)) continue;
            RenderRay ray;
            ray.samples.resize(samples_per_ray);
            const double stride = (far - near) / samples_per_ray;
            for (int k = 0; k < samples_per_ray; ++k) {
                double t = near + (k + 0.5) * stride;  // deterministic mid-stratum
                ray.samples[k].t = t;
                ray.samples[k].p = cone.origin + t * cone.axis;
                ray.samples[k].s = sphere_radius(cone, t, camera.focal_world());
            }
            pixel_of_ray.push_back(px);
            bundle.rays.push_back(std::move(ray));
        }
        RenderOutput rendered = render_bundle(field, bundle);
        for (size_t j = 0; j < rendered.rays.size(); ++j) {
            const auto& rr = rendered.rays[j];
            out.opacity[pixel_of_ray[j]] = rr.opacity;
            if (norm(rr.normal) > 1e-12) out.normals[pixel_of_ray[j]] = normalized(rr.normal);
        }
    }
    return out;
}

namespace {

double view_mae(const ScaleField& field, const View& view, int samples_per_ray, double near_floor) {
    RenderedView rendered = render_view(field, view.camera, samples_per_ray, near_floor);
    const size_t pixels = rendered.normals.size();
    std::vector<Vec3> truth(pixels);
    for (size_t i = 0; i < pixels; ++i)
        truth[i] = {view.normals[i * 3], view.normals[i * 3 + 1], view.normals[i * 3 + 2]};
    return mean_angular_error(rendered.normals, truth, view.mask);
}

}  // namespace

double held_out_mae(const ScaleField& field, const SceneDataset& dataset, int samples_per_ray,
                    double near_floor, const std::string& tag_filter) {
    double sum = 0.0;
    int n = 0;
    for (const auto& view : dataset.views) {
        if (!view.held_out) continue;
        if (!tag_filter.empty() && view.tag != tag_filter) continue;
        sum += view_mae(field, view, samples_per_ray, near_floor);
        ++n;
    }
    return n ? sum / n : std::numeric_limits<double>::quiet_NaN();
}

EvalReport evaluate(const ScaleField& field, const SceneDataset& dataset, const Mesh* mesh,
                    const Mesh* ground_truth, int samples_per_ray, int chamfer_samples,
                    uint64_t seed) {
    const auto t0 = std::chrono::steady_clock::now();
    EvalReport report;
    double sum = 0.0, sum_closeup = 0.0;
    int n = 0, n_closeup = 0;
    for (const auto& view : dataset.views) {
        if (!view.held_out) continue;
        ViewEval ve;
        ve.name = view.name;
        ve.tag = view.tag;
        ve.mae_deg = view_mae(field, view, samples_per_ray, 0.05);
        report.views.push_back(ve);
        sum += ve.mae_deg;
        ++n;
        if (view.tag == "closeup") {
            sum_closeup += ve.mae_deg;
            ++n_closeup;
        }
    }
    if (n) report.mean_mae_deg = sum / n;
    if (n_closeup) report.mean_mae_closeup_deg = sum_closeup / n_closeup;

    if (mesh && ground_truth)
        report.chamfer = chamfer_between(*mesh, *ground_truth, chamfer_samples, seed);
    else if (mesh && !ground_truth)
        report.note = "ground-truth mesh unavailable; chamfer omitted";

    report.runtime_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

void write_report_csv(const EvalReport& report, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("report: cannot open '" + path + "' for writing");
    os << "view,tag,mae_deg\n";
    char buf[160];
    for (const auto& v : report.views) {
        std::snprintf(buf, sizeof(buf), "%s,%s,%.6f\n", v.name.c_str(), v.tag.c_str(), v.mae_deg);
        os << buf;
    }
    std::snprintf(buf, sizeof(buf), "mean,,%.6f\n", report.mean_mae_deg);
    os << buf;
    if (std::isfinite(report.chamfer)) {
        std::snprintf(buf, sizeof(buf), "chamfer,,%.9g\n", report.chamfer);
        os << buf;
    }
}

void write_report_text(const EvalReport& report, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("report: cannot open '" + path + "' for writing");
    os << "evaluation report\n=================\n";
    char buf[256];
    for (const auto& v : report.views) {
        std::snprintf(buf, sizeof(buf), "  %-12s %-8s MAE %8.4f deg\n", v.name.c_str(),
                      v.tag.c_str(), v.mae_deg);
        os << buf;
    }
    if (std::isfinite(report.mean_mae_deg)) {
        std::snprintf(buf, sizeof(buf), "mean held-out MAE: %.4f deg\n", report.mean_mae_deg);
        os << buf;
    }
    if (std::isfinite(report.mean_mae_closeup_deg)) {
        std::snprintf(buf, sizeof(buf), "close-up MAE:      %.4f deg\n", report.mean_mae_closeup_deg);
        os << buf;
    }
    if (std::isfinite(report.chamfer)) {
        std::snprintf(buf, sizeof(buf), "chamfer distance:  %.9g\n", report.chamfer);
        os << buf;
    }
    if (!report.note.empty()) os << "note: " << report.note << "\n";
    std::snprintf(buf, sizeof(buf), "runtime: %.2f s\n", report.runtime_s);
    os << buf;
    if (!report.config_echo.empty()) os << "\nconfig:\n" << report.config_echo;
}

}  // namespace snsr
