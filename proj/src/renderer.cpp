#include "snsr/renderer.hpp"

#include <omp.h>

#include <cmath>
#include <stdexcept>

namespace snsr {

namespace {
constexpr double kAlphaDenominatorFloor = 1e-7;

inline double sigmoid(double a, double x) { return 1.0 / (1.0 + std::exp(-a * x)); }
}  // namespace

void RayBundle::validate() const {
    for (size_t j = 0; j < rays.size(); ++j) {
        const auto& r = rays[j];
        for (size_t k = 1; k < r.samples.size(); ++k)
            if (!(r.samples[k].t > r.samples[k - 1].t))
                throw std::invalid_argument("ray bundle: samples of ray " + std::to_string(j) +
                                            " not sorted by t");
        if (r.gt_mask && std::fabs(norm(r.gt_normal) - 1.0) > 1e-4)
            throw std::invalid_argument("ray bundle: foreground ray " + std::to_string(j) +
                                        " has a non-unit ground-truth normal");
    }
}

double sdf_to_alpha(double f_k, double f_next, double sharpness) {
    double phi_k = sigmoid(sharpness, f_k);
    double phi_next = sigmoid(sharpness, f_next);
    double den = std::fmax(phi_k, kAlphaDenominatorFloor);
    double alpha = (phi_k - phi_next) / den;
    return alpha > 0.0 ? alpha : 0.0;
}

CompositeResult composite_ray(std::span<const double> alphas, std::span<const Vec3> normals) {
    if (alphas.size() != normals.size())
        throw std::invalid_argument("composite_ray: alpha/normal count mismatch");
    CompositeResult out;
    out.weights.resize(alphas.size());
    out.transmittance.resize(alphas.size());
    double trans = 1.0;
    for (size_t k = 0; k < alphas.size(); ++k) {
        double w = trans * alphas[k];
        out.transmittance[k] = trans;
        out.weights[k] = w;
        out.normal += w * normals[k];
        out.opacity += w;
        trans *= 1.0 - alphas[k];
    }
    return out;
}

RenderOutput render_bundle(const ScaleField& field, const RayBundle& bundle) {
    RenderOutput out;
    out.rays.resize(bundle.rays.size());
    const int64_t n = int64_t(bundle.rays.size());
    const double a = field.sharpness();
    bool failed = false;
    std::string what;
#pragma omp parallel
    {
        FieldWorkspace ws;
#pragma omp for schedule(dynamic, 4)
        for (int64_t j = 0; j < n; ++j) {
            try {
                const auto& ray = bundle.rays[j];
                auto& rr = out.rays[j];
                const size_t m = ray.samples.size();
                rr.sdf.resize(m);
                rr.grad.resize(m);
                rr.alpha.assign(m, 0.0);
                for (size_t k = 0; k < m; ++k) {
                    rr.sdf[k] = field.forward(ray.samples[k].p, ray.samples[k].s, ws, true);
                    rr.grad[k] = ws.grad;
                }
                for (size_t k = 0; k + 1 < m; ++k)
                    rr.alpha[k] = sdf_to_alpha(rr.sdf[k], rr.sdf[k + 1], a);
                CompositeResult comp = composite_ray(rr.alpha, rr.grad);
                rr.normal = comp.normal;
                rr.opacity = comp.opacity;
                rr.trans = std::move(comp.transmittance);
                rr.weight = std::move(comp.weights);
            } catch (const std::exception& e) {
#pragma omp critical
                {
                    failed = true;
                    what = e.what();
                }
            }
        }
    }
    if (failed) throw std::runtime_error(what);
    return out;
}

double composite_backward(const RayRender& render, const Vec3& normal_bar, double opacity_bar,
                          double sharpness, std::span<double> f_bar, std::span<Vec3> g_bar) {
    const size_t m = render.sdf.size();
    if (f_bar.size() != m || g_bar.size() != m)
        throw std::invalid_argument("composite_backward: adjoint buffer size mismatch");

    // w_k = T_k alpha_k feeds both outputs; run the T recurrence in reverse
    std::vector<double> alpha_bar(m, 0.0);
    double trans_bar_next = 0.0;
    for (size_t k = m; k-- > 0;) {
        const double c = dot(normal_bar, render.grad[k]) + opacity_bar;
        g_bar[k] += render.weight[k] * normal_bar;
        double abar = c * render.trans[k];
        double tbar = c * render.alpha[k];
        if (k + 1 < m) {
            abar -= trans_bar_next * render.trans[k];
            tbar += trans_bar_next * (1.0 - render.alpha[k]);
        }
        alpha_bar[k] = abar;
        trans_bar_next = tbar;
    }

    const double a = sharpness;
    double a_bar = 0.0;
    for (size_t k = 0; k + 1 < m; ++k) {
        if (render.alpha[k] <= 0.0) continue;  // max() clamp active, zero subgradient
        const double fk = render.sdf[k], fn = render.sdf[k + 1];
        const double phi_k = sigmoid(a, fk);
        const double phi_n = sigmoid(a, fn);
        const double den = std::fmax(phi_k, kAlphaDenominatorFloor);
        const double num = phi_k - phi_n;
        double dalpha_dphik = 1.0 / den;
        if (phi_k > kAlphaDenominatorFloor) dalpha_dphik -= num / (den * den);
        const double dalpha_dphin = -1.0 / den;
        const double sk = phi_k * (1.0 - phi_k);  // dPhi/dx = a * Phi(1-Phi)
        const double sn = phi_n * (1.0 - phi_n);
        const double ab = alpha_bar[k];
        f_bar[k] += ab * dalpha_dphik * a * sk;
        f_bar[k + 1] += ab * dalpha_dphin * a * sn;
        a_bar += ab * (dalpha_dphik * fk * sk + dalpha_dphin * fn * sn);
    }
    return a_bar * a;  // rho adjoint, a = exp(rho)
}

void dump_ray_profile(std::ostream& os, const RenderRay& ray, const RayRender& render) {
    os << "# t f alpha T w\n";
    char line[160];
    for (size_t k = 0; k < render.sdf.size(); ++k) {
        std::snprintf(line, sizeof(line), "%.9g %.9g %.9g %.9g %.9g\n", ray.samples[k].t,
                      render.sdf[k], render.alpha[k], render.trans[k], render.weight[k]);
        os << line;
    }
}

}  // namespace snsr
