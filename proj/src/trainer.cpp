#include "snsr/trainer.hpp"

#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "snsr/metrics.hpp"

namespace snsr {

void TrainConfig::validate() const {
    if (iterations < 0) throw std::invalid_argument("train config: iterations must be >= 0");
    if (rays_per_batch < 1 || samples_per_ray < 1)
        throw std::invalid_argument("train config: ray and sample counts must be positive");
    if (!(learning_rate > 0.0) || !(learning_rate_final > 0.0))
        throw std::invalid_argument("train config: learning rates must be positive");
    if (lambda_csr < 0.0) throw std::invalid_argument("train config: lambda_csr must be >= 0");
    if (csr_points < 1 || csr_scales < 1)
        throw std::invalid_argument("train config: csr counts must be positive");
    if (log_every < 1) throw std::invalid_argument("train config: log_every must be >= 1");
    if (checkpoint_every < 1) throw std::invalid_argument("train config: checkpoint_every must be >= 1");
    if (!(near_floor > 0.0)) throw std::invalid_argument("train config: near_floor must be > 0");
    if (!(init_radius > 0.0 && init_radius < 1.0))
        throw std::invalid_argument("train config: init_radius must be in (0, 1)");
}

FieldConfig TrainConfig::field_config(double s_min, double s_max) const {
    FieldConfig fc;
    fc.hash = hash;
    fc.triplane = triplane;
    fc.hidden_width = hidden_width;
    fc.s_min = s_min;
    fc.s_max = s_max;
    fc.validate();
    return fc;
}

// ---------------------------------------------------------------------------
// config text format
// ---------------------------------------------------------------------------

namespace {

struct ConfigField {
    const char* key;
    enum Kind { Int, Double, Uint64, Bool } kind;
    void* ptr;
};

std::vector<ConfigField> config_fields(TrainConfig& c) {
    return {
        {"iterations", ConfigField::Int, &c.iterations},
        {"rays_per_batch", ConfigField::Int, &c.rays_per_batch},
        {"samples_per_ray", ConfigField::Int, &c.samples_per_ray},
        {"learning_rate", ConfigField::Double, &c.learning_rate},
        {"learning_rate_final", ConfigField::Double, &c.learning_rate_final},
        {"lambda_csr", ConfigField::Double, &c.lambda_csr},
        {"csr_points", ConfigField::Int, &c.csr_points},
        {"csr_scales", ConfigField::Int, &c.csr_scales},
        {"seed", ConfigField::Uint64, &c.seed},
        {"threads", ConfigField::Int, &c.threads},
        {"log_every", ConfigField::Int, &c.log_every},
        {"eval_every", ConfigField::Int, &c.eval_every},
        {"checkpoint_every", ConfigField::Int, &c.checkpoint_every},
        {"near_floor", ConfigField::Double, &c.near_floor},
        {"init_radius", ConfigField::Double, &c.init_radius},
        {"hash_levels", ConfigField::Int, &c.hash.levels},
        {"hash_features_per_level", ConfigField::Int, &c.hash.features_per_level},
        {"hash_base_resolution", ConfigField::Int, &c.hash.base_resolution},
        {"hash_finest_resolution", ConfigField::Int, &c.hash.finest_resolution},
        {"hash_table_log2", ConfigField::Int, &c.hash.table_log2},
        {"triplane_spatial_resolution", ConfigField::Int, &c.triplane.spatial_resolution},
        {"triplane_scale_bins", ConfigField::Int, &c.triplane.scale_bins},
        {"triplane_features_per_plane", ConfigField::Int, &c.triplane.features_per_plane},
        {"hidden_width", ConfigField::Int, &c.hidden_width},
        {"freeze_triplane", ConfigField::Bool, &c.freeze_triplane},
        {"constant_scale_override", ConfigField::Double, &c.constant_scale_override},
    };
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

std::string train_config_text(const TrainConfig& config) {
    TrainConfig copy = config;
    std::ostringstream os;
    os << "# training configuration (key = value)\n";
    char buf[64];
    for (const auto& f : config_fields(copy)) {
        os << f.key << " = ";
        switch (f.kind) {
            case ConfigField::Int: os << *static_cast<int*>(f.ptr); break;
            case ConfigField::Uint64: os << *static_cast<uint64_t*>(f.ptr); break;
            case ConfigField::Bool: os << (*static_cast<bool*>(f.ptr) ? "true" : "false"); break;
            case ConfigField::Double:
                std::snprintf(buf, sizeof(buf), "%.17g", *static_cast<double*>(f.ptr));
                os << buf;
                break;
        }
        os << "\n";
    }
    return os.str();
}

void save_train_config(const TrainConfig& config, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("config: cannot open '" + path + "' for writing");
    os << train_config_text(config);
}

TrainConfig load_train_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open '" + path + "'");
    TrainConfig config;
    auto fields = config_fields(config);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        std::string s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config: " + path + ":" + std::to_string(line_no) +
                                     ": expected 'key = value'");
        std::string key = trim(s.substr(0, eq));
        std::string value = trim(s.substr(eq + 1));
        bool found = false;
        for (const auto& f : fields) {
            if (key != f.key) continue;
            found = true;
            try {
                switch (f.kind) {
                    case ConfigField::Int: *static_cast<int*>(f.ptr) = std::stoi(value); break;
                    case ConfigField::Uint64:
                        *static_cast<uint64_t*>(f.ptr) = std::stoull(value);
                        break;
                    case ConfigField::Double: *static_cast<double*>(f.ptr) = std::stod(value); break;
                    case ConfigField::Bool:
                        if (value == "true" || value == "1")
                            *static_cast<bool*>(f.ptr) = true;
                        else if (value == "false" || value == "0")
                            *static_cast<bool*>(f.ptr) = false;
                        else
                            throw std::invalid_argument("bad bool");
                        break;
                }
            } catch (const std::exception&) {
                throw std::runtime_error("config: " + path + ":" + std::to_string(line_no) +
                                         ": cannot parse value for '" + key + "'");
            }
            break;
        }
        if (!found)
            throw std::runtime_error("config: " + path + ":" + std::to_string(line_no) +
                                     ": unknown key '" + key + "'");
    }
    config.validate();
    return config;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

AdamOptimizer::AdamOptimizer(size_t parameter_count, double beta1, double beta2, double epsilon)
    : m_(parameter_count, 0.0), v_(parameter_count, 0.0), beta1_(beta1), beta2_(beta2),
      epsilon_(epsilon) {}

void AdamOptimizer::step(std::vector<NamedTensor>& params, std::vector<NamedTensor>& grads,
                         double lr, const std::vector<uint8_t>* tensor_frozen) {
    if (params.size() != grads.size())
        throw std::invalid_argument("adam: parameter/gradient tensor count mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, double(t_));
    const double bc2 = 1.0 - std::pow(beta2_, double(t_));
    size_t offset = 0;
    for (size_t ti = 0; ti < params.size(); ++ti) {
        auto& p = params[ti].data;
        auto& g = grads[ti].data;
        if (p.size() != g.size()) throw std::invalid_argument("adam: tensor shape mismatch");
        if (offset + p.size() > m_.size()) throw std::invalid_argument("adam: state too small");
        if (tensor_frozen && (*tensor_frozen)[ti]) {
            offset += p.size();
            continue;
        }
        double* m = m_.data() + offset;
        double* v = v_.data() + offset;
        const int64_t n = int64_t(p.size());
#pragma omp parallel for schedule(static) if (n > 16384)
        for (int64_t i = 0; i < n; ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + epsilon_);
        }
        offset += p.size();
    }
}

// ---------------------------------------------------------------------------
// loss + gradient evaluation
// ---------------------------------------------------------------------------

namespace {

struct GradScratch {
    std::vector<FieldGradients> per_thread;
    std::vector<double> rho_partial;
};

LossTerms loss_and_gradients_impl(const ScaleField& field, const RayBundle& bundle,
                                  std::span<const Vec3> csr_points,
                                  std::span<const double> csr_scales, int csr_scale_count,
                                  double lambda, FieldGradients& grads, GradScratch& scratch) {
    const size_t ray_count = bundle.rays.size();
    const double sharpness = field.sharpness();

    RenderOutput render = render_bundle(field, bundle);

    std::vector<Vec3> rendered(ray_count);
    std::vector<double> opacity(ray_count);
    std::vector<uint8_t> masks(ray_count);
    size_t total_samples = 0;
    for (size_t j = 0; j < ray_count; ++j) {
        rendered[j] = render.rays[j].normal;
        opacity[j] = render.rays[j].opacity;
        masks[j] = bundle.rays[j].gt_mask;
        total_samples += render.rays[j].sdf.size();
    }
    std::vector<Vec3> truth(ray_count);
    for (size_t j = 0; j < ray_count; ++j) truth[j] = bundle.rays[j].gt_normal;

    std::vector<Vec3> all_grads(total_samples);
    {
        size_t at = 0;
        for (const auto& rr : render.rays)
            for (const Vec3& g : rr.grad) all_grads[at++] = g;
    }

    NormalLossResult nres = normal_loss(rendered, truth, masks);
    const double lmask = mask_loss(opacity, masks);
    const double leik = eikonal_loss(all_grads);

    double lcsr = 0.0;
    std::vector<double> csr_values;
    const bool use_csr = lambda > 0.0 && !csr_points.empty();
    if (use_csr) lcsr = csr_loss(field, csr_points, csr_scales, csr_scale_count, &csr_values);

    LossTerms terms = total_loss(nres.value, lmask, leik, lcsr, lambda);

    // ----- backward -----
    std::vector<Vec3> n_bars = normal_loss_backward(rendered, truth, masks);
    std::vector<double> m_bars = mask_loss_backward(opacity, masks);
    std::vector<Vec3> eik_bars = eikonal_loss_backward(all_grads);

    const int num_threads = omp_get_max_threads();
    if (int(scratch.per_thread.size()) != num_threads) {
        scratch.per_thread.clear();
        for (int t = 0; t < num_threads; ++t) scratch.per_thread.push_back(field.make_gradients());
    }
    for (auto& g : scratch.per_thread) g.zero();
    scratch.rho_partial.assign(ray_count, 0.0);

    std::vector<size_t> sample_offset(ray_count, 0);
    {
        size_t at = 0;
        for (size_t j = 0; j < ray_count; ++j) {
            sample_offset[j] = at;
            at += render.rays[j].sdf.size();
        }
    }

#pragma omp parallel
    {
        FieldWorkspace ws;
        FieldGradients& tg = scratch.per_thread[omp_get_thread_num()];
        std::vector<double> f_bar;
        std::vector<Vec3> g_bar;
#pragma omp for schedule(static)
        for (int64_t j = 0; j < int64_t(ray_count); ++j) {
            const auto& rr = render.rays[j];
            const size_t m = rr.sdf.size();
            if (m == 0) continue;
            f_bar.assign(m, 0.0);
            g_bar.assign(m, Vec3{});
            for (size_t k = 0; k < m; ++k) g_bar[k] = eik_bars[sample_offset[j] + k];
            scratch.rho_partial[j] =
                composite_backward(rr, n_bars[j], m_bars[j], sharpness, f_bar, g_bar);
            const auto& samples = bundle.rays[j].samples;
            for (size_t k = 0; k < m; ++k)
                field.backward(samples[k].p, samples[k].s, f_bar[k], g_bar[k], ws, tg);
        }
    }

    if (use_csr) {
        std::vector<double> v_bars = csr_loss_backward(csr_values, int(csr_points.size()),
                                                       csr_scale_count);
        const int64_t K = int64_t(csr_points.size());
#pragma omp parallel
        {
            FieldWorkspace ws;
            FieldGradients& tg = scratch.per_thread[omp_get_thread_num()];
#pragma omp for schedule(static)
            for (int64_t k = 0; k < K; ++k) {
                for (int i = 0; i < csr_scale_count; ++i) {
                    const size_t at = size_t(k) * csr_scale_count + i;
                    field.backward(csr_points[k], csr_scales[at], lambda * v_bars[at], Vec3{}, ws,
                                   tg);
                }
            }
        }
    }

    for (auto& tg : scratch.per_thread) grads.add(tg);
    double rho_sum = 0.0;
    for (double r : scratch.rho_partial) rho_sum += r;
    grads.rho += rho_sum;
    return terms;
}

}  // namespace

LossTerms compute_loss_and_gradients(const ScaleField& field, const RayBundle& bundle,
                                     std::span<const Vec3> csr_points,
                                     std::span<const double> csr_scales, int csr_scale_count,
                                     double lambda, FieldGradients& grads) {
    GradScratch scratch;
    grads.zero();
    return loss_and_gradients_impl(field, bundle, csr_points, csr_scales, csr_scale_count, lambda,
                                   grads, scratch);
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

namespace {

struct PixelPicker {
    std::vector<size_t> view_index;  // train view indices
    std::vector<uint64_t> prefix;    // cumulative pixel counts
    uint64_t total = 0;

    explicit PixelPicker(const SceneDataset& dataset) {
        for (size_t v = 0; v < dataset.views.size(); ++v) {
            if (dataset.views[v].held_out) continue;
            view_index.push_back(v);
            total += uint64_t(dataset.views[v].camera.width) * dataset.views[v].camera.height;
            prefix.push_back(total);
        }
        if (total == 0) throw std::invalid_argument("train: dataset has no training pixels");
    }

    // (view, row, col) for a global pixel ordinal
    std::tuple<size_t, int, int> locate(uint64_t ordinal, const SceneDataset& dataset) const {
        size_t lo = 0;
        while (prefix[lo] <= ordinal) ++lo;
        uint64_t base = lo == 0 ? 0 : prefix[lo - 1];
        uint64_t local = ordinal - base;
        const auto& view = dataset.views[view_index[lo]];
        return {view_index[lo], int(local / view.camera.width), int(local % view.camera.width)};
    }
};

void check_gradient_health(FieldGradients& grads, bool full) {
    for (auto& t : grads.tensors()) {
        if (!full && t.data.size() > 4096) continue;
        for (double v : t.data)
            if (!std::isfinite(v))
                throw std::runtime_error("parameter gradients: non-finite entry in tensor '" +
                                         t.name + "'");
    }
}

}  // namespace

void write_train_log_csv(std::ostream& os, const std::vector<TrainLogRow>& log) {
    os << "iteration,normal,mask,eikonal,csr,total,wallclock_s,mae_deg\n";
    char buf[256];
    for (const auto& row : log) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.3f,", row.iteration,
                      row.losses.normal, row.losses.mask, row.losses.eikonal, row.losses.csr,
                      row.losses.total, row.wallclock_s);
        os << buf;
        if (std::isfinite(row.mae_deg)) {
            std::snprintf(buf, sizeof(buf), "%.6f", row.mae_deg);
            os << buf;
        }
        os << "\n";
    }
}

TrainResult train(const SceneDataset& dataset, const TrainConfig& config,
                  const std::string& out_dir) {
    config.validate();
    dataset.validate();
    if (!(dataset.s_max > dataset.s_min) || !(dataset.s_min > 0.0))
        throw std::invalid_argument("train: dataset scale range not computed (call compute_scale_range)");
    if (config.threads > 0) omp_set_num_threads(config.threads);

    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

    ScaleField field(config.field_config(dataset.s_min, dataset.s_max));
    field.geometric_init(config.init_radius, config.seed);

    PixelPicker picker(dataset);
    Pcg32 rng(config.seed, /*stream=*/1);

    FieldGradients grads = field.make_gradients();
    GradScratch scratch;

    TrainResult result{std::move(field), {}, {}};
    ScaleField& f = result.field;

    // parameter spans must reference the field at its final address: the
    // scalar members (output bias, sharpness) live inside the object itself
    auto params = f.parameter_tensors();
    size_t total_params = 0;
    for (auto& t : params) total_params += t.data.size();
    AdamOptimizer adam(total_params);

    std::vector<uint8_t> frozen(params.size(), 0);
    if (config.freeze_triplane)
        for (size_t i = 0; i < params.size(); ++i)
            if (params[i].name.rfind("plane_", 0) == 0) frozen[i] = 1;

    const auto t_start = std::chrono::steady_clock::now();
    auto elapsed = [&t_start] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    };

    std::string latest_checkpoint;
    const bool use_csr = config.lambda_csr > 0.0;

    for (int it = 0; it < config.iterations; ++it) {
        // cosine learning-rate decay
        double progress = config.iterations > 1 ? double(it) / (config.iterations - 1) : 0.0;
        double lr = config.learning_rate_final +
                    0.5 * (config.learning_rate - config.learning_rate_final) *
                        (1.0 + std::cos(M_PI * progress));

        // assemble the iteration's ray bundle
        RayBundle bundle;
        bundle.rays.resize(config.rays_per_batch);
        std::vector<const ConeSample*> flat_samples;
        for (int j = 0; j < config.rays_per_batch; ++j) {
            uint64_t ordinal = picker.total <= 0xFFFFFFFFull
                                   ? rng.next_below(uint32_t(picker.total))
                                   : rng.next_u64() % picker.total;
            auto [v, row, col] = picker.locate(ordinal, dataset);
            const View& view = dataset.views[v];
            RenderRay& ray = bundle.rays[j];
            ray.gt_mask = view.mask_at(row, col) ? 1 : 0;
            ray.gt_normal = ray.gt_mask ? normalized(view.normal_at(row, col)) : Vec3{};
            Cone cone = cast_cone(view.camera, row, col);
            auto hit = intersect_cube(cone.origin, cone.axis, 1.0);
            if (!hit) continue;
            double near = std::fmax(hit->first, config.near_floor);
            double far = hit->second;
            if (!(near < far)) continue;
            ray.samples = sample_cone(cone, near, far, config.samples_per_ray,
                                      view.camera.focal_world(), rng);
            if (config.constant_scale_override >= 0.0)
                for (auto& s : ray.samples) s.s = config.constant_scale_override;
        }
        for (const auto& ray : bundle.rays)
            for (const auto& s : ray.samples) flat_samples.push_back(&s);

        // cross-scale regularization batch: points drawn from this iteration's
        // samples, scales stratified-uniform over the training range (the
        // stratification keeps every part of the scale axis supervised every
        // iteration; the loss is permutation-invariant over a point's scales)
        std::vector<Vec3> csr_pts;
        std::vector<double> csr_scales;
        if (use_csr && !flat_samples.empty()) {
            const int K = std::min<int>(config.csr_points, int(flat_samples.size()));
            const int S = config.csr_scales;
            csr_pts.resize(K);
            csr_scales.resize(size_t(K) * S);
            const double stride = (dataset.s_max - dataset.s_min) / S;
            for (int k = 0; k < K; ++k) {
                csr_pts[k] = flat_samples[rng.next_below(uint32_t(flat_samples.size()))]->p;
                for (int i = 0; i < S; ++i)
                    csr_scales[size_t(k) * S + i] =
                        dataset.s_min + (i + rng.next_double()) * stride;
            }
        }

        grads.zero();
        LossTerms terms;
        try {
            terms = loss_and_gradients_impl(f, bundle, csr_pts, csr_scales, config.csr_scales,
                                            config.lambda_csr, grads, scratch);
        } catch (const std::exception& e) {
            throw std::runtime_error("train: aborted at iteration " + std::to_string(it + 1) + ": " +
                                     e.what() +
                                     (latest_checkpoint.empty()
                                          ? std::string(" (no checkpoint written yet)")
                                          : " (last good checkpoint: " + latest_checkpoint + ")"));
        }
        if (!std::isfinite(terms.total))
            throw std::runtime_error(
                "train: total loss diverged at iteration " + std::to_string(it + 1) +
                (latest_checkpoint.empty() ? std::string(" (no checkpoint written yet)")
                                           : " (last good checkpoint: " + latest_checkpoint + ")"));
        check_gradient_health(grads, (it % 100) == 0);

        auto grad_tensors = grads.tensors();
        adam.step(params, grad_tensors, lr, &frozen);

        const bool last = it + 1 == config.iterations;
        if ((it + 1) % config.log_every == 0 || last) {
            TrainLogRow row;
            row.iteration = it + 1;
            row.losses = terms;
            row.wallclock_s = elapsed();
            if (config.eval_every > 0 && ((it + 1) % config.eval_every == 0 || last))
                row.mae_deg = held_out_mae(f, dataset, config.samples_per_ray, config.near_floor);
            result.log.push_back(row);
        }
        if (!out_dir.empty() && ((it + 1) % config.checkpoint_every == 0 || last)) {
            latest_checkpoint = out_dir + "/checkpoint_latest.snsr";
            f.save_checkpoint(latest_checkpoint);
        }
    }

    if (!out_dir.empty()) {
        result.checkpoint_path = out_dir + "/checkpoint_final.snsr";
        f.save_checkpoint(result.checkpoint_path);
        std::ofstream os(out_dir + "/train_log.csv");
        write_train_log_csv(os, result.log);
        save_train_config(config, out_dir + "/train_config.txt");
    }
    return result;
}

}  // namespace snsr
