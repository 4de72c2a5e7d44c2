#include "snsr/field.hpp"

#include <omp.h>

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace snsr {

static_assert(std::endian::native == std::endian::little,
              "checkpoint layout assumes a little-endian host");

namespace {

// instant-ngp spatial hashing primes; first axis multiplies by 1
constexpr uint32_t kHashPrimeY = 2654435761u;
constexpr uint32_t kHashPrimeZ = 805459861u;

inline double clamp01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

}  // namespace

void FieldConfig::validate() const {
    if (hash.levels < 1) throw std::invalid_argument("field config: hash levels must be >= 1");
    if (hash.features_per_level < 1)
        throw std::invalid_argument("field config: hash features_per_level must be >= 1");
    if (hash.base_resolution < 1 || hash.finest_resolution < hash.base_resolution)
        throw std::invalid_argument("field config: need 1 <= base_resolution <= finest_resolution");
    if (hash.levels > 1 && hash.finest_resolution == hash.base_resolution)
        throw std::invalid_argument("field config: multi-level grid needs finest > base resolution");
    if (hash.table_log2 < 1 || hash.table_log2 > 30)
        throw std::invalid_argument("field config: table_log2 out of range");
    if (triplane.spatial_resolution < 2 || triplane.scale_bins < 2)
        throw std::invalid_argument("field config: triplane resolution must be at least 2x2");
    if (triplane.features_per_plane < 1)
        throw std::invalid_argument("field config: triplane features_per_plane must be >= 1");
    if (hidden_width < 1) throw std::invalid_argument("field config: hidden_width must be >= 1");
    if (!(s_min > 0.0) || !(s_max > s_min))
        throw std::invalid_argument("field config: need 0 < s_min < s_max");
}

void FieldGradients::zero() {
    for (auto& t : hash_tables) std::fill(t.begin(), t.end(), 0.0);
    for (auto& p : planes) std::fill(p.begin(), p.end(), 0.0);
    std::fill(w1.begin(), w1.end(), 0.0);
    std::fill(b1.begin(), b1.end(), 0.0);
    std::fill(w2.begin(), w2.end(), 0.0);
    b2 = 0.0;
    rho = 0.0;
}

void FieldGradients::add(const FieldGradients& other) {
    for (size_t l = 0; l < hash_tables.size(); ++l)
        for (size_t i = 0; i < hash_tables[l].size(); ++i) hash_tables[l][i] += other.hash_tables[l][i];
    for (int c = 0; c < 3; ++c)
        for (size_t i = 0; i < planes[c].size(); ++i) planes[c][i] += other.planes[c][i];
    for (size_t i = 0; i < w1.size(); ++i) w1[i] += other.w1[i];
    for (size_t i = 0; i < b1.size(); ++i) b1[i] += other.b1[i];
    for (size_t i = 0; i < w2.size(); ++i) w2[i] += other.w2[i];
    b2 += other.b2;
    rho += other.rho;
}

namespace {

template <class Store>
std::vector<NamedTensor> tensor_view(Store& s) {
    std::vector<NamedTensor> out;
    char name[32];
    for (size_t l = 0; l < s.hash_tables.size(); ++l) {
        std::snprintf(name, sizeof(name), "hash_level_%02zu", l);
        out.push_back({name, std::span<double>(s.hash_tables[l])});
    }
    const char* plane_names[3] = {"plane_xs", "plane_ys", "plane_zs"};
    for (int c = 0; c < 3; ++c) out.push_back({plane_names[c], std::span<double>(s.planes[c])});
    out.push_back({"mlp_w1", std::span<double>(s.w1)});
    out.push_back({"mlp_b1", std::span<double>(s.b1)});
    out.push_back({"mlp_w2", std::span<double>(s.w2)});
    out.push_back({"mlp_b2", std::span<double>(&s.b2, 1)});
    out.push_back({"sharpness_rho", std::span<double>(&s.rho, 1)});
    return out;
}

}  // namespace

std::vector<NamedTensor> FieldGradients::tensors() { return tensor_view(*this); }
std::vector<NamedTensor> ScaleField::parameter_tensors() { return tensor_view(params_); }

ScaleField::ScaleField(FieldConfig config) : config_(config) {
    config_.validate();
    const auto& hc = config_.hash;
    level_res_.resize(hc.levels);
    level_entries_.resize(hc.levels);
    level_dense_.resize(hc.levels);
    double growth = hc.levels > 1
                        ? std::exp(std::log(double(hc.finest_resolution) / hc.base_resolution) /
                                   (hc.levels - 1))
                        : 1.0;
    uint32_t budget = 1u << hc.table_log2;
    for (int l = 0; l < hc.levels; ++l) {
        int res = int(std::lround(hc.base_resolution * std::pow(growth, l)));
        level_res_[l] = res;
        if (l > 0 && level_res_[l] <= level_res_[l - 1]) level_res_[l] = level_res_[l - 1] + 1;
        uint64_t dense = uint64_t(level_res_[l] + 1) * (level_res_[l] + 1) * (level_res_[l] + 1);
        level_dense_[l] = dense <= budget;
        level_entries_[l] = level_dense_[l] ? uint32_t(dense) : budget;
    }
    params_.hash_tables.resize(hc.levels);
    for (int l = 0; l < hc.levels; ++l)
        params_.hash_tables[l].assign(size_t(level_entries_[l]) * hc.features_per_level, 0.0);
    size_t plane_size = size_t(config_.triplane.spatial_resolution) * config_.triplane.scale_bins *
                        config_.triplane.features_per_plane;
    for (auto& p : params_.planes) p.assign(plane_size, 0.0);
    params_.w1.assign(size_t(config_.hidden_width) * config_.feature_dim(), 0.0);
    params_.b1.assign(config_.hidden_width, 0.0);
    params_.w2.assign(config_.hidden_width, 0.0);
}

ScaleField::ScaleField(const ScaleField& other)
    : config_(other.config_),
      params_(other.params_),
      level_res_(other.level_res_),
      level_entries_(other.level_entries_),
      level_dense_(other.level_dense_) {
    domain_clamps_.store(other.domain_clamps_.load(std::memory_order_relaxed));
    scale_clamps_.store(other.scale_clamps_.load(std::memory_order_relaxed));
}

ScaleField::ScaleField(ScaleField&& other) noexcept
    : config_(std::move(other.config_)),
      params_(std::move(other.params_)),
      level_res_(std::move(other.level_res_)),
      level_entries_(std::move(other.level_entries_)),
      level_dense_(std::move(other.level_dense_)) {
    domain_clamps_.store(other.domain_clamps_.load(std::memory_order_relaxed));
    scale_clamps_.store(other.scale_clamps_.load(std::memory_order_relaxed));
}

ScaleField& ScaleField::operator=(const ScaleField& other) {
    if (this != &other) *this = ScaleField(other);
    return *this;
}

ScaleField& ScaleField::operator=(ScaleField&& other) noexcept {
    config_ = std::move(other.config_);
    params_ = std::move(other.params_);
    level_res_ = std::move(other.level_res_);
    level_entries_ = std::move(other.level_entries_);
    level_dense_ = std::move(other.level_dense_);
    domain_clamps_.store(other.domain_clamps_.load(std::memory_order_relaxed));
    scale_clamps_.store(other.scale_clamps_.load(std::memory_order_relaxed));
    return *this;
}

FieldGradients ScaleField::make_gradients() const {
    FieldGradients g;
    g.hash_tables.resize(params_.hash_tables.size());
    for (size_t l = 0; l < params_.hash_tables.size(); ++l)
        g.hash_tables[l].assign(params_.hash_tables[l].size(), 0.0);
    for (int c = 0; c < 3; ++c) g.planes[c].assign(params_.planes[c].size(), 0.0);
    g.w1.assign(params_.w1.size(), 0.0);
    g.b1.assign(params_.b1.size(), 0.0);
    g.w2.assign(params_.w2.size(), 0.0);
    return g;
}

void ScaleField::ensure_workspace(FieldWorkspace& ws) const {
    size_t dim = config_.feature_dim();
    size_t hidden = config_.hidden_width;
    size_t corners = size_t(config_.hash.levels) * 8;
    if (ws.feat.size() != dim) {
        ws.feat.resize(dim);
        ws.jac.resize(dim * 3);
        ws.r.resize(dim);
        ws.ebar.resize(dim);
        ws.rbar.resize(dim);
    }
    if (ws.z.size() != hidden) {
        ws.z.resize(hidden);
        ws.h.resize(hidden);
        ws.zbar.resize(hidden);
        ws.u.resize(hidden);
    }
    if (ws.corner_idx.size() != corners) {
        ws.corner_idx.resize(corners);
        ws.corner_w.resize(corners);
        ws.corner_dw.resize(corners * 3);
    }
}

void ScaleField::encode(const Vec3& p, double s, FieldWorkspace& ws, bool with_tangents) const {
    const int dim = config_.feature_dim();
    const int fpl = config_.hash.features_per_level;
    std::fill(ws.feat.begin(), ws.feat.end(), 0.0);
    if (with_tangents) std::fill(ws.jac.begin(), ws.jac.end(), 0.0);

    // domain clamp; clamped axes get zero spatial derivative
    Vec3 pc = p;
    bool live[3] = {true, true, true};
    bool clamped = false;
    for (int d = 0; d < 3; ++d) {
        if (pc[d] < -1.0 || pc[d] > 1.0) {
            pc[d] = pc[d] < -1.0 ? -1.0 : 1.0;
            live[d] = false;
            clamped = true;
        }
    }
    if (clamped) domain_clamps_.fetch_add(1, std::memory_order_relaxed);

    ws.feat[0] = pc.x;
    ws.feat[1] = pc.y;
    ws.feat[2] = pc.z;
    if (with_tangents)
        for (int d = 0; d < 3; ++d) ws.jac[d * 3 + d] = live[d] ? 1.0 : 0.0;

    // multi-resolution hash grid, trilinear per level
    int off = 3;
    for (int l = 0; l < config_.hash.levels; ++l) {
        const int res = level_res_[l];
        const uint32_t entries = level_entries_[l];
        const bool dense = level_dense_[l];
        const double* table = params_.hash_tables[l].data();
        int i0[3];
        double w[3], du[3];
        for (int d = 0; d < 3; ++d) {
            double uu = (pc[d] + 1.0) * 0.5 * res;
            int i = int(uu);
            if (i > res - 1) i = res - 1;
            if (i < 0) i = 0;
            i0[d] = i;
            w[d] = uu - i;
            du[d] = live[d] ? 0.5 * res : 0.0;
        }
        for (int k = 0; k < 8; ++k) {
            const int bx = k & 1, by = (k >> 1) & 1, bz = (k >> 2) & 1;
            const uint32_t ix = uint32_t(i0[0] + bx), iy = uint32_t(i0[1] + by),
                           iz = uint32_t(i0[2] + bz);
            uint32_t idx;
            if (dense)
                idx = (ix * uint32_t(res + 1) + iy) * uint32_t(res + 1) + iz;
            else
                idx = (ix ^ (iy * kHashPrimeY) ^ (iz * kHashPrimeZ)) & (entries - 1);
            const double wx = bx ? w[0] : 1.0 - w[0];
            const double wy = by ? w[1] : 1.0 - w[1];
            const double wz = bz ? w[2] : 1.0 - w[2];
            const double weight = wx * wy * wz;
            const size_t slot = size_t(l) * 8 + k;
            ws.corner_idx[slot] = idx;
            ws.corner_w[slot] = weight;
            const double* entry = table + size_t(idx) * fpl;
            if (with_tangents) {
                const double sx = (bx ? 1.0 : -1.0) * du[0] * wy * wz;
                const double sy = (by ? 1.0 : -1.0) * du[1] * wx * wz;
                const double sz = (bz ? 1.0 : -1.0) * du[2] * wx * wy;
                ws.corner_dw[slot * 3 + 0] = sx;
                ws.corner_dw[slot * 3 + 1] = sy;
                ws.corner_dw[slot * 3 + 2] = sz;
                for (int c = 0; c < fpl; ++c) {
                    const double v = entry[c];
                    ws.feat[off + c] += weight * v;
                    double* row = &ws.jac[(off + c) * 3];
                    row[0] += sx * v;
                    row[1] += sy * v;
                    row[2] += sz * v;
                }
            } else {
                for (int c = 0; c < fpl; ++c) ws.feat[off + c] += weight * entry[c];
            }
        }
        off += fpl;
    }

    // scale-triplane, bilinear over (coordinate, log-mapped scale)
    const auto& tc = config_.triplane;
    double sc = s;
    if (sc < config_.s_min || sc > config_.s_max) {
        sc = sc < config_.s_min ? config_.s_min : config_.s_max;
        scale_clamps_.fetch_add(1, std::memory_order_relaxed);
    }
    const double srange = std::log(config_.s_max / config_.s_min);
    double v = std::log(sc / config_.s_min) / srange * (tc.scale_bins - 1);
    int j0 = int(v);
    if (j0 > tc.scale_bins - 2) j0 = tc.scale_bins - 2;
    if (j0 < 0) j0 = 0;
    const double wv = v - j0;
    const int fpp = tc.features_per_plane;
    for (int c = 0; c < 3; ++c) {
        const double* plane = params_.planes[c].data();
        double uu = (pc[c] + 1.0) * 0.5 * (tc.spatial_resolution - 1);
        int i0 = int(uu);
        if (i0 > tc.spatial_resolution - 2) i0 = tc.spatial_resolution - 2;
        if (i0 < 0) i0 = 0;
        const double wu = uu - i0;
        const double du = live[c] ? 0.5 * (tc.spatial_resolution - 1) : 0.0;
        for (int k = 0; k < 4; ++k) {
            const int di = k & 1, dj = k >> 1;
            const uint32_t idx = uint32_t(i0 + di) * tc.scale_bins + uint32_t(j0 + dj);
            const double wj = dj ? wv : 1.0 - wv;
            const double weight = (di ? wu : 1.0 - wu) * wj;
            const double dweight = (di ? 1.0 : -1.0) * du * wj;
            ws.tri_idx[c][k] = idx;
            ws.tri_w[c][k] = weight;
            ws.tri_dw[c][k] = dweight;
            const double* entry = plane + size_t(idx) * fpp;
            if (with_tangents) {
                for (int f = 0; f < fpp; ++f) {
                    ws.feat[off + f] += weight * entry[f];
                    ws.jac[(off + f) * 3 + c] += dweight * entry[f];
                }
            } else {
                for (int f = 0; f < fpp; ++f) ws.feat[off + f] += weight * entry[f];
            }
        }
        off += fpp;
    }
    (void)dim;
}

double ScaleField::forward(const Vec3& p, double s, FieldWorkspace& ws, bool with_gradient) const {
    ensure_workspace(ws);
    encode(p, s, ws, with_gradient);
    const int dim = config_.feature_dim();
    const int hidden = config_.hidden_width;
    const double* w1 = params_.w1.data();
    const double* feat = ws.feat.data();

    double f = params_.b2;
    for (int i = 0; i < hidden; ++i) {
        const double* row = w1 + size_t(i) * dim;
        double z = params_.b1[i];
        for (int j = 0; j < dim; ++j) z += row[j] * feat[j];
        ws.z[i] = z;
        const double h = z > 0.0 ? z : 0.0;
        ws.h[i] = h;
        f += params_.w2[i] * h;
    }
    ws.f = f;
    if (!std::isfinite(f))
        throw std::runtime_error("field forward produced a non-finite value at p=(" +
                                 std::to_string(p.x) + "," + std::to_string(p.y) + "," +
                                 std::to_string(p.z) + "), s=" + std::to_string(s));

    if (with_gradient) {
        double* r = ws.r.data();
        std::fill(ws.r.begin(), ws.r.end(), 0.0);
        for (int i = 0; i < hidden; ++i) {
            if (ws.z[i] <= 0.0) continue;
            const double coef = params_.w2[i];
            const double* row = w1 + size_t(i) * dim;
            for (int j = 0; j < dim; ++j) r[j] += coef * row[j];
        }
        double gx = 0.0, gy = 0.0, gz = 0.0;
        const double* jac = ws.jac.data();
        for (int j = 0; j < dim; ++j) {
            gx += r[j] * jac[j * 3 + 0];
            gy += r[j] * jac[j * 3 + 1];
            gz += r[j] * jac[j * 3 + 2];
        }
        ws.grad = {gx, gy, gz};
    }
    return f;
}

void ScaleField::backward(const Vec3& p, double s, double f_bar, const Vec3& g_bar,
                          FieldWorkspace& ws, FieldGradients& grads) const {
    const bool grad_path = g_bar.x != 0.0 || g_bar.y != 0.0 || g_bar.z != 0.0;
    forward(p, s, ws, grad_path);
    const int dim = config_.feature_dim();
    const int hidden = config_.hidden_width;
    const int fpl = config_.hash.features_per_level;
    const int fpp = config_.triplane.features_per_plane;
    const double* w1 = params_.w1.data();
    const double* feat = ws.feat.data();
    double* ebar = ws.ebar.data();
    double* rbar = ws.rbar.data();

    // value path: f = w2 . relu(W1 e + b1) + b2
    grads.b2 += f_bar;
    for (int i = 0; i < hidden; ++i) {
        grads.w2[i] += f_bar * ws.h[i];
        ws.zbar[i] = ws.z[i] > 0.0 ? f_bar * params_.w2[i] : 0.0;
    }

    // gradient path: grad f = J^T W1^T (mask . w2)
    if (grad_path) {
        const double* jac = ws.jac.data();
        for (int j = 0; j < dim; ++j)
            rbar[j] = jac[j * 3 + 0] * g_bar.x + jac[j * 3 + 1] * g_bar.y + jac[j * 3 + 2] * g_bar.z;
    }

    std::fill(ws.ebar.begin(), ws.ebar.end(), 0.0);
    for (int i = 0; i < hidden; ++i) {
        const double zb = ws.zbar[i];
        const double* row = w1 + size_t(i) * dim;
        double* grow = grads.w1.data() + size_t(i) * dim;
        if (grad_path && ws.z[i] > 0.0) {
            const double mw2 = params_.w2[i];
            double ui = 0.0;
            for (int j = 0; j < dim; ++j) {
                ui += row[j] * rbar[j];
                grow[j] += zb * feat[j] + mw2 * rbar[j];
                ebar[j] += zb * row[j];
            }
            grads.w2[i] += ui;
            grads.b1[i] += zb;
        } else if (zb != 0.0) {
            for (int j = 0; j < dim; ++j) {
                grow[j] += zb * feat[j];
                ebar[j] += zb * row[j];
            }
            grads.b1[i] += zb;
        }
    }

    // encoder backward; feature j also carries the Jacobian adjoint row r_j * g_bar
    const double* r = ws.r.data();
    int off = 3;
    for (int l = 0; l < config_.hash.levels; ++l) {
        double* table_grad = grads.hash_tables[l].data();
        for (int k = 0; k < 8; ++k) {
            const size_t slot = size_t(l) * 8 + k;
            const double w = ws.corner_w[slot];
            double gdot = 0.0;
            if (grad_path) {
                const double* dw = &ws.corner_dw[slot * 3];
                gdot = dw[0] * g_bar.x + dw[1] * g_bar.y + dw[2] * g_bar.z;
            }
            double* entry = table_grad + size_t(ws.corner_idx[slot]) * fpl;
            for (int c = 0; c < fpl; ++c)
                entry[c] += ebar[off + c] * w + (grad_path ? r[off + c] * gdot : 0.0);
        }
        off += fpl;
    }
    for (int c = 0; c < 3; ++c) {
        double* plane_grad = grads.planes[c].data();
        const double gaxis = g_bar[c];
        for (int k = 0; k < 4; ++k) {
            double* entry = plane_grad + size_t(ws.tri_idx[c][k]) * fpp;
            const double w = ws.tri_w[c][k];
            const double gdot = grad_path ? ws.tri_dw[c][k] * gaxis : 0.0;
            for (int f = 0; f < fpp; ++f) entry[f] += ebar[off + f] * w + r[off + f] * gdot;
        }
        off += fpp;
    }
}

double ScaleField::sdf(const Vec3& p, double s) const {
    FieldWorkspace ws;
    return forward(p, s, ws, false);
}

Vec3 ScaleField::spatial_gradient(const Vec3& p, double s) const {
    FieldWorkspace ws;
    forward(p, s, ws, true);
    return ws.grad;
}

void ScaleField::eval_batch(std::span<const Vec3> points, std::span<const double> scales,
                            std::span<double> f_out, Vec3* g_out) const {
    if (points.size() != scales.size() || points.size() != f_out.size())
        throw std::invalid_argument("eval_batch: size mismatch");
    const int64_t n = int64_t(points.size());
    bool failed = false;
    std::string what;
#pragma omp parallel
    {
        FieldWorkspace ws;
#pragma omp for schedule(static)
        for (int64_t i = 0; i < n; ++i) {
            try {
                f_out[i] = forward(points[i], scales[i], ws, g_out != nullptr);
                if (g_out) g_out[i] = ws.grad;
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
}

std::vector<double> ScaleField::hash_lookup(const Vec3& p) const {
    FieldWorkspace ws;
    ensure_workspace(ws);
    encode(p, /*s=*/config_.s_min, ws, false);
    return {ws.feat.begin() + 3, ws.feat.begin() + 3 + config_.hash_dim()};
}

std::vector<double> ScaleField::triplane_lookup(const Vec3& p, double s) const {
    FieldWorkspace ws;
    ensure_workspace(ws);
    encode(p, s, ws, false);
    return {ws.feat.begin() + 3 + config_.hash_dim(), ws.feat.end()};
}

double ScaleField::sharpness() const { return std::exp(params_.rho); }

void ScaleField::reset_clamp_counts() {
    domain_clamps_.store(0, std::memory_order_relaxed);
    scale_clamps_.store(0, std::memory_order_relaxed);
}

namespace {

// Tunes the position rows and output weights so that h(u) = sum_i w2_i
// relu(a_i . u) is close to 1 with gradient close to u over the unit sphere.
// Hidden biases stay zero, which keeps the net positively homogeneous:
// f(p) = |p| h(p/|p|) - r0 is then exact in the radial direction and the fit
// only has to flatten the angular profile. A plain half-space construction
// leaves ~8 degrees of radial wobble in the gradient; this brings it within
// the init contract.
void fit_sphere_decoder(std::vector<double>& a, std::vector<double>& w2, int hidden, Pcg32& rng) {
    const int points = 4096;
    std::vector<Vec3> dirs(points);
    for (int i = 0; i < points; ++i) {
        double z = rng.uniform(-1.0, 1.0), az = rng.uniform(0.0, 2.0 * M_PI);
        double rad = std::sqrt(std::fmax(0.0, 1.0 - z * z));
        dirs[i] = {rad * std::cos(az), rad * std::sin(az), z};
    }

    const size_t n = a.size() + w2.size();
    std::vector<double> grad(n), m(n, 0.0), v(n, 0.0);
    const double lr0 = 5e-3, lr1 = 2e-4, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    const int steps = 1200;

    for (int step = 1; step <= steps; ++step) {
        const double lr =
            lr1 + 0.5 * (lr0 - lr1) * (1.0 + std::cos(M_PI * double(step - 1) / (steps - 1)));
        std::fill(grad.begin(), grad.end(), 0.0);
        double* ga = grad.data();
        double* gw2 = ga + a.size();
        for (const Vec3& u : dirs) {
            double h = 0.0;
            Vec3 g{};
            for (int i = 0; i < hidden; ++i) {
                double z = a[i * 3] * u.x + a[i * 3 + 1] * u.y + a[i * 3 + 2] * u.z;
                if (z <= 0.0) continue;
                h += w2[i] * z;
                g += w2[i] * Vec3{a[i * 3], a[i * 3 + 1], a[i * 3 + 2]};
            }
            const double h_bar = 2.0 * (h - 1.0) / points;
            const Vec3 g_bar = (g - u) * (2.0 / points);
            for (int i = 0; i < hidden; ++i) {
                double z = a[i * 3] * u.x + a[i * 3 + 1] * u.y + a[i * 3 + 2] * u.z;
                if (z <= 0.0) continue;
                gw2[i] += h_bar * z + g_bar.x * a[i * 3] + g_bar.y * a[i * 3 + 1] +
                          g_bar.z * a[i * 3 + 2];
                const double zb = h_bar * w2[i];
                ga[i * 3] += zb * u.x + g_bar.x * w2[i];
                ga[i * 3 + 1] += zb * u.y + g_bar.y * w2[i];
                ga[i * 3 + 2] += zb * u.z + g_bar.z * w2[i];
            }
        }
        const double bc1 = 1.0 - std::pow(beta1, step), bc2 = 1.0 - std::pow(beta2, step);
        for (size_t i = 0; i < n; ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
            double* param = i < a.size() ? &a[i] : &w2[i - a.size()];
            *param -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
        }
    }
}

}  // namespace

void ScaleField::geometric_init(double r0, uint64_t seed) {
    if (!(r0 > 0.0 && r0 < 1.0)) throw std::invalid_argument("geometric_init: need 0 < r0 < 1");
    Pcg32 rng(seed, 0x9e3779b97f4a7c15ULL);
    for (auto& table : params_.hash_tables)
        for (double& v : table) v = rng.uniform(-1e-4, 1e-4);
    for (auto& plane : params_.planes) std::fill(plane.begin(), plane.end(), 0.0);

    const int dim = config_.feature_dim();
    const int hidden = config_.hidden_width;
    // warm start: hidden unit i responds to the half-space d_i . p > 0; with
    // directions spread over the sphere and w2 = 4/H the sum approximates |p|
    // (E[relu(d.u)] = 1/4)
    std::vector<double> a(size_t(hidden) * 3), w2(hidden, 4.0 / hidden);
    const double golden_angle = M_PI * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < hidden; ++i) {
        double zc = 1.0 - 2.0 * (i + 0.5) / hidden;
        double rad = std::sqrt(std::fmax(0.0, 1.0 - zc * zc));
        double phi = golden_angle * i;
        a[i * 3 + 0] = rad * std::cos(phi);
        a[i * 3 + 1] = rad * std::sin(phi);
        a[i * 3 + 2] = zc;
    }
    fit_sphere_decoder(a, w2, hidden, rng);

    for (int i = 0; i < hidden; ++i) {
        double* row = params_.w1.data() + size_t(i) * dim;
        row[0] = a[i * 3 + 0];
        row[1] = a[i * 3 + 1];
        row[2] = a[i * 3 + 2];
        // encoding columns start small so the init stays spherical but the
        // grids still receive gradient from step one
        for (int j = 3; j < dim; ++j) row[j] = rng.uniform(-0.01, 0.01);
        params_.b1[i] = 0.0;
        params_.w2[i] = w2[i];
    }
    params_.b2 = -r0;
    params_.rho = std::log(4.0 / 0.3);  // sigmoid transition width ~4/a = 0.3
}

// ---------------------------------------------------------------------------
// Checkpoint container. Byte layout (all little-endian):
//   bytes 0..7   magic "SNSRCKP1"
//   u32          format version (1)
//   i32 x 9      hash levels, features/level, base res, finest res, table_log2,
//                triplane spatial res, scale bins, features/plane, hidden width
//   f64 x 2      s_min, s_max
//   u32          tensor count
//   per tensor:  u32 name length, name bytes, u32 ndims, u64 dims[ndims],
//                f64 payload (product of dims values)
// ---------------------------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[8] = {'S', 'N', 'S', 'R', 'C', 'K', 'P', '1'};

template <class T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

void write_tensor(std::ostream& os, const std::string& name, std::span<const uint64_t> dims,
                  std::span<const double> data) {
    write_pod(os, uint32_t(name.size()));
    os.write(name.data(), std::streamsize(name.size()));
    write_pod(os, uint32_t(dims.size()));
    for (uint64_t d : dims) write_pod(os, d);
    os.write(reinterpret_cast<const char*>(data.data()), std::streamsize(data.size() * sizeof(double)));
}

}  // namespace

void ScaleField::save_checkpoint(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
    os.write(kCheckpointMagic, 8);
    write_pod(os, uint32_t(1));
    const int32_t ints[9] = {config_.hash.levels,
                             config_.hash.features_per_level,
                             config_.hash.base_resolution,
                             config_.hash.finest_resolution,
                             config_.hash.table_log2,
                             config_.triplane.spatial_resolution,
                             config_.triplane.scale_bins,
                             config_.triplane.features_per_plane,
                             config_.hidden_width};
    for (int32_t v : ints) write_pod(os, v);
    write_pod(os, config_.s_min);
    write_pod(os, config_.s_max);

    auto tensors = const_cast<ScaleField*>(this)->parameter_tensors();
    write_pod(os, uint32_t(tensors.size()));
    for (auto& t : tensors) {
        std::vector<uint64_t> dims;
        if (t.name == "mlp_w1")
            dims = {uint64_t(config_.hidden_width), uint64_t(config_.feature_dim())};
        else
            dims = {uint64_t(t.data.size())};
        write_tensor(os, t.name, dims, t.data);
    }
    if (!os) throw std::runtime_error("checkpoint: write to '" + path + "' failed");
}

ScaleField ScaleField::load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw std::runtime_error("checkpoint: '" + path + "' is not a field checkpoint");
    uint32_t version = read_pod<uint32_t>(is);
    if (version != 1)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    FieldConfig cfg;
    cfg.hash.levels = read_pod<int32_t>(is);
    cfg.hash.features_per_level = read_pod<int32_t>(is);
    cfg.hash.base_resolution = read_pod<int32_t>(is);
    cfg.hash.finest_resolution = read_pod<int32_t>(is);
    cfg.hash.table_log2 = read_pod<int32_t>(is);
    cfg.triplane.spatial_resolution = read_pod<int32_t>(is);
    cfg.triplane.scale_bins = read_pod<int32_t>(is);
    cfg.triplane.features_per_plane = read_pod<int32_t>(is);
    cfg.hidden_width = read_pod<int32_t>(is);
    cfg.s_min = read_pod<double>(is);
    cfg.s_max = read_pod<double>(is);

    ScaleField field(cfg);
    auto tensors = field.parameter_tensors();
    uint32_t count = read_pod<uint32_t>(is);
    if (count != tensors.size())
        throw std::runtime_error("checkpoint: tensor count mismatch in '" + path + "'");
    for (auto& t : tensors) {
        uint32_t name_len = read_pod<uint32_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (name != t.name)
            throw std::runtime_error("checkpoint: expected tensor '" + t.name + "', found '" + name +
                                     "'");
        uint32_t ndims = read_pod<uint32_t>(is);
        uint64_t total = 1;
        for (uint32_t d = 0; d < ndims; ++d) total *= read_pod<uint64_t>(is);
        if (total != t.data.size())
            throw std::runtime_error("checkpoint: tensor '" + name + "' has unexpected shape");
        is.read(reinterpret_cast<char*>(t.data.data()), std::streamsize(total * sizeof(double)));
        if (!is) throw std::runtime_error("checkpoint: truncated tensor '" + name + "'");
        for (double v : t.data)
            if (!std::isfinite(v))
                throw std::runtime_error("checkpoint: tensor '" + name + "' contains non-finite values");
    }
    return field;
}

}  // namespace snsr
