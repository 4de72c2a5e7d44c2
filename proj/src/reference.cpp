#include "snsr/reference.hpp"

#include <cmath>

namespace snsr::reference {

namespace {

double clamp(double x, double lo, double hi) { return x < lo ? lo : (x > hi ? hi : x); }

uint32_t spatial_hash(uint32_t x, uint32_t y, uint32_t z, uint32_t entries) {
    return (x ^ (y * 2654435761u) ^ (z * 805459861u)) & (entries - 1u);
}

}  // namespace

std::vector<double> hash_lookup(const ScaleField& field, const Vec3& p) {
    const auto& cfg = field.config();
    const int fpl = cfg.hash.features_per_level;
    std::vector<double> out(size_t(cfg.hash.levels) * fpl, 0.0);
    Vec3 pc{clamp(p.x, -1.0, 1.0), clamp(p.y, -1.0, 1.0), clamp(p.z, -1.0, 1.0)};
    for (int level = 0; level < cfg.hash.levels; ++level) {
        const int res = field.level_resolution(level);
        const uint32_t entries = field.level_table_entries(level);
        const bool dense = uint64_t(res + 1) * (res + 1) * (res + 1) <= entries;
        const auto& table = field.params().hash_tables[level];
        double u[3], frac[3];
        int base[3];
        for (int d = 0; d < 3; ++d) {
            u[d] = (pc[d] + 1.0) * 0.5 * res;
            base[d] = int(std::floor(u[d]));
            if (base[d] > res - 1) base[d] = res - 1;
            if (base[d] < 0) base[d] = 0;
            frac[d] = u[d] - base[d];
        }
        for (int dx = 0; dx <= 1; ++dx)
            for (int dy = 0; dy <= 1; ++dy)
                for (int dz = 0; dz <= 1; ++dz) {
                    double w = (dx ? frac[0] : 1.0 - frac[0]) * (dy ? frac[1] : 1.0 - frac[1]) *
                               (dz ? frac[2] : 1.0 - frac[2]);
                    uint32_t ix = base[0] + dx, iy = base[1] + dy, iz = base[2] + dz;
                    uint32_t idx = dense ? (ix * uint32_t(res + 1) + iy) * uint32_t(res + 1) + iz
                                         : spatial_hash(ix, iy, iz, entries);
                    for (int c = 0; c < fpl; ++c)
                        out[size_t(level) * fpl + c] += w * table[size_t(idx) * fpl + c];
                }
    }
    return out;
}

std::vector<double> triplane_lookup(const ScaleField& field, const Vec3& p, double s) {
    const auto& cfg = field.config();
    const auto& tc = cfg.triplane;
    std::vector<double> out(size_t(3) * tc.features_per_plane, 0.0);
    const double sc = clamp(s, cfg.s_min, cfg.s_max);
    const double sv = std::log(sc / cfg.s_min) / std::log(cfg.s_max / cfg.s_min) * (tc.scale_bins - 1);
    int j = int(std::floor(sv));
    if (j > tc.scale_bins - 2) j = tc.scale_bins - 2;
    if (j < 0) j = 0;
    const double fj = sv - j;
    for (int plane = 0; plane < 3; ++plane) {
        const auto& data = field.params().planes[plane];
        const double coord = clamp(p[plane], -1.0, 1.0);
        const double uv = (coord + 1.0) * 0.5 * (tc.spatial_resolution - 1);
        int i = int(std::floor(uv));
        if (i > tc.spatial_resolution - 2) i = tc.spatial_resolution - 2;
        if (i < 0) i = 0;
        const double fi = uv - i;
        for (int di = 0; di <= 1; ++di)
            for (int dj = 0; dj <= 1; ++dj) {
                double w = (di ? fi : 1.0 - fi) * (dj ? fj : 1.0 - fj);
                size_t idx = size_t(i + di) * tc.scale_bins + size_t(j + dj);
                for (int c = 0; c < tc.features_per_plane; ++c)
                    out[size_t(plane) * tc.features_per_plane + c] +=
                        w * data[idx * tc.features_per_plane + c];
            }
    }
    return out;
}

double field_forward(const ScaleField& field, const Vec3& p, double s) {
    const auto& cfg = field.config();
    std::vector<double> feat;
    feat.push_back(clamp(p.x, -1.0, 1.0));
    feat.push_back(clamp(p.y, -1.0, 1.0));
    feat.push_back(clamp(p.z, -1.0, 1.0));
    for (double v : hash_lookup(field, p)) feat.push_back(v);
    for (double v : triplane_lookup(field, p, s)) feat.push_back(v);

    const auto& params = field.params();
    double out = params.b2;
    for (int i = 0; i < cfg.hidden_width; ++i) {
        double z = params.b1[i];
        for (size_t jcol = 0; jcol < feat.size(); ++jcol)
            z += params.w1[size_t(i) * feat.size() + jcol] * feat[jcol];
        if (z > 0.0) out += params.w2[i] * z;
    }
    return out;
}

void eval_batch(const ScaleField& field, std::span<const Vec3> points,
                std::span<const double> scales, std::span<double> out) {
    for (size_t i = 0; i < points.size(); ++i) out[i] = field_forward(field, points[i], scales[i]);
}

Vec3 fd_spatial_gradient(const ScaleField& field, const Vec3& p, double s, double h) {
    Vec3 g;
    for (int d = 0; d < 3; ++d) {
        Vec3 lo = p, hi = p;
        lo[d] -= h;
        hi[d] += h;
        g[d] = (field_forward(field, hi, s) - field_forward(field, lo, s)) / (2.0 * h);
    }
    return g;
}

CompositeRef composite(std::span<const double> alphas, std::span<const Vec3> normals) {
    CompositeRef out;
    out.weights.resize(alphas.size());
    for (size_t k = 0; k < alphas.size(); ++k) {
        double w = alphas[k];
        for (size_t l = 0; l < k; ++l) w *= 1.0 - alphas[l];
        out.weights[k] = w;
        out.normal += w * normals[k];
        out.opacity += w;
    }
    return out;
}

double ray_opacity(const std::function<double(const Vec3&)>& sdf, const Vec3& origin,
                   const Vec3& dir, double near, double far, int steps, double sharpness) {
    auto phi = [sharpness](double x) { return 1.0 / (1.0 + std::exp(-sharpness * x)); };
    std::vector<double> f(steps);
    double dt = (far - near) / steps;
    for (int k = 0; k < steps; ++k) f[k] = sdf(origin + (near + (k + 0.5) * dt) * dir);
    double opacity = 0.0, trans = 1.0;
    for (int k = 0; k + 1 < steps; ++k) {
        double alpha = (phi(f[k]) - phi(f[k + 1])) / std::fmax(phi(f[k]), 1e-7);
        if (alpha < 0.0) alpha = 0.0;
        opacity += trans * alpha;
        trans *= 1.0 - alpha;
    }
    return opacity;
}

double normal_loss(std::span<const Vec3> rendered, std::span<const Vec3> truth,
                   std::span<const uint8_t> mask) {
    double sum = 0.0;
    int n = 0;
    for (size_t j = 0; j < rendered.size(); ++j) {
        if (!mask[j]) continue;
        double len = norm(rendered[j]);
        if (len < 1e-12) continue;
        Vec3 u = rendered[j] / len;
        sum += std::fabs(u.x - truth[j].x) + std::fabs(u.y - truth[j].y) + std::fabs(u.z - truth[j].z);
        ++n;
    }
    return n ? sum / n : 0.0;
}

double mask_loss(std::span<const double> opacity, std::span<const uint8_t> mask) {
    if (opacity.empty()) return 0.0;
    double sum = 0.0;
    for (size_t j = 0; j < opacity.size(); ++j) {
        double m = clamp(opacity[j], 1e-4, 1.0 - 1e-4);
        sum += mask[j] ? -std::log(m) : -std::log(1.0 - m);
    }
    return sum / double(opacity.size());
}

double eikonal_loss(std::span<const Vec3> gradients) {
    if (gradients.empty()) return 0.0;
    double sum = 0.0;
    for (const Vec3& g : gradients) sum += (norm(g) - 1.0) * (norm(g) - 1.0);
    return sum / double(gradients.size());
}

double csr_loss(std::span<const double> values, int points, int scales) {
    double sum = 0.0;
    for (int k = 0; k < points; ++k) {
        double mean = 0.0;
        for (int i = 0; i < scales; ++i) mean += values[size_t(k) * scales + i];
        mean /= scales;
        for (int i = 0; i < scales; ++i) {
            double d = values[size_t(k) * scales + i] - mean;
            sum += d * d;
        }
    }
    return sum / (double(points) * scales);
}

double chamfer_bruteforce(std::span<const Vec3> a, std::span<const Vec3> b) {
    auto directed = [](std::span<const Vec3> from, std::span<const Vec3> to) {
        double sum = 0.0;
        for (const Vec3& p : from) {
            double best = std::numeric_limits<double>::infinity();
            for (const Vec3& q : to) best = std::fmin(best, norm(p - q));
            sum += best;
        }
        return sum / double(from.size());
    };
    return 0.5 * (directed(a, b) + directed(b, a));
}

std::vector<double> unit_scale_response(const ScaleField& field, std::span<const Vec3> vertices) {
    const auto& tc = field.config().triplane;
    std::vector<double> response(tc.scale_bins - 1, 0.0);
    for (int cand = 0; cand + 1 < tc.scale_bins; ++cand) {
        for (const Vec3& v : vertices) {
            for (int plane = 0; plane < 3; ++plane) {
                const auto& data = field.params().planes[plane];
                const double coord = clamp(v[plane], -1.0, 1.0);
                const double uv = (coord + 1.0) * 0.5 * (tc.spatial_resolution - 1);
                int i = int(std::floor(uv));
                if (i > tc.spatial_resolution - 2) i = tc.spatial_resolution - 2;
                if (i < 0) i = 0;
                const double fi = uv - i;
                // channel-summed feature interpolated at the candidate scale
                // (mid-interval: the two neighboring rows weigh 0.5 each)
                double lookup = 0.0;
                for (int di = 0; di <= 1; ++di) {
                    double w = di ? fi : 1.0 - fi;
                    for (int row = cand; row <= cand + 1; ++row) {
                        size_t idx = size_t(i + di) * tc.scale_bins + size_t(row);
                        for (int c = 0; c < tc.features_per_plane; ++c)
                            lookup += 0.5 * w * data[idx * tc.features_per_plane + c];
                    }
                }
                response[cand] += std::fabs(lookup);
            }
        }
    }
    return response;
}

}  // namespace snsr::reference
