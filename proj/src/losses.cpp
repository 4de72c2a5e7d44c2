#include "snsr/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace snsr {

namespace {
constexpr double kZeroNormalThreshold = 1e-12;

void check_sizes(size_t a, size_t b, const char* who) {
    if (a != b) throw std::invalid_argument(std::string(who) + ": size mismatch");
}
}  // namespace

LossTerms total_loss(double normal, double mask, double eikonal, double csr, double lambda) {
    const char* names[4] = {"normal", "mask", "eikonal", "csr"};
    const double values[4] = {normal, mask, eikonal, csr};
    for (int i = 0; i < 4; ++i)
        if (!std::isfinite(values[i]))
            throw std::runtime_error(std::string("total_loss: non-finite ") + names[i] + " term");
    LossTerms t;
    t.normal = normal;
    t.mask = mask;
    t.eikonal = eikonal;
    t.csr = csr;
    t.lambda = lambda;
    t.total = normal + mask + eikonal + lambda * csr;
    return t;
}

NormalLossResult normal_loss(std::span<const Vec3> rendered, std::span<const Vec3> truth,
                             std::span<const uint8_t> mask) {
    check_sizes(rendered.size(), truth.size(), "normal_loss");
    check_sizes(rendered.size(), mask.size(), "normal_loss");
    NormalLossResult res;
    double sum = 0.0;
    for (size_t j = 0; j < rendered.size(); ++j) {
        if (!mask[j]) continue;
        double len = norm(rendered[j]);
        if (len < kZeroNormalThreshold) {
            ++res.skipped;
            continue;
        }
        Vec3 u = rendered[j] / len;
        sum += std::fabs(u.x - truth[j].x) + std::fabs(u.y - truth[j].y) + std::fabs(u.z - truth[j].z);
        ++res.included;
    }
    res.value = res.included > 0 ? sum / res.included : 0.0;
    return res;
}

double mask_loss(std::span<const double> opacity, std::span<const uint8_t> mask) {
    check_sizes(opacity.size(), mask.size(), "mask_loss");
    if (opacity.empty()) return 0.0;
    double sum = 0.0;
    for (size_t j = 0; j < opacity.size(); ++j) {
        double m_hat = std::fmin(std::fmax(opacity[j], kMaskEpsilon), 1.0 - kMaskEpsilon);
        sum -= mask[j] ? std::log(m_hat) : std::log(1.0 - m_hat);
    }
    return sum / double(opacity.size());
}

double eikonal_loss(std::span<const Vec3> gradients) {
    if (gradients.empty()) return 0.0;
    double sum = 0.0;
    for (const Vec3& g : gradients) {
        double d = norm(g) - 1.0;
        sum += d * d;
    }
    return sum / double(gradients.size());
}

double csr_loss_from_values(std::span<const double> values, int points, int scales) {
    if (points < 1 || scales < 1) throw std::invalid_argument("csr_loss: need K >= 1 and S >= 1");
    check_sizes(values.size(), size_t(points) * scales, "csr_loss");
    double sum = 0.0;
    for (int k = 0; k < points; ++k) {
        const double* row = values.data() + size_t(k) * scales;
        double mean = 0.0;
        for (int i = 0; i < scales; ++i) mean += row[i];
        mean /= scales;
        for (int i = 0; i < scales; ++i) {
            double d = row[i] - mean;
            sum += d * d;
        }
    }
    return sum / (double(points) * scales);
}

double csr_loss(const ScaleField& field, std::span<const Vec3> points,
                std::span<const double> scales, int S, std::vector<double>* values_out) {
    const int K = int(points.size());
    check_sizes(scales.size(), size_t(K) * S, "csr_loss");
    std::vector<double> values(size_t(K) * S);
    std::vector<Vec3> expanded(size_t(K) * S);
    for (int k = 0; k < K; ++k)
        for (int i = 0; i < S; ++i) expanded[size_t(k) * S + i] = points[k];
    field.eval_batch(expanded, scales, values, nullptr);
    double loss = csr_loss_from_values(values, K, S);
    if (values_out) *values_out = std::move(values);
    return loss;
}

std::vector<Vec3> normal_loss_backward(std::span<const Vec3> rendered, std::span<const Vec3> truth,
                                       std::span<const uint8_t> mask) {
    NormalLossResult stats = normal_loss(rendered, truth, mask);
    std::vector<Vec3> out(rendered.size());
    if (stats.included == 0) return out;
    const double inv_n = 1.0 / stats.included;
    for (size_t j = 0; j < rendered.size(); ++j) {
        if (!mask[j]) continue;
        double len = norm(rendered[j]);
        if (len < kZeroNormalThreshold) continue;
        Vec3 u = rendered[j] / len;
        Vec3 sgn{u.x - truth[j].x == 0.0 ? 0.0 : std::copysign(1.0, u.x - truth[j].x),
                 u.y - truth[j].y == 0.0 ? 0.0 : std::copysign(1.0, u.y - truth[j].y),
                 u.z - truth[j].z == 0.0 ? 0.0 : std::copysign(1.0, u.z - truth[j].z)};
        // d(u)/d(n_hat) = (I - u u^T) / |n_hat|
        Vec3 g = (sgn - u * dot(u, sgn)) / len;
        out[j] = g * inv_n;
    }
    return out;
}

std::vector<double> mask_loss_backward(std::span<const double> opacity,
                                       std::span<const uint8_t> mask) {
    std::vector<double> out(opacity.size(), 0.0);
    if (opacity.empty()) return out;
    const double inv_n = 1.0 / double(opacity.size());
    for (size_t j = 0; j < opacity.size(); ++j) {
        double m_hat = opacity[j];
        if (m_hat <= kMaskEpsilon || m_hat >= 1.0 - kMaskEpsilon) continue;  // clamp active
        out[j] = inv_n * (mask[j] ? -1.0 / m_hat : 1.0 / (1.0 - m_hat));
    }
    return out;
}

std::vector<Vec3> eikonal_loss_backward(std::span<const Vec3> gradients) {
    std::vector<Vec3> out(gradients.size());
    if (gradients.empty()) return out;
    const double inv_n = 1.0 / double(gradients.size());
    for (size_t k = 0; k < gradients.size(); ++k) {
        double len = norm(gradients[k]);
        if (len < kZeroNormalThreshold) continue;
        out[k] = gradients[k] * (2.0 * (len - 1.0) / len * inv_n);
    }
    return out;
}

std::vector<double> csr_loss_backward(std::span<const double> values, int points, int scales) {
    check_sizes(values.size(), size_t(points) * scales, "csr_loss_backward");
    std::vector<double> out(values.size());
    const double scale = 2.0 / (double(points) * scales);
    for (int k = 0; k < points; ++k) {
        const double* row = values.data() + size_t(k) * scales;
        double mean = 0.0;
        for (int i = 0; i < scales; ++i) mean += row[i];
        mean /= scales;
        for (int i = 0; i < scales; ++i) out[size_t(k) * scales + i] = scale * (row[i] - mean);
    }
    return out;
}

}  // namespace snsr
