#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "snsr/rng.hpp"
#include "snsr/vec3.hpp"

namespace snsr {

struct HashGridConfig {
    int levels = 14;
    int features_per_level = 2;  // levels * features = 28 for the default stack
    int base_resolution = 16;
    int finest_resolution = 2048;
    int table_log2 = 19;
};

struct TriplaneConfig {
    int spatial_resolution = 128;
    int scale_bins = 32;
    int features_per_plane = 8;  // 3 planes * 8 = 24
};

struct FieldConfig {
    HashGridConfig hash;
    TriplaneConfig triplane;
    int hidden_width = 64;
    // scale axis of the triplane: log-spaced over [s_min, s_max]
    double s_min = 1e-3;
    double s_max = 1.0;

    int hash_dim() const { return hash.levels * hash.features_per_level; }
    int triplane_dim() const { return 3 * triplane.features_per_plane; }
    int feature_dim() const { return 3 + hash_dim() + triplane_dim(); }

    void validate() const;  // throws std::invalid_argument
};

/// All trainable state. Hash tables are per level, `entries * features_per_level`
/// doubles each; a level is stored dense when its full vertex grid fits in the
/// table budget, spatially hashed otherwise. Planes are
/// [spatial][scale_bin][feature] row-major. The MLP is one hidden layer:
/// w1 is hidden x feature_dim row-major, w2 the output row. The volume-rendering
/// sharpness is stored as its log `rho`, so a = exp(rho) stays positive.
struct FieldParams {
    std::vector<std::vector<double>> hash_tables;
    std::array<std::vector<double>, 3> planes;
    std::vector<double> w1, b1, w2;
    double b2 = 0.0;
    double rho = 0.0;
};

struct NamedTensor {
    std::string name;
    std::span<double> data;
};

/// Gradient structure congruent to FieldParams.
struct FieldGradients {
    std::vector<std::vector<double>> hash_tables;
    std::array<std::vector<double>, 3> planes;
    std::vector<double> w1, b1, w2;
    double b2 = 0.0;
    double rho = 0.0;

    void zero();
    void add(const FieldGradients& other);  // elementwise accumulate
    std::vector<NamedTensor> tensors();
};

/// Per-thread scratch for field evaluation; reusable across calls. Forward
/// fills it, backward consumes it.
struct FieldWorkspace {
    std::vector<double> feat;        // feature_dim encoder output
    std::vector<double> jac;         // feature_dim x 3 spatial tangents, row-major
    std::vector<double> z, h;        // hidden pre/post activation
    std::vector<double> r;           // W1^T (mask . w2), gradient left-factor
    std::vector<double> zbar, u;     // backward scratch (hidden)
    std::vector<double> ebar, rbar;  // backward scratch (feature_dim)
    std::vector<uint32_t> corner_idx;  // levels*8 table entry indices
    std::vector<double> corner_w;      // levels*8 trilinear weights
    std::vector<double> corner_dw;     // levels*8*3 weight derivatives w.r.t. p
    uint32_t tri_idx[3][4];
    double tri_w[3][4];
    double tri_dw[3][4];  // derivative w.r.t. the plane's spatial axis
    double f = 0.0;
    Vec3 grad;
};

/// The scale-encoded SDF f(p, s): hash grid + scale-triplane features decoded
/// by a tiny MLP. Spatial gradients are exact (analytic chain rule through the
/// interpolations and the MLP), and backward() propagates adjoints of both the
/// value and the spatial gradient to every parameter.
class ScaleField {
public:
    explicit ScaleField(FieldConfig config);
    ScaleField(const ScaleField& other);
    ScaleField(ScaleField&& other) noexcept;
    ScaleField& operator=(const ScaleField& other);
    ScaleField& operator=(ScaleField&& other) noexcept;

    /// Hash tables small-random (+-1e-4), triplanes zero, MLP arranged so
    /// f(p, s) ~ |p| - r0, sharpness set for a ~0.3 world-unit transition.
    void geometric_init(double r0, uint64_t seed);

    /// Forward evaluation at (p, s) into `ws`. Returns f; ws.grad holds the
    /// spatial gradient when with_gradient is true.
    double forward(const Vec3& p, double s, FieldWorkspace& ws, bool with_gradient) const;

    /// Accumulates d(loss)/d(params) given upstream adjoints f_bar = dL/df and
    /// g_bar = dL/d(grad f). Recomputes the forward pass internally.
    void backward(const Vec3& p, double s, double f_bar, const Vec3& g_bar, FieldWorkspace& ws,
                  FieldGradients& grads) const;

    double sdf(const Vec3& p, double s) const;
    Vec3 spatial_gradient(const Vec3& p, double s) const;

    /// Batched evaluation, parallel over points. g_out may be null.
    void eval_batch(std::span<const Vec3> points, std::span<const double> scales,
                    std::span<double> f_out, Vec3* g_out) const;

    /// 28-dim hash feature (domain-clamped trilinear lookup).
    std::vector<double> hash_lookup(const Vec3& p) const;
    /// 24-dim triplane feature (scale-clamped bilinear lookup).
    std::vector<double> triplane_lookup(const Vec3& p, double s) const;

    double sharpness() const;  // a = exp(rho)

    FieldGradients make_gradients() const;  // zero-initialized, congruent shapes

    const FieldConfig& config() const { return config_; }
    FieldParams& params() { return params_; }
    const FieldParams& params() const { return params_; }
    std::vector<NamedTensor> parameter_tensors();

    int level_resolution(int level) const { return level_res_[level]; }
    uint32_t level_table_entries(int level) const { return level_entries_[level]; }

    uint64_t domain_clamp_count() const { return domain_clamps_.load(std::memory_order_relaxed); }
    uint64_t scale_clamp_count() const { return scale_clamps_.load(std::memory_order_relaxed); }
    void reset_clamp_counts();

    /// Versioned binary checkpoint; byte layout documented in the implementation.
    /// Round-trips bit-exactly.
    void save_checkpoint(const std::string& path) const;
    static ScaleField load_checkpoint(const std::string& path);

private:
    void encode(const Vec3& p, double s, FieldWorkspace& ws, bool with_tangents) const;
    void ensure_workspace(FieldWorkspace& ws) const;

    FieldConfig config_;
    FieldParams params_;
    std::vector<int> level_res_;
    std::vector<uint32_t> level_entries_;
    std::vector<uint8_t> level_dense_;
    mutable std::atomic<uint64_t> domain_clamps_{0};
    mutable std::atomic<uint64_t> scale_clamps_{0};
};

}  // namespace snsr
