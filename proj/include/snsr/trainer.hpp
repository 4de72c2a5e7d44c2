#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "snsr/dataset.hpp"
#include "snsr/field.hpp"
#include "snsr/losses.hpp"
#include "snsr/renderer.hpp"

namespace snsr {

/// Everything the optimization loop needs. Defaults follow the reference
/// training recipe: 70k iterations, 128 rays x 32 samples per iteration, Adam
/// at 5e-3, cross-scale regularization with lambda = 4 over 4096 points x 128
/// scales.
struct TrainConfig {
    int iterations = 70000;
    int rays_per_batch = 128;
    int samples_per_ray = 32;
    double learning_rate = 5e-3;
    double learning_rate_final = 5e-4;  // cosine decay target
    double lambda_csr = 4.0;
    int csr_points = 4096;
    int csr_scales = 128;
    uint64_t seed = 0;
    int threads = 0;  // 0 = OpenMP default; pin for bitwise reproducibility
    int log_every = 50;
    int eval_every = 0;  // 0 disables mid-training held-out MAE
    int checkpoint_every = 10000;
    double near_floor = 0.05;
    double init_radius = 0.5;

    HashGridConfig hash;
    TriplaneConfig triplane;
    int hidden_width = 64;

    // ablation switches
    bool freeze_triplane = false;          // keep the scale encoding at zero
    double constant_scale_override = -1.0;  // >= 0: feed this scale to every sample

    void validate() const;
    FieldConfig field_config(double s_min, double s_max) const;
};

/// Key-value text config ("key = value", '#' comments). Unknown keys error.
TrainConfig load_train_config(const std::string& path);
void save_train_config(const TrainConfig& config, const std::string& path);
std::string train_config_text(const TrainConfig& config);

struct TrainLogRow {
    int iteration = 0;
    LossTerms losses;
    double wallclock_s = 0.0;
    double mae_deg = std::numeric_limits<double>::quiet_NaN();  // NaN when not evaluated
};

struct TrainResult {
    ScaleField field;
    std::vector<TrainLogRow> log;
    std::string checkpoint_path;  // empty when out_dir was empty
};

/// Runs the optimization. When `out_dir` is non-empty, writes train_log.csv,
/// periodic checkpoints and checkpoint_final.snsr there. Deterministic for a
/// fixed seed and fixed thread count. Aborts (std::runtime_error) on a
/// non-finite total loss, pointing at the last checkpoint written.
TrainResult train(const SceneDataset& dataset, const TrainConfig& config,
                  const std::string& out_dir = "");

/// One forward/backward evaluation of the total objective on an explicit batch:
/// renders `bundle`, adds the cross-scale term over (csr_points x csr_scales),
/// and accumulates exact parameter gradients. Exposed for the
/// finite-difference oracle and reused by train().
LossTerms compute_loss_and_gradients(const ScaleField& field, const RayBundle& bundle,
                                     std::span<const Vec3> csr_points,
                                     std::span<const double> csr_scales, int csr_scale_count,
                                     double lambda, FieldGradients& grads);

/// Adam with bias correction; state is laid out per parameter tensor.
class AdamOptimizer {
public:
    AdamOptimizer(size_t parameter_count, double beta1 = 0.9, double beta2 = 0.999,
                  double epsilon = 1e-8);
    /// params/grads must be congruent tensor lists (same order and sizes).
    void step(std::vector<NamedTensor>& params, std::vector<NamedTensor>& grads, double lr,
              const std::vector<uint8_t>* tensor_frozen = nullptr);
    int64_t steps_taken() const { return t_; }

private:
    std::vector<double> m_, v_;
    double beta1_, beta2_, epsilon_;
    int64_t t_ = 0;
};

void write_train_log_csv(std::ostream& os, const std::vector<TrainLogRow>& log);

}  // namespace snsr
