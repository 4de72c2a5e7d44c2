#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <omp.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "snsr/scene.hpp"
#include "snsr/trainer.hpp"

using namespace snsr;

namespace {

TrainConfig miniature_train_config() {
    TrainConfig cfg;
    cfg.hash.levels = 2;
    cfg.hash.features_per_level = 2;
    cfg.hash.base_resolution = 2;
    cfg.hash.finest_resolution = 4;
    cfg.hash.table_log2 = 4;
    cfg.triplane.spatial_resolution = 8;
    cfg.triplane.scale_bins = 4;
    cfg.triplane.features_per_plane = 8;
    cfg.hidden_width = 8;
    return cfg;
}

TrainConfig tiny_sphere_config() {
    TrainConfig cfg;
    cfg.iterations = 40;
    cfg.rays_per_batch = 32;
    cfg.samples_per_ray = 16;
    cfg.lambda_csr = 4.0;
    cfg.csr_points = 16;
    cfg.csr_scales = 4;
    cfg.log_every = 1;
    cfg.checkpoint_every = 1000;
    cfg.threads = 2;
    cfg.hash.levels = 4;
    cfg.hash.base_resolution = 4;
    cfg.hash.finest_resolution = 32;
    cfg.hash.table_log2 = 10;
    cfg.triplane.spatial_resolution = 16;
    cfg.triplane.scale_bins = 8;
    cfg.hidden_width = 16;
    return cfg;
}

SceneDataset tiny_sphere_scene() {
    SceneGenConfig cfg;
    cfg.shape = ShapeId::Sphere;
    cfg.regular_views = 4;
    cfg.eval_regular = 1;
    cfg.resolution = 32;
    cfg.supersampling = 2;
    return generate_synthetic_scene(cfg);
}

// a small but non-trivial bundle over a randomized miniature field
RayBundle miniature_bundle(Pcg32& rng, int rays, int samples) {
    RayBundle bundle;
    for (int j = 0; j < rays; ++j) {
        RenderRay ray;
        bool foreground = rng.next_below(4) != 0;
        double z = rng.uniform(-1, 1), az = rng.uniform(0, 2 * M_PI);
        double r = std::sqrt(1 - z * z);
        ray.gt_normal = foreground ? Vec3{r * std::cos(az), r * std::sin(az), z} : Vec3{};
        ray.gt_mask = foreground;
        Vec3 origin{rng.uniform(-0.9, -0.5), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3)};
        Vec3 dir = normalized(Vec3{1.0, rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3)});
        double t = 0.1;
        ray.samples.resize(samples);
        for (int k = 0; k < samples; ++k) {
            t += rng.uniform(0.02, 0.08);
            ray.samples[k] = {t, origin + t * dir, std::exp(rng.uniform(std::log(2e-3), std::log(8e-2)))};
        }
        bundle.rays.push_back(std::move(ray));
    }
    return bundle;
}

}  // namespace

TEST_CASE("train config text round-trip") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "snsr_cfg_test";
    fs::create_directories(dir);
    std::string path = (dir / "config.txt").string();

    TrainConfig cfg = tiny_sphere_config();
    cfg.learning_rate = 3.25e-3;
    cfg.seed = 99;
    cfg.freeze_triplane = true;
    save_train_config(cfg, path);
    TrainConfig back = load_train_config(path);
    CHECK(back.iterations == cfg.iterations);
    CHECK(back.learning_rate == cfg.learning_rate);
    CHECK(back.seed == cfg.seed);
    CHECK(back.freeze_triplane == cfg.freeze_triplane);
    CHECK(back.hash.finest_resolution == cfg.hash.finest_resolution);

    SUBCASE("unknown keys are rejected") {
        std::ofstream(path) << "iterations = 10\nbogus_key = 3\n";
        CHECK_THROWS_WITH_AS(load_train_config(path), doctest::Contains("bogus_key"),
                             std::runtime_error);
    }
    SUBCASE("bad values are rejected with location") {
        std::ofstream(path) << "iterations = banana\n";
        CHECK_THROWS_AS(load_train_config(path), std::runtime_error);
    }
    fs::remove_all(dir);
}

TEST_CASE("default train config matches the published recipe") {
    TrainConfig cfg;
    CHECK(cfg.iterations == 70000);
    CHECK(cfg.rays_per_batch == 128);
    CHECK(cfg.rays_per_batch * cfg.samples_per_ray == 4096);
    CHECK(cfg.learning_rate == doctest::Approx(5e-3));
    CHECK(cfg.lambda_csr == doctest::Approx(4.0));
    CHECK(cfg.csr_points == 4096);
    CHECK(cfg.csr_scales == 128);
    // feature budget: 3 + 28 + 24 = 55 into a 64-wide hidden layer
    FieldConfig fc = cfg.field_config(1e-3, 1e-1);
    CHECK(fc.hash_dim() == 28);
    CHECK(fc.triplane_dim() == 24);
    CHECK(fc.feature_dim() == 55);
    CHECK(fc.hidden_width == 64);
    CHECK(fc.triplane.spatial_resolution == 128);
    CHECK(fc.triplane.scale_bins == 32);
}

TEST_CASE("adam follows the reference update") {
    std::vector<double> p{1.0};
    std::vector<double> g{0.5};
    std::vector<NamedTensor> params{{"p", std::span<double>(p)}};
    std::vector<NamedTensor> grads{{"p", std::span<double>(g)}};
    AdamOptimizer adam(1);
    adam.step(params, grads, 0.1);
    // straight from the update rule with bias correction, t = 1
    double m = 0.1 * 0.5, v = 0.001 * 0.25;
    double expected = 1.0 - 0.1 * (m / 0.1) / (std::sqrt(v / 0.001) + 1e-8);
    CHECK(p[0] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("total-loss parameter gradients match finite differences on a miniature field") {
    TrainConfig tc = miniature_train_config();
    FieldConfig fc = tc.field_config(1e-3, 1e-1);
    ScaleField field(fc);
    Pcg32 prng(321, 9);
    for (auto& t : field.parameter_tensors())
        for (double& v : t.data) v = prng.uniform(-0.3, 0.3);
    field.params().rho = std::log(30.0);

    Pcg32 rng(55);
    RayBundle bundle = miniature_bundle(rng, 3, 5);
    const int K = 2, S = 3;
    std::vector<Vec3> csr_pts;
    std::vector<double> csr_scales;
    for (int k = 0; k < K; ++k) {
        csr_pts.push_back(bundle.rays[k].samples[1].p);
        for (int i = 0; i < S; ++i) csr_scales.push_back(rng.uniform(1e-3, 1e-1));
    }
    const double lambda = 4.0;

    FieldGradients grads = field.make_gradients();
    LossTerms terms =
        compute_loss_and_gradients(field, bundle, csr_pts, csr_scales, S, lambda, grads);
    CHECK(terms.total ==
          doctest::Approx(terms.normal + terms.mask + terms.eikonal + lambda * terms.csr)
              .epsilon(1e-6));

    auto loss_value = [&]() {
        FieldGradients scratch = field.make_gradients();
        return compute_loss_and_gradients(field, bundle, csr_pts, csr_scales, S, lambda, scratch)
            .total;
    };

    const double h = 1e-6;
    double worst = 0.0;
    auto params = field.parameter_tensors();
    auto gtensors = grads.tensors();
    size_t checked = 0;
    for (size_t t = 0; t < params.size(); ++t) {
        for (size_t i = 0; i < params[t].data.size(); ++i) {
            double saved = params[t].data[i];
            params[t].data[i] = saved + h;
            double hi = loss_value();
            params[t].data[i] = saved - h;
            double lo = loss_value();
            params[t].data[i] = saved;
            double fd = (hi - lo) / (2.0 * h);
            double an = gtensors[t].data[i];
            double rel = std::fabs(an - fd) / std::max({1e-6, std::fabs(an), std::fabs(fd)});
            worst = std::fmax(worst, rel);
            ++checked;
        }
    }
    CHECK(checked > 1000);
    CHECK(worst < 1e-3);
}

TEST_CASE("gradients are linear over rays") {
    TrainConfig tc = miniature_train_config();
    ScaleField field(tc.field_config(1e-3, 1e-1));
    Pcg32 prng(77, 9);
    for (auto& t : field.parameter_tensors())
        for (double& v : t.data) v = prng.uniform(-0.3, 0.3);
    field.params().rho = std::log(30.0);

    Pcg32 rng(11);
    RayBundle both = miniature_bundle(rng, 2, 6);
    both.rays[0].gt_mask = both.rays[1].gt_mask = 1;
    RayBundle first, second;
    first.rays.push_back(both.rays[0]);
    second.rays.push_back(both.rays[1]);

    FieldGradients g_both = field.make_gradients();
    FieldGradients g_first = field.make_gradients();
    FieldGradients g_second = field.make_gradients();
    compute_loss_and_gradients(field, both, {}, {}, 0, 0.0, g_both);
    compute_loss_and_gradients(field, first, {}, {}, 0, 0.0, g_first);
    compute_loss_and_gradients(field, second, {}, {}, 0, 0.0, g_second);

    // each loss is a mean, so the two-ray gradient is the average of per-ray ones
    auto tb = g_both.tensors(), tf = g_first.tensors(), ts = g_second.tensors();
    double worst = 0.0;
    for (size_t t = 0; t < tb.size(); ++t)
        for (size_t i = 0; i < tb[t].data.size(); ++i) {
            double combined = 0.5 * (tf[t].data[i] + ts[t].data[i]);
            worst = std::fmax(worst, std::fabs(tb[t].data[i] - combined));
        }
    CHECK(worst < 1e-12);
}

TEST_CASE("zero iterations return the initialized field unchanged") {
    SceneDataset ds = tiny_sphere_scene();
    TrainConfig cfg = tiny_sphere_config();
    cfg.iterations = 0;
    TrainResult result = train(ds, cfg);
    CHECK(result.log.empty());

    ScaleField fresh(cfg.field_config(ds.s_min, ds.s_max));
    fresh.geometric_init(cfg.init_radius, cfg.seed);
    auto a = result.field.parameter_tensors();
    auto b = fresh.parameter_tensors();
    for (size_t t = 0; t < a.size(); ++t)
        for (size_t i = 0; i < a[t].data.size(); ++i) CHECK(a[t].data[i] == b[t].data[i]);
}

TEST_CASE("short training run learns and is bitwise deterministic") {
    SceneDataset ds = tiny_sphere_scene();
    TrainConfig cfg = tiny_sphere_config();
    cfg.iterations = 300;
    cfg.log_every = 20;
    cfg.init_radius = 0.25;  // deliberately wrong so there is something to learn

    TrainResult run1 = train(ds, cfg);
    TrainResult run2 = train(ds, cfg);
    REQUIRE(run1.log.size() == run2.log.size());
    for (size_t i = 0; i < run1.log.size(); ++i) {
        CHECK(run1.log[i].losses.total == run2.log[i].losses.total);
        CHECK(run1.log[i].losses.normal == run2.log[i].losses.normal);
        CHECK(run1.log[i].losses.csr == run2.log[i].losses.csr);
    }
    // learning signal: the loss level at the end sits well below the start
    auto mean_of = [&](size_t begin, size_t end_idx) {
        double s = 0.0;
        for (size_t i = begin; i < end_idx; ++i) s += run1.log[i].losses.total;
        return s / double(end_idx - begin);
    };
    double start = mean_of(0, 3);
    double end = mean_of(run1.log.size() - 3, run1.log.size());
    CHECK(end < 0.6 * start);

    // every trainable scalar must actually move, sharpness and output bias included
    ScaleField init(cfg.field_config(ds.s_min, ds.s_max));
    init.geometric_init(cfg.init_radius, cfg.seed);
    CHECK(run1.field.params().rho != init.params().rho);
    CHECK(run1.field.params().b2 != init.params().b2);
}

TEST_CASE("scale-blind ablation equals constant-scale inputs when triplanes are frozen") {
    SceneDataset ds = tiny_sphere_scene();
    TrainConfig cfg = tiny_sphere_config();
    cfg.iterations = 25;
    cfg.lambda_csr = 0.0;  // also skips the cross-scale sampling path
    cfg.freeze_triplane = true;

    TrainConfig cfg_const = cfg;
    cfg_const.constant_scale_override = 0.5 * (ds.s_min + ds.s_max);

    TrainResult a = train(ds, cfg);
    TrainResult b = train(ds, cfg_const);
    REQUIRE(a.log.size() == b.log.size());
    for (size_t i = 0; i < a.log.size(); ++i)
        CHECK(a.log[i].losses.total == b.log[i].losses.total);
}

TEST_CASE("training artifacts are written") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "snsr_train_out";
    fs::remove_all(dir);
    SceneDataset ds = tiny_sphere_scene();
    TrainConfig cfg = tiny_sphere_config();
    cfg.iterations = 6;
    cfg.log_every = 2;
    TrainResult result = train(ds, cfg, dir.string());
    CHECK(fs::exists(dir / "checkpoint_final.snsr"));
    CHECK(fs::exists(dir / "train_log.csv"));
    CHECK(fs::exists(dir / "train_config.txt"));
    ScaleField loaded = ScaleField::load_checkpoint((dir / "checkpoint_final.snsr").string());
    CHECK(loaded.config().hidden_width == cfg.hidden_width);
    fs::remove_all(dir);
}

TEST_CASE("train rejects unusable inputs") {
    SceneDataset ds = tiny_sphere_scene();
    TrainConfig cfg = tiny_sphere_config();
    SUBCASE("missing scale range") {
        ds.s_min = ds.s_max = 0.0;
        CHECK_THROWS_AS(train(ds, cfg), std::invalid_argument);
    }
    SUBCASE("all views held out") {
        for (auto& v : ds.views) v.held_out = true;
        CHECK_THROWS_AS(train(ds, cfg), std::invalid_argument);
    }
    SUBCASE("bad config") {
        cfg.rays_per_batch = 0;
        CHECK_THROWS_AS(train(ds, cfg), std::invalid_argument);
    }
}
