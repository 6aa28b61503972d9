// Acceptance suite: one check per shipping criterion, each printed as a
// PASS/FAIL line. Pipeline criteria drive the installed CLI binary end to
// end; numeric criteria run in-process against closed forms and independent
// reference implementations.
//
// Usage: lumen_acceptance [--only N] [--work DIR] [--threads N]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lumen/camera.hpp"
#include "lumen/dataset.hpp"
#include "lumen/field.hpp"
#include "lumen/metrics.hpp"
#include "lumen/parallel.hpp"
#include "lumen/pfm.hpp"
#include "lumen/plenoctree.hpp"
#include "lumen/raymarch.hpp"
#include "lumen/renderer.hpp"
#include "lumen/toyfields.hpp"
#include "lumen/training.hpp"
#include "support/gradcheck.hpp"
#include "support/reference.hpp"

#ifndef LUMEN_CLI_PATH
#define LUMEN_CLI_PATH "lumen"
#endif

namespace fs = std::filesystem;
using namespace lumen;
using Clock = std::chrono::steady_clock;

namespace {

struct Context {
    fs::path work = "acceptance-work";
    int threads = 0;
    int only = 0; // 0 = all
    std::string cli = LUMEN_CLI_PATH;

    // Shared pipeline artifacts (criterion 5 feeds 6, 7, 10).
    fs::path dataset, ablation_dataset;
};

struct Check {
    bool pass = true;
    std::vector<std::string> notes;

    void require(bool ok, const std::string& what) {
        if (!ok) pass = false;
        notes.push_back(std::string(ok ? "ok:   " : "FAIL: ") + what);
    }
    void note(const std::string& what) { notes.push_back("      " + what); }
};

int run_cli(const Context& ctx, const std::string& args, const std::string& log_name) {
    fs::create_directories(ctx.work);
    std::string log = (ctx.work / log_name).string();
    std::string cmd = ctx.cli + " " + args + " >>" + log + " 2>&1";
    return std::system(cmd.c_str());
}

// Reads the "mean" row of an eval CSV: psnr, ssim, rmse, alpha_rmse.
struct EvalMean {
    double psnr = 0, ssim = 0, rmse = 0, alpha_rmse = 0;
};

EvalMean read_eval_mean(const fs::path& csv) {
    std::ifstream is(csv);
    if (!is) throw std::runtime_error("missing eval csv: " + csv.string());
    std::string line;
    EvalMean m;
    bool found = false;
    while (std::getline(is, line)) {
        if (line.rfind("mean,", 0) != 0) continue;
        std::istringstream ls(line.substr(5));
        std::string tok;
        double vals[4] = {0, 0, 0, 0};
        for (double& v : vals) {
            if (!std::getline(ls, tok, ',')) break;
            v = std::strtod(tok.c_str(), nullptr);
        }
        m = {vals[0], vals[1], vals[2], vals[3]};
        found = true;
    }
    if (!found) throw std::runtime_error("no mean row in " + csv.string());
    return m;
}

Ray random_box_ray(Pcg32& rng, const Aabb& box, double orbit_scale = 2.5) {
    double z = 2.0 * rng.next_double() - 1.0;
    double phi = 2.0 * M_PI * rng.next_double();
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    Vec3 origin = box.center() +
                  Vec3{r * std::cos(phi), r * std::sin(phi), z} *
                      (orbit_scale * max_component(box.extent()));
    Vec3 jitter{(rng.next_double() - 0.5) * box.extent().x,
                (rng.next_double() - 0.5) * box.extent().y,
                (rng.next_double() - 0.5) * box.extent().z};
    return Ray{origin, normalize(box.center() + jitter * 0.9 - origin)};
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, v);
    return buf;
}

// ---------------------------------------------------------------------------
// 1. Closed-form quadrature of the homogeneous medium.
// ---------------------------------------------------------------------------
struct UniformField {
    double sigma;
    void sample_at(const Vec3&, GridSample& s) const {
        s = GridSample{};
        s.inside = true;
        s.sigma = sigma;
    }
    int l_max() const { return 0; }
};

Check criterion_1(Context&) {
    Check c;
    Ray ray{{0, 0, 0}, {0, 0, 1}, 0.0, 1.0};
    UniformField one{1.0};
    auto lin = march(one, ray, TransmittanceModel::Linear,
                     Activation::extended_sigmoid(4.0), 4096);
    c.require(std::abs(lin.radiance.x - 1.0) <= 1e-3,
              "linear radiance " + fmt("%.6f", lin.radiance.x) + " within 1e-3 of 1.0");
    c.require(std::abs(lin.alpha - 1.0) <= 1e-3,
              "linear alpha " + fmt("%.6f", lin.alpha) + " within 1e-3 of 1.0");
    UniformField ln2{std::log(2.0)};
    auto expo = march(ln2, ray, TransmittanceModel::Exponential,
                      Activation::extended_sigmoid(2.0), 4096);
    c.require(std::abs(expo.radiance.x - 0.5) <= 1e-3,
              "exponential radiance " + fmt("%.6f", expo.radiance.x) + " within 1e-3 of 0.5");
    c.require(std::abs(expo.alpha - 0.5) <= 1e-3,
              "exponential alpha " + fmt("%.6f", expo.alpha) + " within 1e-3 of 0.5");
    return c;
}

// ---------------------------------------------------------------------------
// 2. Analytic gradients vs central finite differences.
// ---------------------------------------------------------------------------
Check criterion_2(Context& ctx) {
    Check c;
    std::size_t considered = 0, within = 0;
    double worst_fraction = 1.0;
    for (auto model : {TransmittanceModel::Linear, TransmittanceModel::Exponential}) {
        for (int k = 0; k < 10; ++k) {
            uint64_t seed = 9000 + k + (model == TransmittanceModel::Exponential ? 100 : 0);
            TrainConfig tcfg;
            tcfg.n_coarse = 16;
            tcfg.n_fine = 16;
            tcfg.act = Activation::extended_sigmoid(4.0);
            tcfg.model = model;
            tcfg.seed = seed;
            tcfg.threads = ctx.threads;
            LossConfig cfg;
            cfg.lambda = 4.0;
            auto grid = testing::random_train_grid(4, 2, seed);
            auto batch = testing::random_train_batch(8, cfg.lambda, seed * 13 + 5);
            auto stats = testing::gradient_check(grid, batch, cfg, tcfg, 1e-4, 1e-4, 1e-8);
            considered += stats.considered;
            within += stats.within_tol;
            worst_fraction = std::min(worst_fraction, stats.pass_fraction());
        }
    }
    double fraction = considered ? static_cast<double>(within) / considered : 0.0;
    c.note("instances: 20 (10 linear, 10 exponential), parameters checked: " +
           std::to_string(considered));
    c.require(fraction >= 0.99, "agreement fraction " + fmt("%.5f", fraction) + " >= 0.99");
    c.note("worst per-instance fraction " + fmt("%.5f", worst_fraction));
    return c;
}

// ---------------------------------------------------------------------------
// 3. Octree traversal vs constant-interpolation grid marching.
// ---------------------------------------------------------------------------
Check criterion_3(Context&) {
    Check c;
    RadianceFieldGrid grid(16, 16, 16, Aabb{{-1, -1, -1}, {1, 1, 1}}, 1);
    Pcg32 init(2024);
    for (auto& v : grid.density_logits())
        v = init.next_double() < 0.4 ? softplus_inverse(0.2 + 3.0 * init.next_double())
                                     : softplus_inverse(1e-4);
    for (auto& v : grid.sh_logits()) v = (init.next_double() - 0.5) * 2.0;

    GridView view{&grid, GridInterp::Constant};
    auto tree = Plenoctree::extract(view, ExtractionConfig{0.0, 64, 4});
    auto act = Activation::extended_sigmoid(4.0);

    double worst = 0.0;
    Pcg32 rng(555);
    for (auto model : {TransmittanceModel::Linear, TransmittanceModel::Exponential}) {
        for (int i = 0; i < 10000; ++i) {
            Ray ray = random_box_ray(rng, grid.bbox());
            auto got = traverse(tree, ray, act, model);
            auto want = testing::lattice_reference_march(grid, ray, act, model);
            worst = std::max({worst, std::abs(got.radiance.x - want.radiance.x),
                              std::abs(got.radiance.y - want.radiance.y),
                              std::abs(got.radiance.z - want.radiance.z),
                              std::abs(got.alpha - want.alpha)});
        }
    }
    c.require(worst < 1e-6,
              "worst per-channel deviation " + fmt("%.3g", worst) + " < 1e-6 over 2x10^4 rays");
    return c;
}

// ---------------------------------------------------------------------------
// 4. Render-time thresholds: fidelity and leaf-visit reduction.
// ---------------------------------------------------------------------------
Check criterion_4(Context& ctx) {
    Check c;
    auto toy = make_toy_luminaire("band");
    auto tree = Plenoctree::extract(toy, ExtractionConfig{0.01, 32, 6}, ctx.threads);
    auto act = toy.activation();

    double diff2 = 0.0, ref2 = 0.0;
    long visits_full = 0, visits_thresh = 0;
    double max_rel = 0.0;
    Pcg32 rng(808);
    const int n_rays = 10000;
    for (int i = 0; i < n_rays; ++i) {
        Ray ray = random_box_ray(rng, tree.bbox());
        auto full = traverse(tree, ray, act, TransmittanceModel::Linear, 0.0, 1.0);
        auto fast = traverse(tree, ray, act, TransmittanceModel::Linear, 0.1, 0.9);
        visits_full += full.leaves_touched;
        visits_thresh += fast.leaves_touched;
        Vec3 d = full.radiance - fast.radiance;
        diff2 += dot(d, d);
        ref2 += dot(full.radiance, full.radiance);
        double mag = length(full.radiance);
        if (mag > 1e-3) max_rel = std::max(max_rel, length(d) / mag);
    }
    double rel = std::sqrt(diff2 / std::max(ref2, 1e-30));
    double reduction = static_cast<double>(visits_full) / std::max<long>(visits_thresh, 1);
    c.require(rel < 0.01, "ensemble relative radiance deviation " + fmt("%.4f%%", rel * 100) +
                              " < 1% (sigma_min=0.1, alpha_max=0.9)");
    c.note("max single-ray relative deviation " + fmt("%.4f", max_rel));
    c.require(reduction >= 2.0,
              "mean leaf visits drop " + fmt("%.2f", reduction) + "x >= 2x");
    return c;
}

// ---------------------------------------------------------------------------
// 5. End-to-end toy pipeline through the CLI.
// ---------------------------------------------------------------------------
Check criterion_5(Context& ctx) {
    Check c;
    auto t0 = Clock::now();
    fs::path ds = ctx.work / "band-dataset";
    fs::path grid = ctx.work / "band.lfg";
    fs::path tree = ctx.work / "band.oct";
    fs::path pred = ctx.work / "band-pred";
    fs::path csv = ctx.work / "band-eval.csv";

    std::string threads = " --threads " + std::to_string(resolve_thread_count(ctx.threads));
    c.require(run_cli(ctx,
                      "gen-dataset --field band --out " + ds.string() +
                          " --n-views 32 --n-test 8 --res 128 --gt-samples 2048 --force" +
                          threads,
                      "c5.log") == 0,
              "gen-dataset (32 train + 8 test views, 128^2, L_max 10)");
    // 20k iterations is a ~50x compressed version of the reference schedule;
    // the learning rate is scaled up accordingly so the optimizer can cover
    // the same parameter distance.
    c.require(run_cli(ctx,
                      "fit --dataset " + ds.string() + " --out " + grid.string() +
                          " --res 32 --lmax 2 --iters 20000 --seed 1 --lr-start 2e-2 "
                          "--lr-end 2e-4 --log " +
                          (ctx.work / "band-history.csv").string() + threads,
                      "c5.log") == 0,
              "fit (32^3 grid, l_max 2, 20k iterations)");
    c.require(run_cli(ctx, "extract --grid " + grid.string() + " --out " + tree.string() +
                               " --depth 5" + threads,
                      "c5.log") == 0,
              "extract (depth-5 plenoctree)");
    c.require(run_cli(ctx,
                      "render --octree " + tree.string() + " --poses " + ds.string() +
                          " --split test --out " + pred.string() + threads,
                      "c5.log") == 0,
              "render test views from the octree");
    c.require(run_cli(ctx,
                      "eval --pred-dir " + pred.string() + " --gt-dir " + ds.string() +
                          " --split test --csv " + csv.string(),
                      "c5.log") == 0,
              "eval");
    if (!c.pass) return c;

    auto mean = read_eval_mean(csv);
    c.require(mean.psnr >= 30.0, "test PSNR " + fmt("%.3f", mean.psnr) + " dB >= 30 dB");
    c.require(mean.alpha_rmse <= 0.04,
              "test alpha RMSE " + fmt("%.4f", mean.alpha_rmse) + " <= 0.04");

    // Optimization progress: total loss after 2000 iterations is well under
    // a tenth of the starting loss.
    {
        std::ifstream hist(ctx.work / "band-history.csv");
        std::string line;
        std::getline(hist, line); // header
        double first = 0.0, at2000 = 0.0;
        while (std::getline(hist, line)) {
            std::istringstream ls(line);
            std::string tok;
            std::getline(ls, tok, ',');
            int iter = std::atoi(tok.c_str());
            double vals[5];
            for (double& v : vals) {
                std::getline(ls, tok, ',');
                v = std::strtod(tok.c_str(), nullptr);
            }
            if (iter == 0) first = vals[3];
            if (iter == 2000) at2000 = vals[3];
        }
        c.require(first > 0.0 && at2000 < 0.1 * first,
                  "loss after 2000 iterations " + fmt("%.4g", at2000) + " < 10% of start " +
                      fmt("%.4g", first));
    }
    double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    int cores = static_cast<int>(std::thread::hardware_concurrency());
    if (cores >= 8) {
        c.require(secs <= 1200.0, "runtime " + fmt("%.0f", secs) + "s <= 1200s on 8+ cores");
    } else {
        c.note("runtime " + fmt("%.0f", secs) + "s (budget is 1200s on 8 cores; this host has " +
               std::to_string(cores) + ")");
    }
    ctx.dataset = ds;
    return c;
}

// Shared scaled-down ablation run: fit + extract + render + eval, returning
// the eval means. Reuses the criterion-5 dataset unless one is given.
EvalMean ablation_run(Context& ctx, Check& c, const std::string& tag,
                      const std::string& fit_flags, const std::string& render_flags,
                      fs::path ds = {}) {
    if (ds.empty()) ds = ctx.dataset;
    fs::path grid = ctx.work / (tag + ".lfg");
    fs::path tree = ctx.work / (tag + ".oct");
    fs::path pred = ctx.work / (tag + "-pred");
    fs::path csv = ctx.work / (tag + "-eval.csv");
    std::string threads = " --threads " + std::to_string(resolve_thread_count(ctx.threads));
    std::string log = "ablation-" + tag + ".log";
    c.require(run_cli(ctx,
                      "fit --dataset " + ds.string() + " --out " + grid.string() +
                          " --res 32 --iters 4000 --seed 1 --lr-start 2e-2 --lr-end 2e-4 " +
                          fit_flags + threads,
                      log) == 0,
              tag + ": fit");
    c.require(run_cli(ctx, "extract --grid " + grid.string() + " --out " + tree.string() +
                               " --depth 5" + threads,
                      log) == 0,
              tag + ": extract");
    c.require(run_cli(ctx,
                      "render --octree " + tree.string() + " --poses " + ds.string() +
                          " --split test --out " + pred.string() + " " + render_flags + threads,
                      log) == 0,
              tag + ": render");
    c.require(run_cli(ctx,
                      "eval --pred-dir " + pred.string() + " --gt-dir " + ds.string() +
                          " --split test --csv " + csv.string(),
                      log) == 0,
              tag + ": eval");
    return c.pass ? read_eval_mean(csv) : EvalMean{};
}

// ---------------------------------------------------------------------------
// 6. Loss ablation ordering: plain MSE vs +regularizer vs +alpha loss.
// ---------------------------------------------------------------------------
Check criterion_6(Context& ctx) {
    Check c;
    if (ctx.dataset.empty()) {
        c.require(false, "criterion 5 dataset unavailable");
        return c;
    }
    // The MSE baseline trains and decodes with the plain [0,1] sigmoid, so
    // its renders must use the same activation.
    auto mse = ablation_run(ctx, c, "loss-mse", "--lmax 2 --loss mse",
                            "--activation extended-sigmoid:1");
    auto reg = ablation_run(ctx, c, "loss-reg", "--lmax 2 --loss reg", "");
    auto full = ablation_run(ctx, c, "loss-reg-alpha", "--lmax 2 --loss reg-alpha", "");
    if (!c.pass) return c;
    c.note("PSNR: mse " + fmt("%.3f", mse.psnr) + ", reg " + fmt("%.3f", reg.psnr) +
           ", reg+alpha " + fmt("%.3f", full.psnr));
    c.note("alpha RMSE: mse " + fmt("%.4f", mse.alpha_rmse) + ", reg " +
           fmt("%.4f", reg.alpha_rmse) + ", reg+alpha " + fmt("%.4f", full.alpha_rmse));
    c.require(full.alpha_rmse < reg.alpha_rmse,
              "alpha supervision strictly improves alpha RMSE");
    c.require(reg.psnr > mse.psnr, "HDR regularizer strictly improves emission PSNR");
    return c;
}

// ---------------------------------------------------------------------------
// 7. Transmittance model ablation: linear vs exponential.
// ---------------------------------------------------------------------------
Check criterion_7(Context& ctx) {
    Check c;
    if (ctx.dataset.empty()) {
        c.require(false, "criterion 5 dataset unavailable");
        return c;
    }
    auto lin = ablation_run(ctx, c, "model-linear", "--lmax 2 --transmittance linear",
                            "--transmittance linear");
    auto expo = ablation_run(ctx, c, "model-exp", "--lmax 2 --transmittance exp",
                             "--transmittance exp");
    if (!c.pass) return c;
    c.note("PSNR: linear " + fmt("%.3f", lin.psnr) + ", exponential " + fmt("%.3f", expo.psnr) +
           (lin.psnr >= expo.psnr ? " (linear ahead, as expected for mostly opaque media)"
                                  : " (exponential ahead at this scale)"));
    c.require(lin.psnr >= expo.psnr - 0.1,
              "linear PSNR within the -0.1 dB guard of exponential");
    return c;
}

// ---------------------------------------------------------------------------
// 8. Renderer oracle: analytic sphere-source irradiance and MC error decay.
// ---------------------------------------------------------------------------
Check criterion_8(Context& ctx) {
    Check c;
    auto toy = make_toy_luminaire("ball");
    Scene scene;
    Surface floor;
    floor.kind = Surface::Kind::Plane;
    floor.point = {0, 0, -2};
    floor.normal = {0, 0, 1};
    floor.material.albedo = {1, 1, 1};
    scene.surfaces.push_back(floor);
    SceneLuminaire lum;
    lum.tree = Plenoctree::extract(toy, ExtractionConfig{0.01, 16, 6}, ctx.threads);
    lum.proxy = Proxy::make_sphere({0, 0, 0}, 1.0);
    lum.act = toy.activation();
    lum.sigma_min = 0.0;
    lum.alpha_max = 1.0;
    scene.luminaires.push_back(lum);
    scene.camera = CameraPose::perspective({0, -6, 0}, look_at({0, -6, 0}), 8, 8, 50, 36);

    const Vec3 x{0, 0, -2}, n{0, 0, 1};
    const Material white{{1, 1, 1}};
    auto estimate = [&](int samples, uint64_t seed) {
        Pcg32 rng = keyed_rng(4242, seed);
        double acc = 0.0;
        for (int i = 0; i < samples; ++i) acc += estimate_direct(scene, x, n, white, rng).x;
        return acc / samples;
    };

    // Mean over independent 16k-sample estimates.
    double grand = 0.0;
    const int kSeeds = 16;
    for (int s = 0; s < kSeeds; ++s) grand += estimate(16384, s);
    grand /= kSeeds;
    c.require(std::abs(grand - 0.25) <= 0.02 * 0.25,
              "16k-sample reflected radiance " + fmt("%.5f", grand) + " within 2% of 0.25");

    // RMS error across trials at each spp; the decay should track spp^-1/2.
    const int spps[4] = {256, 1024, 4096, 16384};
    double logx[4], logy[4];
    for (int i = 0; i < 4; ++i) {
        const int trials = 48;
        double se2 = 0.0;
        for (int t = 0; t < trials; ++t) {
            double v = estimate(spps[i], 1000 + i * trials + t);
            se2 += (v - 0.25) * (v - 0.25);
        }
        double rms = std::sqrt(se2 / trials);
        logx[i] = std::log(static_cast<double>(spps[i]));
        logy[i] = std::log(rms);
        c.note("spp " + std::to_string(spps[i]) + ": rms error " + fmt("%.5f", rms));
    }
    double mx = 0, my = 0;
    for (int i = 0; i < 4; ++i) {
        mx += logx[i] / 4;
        my += logy[i] / 4;
    }
    double num = 0, den = 0;
    for (int i = 0; i < 4; ++i) {
        num += (logx[i] - mx) * (logy[i] - my);
        den += (logx[i] - mx) * (logx[i] - mx);
    }
    double slope = num / den;
    c.require(slope > -0.65 && slope < -0.35,
              "log-log error slope " + fmt("%.3f", slope) + " consistent with O(spp^-1/2)");
    return c;
}

// ---------------------------------------------------------------------------
// 9. Compositing identities at the proxy.
// ---------------------------------------------------------------------------
Check criterion_9(Context&) {
    Check c;
    // Empty octree: the proxy must be exactly invisible.
    Scene with;
    with.background = {0.25, 0.5, 0.75};
    with.camera = CameraPose::perspective({0, -4, 0}, look_at({0, -4, 0}), 24, 24, 50, 36);
    SceneLuminaire empty;
    empty.proxy = Proxy::make_sphere({0, 0, 0}, 1.0);
    empty.act = Activation::extended_sigmoid(4.0);
    with.luminaires.push_back(empty);
    with.estimator.spp = 4;
    with.estimator.seed = 17;
    Scene without = with;
    without.luminaires.clear();
    auto a = render(with, 2);
    auto b = render(without, 2);
    c.require(a.image.data == b.image.data,
              "empty-octree proxy renders bitwise equal to no proxy at all");

    // Fully opaque chord: the pixel is exactly the chord emission.
    auto toy = make_toy_luminaire("ball");
    Scene opaque;
    opaque.background = {9, 9, 9};
    opaque.camera = CameraPose::perspective({0, -4, 0}, look_at({0, -4, 0}), 9, 9, 50, 36);
    SceneLuminaire ball;
    ball.tree = Plenoctree::extract(toy, ExtractionConfig{0.01, 8, 5});
    ball.proxy = Proxy::make_sphere({0, 0, 0}, 1.0);
    ball.act = toy.activation();
    ball.sigma_min = 0.0;
    ball.alpha_max = 1.0;
    opaque.luminaires.push_back(ball);
    opaque.estimator.spp = 1;
    auto img = render(opaque, 2);
    Ray center = pixel_ray(opaque.camera, 4, 4);
    auto span = intersect_proxy(center, ball.proxy);
    Ray chord = center;
    chord.t_near = span->first;
    chord.t_far = span->second;
    auto mr = traverse(ball.tree, chord, ball.act, ball.model, 0.0, 1.0);
    c.require(mr.alpha == 1.0, "center chord is fully opaque");
    c.require(img.image.at(4, 4, 0) == static_cast<float>(mr.radiance.x) &&
                  img.image.at(4, 4, 1) == static_cast<float>(mr.radiance.y) &&
                  img.image.at(4, 4, 2) == static_cast<float>(mr.radiance.z),
              "opaque pixel equals the chord emission exactly");
    return c;
}

// ---------------------------------------------------------------------------
// 10. SH order sweep: quality flat from l_max 2 to 4, payload exactly 25/9.
// ---------------------------------------------------------------------------
Check criterion_10(Context& ctx) {
    Check c;
    // The sweep isolates angular capacity, so it needs dense view coverage:
    // a 25-coefficient directional basis is underdetermined by 32 view
    // directions and overfits them instead of exposing the capacity limit.
    fs::path ds = ctx.work / "band-dense-dataset";
    if (!fs::exists(ds / "manifest.txt")) {
        std::string threads =
            " --threads " + std::to_string(resolve_thread_count(ctx.threads));
        c.require(run_cli(ctx,
                          "gen-dataset --field band --out " + ds.string() +
                              " --n-views 96 --n-test 8 --res 128 --gt-samples 2048 --force" +
                              threads,
                          "c10.log") == 0,
                  "gen-dataset (96 train views for the angular sweep)");
        if (!c.pass) return c;
    }
    auto l2 = ablation_run(ctx, c, "sh-l2", "--lmax 2", "", ds);
    auto l4 = ablation_run(ctx, c, "sh-l4", "--lmax 4", "", ds);
    if (!c.pass) return c;
    c.note("PSNR: l_max=2 " + fmt("%.3f", l2.psnr) + ", l_max=4 " + fmt("%.3f", l4.psnr));
    c.require(std::abs(l2.psnr - l4.psnr) < 0.5, "PSNR difference " +
                                                     fmt("%.3f", std::abs(l2.psnr - l4.psnr)) +
                                                     " dB < 0.5 dB");
    auto tree2 = Plenoctree::load((ctx.work / "sh-l2.oct").string());
    auto tree4 = Plenoctree::load((ctx.work / "sh-l4.oct").string());
    std::size_t payload2 = tree2.leaf_stride();
    std::size_t payload4 = tree4.leaf_stride();
    c.require(payload4 * 9 == payload2 * 25,
              "leaf payload " + std::to_string(payload2) + " -> " + std::to_string(payload4) +
                  " coefficients grows by exactly 25/9");
    return c;
}

} // namespace

int main(int argc, char** argv) {
    Context ctx;
    for (int i = 1; i < argc; ++i) {
        std::string a = argv[i];
        if (a == "--only" && i + 1 < argc) ctx.only = std::atoi(argv[++i]);
        else if (a == "--work" && i + 1 < argc) ctx.work = argv[++i];
        else if (a == "--threads" && i + 1 < argc) ctx.threads = std::atoi(argv[++i]);
        else if (a == "--cli" && i + 1 < argc) ctx.cli = argv[++i];
        else {
            std::fprintf(stderr, "usage: %s [--only N] [--work DIR] [--threads N] [--cli PATH]\n",
                         argv[0]);
            return 2;
        }
    }
    fs::create_directories(ctx.work);

    struct Entry {
        int id;
        const char* name;
        std::function<Check(Context&)> fn;
    };
    std::vector<Entry> entries = {
        {1, "closed-form quadrature", criterion_1},
        {2, "gradient suite vs finite differences", criterion_2},
        {3, "octree-grid equivalence", criterion_3},
        {4, "threshold fidelity and visit reduction", criterion_4},
        {5, "end-to-end toy pipeline", criterion_5},
        {6, "loss ablation ordering", criterion_6},
        {7, "transmittance model ordering", criterion_7},
        {8, "renderer oracle and error decay", criterion_8},
        {9, "compositing identities", criterion_9},
        {10, "SH level sweep", criterion_10},
    };

    // Criteria 6, 7 and 10 reuse the dataset criterion 5 generates; when run
    // in isolation they regenerate it.
    int failures = 0, ran = 0;
    for (auto& e : entries) {
        if (ctx.only != 0 && e.id != ctx.only) continue;
        if ((e.id == 6 || e.id == 7) && ctx.dataset.empty()) {
            fs::path ds = ctx.work / "band-dataset";
            if (!fs::exists(ds / "manifest.txt")) {
                std::string threads =
                    " --threads " + std::to_string(resolve_thread_count(ctx.threads));
                run_cli(ctx,
                        "gen-dataset --field band --out " + ds.string() +
                            " --n-views 32 --n-test 8 --res 128 --gt-samples 2048 --force" +
                            threads,
                        "dataset.log");
            }
            ctx.dataset = ds;
        }
        auto t0 = Clock::now();
        Check c = e.fn(ctx);
        double secs = std::chrono::duration<double>(Clock::now() - t0).count();
        std::printf("[%2d] %-42s %s (%.1fs)\n", e.id, e.name, c.pass ? "PASS" : "FAIL", secs);
        for (const auto& note : c.notes) std::printf("       %s\n", note.c_str());
        std::fflush(stdout);
        ++ran;
        if (!c.pass) ++failures;
    }
    std::printf("acceptance: %d/%d criteria passed\n", ran - failures, ran);
    return failures;
}
