// lumen: fit SH-encoded volumetric luminaire fields from HDR multi-view
// datasets, distill them into plenoctrees, and render scenes that use the
// octrees as emitters.
//
//   gen-dataset  render ground-truth views of a synthetic field
//   fit          optimize a voxel grid against a dataset
//   extract      distill a grid into a plenoctree
//   render       render a scene file, or dataset poses from an octree
//   eval         PSNR/SSIM/RMSE between two view directories
//   bench        traversal statistics for an octree

#include <CLI11.hpp>

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <string>

#include "lumen/camera.hpp"
#include "lumen/dataset.hpp"
#include "lumen/field.hpp"
#include "lumen/metrics.hpp"
#include "lumen/parallel.hpp"
#include "lumen/pfm.hpp"
#include "lumen/plenoctree.hpp"
#include "lumen/raymarch.hpp"
#include "lumen/renderer.hpp"
#include "lumen/scene.hpp"
#include "lumen/toyfields.hpp"
#include "lumen/training.hpp"

namespace fs = std::filesystem;
using namespace lumen;

namespace {

TransmittanceModel parse_model_flag(const std::string& s) {
    if (s == "linear") return TransmittanceModel::Linear;
    if (s == "exp" || s == "exponential") return TransmittanceModel::Exponential;
    throw std::runtime_error("unknown transmittance model: " + s);
}

Split parse_split_flag(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    throw std::runtime_error("unknown split: " + s);
}

// A queryable field to render ground truth from: analytic toy, fitted grid,
// or extracted octree.
struct FieldSource {
    enum class Kind { Analytic, Grid, Octree } kind = Kind::Analytic;
    AnalyticLuminaire toy;
    RadianceFieldGrid grid;
    Plenoctree tree;
    Activation act = Activation::extended_sigmoid(10.0);
    double l_max_radiance = 10.0;

    Aabb bounds() const {
        switch (kind) {
        case Kind::Analytic: return toy.bounds();
        case Kind::Grid: return grid.bbox();
        case Kind::Octree: return tree.bbox();
        }
        return {};
    }
};

FieldSource open_field_source(const std::string& spec, const std::string& activation_spec) {
    FieldSource src;
    if (spec == "sphere" || spec == "band" || spec == "bulbs" || spec == "ball") {
        src.kind = FieldSource::Kind::Analytic;
        src.toy = make_toy_luminaire(spec);
        src.act = src.toy.activation();
        src.l_max_radiance = src.toy.act_max;
        return src;
    }
    src.act = parse_activation_spec(activation_spec);
    src.l_max_radiance =
        src.act.type == ActivationType::ExtendedSigmoid ? src.act.radiance_max : 10.0;
    if (spec.size() > 4 && spec.substr(spec.size() - 4) == ".oct") {
        src.kind = FieldSource::Kind::Octree;
        src.tree = Plenoctree::load(spec);
    } else {
        src.kind = FieldSource::Kind::Grid;
        src.grid = RadianceFieldGrid::load(spec);
    }
    return src;
}

// Ground-truth render of one view by dense marching (or exact traversal for
// octree sources).
void render_field_view(const FieldSource& src, const CameraPose& cam, TransmittanceModel model,
                       int gt_samples, double sigma_min, double alpha_max, int threads,
                       ImageRgb& rgb, ImageGray& alpha) {
    rgb = ImageRgb(cam.width, cam.height);
    alpha = ImageGray(cam.width, cam.height);
    Aabb box = src.bounds();
    parallel_for(static_cast<std::size_t>(cam.width) * cam.height, threads, [&](std::size_t i) {
        int x = static_cast<int>(i % cam.width), y = static_cast<int>(i / cam.width);
        Ray ray = pixel_ray(cam, x, y);
        MarchResult mr;
        if (src.kind == FieldSource::Kind::Octree) {
            mr = traverse(src.tree, ray, src.act, model, sigma_min, alpha_max);
        } else {
            auto clip = intersect_box(ray, box);
            if (clip) {
                ray.t_near = clip->first;
                ray.t_far = clip->second;
                if (src.kind == FieldSource::Kind::Analytic)
                    mr = march(src.toy, ray, model, src.act, gt_samples, false, nullptr,
                               sigma_min, alpha_max);
                else
                    mr = march(GridView{&src.grid, GridInterp::Trilinear}, ray, model, src.act,
                               gt_samples, false, nullptr, sigma_min, alpha_max);
            }
        }
        rgb.at(x, y, 0) = static_cast<float>(mr.radiance.x);
        rgb.at(x, y, 1) = static_cast<float>(mr.radiance.y);
        rgb.at(x, y, 2) = static_cast<float>(mr.radiance.z);
        alpha.at(x, y) = static_cast<float>(mr.alpha);
    });
}

// ----------------------------- gen-dataset --------------------------------

struct GenDatasetArgs {
    std::string field, out, camera = "orthographic", activation = "extended-sigmoid:10";
    std::string model = "linear";
    int n_views = 32, n_val = 0, n_test = 8, res = 128, gt_samples = 2048, threads = 0;
    double radius = 4.0, ortho_width = 0.0, focal = 50.0, sensor = 36.0;
    bool force = false;
};

int run_gen_dataset(const GenDatasetArgs& a) {
    if (fs::exists(fs::path(a.out) / "manifest.txt") && !a.force)
        throw std::runtime_error("output dataset exists (use --force to overwrite): " + a.out);
    auto src = open_field_source(a.field, a.activation);
    TransmittanceModel model = parse_model_flag(a.model);

    Aabb box = src.bounds();
    double bound_radius = length(box.extent()) * 0.5;
    DatasetManifest m;
    m.camera_kind = a.camera == "perspective" ? CameraPose::Kind::Perspective
                                              : CameraPose::Kind::Orthographic;
    m.res_x = m.res_y = a.res;
    m.ortho_width = a.ortho_width > 0.0 ? a.ortho_width : max_component(box.extent());
    m.focal_mm = a.focal;
    m.sensor_mm = a.sensor;
    m.radius = a.radius;
    m.near = std::max(0.0, a.radius - bound_radius);
    m.far = a.radius + bound_radius;
    m.l_max_radiance = src.l_max_radiance;
    m.bbox = box;
    m.n_train = a.n_views;
    m.n_val = a.n_val;
    m.n_test = a.n_test;

    fs::create_directories(a.out);
    save_manifest(a.out, m);

    int total = a.n_views + a.n_val + a.n_test;
    auto positions = halton_sphere_cameras(total, a.radius);
    int threads = resolve_thread_count(a.threads);
    ImageRgb rgb;
    ImageGray alpha;
    int cursor = 0;
    for (Split split : {Split::Train, Split::Val, Split::Test}) {
        int count = m.count(split);
        for (int i = 0; i < count; ++i, ++cursor) {
            auto cam = dataset_camera(m, look_at(positions[cursor]), positions[cursor]);
            render_field_view(src, cam, model, a.gt_samples, 0.0, 1.0, threads, rgb, alpha);
            save_view(a.out, split, i, cam, rgb, alpha);
        }
    }
    std::fprintf(stderr, "wrote %d views to %s\n", total, a.out.c_str());
    return 0;
}

// --------------------------------- fit ------------------------------------

struct FitArgs {
    std::string dataset, out, loss = "reg-alpha", transmittance = "linear";
    std::string activation; // empty = extended sigmoid at the manifest L_max
    std::string log, checkpoint, resume;
    int res = 32, lmax = 2, iters = 20000, batch = 1024, n_coarse = 64, n_fine = 128;
    int threads = 0, progress_every = 1000;
    double lr_start = 5e-4, lr_end = 5e-6, eps = 0.01;
    uint64_t seed = 1;
    bool grad_through_denominator = false;
};

int run_fit(const FitArgs& a) {
    auto manifest = load_manifest(a.dataset);

    LossConfig cfg;
    cfg.lambda = manifest.l_max_radiance;
    cfg.eps = a.eps;
    cfg.grad_through_denominator = a.grad_through_denominator;
    double act_range = manifest.l_max_radiance;
    if (a.loss == "mse") {
        // Baseline: unregularized MSE with the plain [0,1] sigmoid, i.e. the
        // stock LDR setup. HDR radiance above 1 is unreachable by design.
        cfg.hdr_regularized = false;
        cfg.w_alpha = 0.0;
        act_range = 1.0;
    } else if (a.loss == "reg") {
        cfg.w_alpha = 0.0;
    } else if (a.loss != "reg-alpha") {
        throw std::runtime_error("unknown loss (mse | reg | reg-alpha): " + a.loss);
    }

    TrainConfig tcfg;
    tcfg.batch_rays = a.batch;
    tcfg.n_coarse = a.n_coarse;
    tcfg.n_fine = a.n_fine;
    tcfg.lr_start = a.lr_start;
    tcfg.lr_end = a.lr_end;
    tcfg.iterations = a.iters;
    tcfg.seed = a.seed;
    tcfg.model = parse_model_flag(a.transmittance);
    tcfg.act = a.activation.empty() ? Activation::extended_sigmoid(act_range)
                                    : parse_activation_spec(a.activation);
    tcfg.threads = a.threads;

    RadianceFieldGrid grid(a.res, a.res, a.res, manifest.bbox, a.lmax);
    AdamState adam;
    int start_iteration = 0;
    if (!a.resume.empty()) {
        auto ck = load_checkpoint(a.resume);
        grid = std::move(ck.grid);
        adam = std::move(ck.adam);
        start_iteration = ck.iteration;
    } else {
        grid = RadianceFieldGrid::init(a.res, a.res, a.res, manifest.bbox, a.lmax,
                                       RadianceFieldGrid::InitZeros{});
    }

    DatasetRaySupplier supplier(a.dataset, manifest, a.seed);
    auto t0 = std::chrono::steady_clock::now();
    auto callback = [&](int iter, const LossTerms& terms, double lr) {
        if (a.progress_every > 0 && (iter % a.progress_every == 0 || iter == a.iters - 1)) {
            double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                              .count();
            std::fprintf(stderr,
                         "iter %6d/%d  total %.5g  coarse %.4g  fine %.4g  alpha %.4g  "
                         "lr %.3g  (%.1fs)\n",
                         iter, a.iters, terms.total, terms.coarse, terms.fine, terms.alpha, lr,
                         secs);
        }
    };
    auto result = fit(supplier, grid, cfg, tcfg, callback, &adam, start_iteration);

    grid.save(a.out);
    if (!a.log.empty()) write_history_csv(a.log, result.history);
    if (!a.checkpoint.empty()) save_checkpoint(a.checkpoint, grid, adam, a.iters);
    std::fprintf(stderr, "wrote %s\n", a.out.c_str());
    return 0;
}

// -------------------------------- extract ---------------------------------

struct ExtractArgs {
    std::string grid, out, interp = "trilinear";
    int depth = 5, refine_samples = 256, threads = 0;
    double prune_sigma = 0.01;
};

int run_extract(const ExtractArgs& a) {
    auto grid = RadianceFieldGrid::load(a.grid);
    GridInterp interp;
    if (a.interp == "trilinear") interp = GridInterp::Trilinear;
    else if (a.interp == "constant") interp = GridInterp::Constant;
    else throw std::runtime_error("unknown interpolation (trilinear | constant): " + a.interp);
    ExtractionConfig cfg{a.prune_sigma, a.refine_samples, a.depth};
    auto tree = Plenoctree::extract(GridView{&grid, interp}, cfg, a.threads);
    tree.save(a.out);
    std::fprintf(stderr, "wrote %s (%zu nodes, %zu leaves)\n", a.out.c_str(), tree.node_count(),
                 tree.leaf_count());
    return 0;
}

// -------------------------------- render ----------------------------------

struct RenderArgs {
    std::string scene, octree, poses, split = "test", out, activation;
    std::string transmittance = "linear";
    int spp = 0, threads = 0;
    long seed = -1;
    double sigma_min = 0.1, alpha_max = 0.9;
};

int run_render(const RenderArgs& a) {
    if (!a.scene.empty()) {
        auto scene = Scene::load(a.scene);
        if (a.spp > 0) scene.estimator.spp = a.spp;
        if (a.seed >= 0) scene.estimator.seed = static_cast<uint64_t>(a.seed);
        auto result = render(scene, a.threads);
        write_pfm(a.out, result.image);
        std::fprintf(stderr, "wrote %s\n", a.out.c_str());
        return 0;
    }
    if (a.octree.empty() || a.poses.empty())
        throw std::runtime_error("render needs either --scene or --octree with --poses");
    auto manifest = load_manifest(a.poses);
    FieldSource src;
    src.kind = FieldSource::Kind::Octree;
    src.tree = Plenoctree::load(a.octree);
    src.act = a.activation.empty()
                  ? Activation::extended_sigmoid(manifest.l_max_radiance)
                  : parse_activation_spec(a.activation);
    TransmittanceModel model = parse_model_flag(a.transmittance);
    Split split = parse_split_flag(a.split);
    int threads = resolve_thread_count(a.threads);

    fs::create_directories(fs::path(a.out) / "rgb");
    fs::create_directories(fs::path(a.out) / "alpha");
    ImageRgb rgb;
    ImageGray alpha;
    using dataset_detail::view_name;
    for (int i = 0; i < manifest.count(split); ++i) {
        Basis3 frame;
        Vec3 position;
        load_pose(a.poses + "/pose/" + view_name(split, i, ".txt"), frame, position);
        auto cam = dataset_camera(manifest, frame, position);
        render_field_view(src, cam, model, 0, a.sigma_min, a.alpha_max, threads, rgb, alpha);
        write_pfm(a.out + "/rgb/" + view_name(split, i, ".pfm"), rgb);
        write_pfm(a.out + "/alpha/" + view_name(split, i, ".pfm"), alpha);
    }
    std::fprintf(stderr, "wrote %d views to %s\n", manifest.count(split), a.out.c_str());
    return 0;
}

// --------------------------------- eval -----------------------------------

struct EvalArgs {
    std::string pred_dir, gt_dir, split = "test", csv;
    double peak = 0.0; // 0 = l_max_radiance from the ground-truth manifest
};

int run_eval(const EvalArgs& a) {
    Split split = parse_split_flag(a.split);
    auto manifest = load_manifest(a.gt_dir);
    double peak = a.peak > 0.0 ? a.peak : manifest.l_max_radiance;
    int count = manifest.count(split);
    if (count == 0) throw std::runtime_error("no views in split: " + a.split);

    std::FILE* csv = nullptr;
    if (!a.csv.empty()) {
        csv = std::fopen(a.csv.c_str(), "w");
        if (!csv) throw std::runtime_error("cannot open for writing: " + a.csv);
        std::fprintf(csv, "view,psnr,ssim,rmse,alpha_rmse\n");
    }

    std::printf("%-10s %10s %10s %12s %12s\n", "view", "psnr", "ssim", "rmse", "alpha_rmse");
    double sum_psnr = 0, sum_ssim = 0, sum_rmse = 0, sum_armse = 0;
    using dataset_detail::view_name;
    for (int i = 0; i < count; ++i) {
        std::string name = view_name(split, i, "");
        auto pred = read_pfm_rgb(a.pred_dir + "/rgb/" + view_name(split, i, ".pfm"));
        auto gt = read_pfm_rgb(a.gt_dir + "/rgb/" + view_name(split, i, ".pfm"));
        double view_psnr = psnr(pred, gt, peak);
        double view_ssim = ssim(pred, gt, peak);
        double view_rmse = rmse(pred, gt);
        double view_armse = 0.0;
        std::string pred_alpha = a.pred_dir + "/alpha/" + view_name(split, i, ".pfm");
        std::string gt_alpha = a.gt_dir + "/alpha/" + view_name(split, i, ".pfm");
        if (fs::exists(pred_alpha) && fs::exists(gt_alpha))
            view_armse = rmse(read_pfm_gray(pred_alpha), read_pfm_gray(gt_alpha));
        std::printf("%-10s %10.4f %10.5f %12.6f %12.6f\n", name.c_str(), view_psnr, view_ssim,
                    view_rmse, view_armse);
        if (csv)
            std::fprintf(csv, "%s,%.17g,%.17g,%.17g,%.17g\n", name.c_str(), view_psnr,
                         view_ssim, view_rmse, view_armse);
        sum_psnr += view_psnr;
        sum_ssim += view_ssim;
        sum_rmse += view_rmse;
        sum_armse += view_armse;
    }
    std::printf("%-10s %10.4f %10.5f %12.6f %12.6f\n", "mean", sum_psnr / count,
                sum_ssim / count, sum_rmse / count, sum_armse / count);
    if (csv) {
        std::fprintf(csv, "mean,%.17g,%.17g,%.17g,%.17g\n", sum_psnr / count, sum_ssim / count,
                      sum_rmse / count, sum_armse / count);
        std::fclose(csv);
    }
    return 0;
}

// --------------------------------- bench ----------------------------------

struct BenchArgs {
    std::string octree, activation = "extended-sigmoid:10", transmittance = "linear";
    long rays = 100000;
    uint64_t seed = 1;
    double sigma_min = 0.1, alpha_max = 0.9;
    int threads = 0;
};

int run_bench(const BenchArgs& a) {
    auto tree = Plenoctree::load(a.octree);
    Activation act = parse_activation_spec(a.activation);
    TransmittanceModel model = parse_model_flag(a.transmittance);
    Aabb box = tree.bbox();
    double orbit = length(box.extent());
    Vec3 center = box.center();

    auto make_ray = [&](uint64_t i) {
        Pcg32 rng = keyed_rng(a.seed, i);
        double z = 2.0 * rng.next_double() - 1.0;
        double phi = 2.0 * M_PI * rng.next_double();
        double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        Vec3 origin = center + Vec3{r * std::cos(phi), r * std::sin(phi), z} * orbit;
        Vec3 jitter{(rng.next_double() - 0.5) * box.extent().x,
                    (rng.next_double() - 0.5) * box.extent().y,
                    (rng.next_double() - 0.5) * box.extent().z};
        return Ray{origin, normalize(center + jitter * 0.8 - origin)};
    };

    auto run_pass = [&](double sigma_min, double alpha_max, const char* label) {
        long touched = 0, integrated = 0, hits = 0;
        auto t0 = std::chrono::steady_clock::now();
        for (long i = 0; i < a.rays; ++i) {
            auto mr = traverse(tree, make_ray(static_cast<uint64_t>(i)), act, model, sigma_min,
                               alpha_max);
            touched += mr.leaves_touched;
            integrated += mr.samples_visited;
            hits += mr.alpha > 0.0 ? 1 : 0;
        }
        double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%-14s rays %ld  rays/sec %.0f  mean-leaves-visited %.3f  "
                    "mean-leaves-integrated %.3f  hit-fraction %.4f\n",
                    label, a.rays, a.rays / secs, static_cast<double>(touched) / a.rays,
                    static_cast<double>(integrated) / a.rays,
                    static_cast<double>(hits) / a.rays);
        return static_cast<double>(touched) / a.rays;
    };
    double with = run_pass(a.sigma_min, a.alpha_max, "thresholded");
    double without = run_pass(0.0, 1.0, "unthresholded");
    std::printf("visit-reduction %.2fx\n", without / std::max(with, 1e-9));
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"SH-encoded volumetric luminaire fields: fit, distill, render"};
    app.require_subcommand(1);
    // Defaults < config file < explicit flags. Config files use one section
    // per subcommand: `lumen --config run.ini fit ...` with `[fit]` keys.
    app.set_config("--config");

    GenDatasetArgs gen;
    auto* cgen = app.add_subcommand("gen-dataset",
                                    "render ground-truth views of a synthetic field");
    cgen->add_option("--field", gen.field,
                     "analytic field (sphere | band | bulbs | ball) or a .lfg/.oct path")
        ->required();
    cgen->add_option("--out", gen.out, "output dataset directory")->required();
    cgen->add_option("--n-views", gen.n_views, "training views");
    cgen->add_option("--n-val", gen.n_val, "validation views");
    cgen->add_option("--n-test", gen.n_test, "test views");
    cgen->add_option("--res", gen.res, "image resolution (square)");
    cgen->add_option("--radius", gen.radius, "camera sphere radius");
    cgen->add_option("--camera", gen.camera, "orthographic | perspective");
    cgen->add_option("--ortho-width", gen.ortho_width, "orthographic film width (0 = auto)");
    cgen->add_option("--focal", gen.focal, "perspective focal length, mm");
    cgen->add_option("--sensor", gen.sensor, "perspective sensor width, mm");
    cgen->add_option("--gt-samples", gen.gt_samples, "quadrature samples per ray");
    cgen->add_option("--model", gen.model, "transmittance model: linear | exp");
    cgen->add_option("--activation", gen.activation,
                     "decode activation for grid/octree fields, e.g. extended-sigmoid:10");
    cgen->add_option("--threads", gen.threads, "worker threads (0 = auto)");
    cgen->add_flag("--force", gen.force, "overwrite an existing dataset");

    FitArgs fit_args;
    auto* cfit = app.add_subcommand("fit", "fit a radiance field grid to a dataset");
    cfit->add_option("--dataset", fit_args.dataset, "dataset directory")->required();
    cfit->add_option("--out", fit_args.out, "output grid path (.lfg)")->required();
    cfit->add_option("--res", fit_args.res, "grid resolution per axis");
    cfit->add_option("--lmax", fit_args.lmax, "SH order (0..4)");
    cfit->add_option("--iters", fit_args.iters, "training iterations");
    cfit->add_option("--seed", fit_args.seed, "RNG seed");
    cfit->add_option("--batch", fit_args.batch, "rays per batch");
    cfit->add_option("--n-coarse", fit_args.n_coarse, "coarse samples per ray");
    cfit->add_option("--n-fine", fit_args.n_fine, "fine resampled positions per ray");
    cfit->add_option("--lr-start", fit_args.lr_start, "initial learning rate");
    cfit->add_option("--lr-end", fit_args.lr_end, "final learning rate");
    cfit->add_option("--eps", fit_args.eps, "HDR loss regularizer epsilon");
    cfit->add_option("--loss", fit_args.loss,
                     "mse (LDR baseline) | reg (HDR regularizer) | reg-alpha (full)");
    cfit->add_option("--transmittance", fit_args.transmittance, "linear | exp");
    cfit->add_option("--activation", fit_args.activation,
                     "override the emission activation (default extended-sigmoid:L_max)");
    cfit->add_option("--log", fit_args.log, "write per-iteration loss history CSV");
    cfit->add_option("--checkpoint", fit_args.checkpoint, "write a final checkpoint");
    cfit->add_option("--resume", fit_args.resume, "resume from a checkpoint");
    cfit->add_option("--threads", fit_args.threads, "worker threads (0 = auto)");
    cfit->add_option("--progress-every", fit_args.progress_every,
                     "progress print period, 0 = quiet");
    cfit->add_flag("--grad-through-denominator", fit_args.grad_through_denominator,
                   "differentiate through the HDR loss denominator");

    ExtractArgs ext;
    auto* cext = app.add_subcommand("extract", "distill a grid into a plenoctree");
    cext->add_option("--grid", ext.grid, "input grid (.lfg)")->required();
    cext->add_option("--out", ext.out, "output octree (.oct)")->required();
    cext->add_option("--depth", ext.depth, "octree depth (leaf grid is 2^depth per axis)");
    cext->add_option("--prune-sigma", ext.prune_sigma, "density pruning threshold");
    cext->add_option("--refine-samples", ext.refine_samples, "payload samples per leaf");
    cext->add_option("--interp", ext.interp, "source interpolation: trilinear | constant");
    cext->add_option("--threads", ext.threads, "worker threads (0 = auto)");

    RenderArgs ren;
    auto* cren = app.add_subcommand("render", "render a scene or dataset poses");
    cren->add_option("--scene", ren.scene, "scene description file");
    cren->add_option("--octree", ren.octree, "octree to render dataset poses from");
    cren->add_option("--poses", ren.poses, "dataset directory providing the poses");
    cren->add_option("--split", ren.split, "train | val | test");
    cren->add_option("--out", ren.out, "output image (.pfm) or view directory")->required();
    cren->add_option("--spp", ren.spp, "samples per pixel override");
    cren->add_option("--seed", ren.seed, "estimator seed override");
    cren->add_option("--activation", ren.activation, "octree decode activation");
    cren->add_option("--transmittance", ren.transmittance, "linear | exp");
    cren->add_option("--sigma-min", ren.sigma_min, "skip leaves below this density");
    cren->add_option("--alpha-max", ren.alpha_max, "early-exit opacity");
    cren->add_option("--threads", ren.threads, "worker threads (0 = auto)");

    EvalArgs ev;
    auto* cev = app.add_subcommand("eval", "compare predicted views against ground truth");
    cev->add_option("--pred-dir", ev.pred_dir, "predicted view directory")->required();
    cev->add_option("--gt-dir", ev.gt_dir, "ground-truth dataset directory")->required();
    cev->add_option("--split", ev.split, "train | val | test");
    cev->add_option("--peak", ev.peak, "PSNR peak (0 = dataset L_max)");
    cev->add_option("--csv", ev.csv, "also write the table as CSV");

    BenchArgs bench;
    auto* cb = app.add_subcommand("bench", "octree traversal statistics");
    cb->add_option("--octree", bench.octree, "octree path")->required();
    cb->add_option("--rays", bench.rays, "number of random rays");
    cb->add_option("--seed", bench.seed, "ray generator seed");
    cb->add_option("--sigma-min", bench.sigma_min, "skip leaves below this density");
    cb->add_option("--alpha-max", bench.alpha_max, "early-exit opacity");
    cb->add_option("--activation", bench.activation, "decode activation");
    cb->add_option("--transmittance", bench.transmittance, "linear | exp");
    cb->add_option("--threads", bench.threads, "worker threads (0 = auto)");

    CLI11_PARSE(app, argc, argv);
    try {
        if (cgen->parsed()) return run_gen_dataset(gen);
        if (cfit->parsed()) return run_fit(fit_args);
        if (cext->parsed()) return run_extract(ext);
        if (cren->parsed()) return run_render(ren);
        if (cev->parsed()) return run_eval(ev);
        if (cb->parsed()) return run_bench(bench);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
