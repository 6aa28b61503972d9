#pragma once

#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <fstream>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "lumen/field.hpp"
#include "lumen/parallel.hpp"
#include "lumen/raymarch.hpp"
#include "lumen/rng.hpp"
#include "lumen/sh.hpp"

namespace lumen {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct LossConfig {
    double lambda = 1.0; // maximum scene radiance of the dataset
    double eps = 0.01;
    bool hdr_regularized = true;          // divide residuals by lambda*pred + eps
    bool grad_through_denominator = false; // default: denominator acts as a weight
    double w_coarse = 1.0, w_fine = 1.0, w_alpha = 1.0;
};

struct TrainConfig {
    int batch_rays = 1024;
    int n_coarse = 64;
    int n_fine = 128;
    double lr_start = 5e-4;
    double lr_end = 5e-6;
    int iterations = 0;
    uint64_t seed = 0;
    TransmittanceModel model = TransmittanceModel::Linear;
    Activation act = Activation::extended_sigmoid(1.0);
    bool stratified_jitter = true;
    int threads = 0;
    double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
};

struct RayBatch {
    std::vector<Ray> rays;
    std::vector<Rgb> gt_radiance;
    std::vector<double> gt_alpha;

    std::size_t size() const { return rays.size(); }
    void clear() {
        rays.clear();
        gt_radiance.clear();
        gt_alpha.clear();
    }
};

struct LossTerms {
    double coarse = 0.0, fine = 0.0, alpha = 0.0, total = 0.0;
};

// ---------------------------------------------------------------------------
// Scalar losses
// ---------------------------------------------------------------------------

// HDR color loss: squared residual divided by the squared Reinhard-style
// denominator built from the *prediction*.
inline double hdr_color_loss(const Rgb& pred, const Rgb& gt, const LossConfig& cfg) {
    double sum = 0.0;
    for (int c = 0; c < 3; ++c) {
        double p = pred[c], g = gt[c];
        double d = cfg.hdr_regularized ? reinhard_weight(p, cfg.lambda, cfg.eps) : 1.0;
        double r = (p - g) / d;
        sum += r * r;
    }
    return sum;
}

inline double alpha_loss(double pred_alpha, double gt_alpha) {
    double d = pred_alpha - gt_alpha;
    return d * d;
}

// i/iterations exponent of the geometric schedule; endpoints are exact.
inline double learning_rate(const TrainConfig& cfg, int iteration) {
    if (cfg.iterations <= 0 || iteration <= 0) return cfg.lr_start;
    if (iteration >= cfg.iterations) return cfg.lr_end;
    double f = static_cast<double>(iteration) / cfg.iterations;
    return cfg.lr_start * std::pow(cfg.lr_end / cfg.lr_start, f);
}

// ---------------------------------------------------------------------------
// Per-ray sampling plan. Gradients do not flow through sample placement, so
// the plan is computed once per evaluation and treated as a constant by both
// the analytic backward pass and the finite-difference oracle.
// ---------------------------------------------------------------------------

struct RayPlan {
    bool hit = false;
    double t0 = 0.0, t1 = 0.0;
    std::vector<double> coarse_ts, coarse_deltas;
    std::vector<double> fine_ts, fine_deltas; // union of coarse + resampled
    bool resample_fallback = false;
};

// Per-iteration cache of activated voxel densities. Parameters only change
// at the optimizer step, so softplus and its derivative are evaluated once
// per voxel instead of once per trilinear corner visit.
struct DensityCache {
    std::vector<double> sigma, dsig;

    void build(const RadianceFieldGrid& grid, int threads = 0) {
        const auto& logits = grid.density_logits();
        sigma.resize(logits.size());
        dsig.resize(logits.size());
        bool soft = grid.density_softplus();
        parallel_for(logits.size(), threads, [&](std::size_t v) {
            double raw = logits[v];
            if (soft) {
                sigma[v] = softplus(raw);
                dsig[v] = sigmoid(raw);
            } else {
                sigma[v] = std::max(0.0, raw);
                dsig[v] = raw > 0.0 ? 1.0 : 0.0;
            }
        });
    }
};

// Trilinear support of one query point: corner voxels and blend weights.
struct TrilinearStencil {
    int corner[8];
    double weight[8];
    bool inside = false;
};

inline void trilinear_stencil(const RadianceFieldGrid& g, const Vec3& p, TrilinearStencil& st) {
    if (!g.bbox().contains(p)) {
        st.inside = false;
        return;
    }
    st.inside = true;
    const Vec3 cell = g.cell();
    double ux = (p.x - g.bbox().lo.x) / cell.x - 0.5;
    double uy = (p.y - g.bbox().lo.y) / cell.y - 0.5;
    double uz = (p.z - g.bbox().lo.z) / cell.z - 0.5;
    int ix = static_cast<int>(std::floor(ux));
    int iy = static_cast<int>(std::floor(uy));
    int iz = static_cast<int>(std::floor(uz));
    double fx = ux - ix, fy = uy - iy, fz = uz - iz;
    int x0 = std::clamp(ix, 0, g.nx() - 1), x1 = std::clamp(ix + 1, 0, g.nx() - 1);
    int y0 = std::clamp(iy, 0, g.ny() - 1), y1 = std::clamp(iy + 1, 0, g.ny() - 1);
    int z0 = std::clamp(iz, 0, g.nz() - 1), z1 = std::clamp(iz + 1, 0, g.nz() - 1);
    const double wx[2] = {1.0 - fx, fx}, wy[2] = {1.0 - fy, fy}, wz[2] = {1.0 - fz, fz};
    const int cx[2] = {x0, x1}, cy[2] = {y0, y1}, cz[2] = {z0, z1};
    int slot = 0;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int c = 0; c < 2; ++c) {
                st.corner[slot] = static_cast<int>(g.voxel_index(cx[c], cy[b], cz[a]));
                st.weight[slot] = wz[a] * wy[b] * wx[c];
                ++slot;
            }
}

inline void plan_ray(const RadianceFieldGrid& grid, const DensityCache& density, const Ray& ray,
                     const TrainConfig& tcfg, Pcg32 rng, RayPlan& plan) {
    plan = RayPlan{};
    auto clip = intersect_box(ray, grid.bbox());
    if (!clip) return;
    plan.t0 = std::max(clip->first, ray.t_near);
    plan.t1 = std::min(clip->second, ray.t_far);
    if (!(plan.t1 > plan.t0)) return;
    plan.hit = true;

    stratified_samples(plan.t0, plan.t1, tcfg.n_coarse, tcfg.stratified_jitter, &rng,
                       plan.coarse_ts);
    voronoi_deltas(plan.coarse_ts, plan.t0, plan.t1, plan.coarse_deltas);

    if (tcfg.n_fine <= 0) {
        plan.fine_ts = plan.coarse_ts;
        plan.fine_deltas = plan.coarse_deltas;
        return;
    }

    // The resampling PDF only needs quadrature weights, which are emission
    // free: a density-only march suffices.
    std::vector<double> weights(plan.coarse_ts.size(), 0.0);
    {
        AccumState st;
        TrilinearStencil stencil;
        for (std::size_t i = 0; i < plan.coarse_ts.size(); ++i) {
            trilinear_stencil(grid, ray.at(plan.coarse_ts[i]), stencil);
            if (!stencil.inside) continue;
            double sigma = 0.0;
            for (int s = 0; s < 8; ++s)
                sigma += stencil.weight[s] * density.sigma[stencil.corner[s]];
            weights[i] =
                accumulate_segment(st, tcfg.model, sigma, plan.coarse_deltas[i], Rgb{}, 0.0);
            if (st.T == 0.0) break; // saturated: every later weight is zero
        }
    }

    std::vector<double> u(tcfg.n_fine);
    for (int i = 0; i < tcfg.n_fine; ++i)
        u[i] = (i + rng.next_double()) / tcfg.n_fine;
    auto resampled = hierarchical_resample(weights, plan.t0, plan.t1, u);
    plan.resample_fallback = resampled.uniform_fallback;

    plan.fine_ts.resize(plan.coarse_ts.size() + resampled.t.size());
    std::sort(resampled.t.begin(), resampled.t.end());
    std::merge(plan.coarse_ts.begin(), plan.coarse_ts.end(), resampled.t.begin(),
               resampled.t.end(), plan.fine_ts.begin());
    voronoi_deltas(plan.fine_ts, plan.t0, plan.t1, plan.fine_deltas);
}

inline Pcg32 ray_rng(const TrainConfig& tcfg, uint64_t ray_key) {
    return keyed_rng(tcfg.seed, 0x52415953u, ray_key);
}

inline std::vector<RayPlan> plan_batch(const RadianceFieldGrid& grid, const RayBatch& batch,
                                       const LossConfig& cfg, const TrainConfig& tcfg,
                                       uint64_t base_key = 0,
                                       const DensityCache* density = nullptr) {
    (void)cfg;
    DensityCache local;
    if (!density) {
        local.build(grid, resolve_thread_count(tcfg.threads));
        density = &local;
    }
    std::vector<RayPlan> plans(batch.size());
    parallel_for(batch.size(), resolve_thread_count(tcfg.threads), [&](std::size_t i) {
        plan_ray(grid, *density, batch.rays[i], tcfg, ray_rng(tcfg, base_key + i), plans[i]);
    });
    return plans;
}

// ---------------------------------------------------------------------------
// Recorded forward pass
// ---------------------------------------------------------------------------

namespace train_detail {

struct SampleRec {
    TrilinearStencil st;
    double delta = 0.0;
    double a = 0.0;   // sigma * delta
    double att = 0.0; // exp(-a), exponential model only
    double t_in = 1.0, t_out = 1.0;
    double w = 0.0;
    double phi[3] = {};  // activated emission
    double dphi[3] = {}; // d phi / d logit
    bool live = false;   // inside the bbox
};

struct PassRecord {
    std::vector<SampleRec> samples;
    Rgb radiance{};
    double alpha = 0.0;
};

// Per-ray voxel working set. The SH basis is fixed along a ray, so the
// emission logit of a voxel, z[v][c] = dot(sh[v][c], basis), is computed
// once per visited voxel; the SH gradient factors symmetrically into a
// per-voxel accumulator flushed as an outer product with the basis.
class RayWorkspace {
public:
    void reset_shape(const RadianceFieldGrid& grid) {
        v_count_ = grid.voxel_count();
        stamp_.assign(v_count_, 0);
        epoch_ = 0;
        z_.assign(3 * v_count_, 0.0);
        zbar_.assign(3 * v_count_, 0.0);
        sbar_.assign(v_count_, 0.0);
        touched_.clear();
        touched_.reserve(1024);
    }

    void begin_ray() {
        ++epoch_;
        touched_.clear();
    }

    const double* voxel_z(const RadianceFieldGrid& grid, const double* basis, int v) {
        double* z = &z_[3 * static_cast<std::size_t>(v)];
        if (stamp_[v] != epoch_) {
            stamp_[v] = epoch_;
            touched_.push_back(v);
            const int n = grid.coeffs_per_channel();
            const double* sh = grid.voxel_sh(static_cast<std::size_t>(v));
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                const double* k = sh + c * n;
                for (int j = 0; j < n; ++j) acc += k[j] * basis[j];
                z[c] = acc;
            }
            zbar_[3 * static_cast<std::size_t>(v)] = 0.0;
            zbar_[3 * static_cast<std::size_t>(v) + 1] = 0.0;
            zbar_[3 * static_cast<std::size_t>(v) + 2] = 0.0;
            sbar_[v] = 0.0;
        }
        return z;
    }

    void add_sigma_bar(int v, double val) { sbar_[v] += val; }
    void add_z_bar(int v, const double zb[3], double weight) {
        double* dst = &zbar_[3 * static_cast<std::size_t>(v)];
        dst[0] += zb[0] * weight;
        dst[1] += zb[1] * weight;
        dst[2] += zb[2] * weight;
    }

    template <typename DensitySink, typename ShSink>
    void flush(const RadianceFieldGrid& grid, const DensityCache& density, const double* basis,
               DensitySink&& density_sink, ShSink&& sh_sink) {
        const int n = grid.coeffs_per_channel();
        for (int v : touched_) {
            double sb = sbar_[v];
            if (sb != 0.0) density_sink(v, sb * density.dsig[v]);
            const double* zb = &zbar_[3 * static_cast<std::size_t>(v)];
            if (zb[0] != 0.0 || zb[1] != 0.0 || zb[2] != 0.0) sh_sink(v, zb, basis, n);
        }
    }

private:
    std::size_t v_count_ = 0;
    uint32_t epoch_ = 0;
    std::vector<uint32_t> stamp_;
    std::vector<double> z_, zbar_, sbar_;
    std::vector<int> touched_;
};

inline void forward_pass(const RadianceFieldGrid& grid, const DensityCache& density,
                         RayWorkspace& ws, const Ray& ray, const std::vector<double>& ts,
                         const std::vector<double>& deltas, const double* basis,
                         const Activation& act, TransmittanceModel model, PassRecord& rec) {
    rec.samples.resize(ts.size());
    rec.radiance = Rgb{};
    double T = 1.0;
    Rgb radiance{};
    for (std::size_t i = 0; i < ts.size(); ++i) {
        SampleRec& sr = rec.samples[i];
        trilinear_stencil(grid, ray.at(ts[i]), sr.st);
        sr.delta = deltas[i];
        sr.live = sr.st.inside;
        sr.t_in = T;
        if (!sr.live) {
            sr.t_out = T;
            continue;
        }
        double sigma = 0.0;
        double z[3] = {0.0, 0.0, 0.0};
        for (int s = 0; s < 8; ++s) {
            int v = sr.st.corner[s];
            double wt = sr.st.weight[s];
            sigma += wt * density.sigma[v];
            const double* zv = ws.voxel_z(grid, basis, v);
            z[0] += wt * zv[0];
            z[1] += wt * zv[1];
            z[2] += wt * zv[2];
        }
        for (int c = 0; c < 3; ++c) {
            sr.phi[c] = activate(act, z[c]);
            sr.dphi[c] = activate_derivative(act, z[c], sr.phi[c]);
        }
        sr.a = sigma * sr.delta;
        if (model == TransmittanceModel::Linear) {
            double drop = std::min(sr.a, T);
            sr.t_out = T - drop;
            sr.w = 0.5 * drop * (T + sr.t_out);
        } else {
            sr.att = std::exp(-sr.a);
            sr.w = T * (1.0 - sr.att);
            sr.t_out = T * sr.att;
        }
        radiance += Rgb{sr.phi[0], sr.phi[1], sr.phi[2]} * sr.w;
        T = sr.t_out;
        // Linear transmittance reaches an exact zero; every later sample has
        // zero weight and zero adjoint, so dropping them changes nothing.
        if (T == 0.0) {
            rec.samples.resize(i + 1);
            break;
        }
    }
    rec.radiance = radiance;
    rec.alpha = 1.0 - T;
}

// Gradient sink with cheap sparse resets: a voxel's slots are zeroed on first
// touch within a chunk, and only touched voxels are flushed.
class GradBuffer {
public:
    void reset_shape(const RadianceFieldGrid& grid) {
        v_count_ = grid.voxel_count();
        stride_ = grid.sh_stride();
        g_.assign(v_count_ * (1 + stride_), 0.0);
        voxel_stamp_.assign(v_count_, 0);
        touched_.clear();
        stamp_ = 0;
    }
    void begin_chunk() {
        ++stamp_;
        touched_.clear();
    }
    double* density_slot(std::size_t v) {
        touch(v);
        return &g_[v];
    }
    double* sh_slot(std::size_t v) {
        touch(v);
        return &g_[v_count_ + v * stride_];
    }
    // Adds this chunk's contributions into a flat gradient laid out as
    // [density (V)] ++ [sh (V * stride)].
    void flush_into(std::vector<double>& global) const {
        for (std::size_t v : touched_) {
            global[v] += g_[v];
            const double* src = &g_[v_count_ + v * stride_];
            double* dst = &global[v_count_ + v * stride_];
            for (std::size_t j = 0; j < stride_; ++j) dst[j] += src[j];
        }
    }

private:
    void touch(std::size_t v) {
        if (voxel_stamp_[v] == stamp_) return;
        voxel_stamp_[v] = stamp_;
        touched_.push_back(v);
        g_[v] = 0.0;
        double* sh = &g_[v_count_ + v * stride_];
        for (std::size_t j = 0; j < stride_; ++j) sh[j] = 0.0;
    }
    std::size_t v_count_ = 0, stride_ = 0;
    uint32_t stamp_ = 0;
    std::vector<double> g_;
    std::vector<uint32_t> voxel_stamp_;
    std::vector<std::size_t> touched_;
};

inline void backward_pass(const PassRecord& rec, const Rgb& radiance_bar, double alpha_bar,
                          TransmittanceModel model, RayWorkspace& ws) {
    // alpha = 1 - T_final
    double carry = -alpha_bar; // dL/dT_out of the last sample
    for (std::size_t ii = rec.samples.size(); ii-- > 0;) {
        const SampleRec& sr = rec.samples[ii];
        if (!sr.live) continue; // T unchanged: carry passes through
        double wbar = radiance_bar.x * sr.phi[0] + radiance_bar.y * sr.phi[1] +
                      radiance_bar.z * sr.phi[2];
        double sigmabar = 0.0, tinbar = 0.0;
        if (model == TransmittanceModel::Linear) {
            double drop = sr.t_in - sr.t_out;
            double dropbar = wbar * 0.5 * (sr.t_in + sr.t_out);
            tinbar = wbar * 0.5 * drop;
            double toutbar = wbar * 0.5 * drop + carry;
            tinbar += toutbar;
            dropbar -= toutbar;
            if (sr.a < sr.t_in) {
                sigmabar = dropbar * sr.delta;
            } else {
                tinbar += dropbar;
            }
        } else {
            double attbar = -wbar * sr.t_in;
            tinbar = wbar * (1.0 - sr.att);
            tinbar += carry * sr.att;
            attbar += carry * sr.t_in;
            double abar = -attbar * sr.att;
            sigmabar = abar * sr.delta;
        }
        carry = tinbar;

        // Factored accumulation over the trilinear support; the outer
        // product with the basis happens once per voxel at flush time.
        double zbar[3] = {radiance_bar.x * sr.w * sr.dphi[0],
                          radiance_bar.y * sr.w * sr.dphi[1],
                          radiance_bar.z * sr.w * sr.dphi[2]};
        bool has_z = zbar[0] != 0.0 || zbar[1] != 0.0 || zbar[2] != 0.0;
        for (int s = 0; s < 8; ++s) {
            int v = sr.st.corner[s];
            double wt = sr.st.weight[s];
            if (sigmabar != 0.0) ws.add_sigma_bar(v, sigmabar * wt);
            if (has_z) ws.add_z_bar(v, zbar, wt);
        }
    }
}

struct RayLossGrads {
    LossTerms terms;
    Rgb coarse_bar{};
    Rgb fine_bar{};
    double alpha_bar = 0.0;
};

// Frozen denominators let a finite-difference oracle evaluate the loss with
// the same stop-gradient semantics the analytic backward uses by default.
struct FrozenDenoms {
    std::vector<Rgb> coarse, fine;
};

inline RayLossGrads ray_loss(const Rgb& coarse_pred, const Rgb& fine_pred, double fine_alpha,
                             const Rgb& gt, double gt_alpha, const LossConfig& cfg,
                             std::size_t n_rays, const Rgb* frozen_coarse = nullptr,
                             const Rgb* frozen_fine = nullptr) {
    RayLossGrads out;
    double inv_n = 1.0 / static_cast<double>(n_rays);
    for (int c = 0; c < 3; ++c) {
        double pc = coarse_pred[c], pf = fine_pred[c], g = gt[c];
        double dc = 1.0, df = 1.0;
        if (cfg.hdr_regularized) {
            dc = reinhard_weight(frozen_coarse ? (*frozen_coarse)[c] : pc, cfg.lambda, cfg.eps);
            df = reinhard_weight(frozen_fine ? (*frozen_fine)[c] : pf, cfg.lambda, cfg.eps);
        }
        double rc = (pc - g) / dc, rf = (pf - g) / df;
        out.terms.coarse += rc * rc;
        out.terms.fine += rf * rf;
        double cbar = 2.0 * (pc - g) / (dc * dc);
        double fbar = 2.0 * (pf - g) / (df * df);
        if (cfg.hdr_regularized && cfg.grad_through_denominator && !frozen_coarse) {
            cbar -= 2.0 * cfg.lambda * (pc - g) * (pc - g) / (dc * dc * dc);
            fbar -= 2.0 * cfg.lambda * (pf - g) * (pf - g) / (df * df * df);
        }
        (&out.coarse_bar.x)[c] = cfg.w_coarse * inv_n * cbar;
        (&out.fine_bar.x)[c] = cfg.w_fine * inv_n * fbar;
    }
    out.terms.alpha = alpha_loss(fine_alpha, gt_alpha);
    out.alpha_bar = cfg.w_alpha * inv_n * 2.0 * (fine_alpha - gt_alpha);
    out.terms.total = cfg.w_coarse * out.terms.coarse + cfg.w_fine * out.terms.fine +
                      cfg.w_alpha * out.terms.alpha;
    return out;
}

} // namespace train_detail

// ---------------------------------------------------------------------------
// Batch loss and analytic gradient
// ---------------------------------------------------------------------------

// Flat parameter/gradient layout: density logits first, then SH logits.
inline std::size_t gradient_size(const RadianceFieldGrid& grid) {
    return grid.parameter_count();
}

struct RayPrediction {
    Rgb coarse, fine;
    double fine_alpha = 0.0;
};

// Production-path predictions for each ray of a batch, given fixed plans.
inline std::vector<RayPrediction> predict_batch(const RadianceFieldGrid& grid,
                                                const RayBatch& batch,
                                                const std::vector<RayPlan>& plans,
                                                const TrainConfig& tcfg) {
    std::vector<RayPrediction> out(batch.size());
    DensityCache density;
    density.build(grid, 1);
    train_detail::RayWorkspace ws;
    ws.reset_shape(grid);
    train_detail::PassRecord coarse_rec, fine_rec;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (!plans[i].hit) continue;
        double basis[kShMaxCoeffs];
        sh_basis_unchecked(grid.l_max(), -batch.rays[i].dir, basis);
        ws.begin_ray();
        train_detail::forward_pass(grid, density, ws, batch.rays[i], plans[i].coarse_ts,
                                   plans[i].coarse_deltas, basis, tcfg.act, tcfg.model,
                                   coarse_rec);
        train_detail::forward_pass(grid, density, ws, batch.rays[i], plans[i].fine_ts,
                                   plans[i].fine_deltas, basis, tcfg.act, tcfg.model, fine_rec);
        out[i] = {coarse_rec.radiance, fine_rec.radiance, fine_rec.alpha};
    }
    return out;
}

inline LossTerms batch_loss_with_plans(const RadianceFieldGrid& grid, const RayBatch& batch,
                                       const std::vector<RayPlan>& plans, const LossConfig& cfg,
                                       const TrainConfig& tcfg,
                                       const train_detail::FrozenDenoms* frozen = nullptr) {
    LossTerms sum;
    const std::size_t n_rays = batch.size();
    DensityCache density;
    density.build(grid, 1);
    train_detail::RayWorkspace ws;
    ws.reset_shape(grid);
    train_detail::PassRecord coarse_rec, fine_rec;
    for (std::size_t i = 0; i < n_rays; ++i) {
        const RayPlan& plan = plans[i];
        Rgb coarse_pred{}, fine_pred{};
        double fine_alpha = 0.0;
        if (plan.hit) {
            double basis[kShMaxCoeffs];
            sh_basis_unchecked(grid.l_max(), -batch.rays[i].dir, basis);
            ws.begin_ray();
            train_detail::forward_pass(grid, density, ws, batch.rays[i], plan.coarse_ts,
                                       plan.coarse_deltas, basis, tcfg.act, tcfg.model,
                                       coarse_rec);
            train_detail::forward_pass(grid, density, ws, batch.rays[i], plan.fine_ts,
                                       plan.fine_deltas, basis, tcfg.act, tcfg.model, fine_rec);
            coarse_pred = coarse_rec.radiance;
            fine_pred = fine_rec.radiance;
            fine_alpha = fine_rec.alpha;
        }
        auto rl = train_detail::ray_loss(coarse_pred, fine_pred, fine_alpha,
                                         batch.gt_radiance[i], batch.gt_alpha[i], cfg, n_rays,
                                         frozen ? &frozen->coarse[i] : nullptr,
                                         frozen ? &frozen->fine[i] : nullptr);
        sum.coarse += rl.terms.coarse;
        sum.fine += rl.terms.fine;
        sum.alpha += rl.terms.alpha;
        sum.total += rl.terms.total;
    }
    double inv = n_rays > 0 ? 1.0 / static_cast<double>(n_rays) : 0.0;
    sum.coarse *= inv;
    sum.fine *= inv;
    sum.alpha *= inv;
    sum.total *= inv;
    return sum;
}

inline LossTerms batch_loss(const RadianceFieldGrid& grid, const RayBatch& batch,
                            const LossConfig& cfg, const TrainConfig& tcfg,
                            uint64_t base_key = 0) {
    auto plans = plan_batch(grid, batch, cfg, tcfg, base_key);
    return batch_loss_with_plans(grid, batch, plans, cfg, tcfg);
}

// Analytic reverse-mode gradient of the batch loss. Rays are processed in
// fixed-size chunks; per-chunk buffers are flushed into the global gradient
// in chunk order, so the result is independent of the worker count.
inline LossTerms batch_gradient_with_plans(const RadianceFieldGrid& grid, const RayBatch& batch,
                                           const std::vector<RayPlan>& plans,
                                           const LossConfig& cfg, const TrainConfig& tcfg,
                                           std::vector<double>& grad) {
    using namespace train_detail;
    grad.assign(gradient_size(grid), 0.0);
    const std::size_t n_rays = batch.size();
    if (n_rays == 0) return LossTerms{};

    DensityCache density;
    density.build(grid, resolve_thread_count(tcfg.threads));

    constexpr std::size_t kChunk = 64;
    const std::size_t n_chunks = (n_rays + kChunk - 1) / kChunk;
    const int workers =
        static_cast<int>(std::min<std::size_t>(resolve_thread_count(tcfg.threads), n_chunks));

    std::vector<LossTerms> chunk_terms(n_chunks);
    std::vector<GradBuffer> buffers(std::max(workers, 1));
    std::vector<RayWorkspace> workspaces(std::max(workers, 1));
    for (auto& b : buffers) b.reset_shape(grid);
    for (auto& w : workspaces) w.reset_shape(grid);

    // Ordered flush: chunk c may only merge once chunks 0..c-1 have merged.
    std::mutex mu;
    std::condition_variable cv;
    std::size_t flush_next = 0;
    std::atomic<std::size_t> next_chunk{0};

    auto worker_fn = [&](int worker_id) {
        GradBuffer& buf = buffers[worker_id];
        RayWorkspace& ws = workspaces[worker_id];
        const int n_coeffs = grid.coeffs_per_channel();
        PassRecord coarse_rec, fine_rec;
        for (;;) {
            std::size_t c = next_chunk.fetch_add(1);
            if (c >= n_chunks) return;
            std::size_t begin = c * kChunk, end = std::min(n_rays, (c + 1) * kChunk);
            buf.begin_chunk();
            LossTerms terms;
            for (std::size_t i = begin; i < end; ++i) {
                const RayPlan& plan = plans[i];
                Rgb coarse_pred{}, fine_pred{};
                double fine_alpha = 0.0;
                double basis[kShMaxCoeffs];
                if (plan.hit) {
                    sh_basis_unchecked(grid.l_max(), -batch.rays[i].dir, basis);
                    ws.begin_ray();
                    forward_pass(grid, density, ws, batch.rays[i], plan.coarse_ts,
                                 plan.coarse_deltas, basis, tcfg.act, tcfg.model, coarse_rec);
                    forward_pass(grid, density, ws, batch.rays[i], plan.fine_ts,
                                 plan.fine_deltas, basis, tcfg.act, tcfg.model, fine_rec);
                    coarse_pred = coarse_rec.radiance;
                    fine_pred = fine_rec.radiance;
                    fine_alpha = fine_rec.alpha;
                }
                auto rl = ray_loss(coarse_pred, fine_pred, fine_alpha, batch.gt_radiance[i],
                                   batch.gt_alpha[i], cfg, n_rays);
                terms.coarse += rl.terms.coarse;
                terms.fine += rl.terms.fine;
                terms.alpha += rl.terms.alpha;
                terms.total += rl.terms.total;
                if (plan.hit) {
                    backward_pass(coarse_rec, rl.coarse_bar, 0.0, tcfg.model, ws);
                    backward_pass(fine_rec, rl.fine_bar, rl.alpha_bar, tcfg.model, ws);
                    ws.flush(
                        grid, density, basis,
                        [&](int v, double g) { *buf.density_slot(v) += g; },
                        [&](int v, const double zb[3], const double* b, int n) {
                            (void)n;
                            double* sh = buf.sh_slot(v);
                            for (int ch = 0; ch < 3; ++ch) {
                                double z = zb[ch];
                                if (z == 0.0) continue;
                                double* dst = sh + ch * n_coeffs;
                                for (int j = 0; j < n_coeffs; ++j) dst[j] += z * b[j];
                            }
                        });
                }
            }
            chunk_terms[c] = terms;
            {
                std::unique_lock<std::mutex> lock(mu);
                cv.wait(lock, [&] { return flush_next == c; });
                buf.flush_into(grad);
                ++flush_next;
            }
            cv.notify_all();
        }
    };

    if (workers <= 1) {
        worker_fn(0);
    } else {
        std::function<void(int)> job = worker_fn;
        ThreadPool::instance().run(workers, job);
    }

    LossTerms sum;
    for (const auto& t : chunk_terms) {
        sum.coarse += t.coarse;
        sum.fine += t.fine;
        sum.alpha += t.alpha;
        sum.total += t.total;
    }
    double inv = 1.0 / static_cast<double>(n_rays);
    sum.coarse *= inv;
    sum.fine *= inv;
    sum.alpha *= inv;
    sum.total *= inv;
    return sum;
}

inline LossTerms batch_gradient(const RadianceFieldGrid& grid, const RayBatch& batch,
                                const LossConfig& cfg, const TrainConfig& tcfg,
                                std::vector<double>& grad, uint64_t base_key = 0) {
    auto plans = plan_batch(grid, batch, cfg, tcfg, base_key);
    return batch_gradient_with_plans(grid, batch, plans, cfg, tcfg, grad);
}

// ---------------------------------------------------------------------------
// Adam and the fit loop
// ---------------------------------------------------------------------------

struct AdamState {
    std::vector<double> m, v;
    int64_t step = 0;

    void reset(std::size_t n) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
        step = 0;
    }
};

inline void adam_step(RadianceFieldGrid& grid, const std::vector<double>& grad, AdamState& st,
                      const TrainConfig& cfg, double lr) {
    ++st.step;
    const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.step));
    const std::size_t v_count = grid.voxel_count();
    auto update = [&](double* params, std::size_t offset, std::size_t count) {
        for (std::size_t i = 0; i < count; ++i) {
            double g = grad[offset + i];
            double& m = st.m[offset + i];
            double& v = st.v[offset + i];
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            params[i] -= lr * (m / c1) / (std::sqrt(v / c2) + cfg.adam_eps);
        }
    };
    update(grid.density_logits().data(), 0, v_count);
    update(grid.sh_logits().data(), v_count, grid.sh_logits().size());
}

struct HistoryRow {
    int iteration = 0;
    double coarse = 0.0, fine = 0.0, alpha = 0.0, total = 0.0, lr = 0.0;
};

struct FitResult {
    std::vector<HistoryRow> history;
};

class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(int iteration, const LossTerms& terms)
        : std::runtime_error("training diverged at iteration " + std::to_string(iteration) +
                             " (coarse=" + std::to_string(terms.coarse) +
                             ", fine=" + std::to_string(terms.fine) +
                             ", alpha=" + std::to_string(terms.alpha) + ")") {}
};

// Supplier contract: fill_batch(iteration, batch_rays, RayBatch&) must be
// deterministic in (its own seed, iteration). Pass an AdamState plus
// start_iteration to resume from a checkpoint; the schedule is keyed on the
// global iteration either way.
template <typename Supplier,
          typename Callback = std::function<void(int, const LossTerms&, double)>>
FitResult fit(Supplier& data, RadianceFieldGrid& grid, const LossConfig& cfg,
              const TrainConfig& tcfg, Callback callback = {},
              AdamState* adam_state = nullptr, int start_iteration = 0) {
    FitResult result;
    result.history.reserve(std::max(0, tcfg.iterations - start_iteration));
    AdamState local_adam;
    AdamState& adam = adam_state ? *adam_state : local_adam;
    if (adam.m.size() != gradient_size(grid)) adam.reset(gradient_size(grid));
    std::vector<double> grad;
    RayBatch batch;
    for (int iter = start_iteration; iter < tcfg.iterations; ++iter) {
        batch.clear();
        data.fill_batch(iter, tcfg.batch_rays, batch);
        if (batch.size() == 0) throw std::runtime_error("fit: empty ray batch");
        uint64_t base_key =
            static_cast<uint64_t>(iter) * static_cast<uint64_t>(tcfg.batch_rays);
        auto plans = plan_batch(grid, batch, cfg, tcfg, base_key);
        LossTerms terms = batch_gradient_with_plans(grid, batch, plans, cfg, tcfg, grad);
        if (!std::isfinite(terms.total)) throw TrainingDiverged(iter, terms);
        double lr = learning_rate(tcfg, iter);
        adam_step(grid, grad, adam, tcfg, lr);
        result.history.push_back({iter, terms.coarse, terms.fine, terms.alpha, terms.total, lr});
        if constexpr (!std::is_same_v<Callback, std::nullptr_t>) {
            if constexpr (std::is_constructible_v<bool, Callback&>) {
                if (callback) callback(iter, terms, lr);
            } else {
                callback(iter, terms, lr);
            }
        }
    }
    return result;
}

inline void write_history_csv(const std::string& path, const std::vector<HistoryRow>& rows) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << "iteration,coarse,fine,alpha,total,lr\n";
    char line[256];
    for (const auto& r : rows) {
        std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.iteration,
                      r.coarse, r.fine, r.alpha, r.total, r.lr);
        os << line;
    }
}

// ------------------------------ checkpoints -------------------------------

inline constexpr char kCheckpointMagic[8] = {'L', 'F', 'C', 'H', 'K', 'P', 'T', '1'};

struct Checkpoint {
    RadianceFieldGrid grid;
    AdamState adam;
    int iteration = 0;
};

// Checkpoint = header + the grid's own serialization + an optimizer-state
// block (moments as float64 so resuming is exact).
inline void save_checkpoint(const std::string& path, const RadianceFieldGrid& grid,
                            const AdamState& adam, int iteration) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::write_pod(os, static_cast<int64_t>(iteration));
    grid.save_to(os);
    detail::write_pod(os, static_cast<uint64_t>(adam.m.size()));
    detail::write_pod(os, adam.step);
    os.write(reinterpret_cast<const char*>(adam.m.data()),
             static_cast<std::streamsize>(adam.m.size() * sizeof(double)));
    os.write(reinterpret_cast<const char*>(adam.v.data()),
             static_cast<std::streamsize>(adam.v.size() * sizeof(double)));
    if (!os) throw std::runtime_error("write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
        throw std::runtime_error("not a checkpoint file: " + path);
    Checkpoint ck;
    int64_t iteration;
    detail::read_pod(is, iteration);
    ck.iteration = static_cast<int>(iteration);
    ck.grid = RadianceFieldGrid::load_from(is);
    uint64_t n;
    detail::read_pod(is, n);
    detail::read_pod(is, ck.adam.step);
    ck.adam.m.resize(n);
    ck.adam.v.resize(n);
    is.read(reinterpret_cast<char*>(ck.adam.m.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    is.read(reinterpret_cast<char*>(ck.adam.v.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw std::runtime_error("unexpected end of file in " + path);
    return ck;
}

} // namespace lumen
