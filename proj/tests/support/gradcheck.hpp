// Central finite-difference gradient verification against the scalar oracle.
// Sample plans and (in stop-gradient mode) HDR denominators are frozen from
// the unperturbed state, matching what the analytic backward differentiates.
#pragma once

#include <cmath>
#include <vector>

#include "lumen/parallel.hpp"
#include "lumen/training.hpp"
#include "support/train_oracle.hpp"

namespace lumen::testing {

struct GradCheckStats {
    std::size_t considered = 0; // params with |analytic| > threshold
    std::size_t within_tol = 0;
    double worst_rel = 0.0;

    double pass_fraction() const {
        return considered ? static_cast<double>(within_tol) / considered : 1.0;
    }
};

inline double& param_ref(RadianceFieldGrid& g, std::size_t idx) {
    std::size_t v = g.voxel_count();
    return idx < v ? g.density_logits()[idx] : g.sh_logits()[idx - v];
}

inline GradCheckStats gradient_check(const RadianceFieldGrid& grid, const RayBatch& batch,
                                     const LossConfig& cfg, const TrainConfig& tcfg,
                                     double h = 1e-4, double rel_tol = 1e-4,
                                     double grad_threshold = 1e-8) {
    auto plans = plan_batch(grid, batch, cfg, tcfg);
    std::vector<double> analytic;
    batch_gradient_with_plans(grid, batch, plans, cfg, tcfg, analytic);

    // Stop-gradient mode freezes the denominators at the base predictions.
    std::vector<OracleRay> frozen;
    const std::vector<OracleRay>* frozen_ptr = nullptr;
    if (cfg.hdr_regularized && !cfg.grad_through_denominator) {
        frozen.resize(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i)
            frozen[i] = oracle_predict(grid, batch.rays[i], plans[i], tcfg);
        frozen_ptr = &frozen;
    }

    const std::size_t n_params = gradient_size(grid);
    std::vector<double> fd(n_params, 0.0);
    int threads = resolve_thread_count(tcfg.threads);
    parallel_chunks(n_params, 256, threads, [&](std::size_t b, std::size_t e, std::size_t) {
        RadianceFieldGrid work = grid; // private copy per chunk
        for (std::size_t i = b; i < e; ++i) {
            double saved = param_ref(work, i);
            param_ref(work, i) = saved + h;
            double fp = oracle_batch_loss(work, batch, plans, cfg, tcfg, frozen_ptr);
            param_ref(work, i) = saved - h;
            double fm = oracle_batch_loss(work, batch, plans, cfg, tcfg, frozen_ptr);
            param_ref(work, i) = saved;
            fd[i] = (fp - fm) / (2.0 * h);
        }
    });

    GradCheckStats stats;
    for (std::size_t i = 0; i < n_params; ++i) {
        if (std::abs(analytic[i]) <= grad_threshold) continue;
        ++stats.considered;
        double rel = std::abs(analytic[i] - fd[i]) /
                     std::max(std::abs(analytic[i]), std::abs(fd[i]));
        if (rel < rel_tol) ++stats.within_tol;
        stats.worst_rel = std::max(stats.worst_rel, rel);
    }
    return stats;
}

// Shared fixture: random grid + random rays aimed into it.
inline RadianceFieldGrid random_train_grid(int n, int l_max, uint64_t seed) {
    RadianceFieldGrid g(n, n, n, Aabb{{-1, -1, -1}, {1, 1, 1}}, l_max);
    Pcg32 rng(seed);
    for (auto& v : g.density_logits()) v = softplus_inverse(0.05 + 1.5 * rng.next_double());
    for (auto& v : g.sh_logits()) v = (rng.next_double() - 0.5) * 3.0;
    return g;
}

inline RayBatch random_train_batch(int n_rays, double lambda, uint64_t seed) {
    RayBatch batch;
    Pcg32 rng(seed);
    for (int i = 0; i < n_rays; ++i) {
        double z = 2.0 * rng.next_double() - 1.0;
        double phi = 2.0 * M_PI * rng.next_double();
        double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        Vec3 origin = Vec3{r * std::cos(phi), r * std::sin(phi), z} * 3.0;
        Vec3 target{rng.next_double() * 1.4 - 0.7, rng.next_double() * 1.4 - 0.7,
                    rng.next_double() * 1.4 - 0.7};
        batch.rays.push_back(Ray{origin, normalize(target - origin)});
        batch.gt_radiance.push_back(Rgb{rng.next_double() * lambda, rng.next_double() * lambda,
                                        rng.next_double() * lambda});
        batch.gt_alpha.push_back(rng.next_double());
    }
    return batch;
}

} // namespace lumen::testing
