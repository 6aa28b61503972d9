#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "lumen/field.hpp"
#include "lumen/rng.hpp"
#include "lumen/sh.hpp"
#include "lumen/vec.hpp"

namespace lumen {

struct Ray {
    Vec3 origin;
    Vec3 dir; // unit
    double t_near = 0.0;
    double t_far = std::numeric_limits<double>::infinity();

    Vec3 at(double t) const { return origin + dir * t; }
};

enum class TransmittanceModel { Linear, Exponential };

struct MarchResult {
    Rgb radiance{};
    double alpha = 0.0;          // opacity: 1 - T(t_far)
    double expected_depth = 0.0; // weight-averaged sample depth
    std::vector<double> weights; // per-sample contribution weights
    std::vector<double> sample_ts; // integration order, filled with weights
    int samples_visited = 0;     // samples (or leaves) actually integrated
    int leaves_touched = 0;      // octree leaves whose chord was examined
    bool resample_fallback = false;
};

// ---------------------------------------------------------------------------
// Accumulation rule. Each segment contributes the exact piecewise-constant
// integral of T(t) sigma(t) over its own extent:
//   exponential: w = T (1 - e^{-sigma delta}),      T' = T e^{-sigma delta}
//   linear:      w = d (T + T') / 2, d = min(sigma delta, T), T' = T - d
// Under the linear model T reaches exactly 0, so opaque rays saturate hard.
// ---------------------------------------------------------------------------
struct AccumState {
    double T = 1.0;
    Rgb radiance{};
    double depth_weighted = 0.0;
    double weight_sum = 0.0;

    double alpha() const { return 1.0 - T; }
};

inline double accumulate_segment(AccumState& st, TransmittanceModel model, double sigma,
                                 double delta, const Rgb& emission, double t_mid) {
    double w;
    if (model == TransmittanceModel::Linear) {
        double drop = std::min(sigma * delta, st.T);
        double t_next = st.T - drop;
        w = drop * (st.T + t_next) * 0.5;
        st.T = t_next;
    } else {
        double att = std::exp(-sigma * delta);
        w = st.T * (1.0 - att);
        st.T *= att;
    }
    st.radiance += emission * w;
    st.depth_weighted += w * t_mid;
    st.weight_sum += w;
    return w;
}

// --------------------------- sample placement -----------------------------

// Midpoints of n equal strata over [t0, t1], optionally jittered in-stratum.
inline void stratified_samples(double t0, double t1, int n, bool jitter, Pcg32* rng,
                               std::vector<double>& out) {
    out.resize(n);
    double width = (t1 - t0) / n;
    for (int i = 0; i < n; ++i) {
        double xi = jitter ? rng->next_double() : 0.5;
        out[i] = t0 + (i + xi) * width;
    }
}

// Voronoi segment widths for sorted positions within [t0, t1]; midpoint
// placement over equal strata reduces to the stratum widths exactly.
inline void voronoi_deltas(const std::vector<double>& t, double t0, double t1,
                           std::vector<double>& out) {
    std::size_t n = t.size();
    out.resize(n);
    double prev = t0;
    for (std::size_t i = 0; i < n; ++i) {
        double next = (i + 1 < n) ? 0.5 * (t[i] + t[i + 1]) : t1;
        out[i] = next - prev;
        prev = next;
    }
}

// ------------------------------ marching ----------------------------------

// Quadrature over explicit sample positions (sorted, with per-sample widths).
// `basis` is the SH basis at the emission direction, evaluated once per ray.
template <typename Field>
MarchResult march_at(const Field& field, const Ray& ray, const std::vector<double>& ts,
                     const std::vector<double>& deltas, const double* basis,
                     const Activation& act, TransmittanceModel model, double sigma_min = 0.0,
                     double alpha_max = 1.0, bool collect_weights = true) {
    MarchResult r;
    if (collect_weights) {
        r.weights.assign(ts.size(), 0.0);
        r.sample_ts = ts;
    }
    AccumState st;
    GridSample gs;
    const int n_coeffs = sh_coeff_count(field.l_max());
    for (std::size_t i = 0; i < ts.size(); ++i) {
        Vec3 p = ray.at(ts[i]);
        field.sample_at(p, gs);
        if (!gs.inside || gs.sigma < sigma_min) continue;
        double out[3];
        for (int c = 0; c < 3; ++c) {
            const double* k = gs.coeffs.data() + c * kShMaxCoeffs;
            double z = 0.0;
            for (int j = 0; j < n_coeffs; ++j) z += k[j] * basis[j];
            out[c] = activate(act, z);
        }
        double w = accumulate_segment(st, model, gs.sigma, deltas[i],
                                      Rgb{out[0], out[1], out[2]}, ts[i]);
        if (collect_weights) r.weights[i] = w;
        ++r.samples_visited;
        // alpha_max == 1 disables early exit: the exact march walks the
        // whole segment even after linear saturation.
        if (alpha_max < 1.0 && st.alpha() >= alpha_max) break;
    }
    r.radiance = st.radiance;
    r.alpha = st.alpha();
    r.expected_depth = st.weight_sum > 0.0 ? st.depth_weighted / st.weight_sum : 0.0;
    return r;
}

// Stratified marching over the ray's own [t_near, t_far]. Emission is decoded
// toward the ray origin (direction -ray.dir).
template <typename Field>
MarchResult march(const Field& field, const Ray& ray, TransmittanceModel model,
                  const Activation& act, int n_samples, bool stratified_jitter = false,
                  Pcg32* rng = nullptr, double sigma_min = 0.0, double alpha_max = 1.0) {
    if (n_samples < 1) throw std::invalid_argument("march: n_samples must be >= 1");
    if (!(sigma_min >= 0.0)) throw std::invalid_argument("march: sigma_min must be >= 0");
    if (!(alpha_max > 0.0 && alpha_max <= 1.0))
        throw std::invalid_argument("march: alpha_max must be in (0, 1]");
    if (std::abs(dot(ray.dir, ray.dir) - 1.0) > 4e-9)
        throw std::invalid_argument("march: ray direction is not unit length");
    if (stratified_jitter && !rng)
        throw std::invalid_argument("march: stratified_jitter needs an rng");
    MarchResult r;
    if (!(ray.t_far > ray.t_near)) return r; // degenerate segment
    std::vector<double> ts, deltas;
    stratified_samples(ray.t_near, ray.t_far, n_samples, stratified_jitter, rng, ts);
    voronoi_deltas(ts, ray.t_near, ray.t_far, deltas);
    double basis[kShMaxCoeffs];
    sh_basis_unchecked(field.l_max(), -ray.dir, basis);
    return march_at(field, ray, ts, deltas, basis, act, model, sigma_min, alpha_max);
}

// ------------------------- hierarchical resampling ------------------------

struct ResampleResult {
    std::vector<double> t;
    bool uniform_fallback = false;
};

// Inverse-CDF draws from the piecewise-constant PDF the per-stratum weights
// define over [t0, t1]. All-zero weights fall back to uniform stratified
// placement of the u values.
inline ResampleResult hierarchical_resample(const std::vector<double>& weights, double t0,
                                            double t1, const std::vector<double>& u) {
    ResampleResult res;
    res.t.resize(u.size());
    const std::size_t n = weights.size();
    if (n == 0) throw std::invalid_argument("hierarchical_resample: no strata");
    double total = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw std::invalid_argument("hierarchical_resample: negative weight");
        total += w;
    }
    const double span = t1 - t0;
    const double lo = t0 + 1e-12 * span, hi = t1 - 1e-12 * span;
    if (!(total > 0.0)) {
        res.uniform_fallback = true;
        for (std::size_t i = 0; i < u.size(); ++i)
            res.t[i] = std::clamp(t0 + u[i] * span, lo, hi);
        return res;
    }
    std::vector<double> cdf(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) cdf[i + 1] = cdf[i] + weights[i];
    const double width = span / static_cast<double>(n);
    for (std::size_t i = 0; i < u.size(); ++i) {
        double target = u[i] * total;
        // First cdf entry strictly above the target marks the stratum end;
        // upper_bound also skips runs of zero-weight strata.
        std::size_t j = std::upper_bound(cdf.begin(), cdf.end(), target) - cdf.begin();
        std::size_t s = std::min(j - 1, n - 1);
        double frac = weights[s] > 0.0 ? (target - cdf[s]) / weights[s] : 0.0;
        res.t[i] = std::clamp(t0 + (static_cast<double>(s) + frac) * width, lo, hi);
    }
    return res;
}

// --------------------------- proxy intersection ----------------------------

struct SphereShape {
    Vec3 center;
    double radius = 1.0;
};

struct BoxShape {
    Aabb box;
};

// Entry/exit parameters against a sphere, clipped to t >= 0.
inline std::optional<std::pair<double, double>> intersect_sphere(const Ray& ray,
                                                                 const SphereShape& s) {
    Vec3 oc = ray.origin - s.center;
    double b = dot(oc, ray.dir);
    double c = dot(oc, oc) - s.radius * s.radius;
    double disc = b * b - c;
    if (disc <= 0.0) return std::nullopt; // miss or tangent
    double root = std::sqrt(disc);
    double t0 = -b - root, t1 = -b + root;
    if (t1 < 0.0) return std::nullopt;
    t0 = std::max(t0, 0.0);
    return std::make_pair(t0, t1);
}

// Slab test, clipped to t >= 0.
inline std::optional<std::pair<double, double>> intersect_box(const Ray& ray, const Aabb& box) {
    double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        double o = ray.origin[a], d = ray.dir[a];
        double lo = box.lo[a], hi = box.hi[a];
        if (d == 0.0) {
            if (o < lo || o > hi) return std::nullopt;
            continue;
        }
        double inv = 1.0 / d;
        double ta = (lo - o) * inv, tb = (hi - o) * inv;
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 > t1) return std::nullopt;
    }
    return std::make_pair(t0, t1);
}

struct Proxy {
    enum class Kind { Sphere, Box } kind = Kind::Sphere;
    SphereShape sphere;
    BoxShape box;

    static Proxy make_sphere(const Vec3& center, double radius) {
        Proxy p;
        p.kind = Kind::Sphere;
        p.sphere = {center, radius};
        return p;
    }
    static Proxy make_box(const Aabb& b) {
        Proxy p;
        p.kind = Kind::Box;
        p.box = {b};
        return p;
    }
    double surface_area() const {
        if (kind == Kind::Sphere) return 4.0 * M_PI * sphere.radius * sphere.radius;
        Vec3 e = box.box.extent();
        return 2.0 * (e.x * e.y + e.y * e.z + e.z * e.x);
    }
};

inline std::optional<std::pair<double, double>> intersect_proxy(const Ray& ray, const Proxy& p) {
    return p.kind == Proxy::Kind::Sphere ? intersect_sphere(ray, p.sphere)
                                         : intersect_box(ray, p.box.box);
}

} // namespace lumen
