#pragma once

#include <cmath>
#include <optional>

#include "lumen/image.hpp"
#include "lumen/parallel.hpp"
#include "lumen/plenoctree.hpp"
#include "lumen/rng.hpp"
#include "lumen/scene.hpp"

namespace lumen {

// Monte Carlo direct illumination with octree-backed luminaires. Camera rays
// composite proxies as L_e + T * L_i; surfaces gather next-event estimates
// from the luminaire proxies with transparency-aware shadow rays.

struct SurfaceHit {
    double t = 0.0;
    Vec3 point, normal;
    const Surface* surface = nullptr;
};

inline std::optional<double> intersect_plane(const Ray& ray, const Vec3& point,
                                             const Vec3& normal) {
    double denom = dot(ray.dir, normal);
    if (std::abs(denom) < 1e-12) return std::nullopt;
    double t = dot(point - ray.origin, normal) / denom;
    if (t <= 0.0) return std::nullopt;
    return t;
}

inline std::optional<double> intersect_triangle(const Ray& ray, const Triangle& tri) {
    constexpr double kEps = 1e-12;
    Vec3 e1 = tri.b - tri.a, e2 = tri.c - tri.a;
    Vec3 p = cross(ray.dir, e2);
    double det = dot(e1, p);
    if (std::abs(det) < kEps) return std::nullopt;
    double inv = 1.0 / det;
    Vec3 s = ray.origin - tri.a;
    double u = dot(s, p) * inv;
    if (u < 0.0 || u > 1.0) return std::nullopt;
    Vec3 q = cross(s, e1);
    double v = dot(ray.dir, q) * inv;
    if (v < 0.0 || u + v > 1.0) return std::nullopt;
    double t = dot(e2, q) * inv;
    if (t <= 0.0) return std::nullopt;
    return t;
}

inline std::optional<SurfaceHit> intersect_surface(const Ray& ray, const Surface& s) {
    switch (s.kind) {
    case Surface::Kind::Plane: {
        auto t = intersect_plane(ray, s.point, s.normal);
        if (!t) return std::nullopt;
        SurfaceHit hit{*t, ray.at(*t), s.normal, &s};
        if (dot(hit.normal, ray.dir) > 0.0) hit.normal = -hit.normal;
        return hit;
    }
    case Surface::Kind::Sphere: {
        auto span = intersect_sphere(ray, s.sphere);
        if (!span) return std::nullopt;
        double t = span->first > 1e-9 ? span->first : span->second;
        if (t <= 1e-9) return std::nullopt;
        SurfaceHit hit{t, ray.at(t), normalize(ray.at(t) - s.sphere.center), &s};
        if (dot(hit.normal, ray.dir) > 0.0) hit.normal = -hit.normal;
        return hit;
    }
    case Surface::Kind::Box: {
        auto span = intersect_box(ray, s.box);
        if (!span) return std::nullopt;
        double t = span->first > 1e-9 ? span->first : span->second;
        if (t <= 1e-9) return std::nullopt;
        Vec3 p = ray.at(t);
        // Face normal from the dominant axis of the local coordinate.
        Vec3 half = s.box.extent() * 0.5;
        Vec3 diff = p - s.box.center();
        Vec3 rel{diff.x / half.x, diff.y / half.y, diff.z / half.z};
        Vec3 n{0, 0, 0};
        double ax = std::abs(rel.x), ay = std::abs(rel.y), az = std::abs(rel.z);
        if (ax >= ay && ax >= az) n.x = rel.x > 0 ? 1 : -1;
        else if (ay >= az) n.y = rel.y > 0 ? 1 : -1;
        else n.z = rel.z > 0 ? 1 : -1;
        SurfaceHit hit{t, p, n, &s};
        if (dot(hit.normal, ray.dir) > 0.0) hit.normal = -hit.normal;
        return hit;
    }
    case Surface::Kind::Mesh: {
        std::optional<SurfaceHit> best;
        for (const auto& tri : s.triangles) {
            auto t = intersect_triangle(ray, tri);
            if (!t) continue;
            if (!best || *t < best->t) {
                Vec3 n = normalize(cross(tri.b - tri.a, tri.c - tri.a));
                if (dot(n, ray.dir) > 0.0) n = -n;
                best = SurfaceHit{*t, ray.at(*t), n, &s};
            }
        }
        return best;
    }
    }
    return std::nullopt;
}

inline std::optional<SurfaceHit> nearest_surface(const Scene& scene, const Ray& ray,
                                                 double t_max) {
    std::optional<SurfaceHit> best;
    for (const auto& s : scene.surfaces) {
        auto hit = intersect_surface(ray, s);
        if (hit && hit->t < t_max && (!best || hit->t < best->t)) best = hit;
    }
    return best;
}

// Emission and opacity of the interior chord leaving the proxy at x_l toward
// -outgoing. Tangent or degenerate chords return (0, 0).
inline std::pair<Rgb, double> luminaire_radiance(const SceneLuminaire& lum, const Vec3& x_l,
                                                 const Vec3& outgoing) {
    Ray chord{x_l, -outgoing};
    auto span = intersect_proxy(chord, lum.proxy);
    if (!span || !(span->second > 1e-9)) return {Rgb{}, 0.0};
    chord.t_near = std::max(0.0, span->first);
    chord.t_far = span->second;
    // Decode emission in the propagation direction (toward the receiver).
    double basis[kShMaxCoeffs];
    sh_basis_unchecked(lum.tree.l_max(), outgoing, basis);
    auto mr = traverse_with_basis(lum.tree, chord, basis, lum.act, lum.model, lum.sigma_min,
                                  lum.alpha_max);
    return {mr.radiance, mr.alpha};
}

// Uniform area sample of a proxy surface: point and outward normal.
inline std::pair<Vec3, Vec3> sample_proxy_surface(const Proxy& proxy, Pcg32& rng) {
    if (proxy.kind == Proxy::Kind::Sphere) {
        double z = 2.0 * rng.next_double() - 1.0;
        double phi = 2.0 * M_PI * rng.next_double();
        double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        Vec3 n{r * std::cos(phi), r * std::sin(phi), z};
        return {proxy.sphere.center + n * proxy.sphere.radius, n};
    }
    const Aabb& b = proxy.box.box;
    Vec3 e = b.extent();
    double areas[3] = {e.y * e.z, e.x * e.z, e.x * e.y}; // x, y, z face pairs
    double total = 2.0 * (areas[0] + areas[1] + areas[2]);
    double pick = rng.next_double() * total;
    int axis = 0;
    double acc = 2.0 * areas[0];
    while (axis < 2 && pick >= acc) acc += 2.0 * areas[++axis];
    bool positive = rng.next_double() < 0.5;
    double u = rng.next_double(), v = rng.next_double();
    Vec3 p = b.lo;
    Vec3 n{0, 0, 0};
    switch (axis) {
    case 0:
        p = {positive ? b.hi.x : b.lo.x, b.lo.y + u * e.y, b.lo.z + v * e.z};
        n.x = positive ? 1 : -1;
        break;
    case 1:
        p = {b.lo.x + u * e.x, positive ? b.hi.y : b.lo.y, b.lo.z + v * e.z};
        n.y = positive ? 1 : -1;
        break;
    default:
        p = {b.lo.x + u * e.x, b.lo.y + v * e.y, positive ? b.hi.z : b.lo.z};
        n.z = positive ? 1 : -1;
        break;
    }
    return {p, n};
}

// Transparency-aware visibility along the segment x -> y: opaque surfaces
// block, intervening proxies attenuate by their chord transmittance.
inline double shadow_attenuation(const Scene& scene, const Vec3& x, const Vec3& y,
                                 const SceneLuminaire* target) {
    Vec3 d = y - x;
    double dist = length(d);
    if (dist < 1e-12) return 0.0;
    Ray ray{x, d / dist};
    constexpr double kEps = 1e-7;
    if (auto hit = nearest_surface(scene, ray, dist * (1.0 - 1e-9)))
        if (hit->t > kEps) return 0.0;
    double atten = 1.0;
    for (const auto& lum : scene.luminaires) {
        if (&lum == target) continue;
        auto span = intersect_proxy(ray, lum.proxy);
        if (!span) continue;
        double a = std::max(span->first, kEps), b = std::min(span->second, dist - kEps);
        if (!(b > a)) continue;
        Ray chord = ray;
        chord.t_near = a;
        chord.t_far = b;
        auto mr = traverse(lum.tree, chord, lum.act, lum.model, lum.sigma_min, lum.alpha_max);
        atten *= 1.0 - mr.alpha;
        if (atten == 0.0) return 0.0;
    }
    return atten;
}

// One next-event sample per luminaire: uniform proxy-area sampling with the
// standard area-to-solid-angle factor.
inline Rgb estimate_direct(const Scene& scene, const Vec3& x, const Vec3& n,
                           const Material& material, Pcg32& rng) {
    Rgb sum{};
    for (const auto& lum : scene.luminaires) {
        auto [y, n_y] = sample_proxy_surface(lum.proxy, rng);
        Vec3 to_x = x - y;
        double dist2 = dot(to_x, to_x);
        if (dist2 < 1e-12) continue;
        double dist = std::sqrt(dist2);
        Vec3 w_yx = to_x / dist;       // emission direction at y
        double cos_y = dot(n_y, w_yx); // front-facing factor at the proxy
        double cos_x = dot(n, -w_yx);  // incidence at the shading point
        if (cos_y <= 0.0 || cos_x <= 0.0) continue;
        double vis = shadow_attenuation(scene, x + n * 1e-7, y, &lum);
        if (vis == 0.0) continue;
        auto [emission, alpha] = luminaire_radiance(lum, y, w_yx);
        (void)alpha;
        double pdf_area = 1.0 / lum.proxy.surface_area();
        double geom = cos_y / dist2;
        Rgb f_r = material.albedo * (1.0 / M_PI);
        sum += f_r * emission * (cos_x * geom * vis / pdf_area);
    }
    return sum;
}

// Full radiance along a ray: nearest of {surface, proxy}; proxies composite
// the chord emission with the attenuated continuation, depth-limited.
inline Rgb path_radiance(const Scene& scene, const Ray& ray, Pcg32& rng, int depth) {
    auto surf = nearest_surface(scene, ray, std::numeric_limits<double>::infinity());

    int lum_index = -1;
    double lum_t0 = 0.0, lum_t1 = 0.0;
    for (std::size_t i = 0; i < scene.luminaires.size(); ++i) {
        auto span = intersect_proxy(ray, scene.luminaires[i].proxy);
        if (!span || !(span->second > 1e-9)) continue;
        double entry = std::max(span->first, 0.0);
        if (lum_index < 0 || entry < lum_t0) {
            lum_index = static_cast<int>(i);
            lum_t0 = entry;
            lum_t1 = span->second;
        }
    }

    if (lum_index >= 0 && (!surf || lum_t0 < surf->t)) {
        const SceneLuminaire& lum = scene.luminaires[lum_index];
        Ray chord = ray;
        chord.t_near = lum_t0;
        chord.t_far = surf ? std::min(lum_t1, surf->t) : lum_t1;
        double basis[kShMaxCoeffs];
        sh_basis_unchecked(lum.tree.l_max(), -ray.dir, basis);
        auto mr = traverse_with_basis(lum.tree, chord, basis, lum.act, lum.model,
                                      lum.sigma_min, lum.alpha_max);
        double transmittance = 1.0 - mr.alpha;
        Rgb behind{};
        if (transmittance > 0.0) {
            if (surf && surf->t <= lum_t1) {
                behind = estimate_direct(scene, surf->point, surf->normal,
                                         surf->surface->material, rng);
            } else if (depth < scene.estimator.max_transparency_bounces) {
                Ray cont{ray.at(lum_t1) + ray.dir * 1e-9, ray.dir};
                behind = path_radiance(scene, cont, rng, depth + 1);
            } else {
                behind = scene.background;
            }
        }
        return mr.radiance + behind * transmittance;
    }
    if (surf)
        return estimate_direct(scene, surf->point, surf->normal, surf->surface->material, rng);
    return scene.background;
}

struct RenderResult {
    ImageRgb image;
    ImageGray sample_counts;
};

// Deterministic tile-free parallel render: every (pixel, sample) pair owns an
// RNG stream keyed by the seed, so the image is identical for any worker
// count. Pixels use a 1x1 box filter.
inline RenderResult render(const Scene& scene, int threads = 0) {
    const int w = scene.camera.width, h = scene.camera.height;
    RenderResult out{ImageRgb(w, h), ImageGray(w, h)};
    const int spp = scene.estimator.spp;
    parallel_for(static_cast<std::size_t>(w) * h, resolve_thread_count(threads),
                 [&](std::size_t idx) {
                     int x = static_cast<int>(idx % w), y = static_cast<int>(idx / w);
                     Rgb acc{};
                     for (int s = 0; s < spp; ++s) {
                         Pcg32 rng = keyed_rng(scene.estimator.seed, idx, s);
                         double jx = spp == 1 ? 0.5 : rng.next_double();
                         double jy = spp == 1 ? 0.5 : rng.next_double();
                         Ray ray = camera_ray(scene.camera, x + jx, y + jy);
                         acc += path_radiance(scene, ray, rng, 0);
                     }
                     acc = acc / static_cast<double>(spp);
                     out.image.at(x, y, 0) = static_cast<float>(acc.x);
                     out.image.at(x, y, 1) = static_cast<float>(acc.y);
                     out.image.at(x, y, 2) = static_cast<float>(acc.z);
                     out.sample_counts.at(x, y) = static_cast<float>(spp);
                 });
    return out;
}

} // namespace lumen
