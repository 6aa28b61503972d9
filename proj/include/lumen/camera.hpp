#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "lumen/raymarch.hpp"
#include "lumen/vec.hpp"

namespace lumen {

// Radical inverse in the given base; indices start at 1 so the first base-2
// value is 1/2.
inline double radical_inverse(uint64_t index, uint32_t base) {
    double inv_base = 1.0 / base;
    double scale = inv_base;
    double result = 0.0;
    while (index > 0) {
        result += static_cast<double>(index % base) * scale;
        index /= base;
        scale *= inv_base;
    }
    return result;
}

inline std::pair<double, double> halton_2d(uint64_t index) {
    return {radical_inverse(index, 2), radical_inverse(index, 3)};
}

// Lambert cylindrical equal-area map of the unit square onto the sphere:
// u drives the azimuth, v drives z = 2v - 1. Area preserving, so a
// low-discrepancy (u, v) set stays well distributed on the sphere.
inline Vec3 equal_area_sphere(double u, double v) {
    double z = 2.0 * v - 1.0;
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    double phi = 2.0 * M_PI * u;
    return {r * std::cos(phi), r * std::sin(phi), z};
}

// Camera positions on a sphere of the given radius, Halton-distributed.
// `first_index` lets dataset splits continue the same sequence.
inline std::vector<Vec3> halton_sphere_cameras(int n, double radius, uint64_t first_index = 1) {
    if (n < 1) throw std::invalid_argument("halton_sphere_cameras: n must be >= 1");
    std::vector<Vec3> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        auto [u, v] = halton_2d(first_index + static_cast<uint64_t>(i));
        out.push_back(equal_area_sphere(u, v) * radius);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Camera poses and per-pixel ray generation.
// ---------------------------------------------------------------------------

struct Basis3 {
    // Orthonormal camera frame: x right, y up, forward toward the target.
    // (right, up, -forward) is the right-handed basis, as usual for cameras.
    Vec3 right, up, forward;
};

// Right-handed look-at frame with the view axis toward the target. A view
// parallel to the up hint falls back to (0, 1, 0).
inline Basis3 look_at(const Vec3& position, const Vec3& target = {0, 0, 0},
                      const Vec3& up_hint = {0, 0, 1}) {
    Vec3 diff = target - position;
    double len = length(diff);
    if (len == 0.0) throw std::invalid_argument("look_at: position equals target");
    Vec3 forward = diff / len;
    Vec3 up = up_hint;
    if (length(cross(forward, up)) < 1e-6) up = Vec3{0, 1, 0};
    Vec3 right = normalize(cross(forward, up));
    Vec3 true_up = cross(right, forward);
    return {right, true_up, forward};
}

struct CameraPose {
    enum class Kind { Orthographic, Perspective } kind = Kind::Orthographic;
    Vec3 position;
    Basis3 frame;
    int width = 0, height = 0; // pixels
    double ortho_width = 1.0;  // world units across the image, orthographic
    double focal_mm = 50.0;    // perspective
    double sensor_mm = 36.0;   // perspective sensor width

    static CameraPose orthographic(const Vec3& position, const Basis3& frame, int w, int h,
                                   double ortho_width) {
        CameraPose c;
        c.kind = Kind::Orthographic;
        c.position = position;
        c.frame = frame;
        c.width = w;
        c.height = h;
        c.ortho_width = ortho_width;
        return c;
    }
    static CameraPose perspective(const Vec3& position, const Basis3& frame, int w, int h,
                                  double focal_mm, double sensor_mm) {
        CameraPose c;
        c.kind = Kind::Perspective;
        c.position = position;
        c.frame = frame;
        c.width = w;
        c.height = h;
        c.focal_mm = focal_mm;
        c.sensor_mm = sensor_mm;
        return c;
    }
};

// Ray through an image-plane point. (px, py) are raster coordinates where
// pixel centers sit at half-integers; row 0 is the top of the image.
inline Ray camera_ray(const CameraPose& cam, double px, double py) {
    double u = px / cam.width - 0.5;
    double v = 0.5 - py / cam.height;
    double aspect = static_cast<double>(cam.height) / cam.width;
    Ray ray;
    if (cam.kind == CameraPose::Kind::Orthographic) {
        double hw = cam.ortho_width;
        ray.origin = cam.position + cam.frame.right * (u * hw) +
                     cam.frame.up * (v * hw * aspect);
        ray.dir = cam.frame.forward;
    } else {
        double s = cam.sensor_mm / cam.focal_mm;
        ray.origin = cam.position;
        ray.dir = normalize(cam.frame.forward + cam.frame.right * (u * s) +
                            cam.frame.up * (v * s * aspect));
    }
    return ray;
}

// Pixel-centered ray for integer raster coordinates.
inline Ray pixel_ray(const CameraPose& cam, int ix, int iy) {
    return camera_ray(cam, ix + 0.5, iy + 0.5);
}

inline std::vector<Ray> generate_rays(const CameraPose& cam) {
    std::vector<Ray> rays;
    rays.reserve(static_cast<std::size_t>(cam.width) * cam.height);
    for (int y = 0; y < cam.height; ++y)
        for (int x = 0; x < cam.width; ++x) rays.push_back(pixel_ray(cam, x, y));
    return rays;
}

} // namespace lumen
