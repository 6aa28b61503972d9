#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "lumen/field.hpp"
#include "lumen/sh.hpp"
#include "lumen/vec.hpp"

namespace lumen {

inline double smoothstep(double edge0, double edge1, double x) {
    double t = std::clamp((x - edge0) / (edge1 - edge0), 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

// Synthetic emissive volumes used as dataset ground truth. Densities and
// emissions vary smoothly on the scale of a few acceptance-grid cells so the
// fields stay representable by a modest trilinear grid. Emission is encoded
// as SH logits under the extended sigmoid, the same family the fit uses, so
// targets are always reachable.
//
//   sphere  uniform emissive ball, z-symmetric
//   band    emissive ball with a near-null equatorial band, bright polar
//           caps and a mild view-dependent tilt (the acceptance luminaire)
//   bulbs   two bright bulbs, high dynamic range against empty space
//   ball    hard-edged saturating ball of unit outgoing radiance (renderer
//           oracle: every interior chord composits to radiance 1, alpha 1)
struct AnalyticLuminaire {
    enum class Kind { Sphere, Band, Bulbs, Ball } kind = Kind::Sphere;
    Aabb box{{-1.2, -1.2, -1.2}, {1.2, 1.2, 1.2}};
    double act_max = 10.0; // extended-sigmoid range == dataset L_max
    int sh_l_max = 1;

    // geometry; the density ramp spans several acceptance-grid cells so the
    // within-leaf variation stays small after distillation
    double radius = 0.8;
    double ramp = 0.36; // smooth density falloff width
    double sigma_max = 12.0;

    // emission (pre-activation radiance targets)
    double emit_base = 4.0;

    Activation activation() const { return Activation::extended_sigmoid(act_max); }
    const Aabb& bounds() const { return box; }
    int l_max() const { return sh_l_max; }

    void sample_at(const Vec3& p, GridSample& s) const {
        const int n = sh_coeff_count(sh_l_max);
        s.inside = false;
        s.sigma = 0.0;
        for (int c = 0; c < 3; ++c)
            for (int k = 0; k < n; ++k) s.coeffs[c * kShMaxCoeffs + k] = 0.0;
        s.corner[0] = -1;
        if (!box.contains(p)) return;
        s.inside = true;

        double r = length(p);
        switch (kind) {
        case Kind::Sphere: {
            s.sigma = sigma_max * (1.0 - smoothstep(radius - ramp, radius, r));
            set_emission(s, emit_base, n);
            break;
        }
        case Kind::Band: {
            s.sigma = sigma_max * (1.0 - smoothstep(radius - ramp, radius, r));
            // Near-null emission inside |z| < 0.16, blending out by 0.36.
            double band_t = smoothstep(0.16, 0.36, std::abs(p.z));
            double e = emit_base * (2e-4 + (1.0 - 2e-4) * band_t);
            // Bright polar caps.
            double cap_t = smoothstep(0.72, 0.9, std::abs(p.z) / std::max(r, 1e-9));
            e = e + (9.3 - e) * cap_t;
            set_emission(s, e, n);
            // Mild view dependence outside the dark band (l = 1, m = 0).
            if (sh_l_max >= 1) {
                double amp = 0.5 * band_t * (1.0 - cap_t);
                for (int c = 0; c < 3; ++c)
                    s.coeffs[c * kShMaxCoeffs + 2] = amp / 0.4886025119029199;
            }
            break;
        }
        case Kind::Bulbs: {
            double d1 = length(p - Vec3{0.5, 0.0, 0.0});
            double d2 = length(p + Vec3{0.5, 0.0, 0.0});
            double occ = std::max(1.0 - smoothstep(0.28 - 0.12, 0.28, d1),
                                  1.0 - smoothstep(0.28 - 0.12, 0.28, d2));
            s.sigma = sigma_max * occ;
            set_emission(s, 9.0, n);
            break;
        }
        case Kind::Ball: {
            s.sigma = r <= radius ? sigma_max : 0.0;
            // Zero coefficients decode to act_max / 2; with act_max = 4 a
            // saturating chord composits to exactly 1.
            break;
        }
        }
    }

private:
    void set_emission(GridSample& s, double radiance, int n) const {
        (void)n;
        double z = std::clamp(logit(std::clamp(radiance / act_max, 1e-14, 1.0 - 1e-14)),
                              -30.0, 30.0);
        double c0 = z / 0.28209479177387814;
        for (int c = 0; c < 3; ++c) s.coeffs[c * kShMaxCoeffs + 0] = c0;
    }
};

inline AnalyticLuminaire make_toy_luminaire(const std::string& name) {
    AnalyticLuminaire f;
    if (name == "sphere") {
        f.kind = AnalyticLuminaire::Kind::Sphere;
        f.act_max = 10.0;
        f.emit_base = 4.0;
        f.sh_l_max = 0;
    } else if (name == "band") {
        f.kind = AnalyticLuminaire::Kind::Band;
        f.act_max = 10.0;
        f.emit_base = 9.0;
        f.sh_l_max = 1;
    } else if (name == "bulbs") {
        f.kind = AnalyticLuminaire::Kind::Bulbs;
        f.act_max = 10.0;
        f.sh_l_max = 0;
        f.sigma_max = 40.0;
    } else if (name == "ball") {
        f.kind = AnalyticLuminaire::Kind::Ball;
        f.box = Aabb{{-1, -1, -1}, {1, 1, 1}};
        f.radius = 1.0;
        f.sigma_max = 1e4;
        f.act_max = 4.0;
        f.sh_l_max = 0;
    } else {
        throw std::invalid_argument("unknown toy luminaire: " + name);
    }
    return f;
}

} // namespace lumen
