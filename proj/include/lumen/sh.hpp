#pragma once

#include <array>
#include <cmath>
#include <stdexcept>

#include "lumen/vec.hpp"

namespace lumen {

inline constexpr int kShMaxOrder = 4;
inline constexpr int kShMaxCoeffs = (kShMaxOrder + 1) * (kShMaxOrder + 1); // 25

constexpr int sh_coeff_count(int l_max) { return (l_max + 1) * (l_max + 1); }

// ---------------------------------------------------------------------------
// Real spherical harmonics, hard-coded closed forms up to l = 4, flat (l, m)
// order with m running -l..l. Condon-Shortley phase is folded into the
// constants; this is the same table the plenoctree codebases use.
// ---------------------------------------------------------------------------
namespace sh_const {
inline constexpr double kC0 = 0.28209479177387814;  // 1 / (2 sqrt(pi))
inline constexpr double kC1 = 0.4886025119029199;   // sqrt(3 / (4 pi))
inline constexpr double kC2[5] = {
    1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
    -1.0925484305920792, 0.5462742152960396};
inline constexpr double kC3[7] = {
    -0.5900435899266435, 2.890611442640554,  -0.4570457994644658,
    0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
    -0.5900435899266435};
inline constexpr double kC4[9] = {
    2.5033429417967046,  -1.7701307697799304, 0.9461746957575601,
    -0.6690465435572892, 0.10578554691520431, -0.6690465435572892,
    0.47308734787878004, -1.7701307697799304, 0.6258357354491761};
} // namespace sh_const

// Evaluates the basis at a unit direction into out[0 .. (l_max+1)^2).
// Directions are not re-normalized here; callers own that contract.
inline void sh_basis_unchecked(int l_max, const Vec3& d, double* out) {
    using namespace sh_const;
    const double x = d.x, y = d.y, z = d.z;
    out[0] = kC0;
    if (l_max < 1) return;
    out[1] = -kC1 * y;
    out[2] = kC1 * z;
    out[3] = -kC1 * x;
    if (l_max < 2) return;
    const double xx = x * x, yy = y * y, zz = z * z;
    const double xy = x * y, yz = y * z, xz = x * z;
    out[4] = kC2[0] * xy;
    out[5] = kC2[1] * yz;
    out[6] = kC2[2] * (2.0 * zz - xx - yy);
    out[7] = kC2[3] * xz;
    out[8] = kC2[4] * (xx - yy);
    if (l_max < 3) return;
    out[9] = kC3[0] * y * (3.0 * xx - yy);
    out[10] = kC3[1] * xy * z;
    out[11] = kC3[2] * y * (4.0 * zz - xx - yy);
    out[12] = kC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    out[13] = kC3[4] * x * (4.0 * zz - xx - yy);
    out[14] = kC3[5] * z * (xx - yy);
    out[15] = kC3[6] * x * (xx - 3.0 * yy);
    if (l_max < 4) return;
    out[16] = kC4[0] * xy * (xx - yy);
    out[17] = kC4[1] * yz * (3.0 * xx - yy);
    out[18] = kC4[2] * xy * (7.0 * zz - 1.0);
    out[19] = kC4[3] * yz * (7.0 * zz - 3.0);
    out[20] = kC4[4] * (zz * (35.0 * zz - 30.0) + 3.0);
    out[21] = kC4[5] * xz * (7.0 * zz - 3.0);
    out[22] = kC4[6] * (xx - yy) * (7.0 * zz - 1.0);
    out[23] = kC4[7] * xz * (xx - 3.0 * yy);
    out[24] = kC4[8] * (xx * (xx - 3.0 * yy) - yy * (3.0 * xx - yy));
}

enum class NonUnitPolicy { Reject, Normalize };

// Checked entry point. |dir| must be 1 within 1e-9 unless the caller asks
// for normalization.
inline std::array<double, kShMaxCoeffs> sh_basis(int l_max, Vec3 dir,
                                                 NonUnitPolicy policy = NonUnitPolicy::Reject) {
    if (l_max < 0 || l_max > kShMaxOrder)
        throw std::invalid_argument("sh_basis: l_max must be in [0, 4]");
    double len = length(dir);
    if (std::abs(len - 1.0) > 1e-9) {
        if (policy == NonUnitPolicy::Reject || len == 0.0)
            throw std::invalid_argument("sh_basis: direction is not unit length");
        dir = dir / len;
    }
    std::array<double, kShMaxCoeffs> out{};
    sh_basis_unchecked(l_max, dir, out.data());
    return out;
}

// ---------------------------------------------------------------------------
// SH coefficient block: (l_max+1)^2 logits per color channel.
// ---------------------------------------------------------------------------
struct ShCoeffs {
    int l_max = 0;
    // Channel-major, coefficient-minor; entries past n() are ignored.
    std::array<double, 3 * kShMaxCoeffs> v{};

    ShCoeffs() = default;
    explicit ShCoeffs(int l) : l_max(l) {
        if (l < 0 || l > kShMaxOrder)
            throw std::invalid_argument("ShCoeffs: l_max must be in [0, 4]");
    }

    int n() const { return sh_coeff_count(l_max); }
    double& at(int channel, int k) { return v[channel * kShMaxCoeffs + k]; }
    double at(int channel, int k) const { return v[channel * kShMaxCoeffs + k]; }
    const double* channel(int c) const { return v.data() + c * kShMaxCoeffs; }
    double* channel(int c) { return v.data() + c * kShMaxCoeffs; }
};

// ---------------------------------------------------------------------------
// Activations mapping SH-decoded logits to emitted radiance.
// ---------------------------------------------------------------------------
enum class ActivationType { ExtendedSigmoid, Exponential, LogSigmoid };

struct Activation {
    ActivationType type = ActivationType::ExtendedSigmoid;
    double radiance_max = 1.0; // ExtendedSigmoid scale, > 0
    double eps = 1e-6;         // LogSigmoid range parameter, in (0, 1)

    static Activation extended_sigmoid(double radiance_max) {
        if (!(radiance_max > 0.0))
            throw std::invalid_argument("extended_sigmoid: radiance_max must be > 0");
        return {ActivationType::ExtendedSigmoid, radiance_max, 0.0};
    }
    static Activation exponential() { return {ActivationType::Exponential, 1.0, 0.0}; }
    static Activation log_sigmoid(double eps) {
        if (!(eps > 0.0 && eps < 1.0))
            throw std::invalid_argument("log_sigmoid: eps must be in (0, 1)");
        return {ActivationType::LogSigmoid, 1.0, eps};
    }
};

inline double sigmoid(double x) {
    if (x >= 0.0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

inline double activate(const Activation& act, double logit) {
    switch (act.type) {
    case ActivationType::ExtendedSigmoid:
        return act.radiance_max * sigmoid(logit);
    case ActivationType::Exponential:
        return std::exp(logit);
    case ActivationType::LogSigmoid:
        // -log(1 - sigmoid(x) + eps), clamped to keep radiance non-negative.
        return std::max(0.0, -std::log(1.0 - sigmoid(logit) + act.eps));
    }
    return 0.0;
}

// d(activate)/d(logit), expressed through the already-activated value where
// that is cheaper.
inline double activate_derivative(const Activation& act, double logit, double value) {
    switch (act.type) {
    case ActivationType::ExtendedSigmoid:
        return value * (1.0 - value / act.radiance_max);
    case ActivationType::Exponential:
        return value;
    case ActivationType::LogSigmoid: {
        double s = sigmoid(logit);
        if (value <= 0.0 && -std::log(1.0 - s + act.eps) < 0.0) return 0.0;
        return s * (1.0 - s) / (1.0 - s + act.eps);
    }
    }
    return 0.0;
}

// Per-channel dot(coeffs, basis) pushed through the activation. The basis is
// taken precomputed so per-ray callers evaluate it once.
inline Rgb decode_emission_with_basis(const ShCoeffs& coeffs, const double* basis,
                                      const Activation& act) {
    const int n = coeffs.n();
    double out[3];
    for (int c = 0; c < 3; ++c) {
        const double* k = coeffs.channel(c);
        double z = 0.0;
        for (int i = 0; i < n; ++i) z += k[i] * basis[i];
        out[c] = activate(act, z);
    }
    return {out[0], out[1], out[2]};
}

inline Rgb decode_emission(const ShCoeffs& coeffs, const Vec3& dir, const Activation& act,
                           NonUnitPolicy policy = NonUnitPolicy::Reject) {
    auto basis = sh_basis(coeffs.l_max, dir, policy);
    return decode_emission_with_basis(coeffs, basis.data(), act);
}

// Denominator of the HDR-regularized loss: lambda * value + eps.
inline double reinhard_weight(double value, double lambda, double eps) {
    return lambda * value + eps;
}

} // namespace lumen
