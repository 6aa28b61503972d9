#include <catch2/catch.hpp>

#include <cmath>

#include "lumen/camera.hpp"
#include "lumen/rng.hpp"
#include "lumen/sh.hpp"

using namespace lumen;

namespace {

Vec3 uniform_sphere(Pcg32& rng) {
    double z = 2.0 * rng.next_double() - 1.0;
    double phi = 2.0 * M_PI * rng.next_double();
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {r * std::cos(phi), r * std::sin(phi), z};
}

} // namespace

TEST_CASE("sh_basis order 0 is the constant 1/(2 sqrt pi)") {
    Pcg32 rng(7);
    for (int i = 0; i < 16; ++i) {
        auto b = sh_basis(0, uniform_sphere(rng));
        REQUIRE(b[0] == Approx(0.28209479).epsilon(1e-7));
    }
}

TEST_CASE("sh_basis order 1 at the +z pole") {
    auto b = sh_basis(1, {0.0, 0.0, 1.0});
    CHECK(b[1] == Approx(0.0).margin(1e-15));
    CHECK(b[2] == Approx(0.48860251).epsilon(1e-7));
    CHECK(b[3] == Approx(0.0).margin(1e-15));
}

TEST_CASE("sh_basis rejects bad arguments") {
    CHECK_THROWS(sh_basis(5, {0.0, 0.0, 1.0}));
    CHECK_THROWS(sh_basis(-1, {0.0, 0.0, 1.0}));
    CHECK_THROWS(sh_basis(2, {0.0, 0.0, 2.0}));
    // Normalize policy accepts and fixes the direction instead.
    auto b = sh_basis(1, {0.0, 0.0, 2.0}, NonUnitPolicy::Normalize);
    CHECK(b[2] == Approx(0.48860251).epsilon(1e-7));
}

TEST_CASE("sh basis is orthonormal under Monte Carlo integration", "[oracle]") {
    // Brute-force check of int Y_i Y_j dOmega = delta_ij over 1e6 uniform
    // sphere samples, all 25 basis functions at once. Halton points through
    // the equal-area warp keep the integration error well under the bound.
    constexpr int kN = 25;
    constexpr int kSamples = 1'000'000;
    static double gram[kN][kN];
    for (auto& row : gram)
        for (double& v : row) v = 0.0;
    double b[kShMaxCoeffs];
    for (int s = 0; s < kSamples; ++s) {
        auto [u, v] = halton_2d(static_cast<uint64_t>(s) + 1);
        Vec3 d = equal_area_sphere(u, v);
        sh_basis_unchecked(4, d, b);
        for (int i = 0; i < kN; ++i)
            for (int j = i; j < kN; ++j) gram[i][j] += b[i] * b[j];
    }
    const double norm = 4.0 * M_PI / kSamples;
    for (int i = 0; i < kN; ++i)
        for (int j = i; j < kN; ++j) {
            double est = gram[i][j] * norm;
            double expect = (i == j) ? 1.0 : 0.0;
            INFO("i=" << i << " j=" << j << " est=" << est);
            REQUIRE(std::abs(est - expect) < 3e-3);
        }
}

TEST_CASE("decode_emission with zero coefficients") {
    ShCoeffs c(2);
    Vec3 dir{0.0, 1.0, 0.0};
    Rgb ext = decode_emission(c, dir, Activation::extended_sigmoid(10.0));
    CHECK(ext.x == Approx(5.0));
    CHECK(ext.y == Approx(5.0));
    CHECK(ext.z == Approx(5.0));
    Rgb exp = decode_emission(c, dir, Activation::exponential());
    CHECK(exp.x == Approx(1.0));
    CHECK(exp.y == Approx(1.0));
    CHECK(exp.z == Approx(1.0));
}

TEST_CASE("decode_emission evaluates the extended sigmoid at the SH dot product") {
    ShCoeffs c(0);
    for (int ch = 0; ch < 3; ++ch) c.at(ch, 0) = 1.0 / 0.28209479177387814;
    Rgb out = decode_emission(c, {0.0, 0.0, 1.0}, Activation::extended_sigmoid(1.0));
    // logit is exactly 1, so each channel is sigmoid(1).
    CHECK(out.x == Approx(0.7310585786300049).epsilon(1e-9));
}

TEST_CASE("l=0-only emission is direction invariant") {
    ShCoeffs c(2);
    c.at(0, 0) = 0.7;
    c.at(1, 0) = -1.3;
    c.at(2, 0) = 2.0;
    Pcg32 rng(99);
    Rgb ref = decode_emission(c, {0.0, 0.0, 1.0}, Activation::extended_sigmoid(8.0));
    for (int i = 0; i < 32; ++i) {
        Rgb v = decode_emission(c, uniform_sphere(rng), Activation::extended_sigmoid(8.0));
        CHECK(v.x == ref.x); // exact: same dot product bit for bit
        CHECK(v.y == ref.y);
        CHECK(v.z == ref.z);
    }
}

TEST_CASE("extended sigmoid output stays strictly inside (0, L_max)") {
    // Strict over the logit range double precision can resolve; beyond
    // |z| ~ 36 the sigmoid rounds to exactly 0 or 1.
    Pcg32 rng(5);
    Activation act = Activation::extended_sigmoid(12.0);
    for (int i = 0; i < 1000; ++i) {
        double logit = (rng.next_double() - 0.5) * 60.0;
        double v = activate(act, logit);
        CHECK(v > 0.0);
        CHECK(v < 12.0);
    }
}

TEST_CASE("decode_emission is monotone in a coefficient where its basis value is positive") {
    Pcg32 rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        Vec3 dir = uniform_sphere(rng);
        auto basis = sh_basis(2, dir);
        int k = static_cast<int>(rng.next_below(9));
        if (basis[k] <= 0.0) continue;
        ShCoeffs c(2);
        for (int i = 0; i < 9; ++i) c.at(0, i) = (rng.next_double() - 0.5) * 4.0;
        double before = decode_emission(c, dir, Activation::extended_sigmoid(4.0)).x;
        c.at(0, k) += 0.25;
        double after = decode_emission(c, dir, Activation::extended_sigmoid(4.0)).x;
        CHECK(after > before);
    }
}

TEST_CASE("log-sigmoid activation range matches its closed form") {
    Activation act = Activation::log_sigmoid(1e-6);
    // Saturated high logit approaches -log(eps).
    CHECK(activate(act, 100.0) == Approx(-std::log(1e-6)).epsilon(1e-6));
    CHECK(activate(act, 100.0) == Approx(13.8155).epsilon(1e-4));
    // Low logits clamp at zero radiance.
    CHECK(activate(act, -100.0) == 0.0);
    CHECK_THROWS(Activation::log_sigmoid(0.0));
    CHECK_THROWS(Activation::log_sigmoid(1.5));
}

TEST_CASE("reinhard_weight is the loss denominator lambda*y + eps") {
    CHECK(reinhard_weight(0.0, 1.0, 0.01) == Approx(0.01));
    CHECK(reinhard_weight(1.0, 1.0, 0.01) == Approx(1.01));
    CHECK(reinhard_weight(12.0, 10.0, 0.01) == Approx(120.01));
}
