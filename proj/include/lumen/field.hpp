#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lumen/sh.hpp"
#include "lumen/vec.hpp"

namespace lumen {

static_assert(std::endian::native == std::endian::little,
              "grid serialization assumes a little-endian host");

inline double softplus(double x) {
    // log(1 + e^x) without overflow.
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

// Inverse of softplus for y > 0.
inline double softplus_inverse(double y) {
    if (y > 30.0) return y;
    return y + std::log(-std::expm1(-y));
}

enum class GridInterp { Constant, Trilinear };

// Per-sample query record with everything the training backward pass needs:
// trilinear support voxels, their blend weights, and d(sigma)/d(logit).
struct GridSample {
    double sigma = 0.0;
    std::array<double, 3 * kShMaxCoeffs> coeffs{};
    int corner[8] = {-1, -1, -1, -1, -1, -1, -1, -1};
    double weight[8] = {};
    double dsigma_dlogit[8] = {};
    bool inside = false;
};

// Dense voxel grid of density logits plus per-channel SH logits. This is the
// trainable field; octree extraction reads it back out through query().
//
// Voxel (ix, iy, iz) has center bbox.lo + (i + 0.5) * cell and linear index
// (iz * ny + iy) * nx + ix; the SH array is voxel-major, channel-major,
// coefficient-minor, matching the serialized layout.
class RadianceFieldGrid {
public:
    RadianceFieldGrid() = default;

    struct InitZeros {};
    struct InitConstant {
        double sigma0 = 0.1;
        double sh_logit0 = 0.0;
    };

    RadianceFieldGrid(int nx, int ny, int nz, const Aabb& bbox, int l_max,
                      bool density_softplus = true)
        : nx_(nx), ny_(ny), nz_(nz), bbox_(bbox), l_max_(l_max),
          density_softplus_(density_softplus) {
        if (nx < 1 || ny < 1 || nz < 1)
            throw std::invalid_argument("grid: resolution components must be >= 1");
        if (!bbox.valid())
            throw std::invalid_argument("grid: bbox must have positive extent on each axis");
        if (l_max < 0 || l_max > kShMaxOrder)
            throw std::invalid_argument("grid: l_max must be in [0, 4]");
        cell_ = Vec3(bbox.extent().x / nx, bbox.extent().y / ny, bbox.extent().z / nz);
        density_logits_.assign(voxel_count(), 0.0);
        sh_logits_.assign(voxel_count() * 3 * static_cast<std::size_t>(coeffs_per_channel()), 0.0);
    }

    static RadianceFieldGrid init(int nx, int ny, int nz, const Aabb& bbox, int l_max,
                                  InitZeros) {
        // "Zero" init still wants a small live density so gradients flow.
        return init(nx, ny, nz, bbox, l_max, InitConstant{0.1, 0.0});
    }

    static RadianceFieldGrid init(int nx, int ny, int nz, const Aabb& bbox, int l_max,
                                  InitConstant c) {
        RadianceFieldGrid g(nx, ny, nz, bbox, l_max);
        double logit = softplus_inverse(c.sigma0);
        std::fill(g.density_logits_.begin(), g.density_logits_.end(), logit);
        std::fill(g.sh_logits_.begin(), g.sh_logits_.end(), c.sh_logit0);
        return g;
    }

    int nx() const { return nx_; }
    int ny() const { return ny_; }
    int nz() const { return nz_; }
    int l_max() const { return l_max_; }
    bool density_softplus() const { return density_softplus_; }
    const Aabb& bbox() const { return bbox_; }
    Vec3 cell() const { return cell_; }
    std::size_t voxel_count() const {
        return static_cast<std::size_t>(nx_) * ny_ * nz_;
    }
    int coeffs_per_channel() const { return sh_coeff_count(l_max_); }
    std::size_t sh_stride() const { return 3 * static_cast<std::size_t>(coeffs_per_channel()); }
    std::size_t parameter_count() const { return voxel_count() * (1 + sh_stride()); }

    std::size_t voxel_index(int ix, int iy, int iz) const {
        return (static_cast<std::size_t>(iz) * ny_ + iy) * nx_ + ix;
    }
    Vec3 voxel_center(int ix, int iy, int iz) const {
        return bbox_.lo + Vec3((ix + 0.5) * cell_.x, (iy + 0.5) * cell_.y, (iz + 0.5) * cell_.z);
    }

    std::vector<double>& density_logits() { return density_logits_; }
    const std::vector<double>& density_logits() const { return density_logits_; }
    std::vector<double>& sh_logits() { return sh_logits_; }
    const std::vector<double>& sh_logits() const { return sh_logits_; }
    const double* voxel_sh(std::size_t v) const { return sh_logits_.data() + v * sh_stride(); }

    double activated_sigma(std::size_t v) const {
        double raw = density_logits_[v];
        return density_softplus_ ? softplus(raw) : std::max(0.0, raw);
    }

    // Point query. Constant returns the containing voxel; Trilinear blends
    // the 8 surrounding voxel centers (clamped at the boundary). Positions
    // outside the bbox are empty space: (0, zero coefficients).
    void query(const Vec3& p, GridInterp interp, double& sigma_out, ShCoeffs& coeffs_out) const {
        GridSample s;
        if (interp == GridInterp::Trilinear)
            sample_trilinear(p, s);
        else
            sample_constant(p, s);
        sigma_out = s.sigma;
        coeffs_out.l_max = l_max_;
        coeffs_out.v.fill(0.0);
        const int n = coeffs_per_channel();
        for (int c = 0; c < 3; ++c)
            for (int k = 0; k < n; ++k)
                coeffs_out.at(c, k) = s.coeffs[c * kShMaxCoeffs + k];
    }

    void sample_constant(const Vec3& p, GridSample& s) const {
        const int n = coeffs_per_channel();
        s.inside = false;
        s.sigma = 0.0;
        for (int c = 0; c < 3; ++c)
            for (int k = 0; k < n; ++k) s.coeffs[c * kShMaxCoeffs + k] = 0.0;
        s.corner[0] = -1;
        if (!bbox_.contains(p)) return;
        int ix = std::min(static_cast<int>((p.x - bbox_.lo.x) / cell_.x), nx_ - 1);
        int iy = std::min(static_cast<int>((p.y - bbox_.lo.y) / cell_.y), ny_ - 1);
        int iz = std::min(static_cast<int>((p.z - bbox_.lo.z) / cell_.z), nz_ - 1);
        std::size_t v = voxel_index(ix, iy, iz);
        s.inside = true;
        s.corner[0] = static_cast<int>(v);
        s.corner[1] = -1;
        s.weight[0] = 1.0;
        double raw = density_logits_[v];
        if (density_softplus_) {
            s.sigma = softplus(raw);
            s.dsigma_dlogit[0] = sigmoid(raw);
        } else {
            s.sigma = std::max(0.0, raw);
            s.dsigma_dlogit[0] = raw > 0.0 ? 1.0 : 0.0;
        }
        const double* sh = voxel_sh(v);
        for (int c = 0; c < 3; ++c)
            for (int k = 0; k < n; ++k)
                s.coeffs[c * kShMaxCoeffs + k] = sh[c * n + k];
    }

    void sample_trilinear(const Vec3& p, GridSample& s) const {
        const int n = coeffs_per_channel();
        s.inside = false;
        s.sigma = 0.0;
        for (int c = 0; c < 3; ++c)
            for (int k = 0; k < n; ++k) s.coeffs[c * kShMaxCoeffs + k] = 0.0;
        s.corner[0] = -1;
        if (!bbox_.contains(p)) return;
        s.inside = true;
        double ux = (p.x - bbox_.lo.x) / cell_.x - 0.5;
        double uy = (p.y - bbox_.lo.y) / cell_.y - 0.5;
        double uz = (p.z - bbox_.lo.z) / cell_.z - 0.5;
        int ix = static_cast<int>(std::floor(ux));
        int iy = static_cast<int>(std::floor(uy));
        int iz = static_cast<int>(std::floor(uz));
        double fx = ux - ix, fy = uy - iy, fz = uz - iz;
        int x0 = std::clamp(ix, 0, nx_ - 1), x1 = std::clamp(ix + 1, 0, nx_ - 1);
        int y0 = std::clamp(iy, 0, ny_ - 1), y1 = std::clamp(iy + 1, 0, ny_ - 1);
        int z0 = std::clamp(iz, 0, nz_ - 1), z1 = std::clamp(iz + 1, 0, nz_ - 1);
        const double wx[2] = {1.0 - fx, fx};
        const double wy[2] = {1.0 - fy, fy};
        const double wz[2] = {1.0 - fz, fz};
        const int cx[2] = {x0, x1}, cy[2] = {y0, y1}, cz[2] = {z0, z1};

        const std::size_t stride = sh_stride();
        int slot = 0;
        double sigma = 0.0;
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
                for (int c = 0; c < 2; ++c) {
                    double w = wz[a] * wy[b] * wx[c];
                    std::size_t v = voxel_index(cx[c], cy[b], cz[a]);
                    s.corner[slot] = static_cast<int>(v);
                    s.weight[slot] = w;
                    double raw = density_logits_[v];
                    if (density_softplus_) {
                        sigma += w * softplus(raw);
                        s.dsigma_dlogit[slot] = w * sigmoid(raw);
                    } else {
                        sigma += w * std::max(0.0, raw);
                        s.dsigma_dlogit[slot] = raw > 0.0 ? w : 0.0;
                    }
                    const double* sh = sh_logits_.data() + v * stride;
                    for (int ch = 0; ch < 3; ++ch) {
                        double* dst = s.coeffs.data() + ch * kShMaxCoeffs;
                        const double* src = sh + ch * n;
                        for (int k = 0; k < n; ++k) dst[k] += w * src[k];
                    }
                    ++slot;
                }
        s.sigma = sigma;
    }

    void save(const std::string& path) const;
    void save_to(std::ostream& os) const;
    static RadianceFieldGrid load(const std::string& path);
    static RadianceFieldGrid load_from(std::istream& is);

private:
    int nx_ = 0, ny_ = 0, nz_ = 0;
    Aabb bbox_;
    int l_max_ = 0;
    bool density_softplus_ = true;
    Vec3 cell_;
    std::vector<double> density_logits_;
    std::vector<double> sh_logits_;
};

// View binding a grid to an interpolation mode so it satisfies the
// queryable-field shape march() expects.
struct GridView {
    const RadianceFieldGrid* grid = nullptr;
    GridInterp interp = GridInterp::Trilinear;

    void sample_at(const Vec3& p, GridSample& s) const {
        if (interp == GridInterp::Trilinear)
            grid->sample_trilinear(p, s);
        else
            grid->sample_constant(p, s);
    }
    const Aabb& bounds() const { return grid->bbox(); }
    int l_max() const { return grid->l_max(); }
};

// --------------------------- serialization --------------------------------
namespace detail {

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::istream& is, T& v) {
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("unexpected end of file");
}

inline void write_f32_array(std::ostream& os, const std::vector<double>& src) {
    std::vector<float> buf(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) buf[i] = static_cast<float>(src[i]);
    os.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

inline void read_f32_array(std::istream& is, std::vector<double>& dst, std::size_t count) {
    std::vector<float> buf(count);
    is.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    if (!is) throw std::runtime_error("unexpected end of file");
    dst.resize(count);
    for (std::size_t i = 0; i < count; ++i) dst[i] = buf[i];
}

} // namespace detail

inline constexpr char kGridMagic[6] = {'L', 'F', 'G', 'R', 'I', 'D'};
inline constexpr uint32_t kGridVersion = 1;

inline void RadianceFieldGrid::save_to(std::ostream& os) const {
    os.write(kGridMagic, sizeof(kGridMagic));
    detail::write_pod(os, kGridVersion);
    detail::write_pod(os, static_cast<uint32_t>(nx_));
    detail::write_pod(os, static_cast<uint32_t>(ny_));
    detail::write_pod(os, static_cast<uint32_t>(nz_));
    for (double v : {bbox_.lo.x, bbox_.lo.y, bbox_.lo.z, bbox_.hi.x, bbox_.hi.y, bbox_.hi.z})
        detail::write_pod(os, v);
    detail::write_pod(os, static_cast<uint32_t>(l_max_));
    detail::write_pod(os, static_cast<uint32_t>(density_softplus_ ? 1 : 0));
    detail::write_f32_array(os, density_logits_);
    detail::write_f32_array(os, sh_logits_);
}

inline void RadianceFieldGrid::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    save_to(os);
    if (!os) throw std::runtime_error("write failed: " + path);
}

inline RadianceFieldGrid RadianceFieldGrid::load_from(std::istream& is) {
    char magic[6];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kGridMagic, sizeof(kGridMagic)) != 0)
        throw std::runtime_error("not a radiance grid stream");
    uint32_t version;
    detail::read_pod(is, version);
    if (version != kGridVersion) throw std::runtime_error("unsupported grid version");
    uint32_t nx, ny, nz;
    detail::read_pod(is, nx);
    detail::read_pod(is, ny);
    detail::read_pod(is, nz);
    double b[6];
    for (double& v : b) detail::read_pod(is, v);
    uint32_t l_max, flags;
    detail::read_pod(is, l_max);
    detail::read_pod(is, flags);
    RadianceFieldGrid g(static_cast<int>(nx), static_cast<int>(ny), static_cast<int>(nz),
                        Aabb{{b[0], b[1], b[2]}, {b[3], b[4], b[5]}}, static_cast<int>(l_max),
                        (flags & 1u) != 0);
    detail::read_f32_array(is, g.density_logits_, g.voxel_count());
    detail::read_f32_array(is, g.sh_logits_, g.voxel_count() * g.sh_stride());
    return g;
}

inline RadianceFieldGrid RadianceFieldGrid::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    try {
        return load_from(is);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string(e.what()) + ": " + path);
    }
}

} // namespace lumen
