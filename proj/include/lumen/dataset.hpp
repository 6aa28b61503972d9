#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lumen/camera.hpp"
#include "lumen/pfm.hpp"
#include "lumen/rng.hpp"
#include "lumen/training.hpp"
#include "lumen/vec.hpp"

namespace lumen {

// NSVF-style split-by-prefix layout:
//   rgb/{0_,1_,2_}NNNN.pfm   alpha/{0_,1_,2_}NNNN.pfm   pose/{0_,1_,2_}NNNN.txt
// with 0_ = train, 1_ = validation, 2_ = test, plus a manifest.txt holding
// the shared camera model, radiance scale and bounding box.
enum class Split { Train = 0, Val = 1, Test = 2 };

inline const char* split_prefix(Split s) {
    switch (s) {
    case Split::Train: return "0_";
    case Split::Val: return "1_";
    case Split::Test: return "2_";
    }
    return "0_";
}

struct DatasetManifest {
    CameraPose::Kind camera_kind = CameraPose::Kind::Orthographic;
    int res_x = 0, res_y = 0;
    double ortho_width = 1.0;
    double focal_mm = 50.0, sensor_mm = 36.0;
    double radius = 4.0;
    double near = 0.0, far = 0.0; // depth normalization range
    double l_max_radiance = 1.0;  // lambda of the HDR loss, PSNR peak
    Aabb bbox;
    int n_train = 0, n_val = 0, n_test = 0;

    int count(Split s) const {
        return s == Split::Train ? n_train : (s == Split::Val ? n_val : n_test);
    }
};

namespace dataset_detail {
inline std::string view_name(Split split, int index, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%04d%s", split_prefix(split), index, ext);
    return buf;
}
} // namespace dataset_detail

inline void save_manifest(const std::string& dir, const DatasetManifest& m) {
    std::ofstream os(dir + "/manifest.txt");
    if (!os) throw std::runtime_error("cannot open for writing: " + dir + "/manifest.txt");
    char buf[512];
    os << "lumen-dataset 1\n";
    os << "camera " << (m.camera_kind == CameraPose::Kind::Orthographic ? "orthographic"
                                                                        : "perspective")
       << "\n";
    os << "resolution " << m.res_x << " " << m.res_y << "\n";
    std::snprintf(buf, sizeof(buf), "ortho_width %.17g\nfocal_mm %.17g\nsensor_mm %.17g\n",
                  m.ortho_width, m.focal_mm, m.sensor_mm);
    os << buf;
    std::snprintf(buf, sizeof(buf), "radius %.17g\nnear %.17g\nfar %.17g\n", m.radius, m.near,
                  m.far);
    os << buf;
    std::snprintf(buf, sizeof(buf), "l_max_radiance %.17g\n", m.l_max_radiance);
    os << buf;
    std::snprintf(buf, sizeof(buf), "bbox %.17g %.17g %.17g %.17g %.17g %.17g\n", m.bbox.lo.x,
                  m.bbox.lo.y, m.bbox.lo.z, m.bbox.hi.x, m.bbox.hi.y, m.bbox.hi.z);
    os << buf;
    os << "splits " << m.n_train << " " << m.n_val << " " << m.n_test << "\n";
}

inline DatasetManifest load_manifest(const std::string& dir) {
    std::ifstream is(dir + "/manifest.txt");
    if (!is) throw std::runtime_error("cannot open: " + dir + "/manifest.txt");
    DatasetManifest m;
    std::string line;
    bool tagged = false;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "lumen-dataset") {
            tagged = true;
        } else if (key == "camera") {
            std::string kind;
            ls >> kind;
            m.camera_kind = kind == "perspective" ? CameraPose::Kind::Perspective
                                                  : CameraPose::Kind::Orthographic;
        } else if (key == "resolution") {
            ls >> m.res_x >> m.res_y;
        } else if (key == "ortho_width") {
            ls >> m.ortho_width;
        } else if (key == "focal_mm") {
            ls >> m.focal_mm;
        } else if (key == "sensor_mm") {
            ls >> m.sensor_mm;
        } else if (key == "radius") {
            ls >> m.radius;
        } else if (key == "near") {
            ls >> m.near;
        } else if (key == "far") {
            ls >> m.far;
        } else if (key == "l_max_radiance") {
            ls >> m.l_max_radiance;
        } else if (key == "bbox") {
            ls >> m.bbox.lo.x >> m.bbox.lo.y >> m.bbox.lo.z >> m.bbox.hi.x >> m.bbox.hi.y >>
                m.bbox.hi.z;
        } else if (key == "splits") {
            ls >> m.n_train >> m.n_val >> m.n_test;
        }
    }
    if (!tagged) throw std::runtime_error("not a dataset manifest: " + dir + "/manifest.txt");
    return m;
}

// Pose files hold the 4x4 camera-to-world matrix, row-major, with the
// rotation columns being (right, up, forward).
inline void save_pose(const std::string& path, const CameraPose& cam) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    const Basis3& f = cam.frame;
    const Vec3& p = cam.position;
    char buf[256];
    const double rows[4][4] = {{f.right.x, f.up.x, f.forward.x, p.x},
                               {f.right.y, f.up.y, f.forward.y, p.y},
                               {f.right.z, f.up.z, f.forward.z, p.z},
                               {0, 0, 0, 1}};
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %.17g\n", row[0], row[1], row[2],
                      row[3]);
        os << buf;
    }
}

inline void load_pose(const std::string& path, Basis3& frame, Vec3& position) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path);
    double m[4][4];
    for (auto& row : m)
        for (double& v : row)
            if (!(is >> v)) throw std::runtime_error("malformed pose file: " + path);
    frame.right = {m[0][0], m[1][0], m[2][0]};
    frame.up = {m[0][1], m[1][1], m[2][1]};
    frame.forward = {m[0][2], m[1][2], m[2][2]};
    position = {m[0][3], m[1][3], m[2][3]};
}

inline CameraPose dataset_camera(const DatasetManifest& m, const Basis3& frame,
                                 const Vec3& position) {
    if (m.camera_kind == CameraPose::Kind::Orthographic)
        return CameraPose::orthographic(position, frame, m.res_x, m.res_y, m.ortho_width);
    return CameraPose::perspective(position, frame, m.res_x, m.res_y, m.focal_mm, m.sensor_mm);
}

struct DatasetView {
    CameraPose camera;
    ImageRgb rgb;
    ImageGray alpha;
};

inline void save_view(const std::string& dir, Split split, int index, const CameraPose& cam,
                      const ImageRgb& rgb, const ImageGray& alpha) {
    namespace fs = std::filesystem;
    fs::create_directories(dir + "/rgb");
    fs::create_directories(dir + "/alpha");
    fs::create_directories(dir + "/pose");
    using dataset_detail::view_name;
    write_pfm(dir + "/rgb/" + view_name(split, index, ".pfm"), rgb);
    write_pfm(dir + "/alpha/" + view_name(split, index, ".pfm"), alpha);
    save_pose(dir + "/pose/" + view_name(split, index, ".txt"), cam);
}

inline DatasetView load_view(const std::string& dir, const DatasetManifest& m, Split split,
                             int index) {
    using dataset_detail::view_name;
    DatasetView view;
    view.rgb = read_pfm_rgb(dir + "/rgb/" + view_name(split, index, ".pfm"));
    view.alpha = read_pfm_gray(dir + "/alpha/" + view_name(split, index, ".pfm"));
    Basis3 frame;
    Vec3 position;
    load_pose(dir + "/pose/" + view_name(split, index, ".txt"), frame, position);
    view.camera = dataset_camera(m, frame, position);
    return view;
}

// ---------------------------------------------------------------------------
// Training ray supplier: every train pixel becomes one ray; batches draw
// from a per-epoch Fisher-Yates shuffle without replacement, keyed by
// (seed, epoch), so iteration alone determines every batch.
// ---------------------------------------------------------------------------
class DatasetRaySupplier {
public:
    DatasetRaySupplier(const std::string& dir, const DatasetManifest& manifest, uint64_t seed)
        : seed_(seed) {
        for (int i = 0; i < manifest.n_train; ++i) {
            auto view = load_view(dir, manifest, Split::Train, i);
            for (int y = 0; y < view.rgb.height; ++y)
                for (int x = 0; x < view.rgb.width; ++x) {
                    rays_.push_back(pixel_ray(view.camera, x, y));
                    gt_radiance_.push_back(Rgb{view.rgb.at(x, y, 0), view.rgb.at(x, y, 1),
                                               view.rgb.at(x, y, 2)});
                    gt_alpha_.push_back(view.alpha.at(x, y));
                }
        }
        if (rays_.empty()) throw std::runtime_error("dataset has no training rays");
        perm_.resize(rays_.size());
    }

    std::size_t ray_count() const { return rays_.size(); }

    void fill_batch(int iteration, int batch_rays, RayBatch& out) {
        uint64_t cursor = static_cast<uint64_t>(iteration) * static_cast<uint64_t>(batch_rays);
        for (int i = 0; i < batch_rays; ++i, ++cursor) {
            uint64_t epoch = cursor / rays_.size();
            std::size_t slot = static_cast<std::size_t>(cursor % rays_.size());
            if (epoch != perm_epoch_ || !perm_ready_) shuffle_epoch(epoch);
            std::size_t j = perm_[slot];
            out.rays.push_back(rays_[j]);
            out.gt_radiance.push_back(gt_radiance_[j]);
            out.gt_alpha.push_back(gt_alpha_[j]);
        }
    }

private:
    void shuffle_epoch(uint64_t epoch) {
        for (std::size_t i = 0; i < perm_.size(); ++i) perm_[i] = i;
        Pcg32 rng = keyed_rng(seed_, 0x45504f43u, epoch);
        for (std::size_t i = perm_.size() - 1; i > 0; --i) {
            std::size_t j = rng.next_below(static_cast<uint32_t>(i + 1));
            std::swap(perm_[i], perm_[j]);
        }
        perm_epoch_ = epoch;
        perm_ready_ = true;
    }

    uint64_t seed_;
    std::vector<Ray> rays_;
    std::vector<Rgb> gt_radiance_;
    std::vector<double> gt_alpha_;
    std::vector<std::size_t> perm_;
    uint64_t perm_epoch_ = 0;
    bool perm_ready_ = false;
};

} // namespace lumen
