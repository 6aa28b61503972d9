#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lumen/camera.hpp"
#include "lumen/plenoctree.hpp"
#include "lumen/raymarch.hpp"
#include "lumen/sh.hpp"
#include "lumen/vec.hpp"

namespace lumen {

struct Material {
    Rgb albedo{0.5, 0.5, 0.5}; // Lambertian, each channel in [0, 1]
};

struct Triangle {
    Vec3 a, b, c;
};

struct Surface {
    enum class Kind { Plane, Sphere, Box, Mesh } kind = Kind::Plane;
    Vec3 point{0, 0, 0}, normal{0, 0, 1}; // plane
    SphereShape sphere;
    Aabb box;
    std::vector<Triangle> triangles;
    Material material;
};

// Octree-backed emitter attached to a proxy plus a null transparency surface.
struct SceneLuminaire {
    Proxy proxy;
    std::string octree_path;
    Plenoctree tree;
    Activation act = Activation::extended_sigmoid(1.0);
    TransmittanceModel model = TransmittanceModel::Linear;
    double sigma_min = 0.1;
    double alpha_max = 0.9;
};

struct EstimatorConfig {
    int spp = 64;
    int max_transparency_bounces = 8;
    enum class LightSampling { UniformProxyArea } light_sampling =
        LightSampling::UniformProxyArea;
    uint64_t seed = 0;
};

struct Scene {
    CameraPose camera;
    Rgb background{};
    std::vector<Surface> surfaces;
    std::vector<SceneLuminaire> luminaires;
    EstimatorConfig estimator;

    static Scene load(const std::string& path);
    void validate() const;
};

// ---------------------------------------------------------------------------
// Scene text format: key-value lines grouped in named { } blocks, '#' starts
// a comment. See docs/scene-format.md for the grammar.
// ---------------------------------------------------------------------------
namespace scene_detail {

class Tokens {
public:
    explicit Tokens(std::istream& is) {
        std::string line;
        while (std::getline(is, line)) {
            auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            std::istringstream ls(line);
            std::string tok;
            while (ls >> tok) toks_.push_back(tok);
        }
    }
    bool done() const { return pos_ >= toks_.size(); }
    const std::string& peek() const { return toks_[pos_]; }
    std::string next() {
        if (done()) throw std::runtime_error("scene: unexpected end of file");
        return toks_[pos_++];
    }
    double number() {
        std::string t = next();
        try {
            std::size_t used = 0;
            double v = std::stod(t, &used);
            if (used != t.size()) throw std::invalid_argument(t);
            return v;
        } catch (...) {
            throw std::runtime_error("scene: expected a number, got '" + t + "'");
        }
    }
    Vec3 vec3() {
        double x = number(), y = number(), z = number();
        return {x, y, z};
    }
    void expect(const char* tok) {
        std::string t = next();
        if (t != tok)
            throw std::runtime_error(std::string("scene: expected '") + tok + "', got '" + t +
                                     "'");
    }

private:
    std::vector<std::string> toks_;
    std::size_t pos_ = 0;
};

inline Activation parse_activation(Tokens& t) {
    std::string kind = t.next();
    if (kind == "extended-sigmoid") return Activation::extended_sigmoid(t.number());
    if (kind == "exponential") return Activation::exponential();
    if (kind == "log-sigmoid") return Activation::log_sigmoid(t.number());
    throw std::runtime_error("scene: unknown activation '" + kind + "'");
}

inline TransmittanceModel parse_model(const std::string& s) {
    if (s == "linear") return TransmittanceModel::Linear;
    if (s == "exponential" || s == "exp") return TransmittanceModel::Exponential;
    throw std::runtime_error("scene: unknown transmittance model '" + s + "'");
}

} // namespace scene_detail

inline Activation parse_activation_spec(const std::string& spec) {
    std::istringstream is(spec);
    std::string norm;
    std::string piece;
    while (std::getline(is, piece, ':')) norm += piece + " ";
    std::istringstream ts(norm);
    scene_detail::Tokens t(ts);
    return scene_detail::parse_activation(t);
}

inline Scene Scene::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open scene: " + path);
    scene_detail::Tokens t(is);
    Scene scene;
    std::filesystem::path base = std::filesystem::path(path).parent_path();

    bool have_camera = false;
    while (!t.done()) {
        std::string key = t.next();
        if (key == "background") {
            scene.background = t.vec3();
        } else if (key == "camera") {
            t.expect("{");
            std::string kind = "perspective";
            Vec3 position{0, -4, 0}, target{0, 0, 0}, up{0, 0, 1};
            int rx = 128, ry = 128;
            double focal = 50.0, sensor = 36.0, ortho_width = 4.0;
            for (std::string k = t.next(); k != "}"; k = t.next()) {
                if (k == "kind") kind = t.next();
                else if (k == "position") position = t.vec3();
                else if (k == "target") target = t.vec3();
                else if (k == "up") up = t.vec3();
                else if (k == "resolution") { rx = static_cast<int>(t.number()); ry = static_cast<int>(t.number()); }
                else if (k == "focal") focal = t.number();
                else if (k == "sensor") sensor = t.number();
                else if (k == "ortho-width") ortho_width = t.number();
                else throw std::runtime_error("scene: unknown camera key '" + k + "'");
            }
            auto frame = look_at(position, target, up);
            scene.camera = kind == "orthographic"
                               ? CameraPose::orthographic(position, frame, rx, ry, ortho_width)
                               : CameraPose::perspective(position, frame, rx, ry, focal, sensor);
            have_camera = true;
        } else if (key == "surface") {
            t.expect("{");
            Surface s;
            for (std::string k = t.next(); k != "}"; k = t.next()) {
                if (k == "kind") {
                    std::string kind = t.next();
                    if (kind == "plane") s.kind = Surface::Kind::Plane;
                    else if (kind == "sphere") s.kind = Surface::Kind::Sphere;
                    else if (kind == "box") s.kind = Surface::Kind::Box;
                    else if (kind == "mesh") s.kind = Surface::Kind::Mesh;
                    else throw std::runtime_error("scene: unknown surface kind '" + kind + "'");
                } else if (k == "point") s.point = t.vec3();
                else if (k == "normal") s.normal = normalize(t.vec3());
                else if (k == "center") s.sphere.center = t.vec3();
                else if (k == "radius") s.sphere.radius = t.number();
                else if (k == "min") s.box.lo = t.vec3();
                else if (k == "max") s.box.hi = t.vec3();
                else if (k == "albedo") s.material.albedo = t.vec3();
                else if (k == "triangle") {
                    Triangle tri{t.vec3(), t.vec3(), t.vec3()};
                    s.triangles.push_back(tri);
                } else throw std::runtime_error("scene: unknown surface key '" + k + "'");
            }
            scene.surfaces.push_back(std::move(s));
        } else if (key == "luminaire") {
            t.expect("{");
            SceneLuminaire lum;
            std::string proxy_kind = "sphere";
            Vec3 center{};
            double radius = 1.0;
            Aabb box;
            for (std::string k = t.next(); k != "}"; k = t.next()) {
                if (k == "proxy") proxy_kind = t.next();
                else if (k == "center") center = t.vec3();
                else if (k == "radius") radius = t.number();
                else if (k == "min") box.lo = t.vec3();
                else if (k == "max") box.hi = t.vec3();
                else if (k == "octree") lum.octree_path = t.next();
                else if (k == "activation") lum.act = scene_detail::parse_activation(t);
                else if (k == "transmittance") lum.model = scene_detail::parse_model(t.next());
                else if (k == "sigma-min") lum.sigma_min = t.number();
                else if (k == "alpha-max") lum.alpha_max = t.number();
                else throw std::runtime_error("scene: unknown luminaire key '" + k + "'");
            }
            lum.proxy = proxy_kind == "box" ? Proxy::make_box(box)
                                            : Proxy::make_sphere(center, radius);
            if (lum.octree_path.empty())
                throw std::runtime_error("scene: luminaire needs an octree path");
            std::filesystem::path p(lum.octree_path);
            lum.tree = Plenoctree::load(p.is_absolute() ? p.string() : (base / p).string());
            scene.luminaires.push_back(std::move(lum));
        } else if (key == "estimator") {
            t.expect("{");
            for (std::string k = t.next(); k != "}"; k = t.next()) {
                if (k == "spp") scene.estimator.spp = static_cast<int>(t.number());
                else if (k == "seed") scene.estimator.seed = static_cast<uint64_t>(t.number());
                else if (k == "max-transparency-bounces")
                    scene.estimator.max_transparency_bounces = static_cast<int>(t.number());
                else throw std::runtime_error("scene: unknown estimator key '" + k + "'");
            }
        } else {
            throw std::runtime_error("scene: unknown top-level key '" + key + "'");
        }
    }
    if (!have_camera) throw std::runtime_error("scene: no camera block");
    scene.validate();
    return scene;
}

inline void Scene::validate() const {
    if (camera.width < 1 || camera.height < 1)
        throw std::runtime_error("scene: camera resolution must be positive");
    if (estimator.spp < 1) throw std::runtime_error("scene: spp must be >= 1");
    for (const auto& s : surfaces) {
        const Rgb& a = s.material.albedo;
        if (a.x < 0 || a.x > 1 || a.y < 0 || a.y > 1 || a.z < 0 || a.z > 1)
            throw std::runtime_error("scene: albedo out of [0, 1]");
        if (s.kind == Surface::Kind::Box && !s.box.valid())
            throw std::runtime_error("scene: degenerate box surface");
        if (s.kind == Surface::Kind::Sphere && !(s.sphere.radius > 0))
            throw std::runtime_error("scene: degenerate sphere surface");
        if (s.kind == Surface::Kind::Mesh && s.triangles.empty())
            throw std::runtime_error("scene: mesh surface without triangles");
    }
    for (const auto& l : luminaires) {
        if (!(l.proxy.surface_area() > 0.0))
            throw std::runtime_error("scene: luminaire proxy has zero area");
        if (!(l.alpha_max > 0.0 && l.alpha_max <= 1.0) || l.sigma_min < 0.0)
            throw std::runtime_error("scene: luminaire thresholds out of range");
    }
}

} // namespace lumen
