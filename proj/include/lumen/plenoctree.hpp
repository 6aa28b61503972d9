#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <deque>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lumen/parallel.hpp"
#include "lumen/raymarch.hpp"
#include "lumen/rng.hpp"
#include "lumen/sh.hpp"
#include "lumen/vec.hpp"

namespace lumen {

struct ExtractionConfig {
    double prune_sigma = 0.01;
    int refine_samples = 256;
    int max_depth = 5;
};

// Sparse octree of pruned leaves holding density and SH coefficients; the
// render-time stand-in for a fitted radiance field. The bbox is cubified so
// octants subdivide uniformly. Immutable once built.
class Plenoctree {
public:
    struct Node {
        enum : uint8_t { kEmpty = 0, kInternal = 1, kLeaf = 2 };
        uint8_t tag[8] = {};
        uint32_t child[8] = {};
    };

    Plenoctree() = default;

    const Aabb& bbox() const { return bbox_; }
    int max_depth() const { return max_depth_; }
    int l_max() const { return l_max_; }
    std::size_t node_count() const { return nodes_.size(); }
    std::size_t leaf_count() const { return leaf_sigma_.size(); }
    bool empty() const { return nodes_.empty(); }
    int coeffs_per_channel() const { return sh_coeff_count(l_max_); }
    std::size_t leaf_stride() const { return 3 * static_cast<std::size_t>(coeffs_per_channel()); }
    double leaf_sigma(std::size_t i) const { return leaf_sigma_[i]; }
    const double* leaf_coeffs(std::size_t i) const {
        return leaf_coeffs_.data() + i * leaf_stride();
    }

    template <typename Source>
    static Plenoctree extract(const Source& source, const ExtractionConfig& cfg,
                              int threads = 0);

    void save(const std::string& path) const;
    static Plenoctree load(const std::string& path);

    // Traversal lives below as free functions; they need the internals.
    friend MarchResult traverse_with_basis(const Plenoctree&, const Ray&, const double*,
                                           const Activation&, TransmittanceModel, double,
                                           double, bool);

private:
    Aabb bbox_;
    int max_depth_ = 0;
    int l_max_ = 0;
    std::vector<Node> nodes_; // BFS order, root first
    std::vector<double> leaf_sigma_;
    std::vector<double> leaf_coeffs_; // leaf-major, channel-major, coeff-minor
};

// ------------------------------ extraction --------------------------------

namespace detail {

// 3D summed-area table over leaf occupancy, for O(1) empty-subtree checks.
class OccupancySums {
public:
    explicit OccupancySums(int n) : n_(n), sums_((n + 1) * (n + 1) * (n + 1), 0) {}

    void build(const std::vector<uint8_t>& occupied) {
        for (int z = 0; z < n_; ++z)
            for (int y = 0; y < n_; ++y)
                for (int x = 0; x < n_; ++x) {
                    uint32_t v = occupied[cell(x, y, z)];
                    at(x + 1, y + 1, z + 1) = v + at(x, y + 1, z + 1) + at(x + 1, y, z + 1) +
                                              at(x + 1, y + 1, z) - at(x, y, z + 1) -
                                              at(x, y + 1, z) - at(x + 1, y, z) + at(x, y, z);
                }
    }

    uint32_t count(int x0, int y0, int z0, int size) const {
        int x1 = x0 + size, y1 = y0 + size, z1 = z0 + size;
        return at(x1, y1, z1) - at(x0, y1, z1) - at(x1, y0, z1) - at(x1, y1, z0) +
               at(x0, y0, z1) + at(x0, y1, z0) + at(x1, y0, z0) - at(x0, y0, z0);
    }

    std::size_t cell(int x, int y, int z) const {
        return (static_cast<std::size_t>(z) * n_ + y) * n_ + x;
    }

private:
    uint32_t& at(int x, int y, int z) {
        return sums_[(static_cast<std::size_t>(z) * (n_ + 1) + y) * (n_ + 1) + x];
    }
    uint32_t at(int x, int y, int z) const {
        return sums_[(static_cast<std::size_t>(z) * (n_ + 1) + y) * (n_ + 1) + x];
    }
    int n_;
    std::vector<uint32_t> sums_;
};

} // namespace detail

template <typename Source>
Plenoctree Plenoctree::extract(const Source& source, const ExtractionConfig& cfg, int threads) {
    if (cfg.max_depth < 1 || cfg.max_depth > 10)
        throw std::invalid_argument("extract: max_depth must be in [1, 10]");
    if (cfg.refine_samples < 1)
        throw std::invalid_argument("extract: refine_samples must be >= 1");
    if (cfg.prune_sigma < 0.0)
        throw std::invalid_argument("extract: prune_sigma must be >= 0");

    Plenoctree tree;
    tree.bbox_ = source.bounds().cubified();
    tree.max_depth_ = cfg.max_depth;
    tree.l_max_ = source.l_max();

    const int n = 1 << cfg.max_depth;
    const double cell = tree.bbox_.extent().x / n;
    const Vec3 lo = tree.bbox_.lo;
    const int n_threads = resolve_thread_count(threads);
    const int n_coeffs = tree.coeffs_per_channel();
    const std::size_t stride = tree.leaf_stride();

    // Pass 1: a single sample in the center of each max-depth voxel decides
    // pruning against the density threshold.
    std::vector<uint8_t> occupied(static_cast<std::size_t>(n) * n * n, 0);
    parallel_for(static_cast<std::size_t>(n) * n, n_threads, [&](std::size_t zy) {
        int z = static_cast<int>(zy / n), y = static_cast<int>(zy % n);
        GridSample gs;
        for (int x = 0; x < n; ++x) {
            Vec3 c = lo + Vec3((x + 0.5) * cell, (y + 0.5) * cell, (z + 0.5) * cell);
            source.sample_at(c, gs);
            if (gs.inside && gs.sigma >= cfg.prune_sigma)
                occupied[(static_cast<std::size_t>(z) * n + y) * n + x] = 1;
        }
    });

    // Pass 2: survivors get their payload from uniform positional samples
    // averaged over the voxel volume. The RNG is keyed by voxel index so
    // extraction is reproducible regardless of scheduling.
    std::vector<uint32_t> payload_of(occupied.size(), 0xffffffffu);
    std::vector<std::size_t> survivors;
    for (std::size_t i = 0; i < occupied.size(); ++i)
        if (occupied[i]) {
            payload_of[i] = static_cast<uint32_t>(survivors.size());
            survivors.push_back(i);
        }

    tree.leaf_sigma_.assign(survivors.size(), 0.0);
    tree.leaf_coeffs_.assign(survivors.size() * stride, 0.0);
    parallel_for(survivors.size(), n_threads, [&](std::size_t s) {
        std::size_t idx = survivors[s];
        int z = static_cast<int>(idx / (static_cast<std::size_t>(n) * n));
        int y = static_cast<int>((idx / n) % n);
        int x = static_cast<int>(idx % n);
        Vec3 corner = lo + Vec3(x * cell, y * cell, z * cell);
        Pcg32 rng = keyed_rng(0x4c454146u, idx);
        GridSample gs;
        double sigma = 0.0;
        double* coeffs = tree.leaf_coeffs_.data() + s * stride;
        for (int k = 0; k < cfg.refine_samples; ++k) {
            Vec3 p = corner + Vec3(rng.next_double() * cell, rng.next_double() * cell,
                                   rng.next_double() * cell);
            source.sample_at(p, gs);
            sigma += gs.sigma;
            for (int c = 0; c < 3; ++c)
                for (int j = 0; j < n_coeffs; ++j)
                    coeffs[c * n_coeffs + j] += gs.coeffs[c * kShMaxCoeffs + j];
        }
        double inv = 1.0 / cfg.refine_samples;
        tree.leaf_sigma_[s] = sigma * inv;
        for (std::size_t j = 0; j < stride; ++j) coeffs[j] *= inv;
    });

    if (survivors.empty()) return tree; // fully pruned: empty tree

    // Pass 3: assemble the hierarchy, merging fully-empty subtrees. Children
    // are resolved depth-first, then records are relabeled breadth-first so
    // the in-memory layout matches the file layout.
    detail::OccupancySums sums(n);
    sums.build(occupied);

    struct Builder {
        const detail::OccupancySums& sums;
        const std::vector<uint32_t>& payload_of;
        std::vector<Plenoctree::Node> nodes;

        // Returns (tag, index) for the subtree over cells [o, o + size)^3.
        std::pair<uint8_t, uint32_t> build(int x0, int y0, int z0, int size) {
            if (sums.count(x0, y0, z0, size) == 0) return {Plenoctree::Node::kEmpty, 0};
            if (size == 1)
                return {Plenoctree::Node::kLeaf, payload_of[sums.cell(x0, y0, z0)]};
            Plenoctree::Node node;
            int h = size / 2;
            for (int c = 0; c < 8; ++c) {
                int cx = x0 + ((c & 1) ? h : 0);
                int cy = y0 + ((c & 2) ? h : 0);
                int cz = z0 + ((c & 4) ? h : 0);
                auto [tag, index] = build(cx, cy, cz, h);
                node.tag[c] = tag;
                node.child[c] = index;
            }
            nodes.push_back(node);
            return {Plenoctree::Node::kInternal, static_cast<uint32_t>(nodes.size() - 1)};
        }
    } builder{sums, payload_of, {}};

    // max_depth >= 1 means n >= 2, so a non-empty tree always has an
    // internal root.
    auto [root_tag, root_index] = builder.build(0, 0, 0, n);
    (void)root_tag;

    // Relabel to BFS order with the root first; the file format and the
    // in-memory layout then coincide.
    std::vector<Node> bfs;
    bfs.reserve(builder.nodes.size());
    std::vector<uint32_t> queue{root_index};
    std::vector<uint32_t> new_index(builder.nodes.size(), 0);
    for (std::size_t head = 0; head < queue.size(); ++head) {
        const Node& src = builder.nodes[queue[head]];
        for (int c = 0; c < 8; ++c)
            if (src.tag[c] == Node::kInternal) {
                new_index[src.child[c]] = static_cast<uint32_t>(queue.size());
                queue.push_back(src.child[c]);
            }
    }
    for (uint32_t old : queue) {
        Node node = builder.nodes[old];
        for (int c = 0; c < 8; ++c)
            if (node.tag[c] == Node::kInternal) node.child[c] = new_index[node.child[c]];
        bfs.push_back(node);
    }
    tree.nodes_ = std::move(bfs);
    return tree;
}

// ------------------------------ traversal ---------------------------------

// Hierarchical descent visiting occupied leaves front to back. Each leaf
// contributes one quadrature segment over the ray's chord through it, using
// the same accumulation rule as march(). Emission is decoded from the
// caller-provided basis.
inline MarchResult traverse_with_basis(const Plenoctree& tree, const Ray& ray,
                                       const double* basis, const Activation& act,
                                       TransmittanceModel model, double sigma_min = 0.0,
                                       double alpha_max = 1.0, bool collect_weights = false) {
    MarchResult r;
    if (tree.empty()) return r;
    auto clip = intersect_box(ray, tree.bbox_);
    if (!clip) return r;
    double t0 = std::max(clip->first, ray.t_near);
    double t1 = std::min(clip->second, ray.t_far);
    if (!(t1 > t0)) return r;

    struct Entry {
        uint8_t tag;
        uint32_t index;
        Aabb box;
        double t_in;
    };
    // Deepest possible stack: (max_depth levels) x (8 children); generous cap.
    std::vector<Entry> stack;
    stack.reserve(128);
    stack.push_back({Plenoctree::Node::kInternal, 0, tree.bbox_, t0});

    AccumState st;
    const int n_coeffs = tree.coeffs_per_channel();

    while (!stack.empty()) {
        Entry e = stack.back();
        stack.pop_back();
        if (e.tag == Plenoctree::Node::kLeaf) {
            auto span = intersect_box(ray, e.box);
            if (!span) continue;
            double a = std::max(span->first, t0), b = std::min(span->second, t1);
            if (!(b > a)) continue;
            ++r.leaves_touched;
            double sigma = tree.leaf_sigma_[e.index];
            if (sigma < sigma_min) continue;
            const double* k = tree.leaf_coeffs_.data() + e.index * tree.leaf_stride();
            double out[3];
            for (int c = 0; c < 3; ++c) {
                double z = 0.0;
                const double* kc = k + c * n_coeffs;
                for (int j = 0; j < n_coeffs; ++j) z += kc[j] * basis[j];
                out[c] = activate(act, z);
            }
            double w = accumulate_segment(st, model, sigma, b - a, Rgb{out[0], out[1], out[2]},
                                          0.5 * (a + b));
            if (collect_weights) {
                r.weights.push_back(w);
                r.sample_ts.push_back(a);
            }
            ++r.samples_visited;
            // alpha_max == 1 disables the early exit (full-chord baseline).
            if (alpha_max < 1.0 && st.alpha() >= alpha_max) break;
            continue;
        }
        // Internal: push overlapped children farthest-first so the nearest
        // pops next.
        const Plenoctree::Node& node = tree.nodes_[e.index];
        Vec3 mid = e.box.center();
        Entry kids[8];
        int n_kids = 0;
        for (int c = 0; c < 8; ++c) {
            if (node.tag[c] == Plenoctree::Node::kEmpty) continue;
            Aabb cb;
            cb.lo = Vec3{(c & 1) ? mid.x : e.box.lo.x, (c & 2) ? mid.y : e.box.lo.y,
                         (c & 4) ? mid.z : e.box.lo.z};
            cb.hi = Vec3{(c & 1) ? e.box.hi.x : mid.x, (c & 2) ? e.box.hi.y : mid.y,
                         (c & 4) ? e.box.hi.z : mid.z};
            auto span = intersect_box(ray, cb);
            if (!span) continue;
            double a = std::max(span->first, t0), b = std::min(span->second, t1);
            if (!(b > a)) continue;
            kids[n_kids++] = {node.tag[c], node.child[c], cb, a};
        }
        std::sort(kids, kids + n_kids,
                  [](const Entry& l, const Entry& rr) { return l.t_in > rr.t_in; });
        for (int i = 0; i < n_kids; ++i) stack.push_back(kids[i]);
    }
    r.radiance = st.radiance;
    r.alpha = st.alpha();
    r.expected_depth = st.weight_sum > 0.0 ? st.depth_weighted / st.weight_sum : 0.0;
    return r;
}

inline MarchResult traverse(const Plenoctree& tree, const Ray& ray, const Activation& act,
                            TransmittanceModel model, double sigma_min = 0.0,
                            double alpha_max = 1.0, bool collect_weights = false) {
    double basis[kShMaxCoeffs];
    sh_basis_unchecked(tree.l_max(), -ray.dir, basis);
    return traverse_with_basis(tree, ray, basis, act, model, sigma_min, alpha_max,
                               collect_weights);
}

// ----------------------------- serialization -------------------------------

inline constexpr char kPlenoctreeMagic[7] = {'P', 'L', 'N', 'O', 'C', 'T', '1'};

inline void Plenoctree::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os.write(kPlenoctreeMagic, sizeof(kPlenoctreeMagic));
    for (double v : {bbox_.lo.x, bbox_.lo.y, bbox_.lo.z, bbox_.hi.x, bbox_.hi.y, bbox_.hi.z})
        detail::write_pod(os, v);
    detail::write_pod(os, static_cast<uint32_t>(max_depth_));
    detail::write_pod(os, static_cast<uint32_t>(l_max_));
    detail::write_pod(os, static_cast<uint64_t>(nodes_.size()));
    detail::write_pod(os, static_cast<uint64_t>(leaf_sigma_.size()));
    for (const Node& node : nodes_)
        for (int c = 0; c < 8; ++c) {
            detail::write_pod(os, node.tag[c]);
            detail::write_pod(os, node.child[c]);
        }
    const std::size_t stride = leaf_stride();
    std::vector<float> buf(1 + stride);
    for (std::size_t i = 0; i < leaf_sigma_.size(); ++i) {
        buf[0] = static_cast<float>(leaf_sigma_[i]);
        const double* k = leaf_coeffs_.data() + i * stride;
        for (std::size_t j = 0; j < stride; ++j) buf[1 + j] = static_cast<float>(k[j]);
        os.write(reinterpret_cast<const char*>(buf.data()),
                 static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

inline Plenoctree Plenoctree::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    char magic[7];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kPlenoctreeMagic, sizeof(kPlenoctreeMagic)) != 0)
        throw std::runtime_error("not a plenoctree file: " + path);
    Plenoctree tree;
    double b[6];
    for (double& v : b) detail::read_pod(is, v);
    tree.bbox_ = Aabb{{b[0], b[1], b[2]}, {b[3], b[4], b[5]}};
    uint32_t max_depth, l_max;
    detail::read_pod(is, max_depth);
    detail::read_pod(is, l_max);
    if (l_max > static_cast<uint32_t>(kShMaxOrder))
        throw std::runtime_error("plenoctree l_max out of range in " + path);
    tree.max_depth_ = static_cast<int>(max_depth);
    tree.l_max_ = static_cast<int>(l_max);
    uint64_t node_count, leaf_count;
    detail::read_pod(is, node_count);
    detail::read_pod(is, leaf_count);
    tree.nodes_.resize(node_count);
    for (Node& node : tree.nodes_)
        for (int c = 0; c < 8; ++c) {
            detail::read_pod(is, node.tag[c]);
            detail::read_pod(is, node.child[c]);
            if (node.tag[c] == Node::kInternal && node.child[c] >= node_count)
                throw std::runtime_error("plenoctree node index out of range in " + path);
            if (node.tag[c] == Node::kLeaf && node.child[c] >= leaf_count)
                throw std::runtime_error("plenoctree leaf index out of range in " + path);
            if (node.tag[c] > Node::kLeaf)
                throw std::runtime_error("plenoctree child tag corrupt in " + path);
        }
    const std::size_t stride = tree.leaf_stride();
    tree.leaf_sigma_.resize(leaf_count);
    tree.leaf_coeffs_.resize(leaf_count * stride);
    std::vector<float> buf(1 + stride);
    for (uint64_t i = 0; i < leaf_count; ++i) {
        is.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(float)));
        if (!is) throw std::runtime_error("unexpected end of file in " + path);
        tree.leaf_sigma_[i] = buf[0];
        double* k = tree.leaf_coeffs_.data() + i * stride;
        for (std::size_t j = 0; j < stride; ++j) k[j] = buf[1 + j];
    }
    return tree;
}

} // namespace lumen
