#include "pgdiff/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "pgdiff/parallel.hpp"

namespace pgdiff {

void SceneConfig::validate() const {
    std::vector<std::string> errors;
    if (height < 4 || width < 4) errors.emplace_back("image size must be at least 4x4");
    if (min_cells < 0 || max_cells < min_cells) errors.emplace_back("cell count range is invalid");
    if (!(min_radius > 0.0) || max_radius < min_radius) errors.emplace_back("radius range is invalid");
    if (2.0 * max_radius + 2.0 > std::min(height, width)) errors.emplace_back("radii do not fit in the image");
    auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in_unit(live_low) || !in_unit(live_high) || live_low > live_high) errors.emplace_back("live band invalid");
    if (!in_unit(dead_low) || !in_unit(dead_high) || dead_low > dead_high) errors.emplace_back("dead band invalid");
    if (!in_unit(background)) errors.emplace_back("background level must be in [0, 1]");
    if (!(dead_high < live_low || live_high < dead_low)) errors.emplace_back("live and dead bands overlap");
    if (background >= std::min(dead_low, live_low)) errors.emplace_back("background must lie below both cell bands");
    if (live_rim_boost < 0.0 || live_rim_boost > live_high - live_low) {
        errors.emplace_back("live rim boost must fit inside the live band");
    }
    if (dead_speckle < 0.0) errors.emplace_back("dead speckle must be non-negative");
    if (noise_sd < 0.0) errors.emplace_back("noise sd must be non-negative");
    if (live_probability < 0.0 || live_probability > 1.0) errors.emplace_back("live probability must be in [0, 1]");
    if (max_overlap < 0.0 || max_overlap > 1.0) errors.emplace_back("max overlap must be in [0, 1]");
    if (train_size < 0 || val_size < 0 || test_size < 0) errors.emplace_back("split sizes must be non-negative");
    if (!errors.empty()) {
        std::string msg = "invalid scene config:";
        for (const auto& e : errors) msg += " " + e + ";";
        throw std::invalid_argument(msg);
    }
}

namespace {

struct Ellipse {
    double cy, cx, ry, rx, angle;
    bool live;
    double base;

    // Normalized radial coordinate: < 1 inside.
    double radial(double y, double x) const {
        const double dy = y - cy, dx = x - cx;
        const double c = std::cos(angle), s = std::sin(angle);
        const double u = (c * dx + s * dy) / rx;
        const double v = (-s * dx + c * dy) / ry;
        return std::sqrt(u * u + v * v);
    }
};

constexpr int kPlacementRetries = 200;
constexpr int kSceneRetries = 64;

bool try_render(const SceneConfig& cfg, Rng& rng, Sample& out) {
    const int H = cfg.height, W = cfg.width;
    const int cells = rng.uniform_int(cfg.min_cells, cfg.max_cells);
    std::vector<int> owner(static_cast<std::size_t>(H) * W, -1);
    std::vector<Ellipse> placed;
    // Systematic sampling of live/dead: each cell is live with probability
    // live_probability and a scene's live count is within one of its expectation.
    const double phase = rng.uniform();
    for (int c = 0; c < cells; ++c) {
        const bool live = std::floor(phase + (c + 1) * cfg.live_probability) > std::floor(phase + c * cfg.live_probability);
        bool ok = false;
        for (int attempt = 0; attempt < kPlacementRetries && !ok; ++attempt) {
            Ellipse e{};
            e.ry = rng.uniform(cfg.min_radius, cfg.max_radius);
            e.rx = rng.uniform(cfg.min_radius, cfg.max_radius);
            const double r = std::max(e.ry, e.rx);
            e.cy = rng.uniform(r, H - 1 - r);
            e.cx = rng.uniform(r, W - 1 - r);
            e.angle = rng.uniform(0.0, std::numbers::pi);
            e.live = live;
            e.base = e.live ? rng.uniform(cfg.live_low, cfg.live_high - cfg.live_rim_boost)
                            : rng.uniform(cfg.dead_low, cfg.dead_high);
            int area = 0, overlap = 0;
            for (int y = 0; y < H; ++y) {
                for (int x = 0; x < W; ++x) {
                    if (e.radial(y, x) < 1.0) {
                        ++area;
                        if (owner[static_cast<std::size_t>(y) * W + x] >= 0) ++overlap;
                    }
                }
            }
            if (area == 0 || overlap > cfg.max_overlap * area) continue;
            for (int y = 0; y < H; ++y) {
                for (int x = 0; x < W; ++x) {
                    if (e.radial(y, x) < 1.0) owner[static_cast<std::size_t>(y) * W + x] = static_cast<int>(placed.size());
                }
            }
            placed.push_back(e);
            ok = true;
        }
        if (!ok) return false;
    }

    out.image = Tensor::chw(1, H, W);
    out.mask = ClassMask(H, W, kCellClasses);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const int o = owner[static_cast<std::size_t>(y) * W + x];
            double v = cfg.background;
            if (o >= 0) {
                const Ellipse& e = placed[static_cast<std::size_t>(o)];
                if (e.live) {
                    v = e.base + (e.radial(y, x) > 0.7 ? cfg.live_rim_boost : 0.0);
                    out.mask.set(y, x, kLive);
                } else {
                    v = std::clamp(e.base + rng.uniform(-cfg.dead_speckle, cfg.dead_speckle), cfg.dead_low,
                                   cfg.dead_high);
                    out.mask.set(y, x, kDead);
                }
            }
            v += cfg.noise_sd * rng.normal();
            // Stored at float32 precision, the precision of tensor files.
            out.image.at(0, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
    return true;
}

}  // namespace

Sample generate_scene(const SceneConfig& cfg, std::uint64_t seed, std::string id) {
    Sample s;
    s.id = std::move(id);
    for (int attempt = 0;; ++attempt) {
        Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(attempt)}));
        if (try_render(cfg, rng, s)) return s;
        if (attempt + 1 >= kSceneRetries) {
            // Fall back to fewer cells rather than aborting.
            SceneConfig relaxed = cfg;
            relaxed.max_cells = std::max(relaxed.min_cells, relaxed.max_cells - 1);
            if (relaxed.max_cells == cfg.max_cells) relaxed.min_cells = relaxed.max_cells = std::max(0, cfg.min_cells - 1);
            return generate_scene(relaxed, derive_seed(seed, {0xfa11}), std::move(s.id));
        }
    }
}

Dataset generate_dataset(const SceneConfig& cfg, std::uint64_t seed, int threads) {
    cfg.validate();
    Dataset d;
    auto make_split = [&](std::vector<Sample>& split, int size, std::uint64_t tag, const char* name) {
        split.resize(static_cast<std::size_t>(size));
        parallel_for(split.size(), threads, [&](std::size_t i) {
            char id[32];
            std::snprintf(id, sizeof(id), "%s_%04zu", name, i);
            split[i] = generate_scene(cfg, derive_seed(seed, {tag, i}), id);
        });
    };
    make_split(d.train, cfg.train_size, 1, "train");
    make_split(d.val, cfg.val_size, 2, "val");
    make_split(d.test, cfg.test_size, 3, "test");
    return d;
}

AugmentParams draw_augment(Rng& rng) {
    AugmentParams p;
    p.rotate90 = static_cast<int>(rng.below(4));
    p.flip_h = rng.below(2) == 1;
    p.flip_v = rng.below(2) == 1;
    p.brightness = rng.uniform(-0.1, 0.1);
    p.contrast = rng.uniform(0.9, 1.1);
    return p;
}

namespace {

// Source coordinate of output pixel (y, x) under rotate-then-flip.
template <typename F>
void remap(int H, int W, int rotate90, bool flip_h, bool flip_v, F&& f) {
    const int q = ((rotate90 % 4) + 4) % 4;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            int yy = flip_v ? H - 1 - y : y;
            int xx = flip_h ? W - 1 - x : x;
            // Undo q counter-clockwise quarter turns (square images only for odd q).
            int sy = yy, sx = xx;
            for (int k = 0; k < q; ++k) {
                const int ny = sx;
                const int nx = H - 1 - sy;
                sy = ny;
                sx = nx;
            }
            f(y, x, sy, sx);
        }
    }
}

}  // namespace

Tensor transform_tensor(const Tensor& t, int rotate90, bool flip_h, bool flip_v) {
    const int C = t.channels(), H = t.height(), W = t.width();
    if (rotate90 % 2 != 0 && H != W) throw std::invalid_argument("quarter-turn rotation needs a square image");
    Tensor out(t.shape());
    remap(H, W, rotate90, flip_h, flip_v, [&](int y, int x, int sy, int sx) {
        for (int c = 0; c < C; ++c) out.at(c, y, x) = t.at(c, sy, sx);
    });
    return out;
}

void apply_augment(Tensor& image, ClassMask& mask, const AugmentParams& p) {
    if (image.height() != mask.height() || image.width() != mask.width()) {
        throw std::invalid_argument("augment: image and mask differ in size");
    }
    const bool geometric = (p.rotate90 % 4) != 0 || p.flip_h || p.flip_v;
    if (geometric) {
        image = transform_tensor(image, p.rotate90, p.flip_h, p.flip_v);
        ClassMask m(mask.height(), mask.width(), mask.classes());
        remap(mask.height(), mask.width(), p.rotate90, p.flip_h, p.flip_v,
              [&](int y, int x, int sy, int sx) { m.set(y, x, mask.at(sy, sx)); });
        mask = std::move(m);
    }
    apply_photometric(image, p);
}

void apply_photometric(Tensor& image, const AugmentParams& p) {
    if (p.brightness == 0.0 && p.contrast == 1.0) return;
    for (int c = 0; c < image.channels(); ++c) {
        auto plane = image.channel(c);
        double mean = 0.0;
        for (double v : plane) mean += v;
        mean /= static_cast<double>(plane.size());
        for (double& v : plane) v = std::clamp(p.contrast * (v - mean) + mean + p.brightness, 0.0, 1.0);
    }
}

void augment(Tensor& image, ClassMask& mask, Rng& rng) { apply_augment(image, mask, draw_augment(rng)); }

}  // namespace pgdiff
