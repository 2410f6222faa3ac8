#include <doctest.h>

#include <array>
#include <cmath>

#include "pgdiff/synthdata.hpp"

using namespace pgdiff;

namespace {

std::array<double, 3> prevalence(const std::vector<Sample>& split) {
    std::array<double, 3> p{};
    double total = 0;
    for (const auto& s : split)
        for (auto l : s.mask.labels()) {
            p[l] += 1;
            total += 1;
        }
    for (double& v : p) v /= total;
    return p;
}

SceneConfig small_config() {
    SceneConfig c;
    c.train_size = 20;
    c.val_size = 5;
    c.test_size = 5;
    return c;
}

}  // namespace

TEST_CASE("scene config validation") {
    CHECK_NOTHROW(SceneConfig{}.validate());
    SceneConfig c;
    c.dead_high = 0.75;
    CHECK_THROWS(c.validate());
    c = {};
    c.max_radius = 20;
    CHECK_THROWS(c.validate());
    c = {};
    c.live_high = 1.2;
    CHECK_THROWS(c.validate());
    c = {};
    c.min_cells = 4;
    c.max_cells = 3;
    CHECK_THROWS(c.validate());
}

TEST_CASE("generation is deterministic and thread independent") {
    const auto cfg = small_config();
    const auto a = generate_dataset(cfg, 7, 1);
    const auto b = generate_dataset(cfg, 7, 3);
    REQUIRE(a.train.size() == 20);
    REQUIRE(a.test.size() == 5);
    for (std::size_t i = 0; i < a.train.size(); ++i) {
        CHECK(a.train[i].image == b.train[i].image);
        CHECK(a.train[i].mask == b.train[i].mask);
        CHECK(a.train[i].id == b.train[i].id);
    }
    const auto c = generate_dataset(cfg, 8, 1);
    CHECK_FALSE(a.train[0].image == c.train[0].image);
    CHECK(a.train[0].id == "train_0000");
    CHECK(a.test[4].id == "test_0004");
}

TEST_CASE("scene content") {
    const SceneConfig cfg;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto s = generate_scene(cfg, seed, "x");
        REQUIRE(s.image.shape() == Shape{1, 32, 32});
        REQUIRE(s.mask.height() == 32);
        CHECK(s.mask.classes() == 3);
        CHECK_NOTHROW(s.mask.validate());
        bool any_cell = false;
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x) {
                const double v = s.image.at(0, y, x);
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
                CHECK(static_cast<double>(static_cast<float>(v)) == v);
                const auto l = s.mask.at(y, x);
                any_cell = any_cell || l != kBackground;
                // Bands are separated by far more than the sensor noise.
                if (l == kLive) CHECK(v > 0.6);
                if (l == kDead) CHECK(v > 0.15);
                if (l == kDead) CHECK(v < 0.65);
                if (l == kBackground) CHECK(v < 0.2);
            }
        CHECK(any_cell);
    }
}

TEST_CASE("foreground fraction and split prevalence") {
    const auto d = generate_dataset(SceneConfig{}, 1, 1);
    double fg = 0;
    for (const auto& s : d.train) {
        std::size_t n = 0;
        for (auto l : s.mask.labels()) n += l != kBackground;
        fg += static_cast<double>(n) / static_cast<double>(s.mask.size());
    }
    fg /= static_cast<double>(d.train.size());
    CHECK(fg >= 0.1);
    CHECK(fg <= 0.6);

    const auto tr = prevalence(d.train), va = prevalence(d.val), te = prevalence(d.test);
    for (int c = 0; c < 3; ++c) {
        CHECK(std::abs(va[c] - tr[c]) / tr[c] < 0.10);
        CHECK(std::abs(te[c] - tr[c]) / tr[c] < 0.10);
    }
}

TEST_CASE("identity augmentation leaves the pair unchanged") {
    auto s = generate_scene(SceneConfig{}, 3, "a");
    Tensor img = s.image;
    ClassMask m = s.mask;
    apply_augment(img, m, AugmentParams::identity());
    CHECK(max_abs_diff(img, s.image) < 1e-15);
    CHECK(m == s.mask);
}

TEST_CASE("flips and rotations compose") {
    const auto s = generate_scene(SceneConfig{}, 4, "a");
    const Tensor& t = s.image;
    CHECK(transform_tensor(transform_tensor(t, 0, false, true), 0, false, true) == t);
    CHECK(transform_tensor(transform_tensor(t, 0, true, false), 0, true, false) == t);
    CHECK(transform_tensor(t, 4, false, false) == t);
    CHECK(transform_tensor(transform_tensor(t, 1, false, false), 3, false, false) == t);
    CHECK(transform_tensor(t, 2, false, false) == transform_tensor(t, 0, true, true));

    Tensor p = Tensor::chw(2, 3, 3);
    p.at(0, 0, 2) = 1.0;  // top right
    p.at(1, 0, 2) = 2.0;
    const Tensor r = transform_tensor(p, 1, false, false);
    CHECK(r.at(0, 0, 0) == 1.0);  // counter-clockwise: top right -> top left
    CHECK(r.at(1, 0, 0) == 2.0);
    const Tensor h = transform_tensor(p, 0, true, false);
    CHECK(h.at(0, 0, 0) == 1.0);
    const Tensor v = transform_tensor(p, 0, false, true);
    CHECK(v.at(0, 2, 2) == 1.0);
}

TEST_CASE("geometric transforms move image and mask together") {
    SceneConfig cfg;
    cfg.height = 16;
    cfg.width = 16;
    cfg.min_radius = 2;
    cfg.max_radius = 5;
    Rng rng(6);
    for (int trial = 0; trial < 40; ++trial) {
        auto s = generate_scene(cfg, static_cast<std::uint64_t>(trial), "p");
        // Image encodes the labels so a mismatch after transforming is visible.
        Tensor img = Tensor::chw(1, 16, 16);
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) img.at(0, y, x) = 0.5 * s.mask.at(y, x);
        AugmentParams p = draw_augment(rng);
        p.brightness = 0.0;
        p.contrast = 1.0;
        ClassMask m = s.mask;
        apply_augment(img, m, p);
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) CHECK(std::abs(img.at(0, y, x) - 0.5 * m.at(y, x)) < 1e-12);
    }
}

TEST_CASE("photometric augmentation touches the image only") {
    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        auto s = generate_scene(SceneConfig{}, static_cast<std::uint64_t>(trial), "q");
        AugmentParams p = draw_augment(rng);
        CHECK(p.rotate90 >= 0);
        CHECK(p.rotate90 < 4);
        CHECK(std::abs(p.brightness) <= 0.1);
        CHECK(p.contrast >= 0.9);
        CHECK(p.contrast <= 1.1);
        p.rotate90 = 0;
        p.flip_h = p.flip_v = false;
        Tensor img = s.image;
        ClassMask m = s.mask;
        apply_augment(img, m, p);
        CHECK(m == s.mask);
        for (double v : img.values()) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("augment is seeded") {
    const auto s = generate_scene(SceneConfig{}, 9, "r");
    Tensor a = s.image, b = s.image;
    ClassMask ma = s.mask, mb = s.mask;
    Rng r1(3), r2(3);
    augment(a, ma, r1);
    augment(b, mb, r2);
    CHECK(a == b);
    CHECK(ma == mb);
}
