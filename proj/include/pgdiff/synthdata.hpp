#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pgdiff/rng.hpp"
#include "pgdiff/tensor.hpp"

namespace pgdiff {

/// Class labels of the synthetic cell scenes.
enum CellClass : std::uint8_t { kBackground = 0, kLive = 1, kDead = 2 };
inline constexpr int kCellClasses = 3;

/// Parameters of the synthetic QPI-like scene generator.
struct SceneConfig {
    int height = 32;
    int width = 32;
    int min_cells = 2;
    int max_cells = 6;
    double min_radius = 3.0;
    double max_radius = 8.0;
    double live_low = 0.7;
    double live_high = 0.9;
    /// Rim brightening of live cells; the rim stays inside the live band.
    double live_rim_boost = 0.08;
    double dead_low = 0.3;
    double dead_high = 0.5;
    /// Amplitude of the uniform speckle texture inside dead cells.
    double dead_speckle = 0.06;
    double background = 0.05;
    double noise_sd = 0.02;
    /// Probability that a placed cell is live.
    double live_probability = 0.5;
    /// Maximum fraction of a new cell that may overlap existing cells.
    double max_overlap = 0.5;
    int train_size = 500;
    int val_size = 100;
    int test_size = 100;

    /// Throws std::invalid_argument listing every violated constraint.
    void validate() const;
    bool operator==(const SceneConfig&) const = default;
};

struct Sample {
    std::string id;
    Tensor image;  // 1 x H x W, values in [0, 1]
    ClassMask mask;
};

struct Dataset {
    std::vector<Sample> train;
    std::vector<Sample> val;
    std::vector<Sample> test;
};

/// Renders one scene. Retries placement with derived sub-seeds when the
/// requested number of cells cannot be placed.
Sample generate_scene(const SceneConfig& cfg, std::uint64_t seed, std::string id);

Dataset generate_dataset(const SceneConfig& cfg, std::uint64_t seed, int threads = 1);

/// One draw of the augmentation pipeline.
struct AugmentParams {
    int rotate90 = 0;  // quarter turns counter-clockwise
    bool flip_h = false;
    bool flip_v = false;
    double brightness = 0.0;
    double contrast = 1.0;

    static AugmentParams identity() { return {}; }
};

AugmentParams draw_augment(Rng& rng);

/// Geometric part applied to image and mask alike; photometric part
/// (contrast about the image mean, then brightness, clamped to [0, 1]) to the
/// image only.
void apply_augment(Tensor& image, ClassMask& mask, const AugmentParams& p);

/// Photometric part only: per-channel contrast about the mean, brightness, clamp.
void apply_photometric(Tensor& image, const AugmentParams& p);

/// Geometric transform of a single tensor (all channels).
Tensor transform_tensor(const Tensor& t, int rotate90, bool flip_h, bool flip_v);

void augment(Tensor& image, ClassMask& mask, Rng& rng);

}  // namespace pgdiff
