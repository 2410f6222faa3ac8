#pragma once

#include "pgdiff/tensor.hpp"

namespace pgdiff {

/// Fixed latent space: f x f average pooling with cyclic channel replication.
struct LatentSpec {
    int f = 1;
    int latent_channels = 1;

    void validate() const;
    bool operator==(const LatentSpec&) const = default;
};

Tensor encode(const Tensor& image, const LatentSpec& spec);

/// Nearest-neighbour replication by f along both spatial axes.
Tensor upsample(const Tensor& latent, int f);

/// Label map -> {-1, +1} one-hot target at latent resolution. Downsampling
/// keeps the top-left label of every f x f block.
Tensor mask_to_target(const ClassMask& mask, int n, const LatentSpec& spec);

/// Resizes each channel to h x w (nearest neighbour) and takes the per-pixel
/// argmax; ties go to the lowest class index.
ClassMask target_to_mask(const Tensor& pred, int h, int w);

}  // namespace pgdiff
