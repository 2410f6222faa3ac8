#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pgdiff/prior.hpp"
#include "pgdiff/tensor.hpp"

namespace pgdiff {

/// Mean SSIM over all valid (unpadded) window positions with a Gaussian
/// window of sigma = window / 6. Inputs are single-channel, values in [0, 1].
double ssim(const Tensor& a, const Tensor& b, int window = 7, double c1 = 1e-4, double c2 = 9e-4);

/// Gaussian kernel density estimate evaluated at every grid point.
std::vector<double> kde_pdf(std::span<const double> samples, std::span<const double> grid, double bandwidth);

/// Bandwidth by Scott's rule: sample sd * m^(-1/5).
double scott_bandwidth(std::span<const double> samples);

struct KldOptions {
    double lo = -5.0;
    double hi = 5.0;
    int points = 1001;
    /// Fraction of KDE mass allowed outside [lo, hi] before the estimate is
    /// declared divergent.
    double max_outside_mass = 0.01;
    /// The quadrature grid is refined until its spacing is at most
    /// bandwidth / min_points_per_bandwidth, up to max_points.
    double min_points_per_bandwidth = 4.0;
    int max_points = 1 << 20;
};

struct KldResult {
    /// Set when the divergence is finite and well resolved.
    std::optional<double> value;
    bool divergent = false;
    double bandwidth = 0.0;
    double outside_mass = 0.0;
    int grid_points = 0;
};

/// KL(p_hat || N(0, 1)) with p_hat a Scott-bandwidth Gaussian KDE, integrated
/// by the trapezoid rule on [lo, hi]. Requires at least 100 samples.
KldResult kld_vs_standard_normal(std::span<const double> samples, const KldOptions& opts = {});

struct NoiseQualityOptions {
    int ssim_window = 7;
    double clip_low_percentile = 2.0;
    double clip_high_percentile = 98.0;
    double blur_sigma = 1.0;
    KldOptions kld;
};

struct NoiseQualityReport {
    double ssim = 0.0;
    std::optional<double> kld;
    bool kld_divergent = false;
    std::size_t sample_count = 0;
    double bandwidth = 0.0;
    std::string preprocessing;
    Provenance provenance;
};

/// Preprocessing used on both SSIM operands: channel mean, min-max scaling to
/// [0, 1], percentile contrast stretch, Gaussian blur.
Tensor ssim_preprocess(const Tensor& t, const NoiseQualityOptions& opts);

/// SSIM of the noise against its source latent (after ssim_preprocess on
/// both) and KLD of the raw noise values against N(0, 1).
NoiseQualityReport noise_report(const StartingNoise& noise, const Tensor& source_latent,
                                const NoiseQualityOptions& opts = {});

}  // namespace pgdiff
