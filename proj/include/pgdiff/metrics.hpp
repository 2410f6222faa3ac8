#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pgdiff/tensor.hpp"

namespace pgdiff {

/// counts[i * n + j] = pixels with ground truth i predicted as j.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(int n = 0);

    int classes() const noexcept { return n_; }
    std::uint64_t at(int truth, int pred) const { return counts_[static_cast<std::size_t>(truth) * n_ + pred]; }
    std::uint64_t& at(int truth, int pred) { return counts_[static_cast<std::size_t>(truth) * n_ + pred]; }
    std::uint64_t total() const;

    ConfusionMatrix& operator+=(const ConfusionMatrix& other);
    bool operator==(const ConfusionMatrix&) const = default;

private:
    int n_ = 0;
    std::vector<std::uint64_t> counts_;
};

ConfusionMatrix confusion(const ClassMask& pred, const ClassMask& gt, int n);

/// Per-class IoU; classes with an empty union are reported as NaN.
std::vector<double> per_class_iou(const ConfusionMatrix& cm);
/// Per-class F1 (Dice); classes with an empty union are reported as NaN.
std::vector<double> per_class_f1(const ConfusionMatrix& cm);

/// Macro means over classes present in prediction or ground truth.
double miou(const ConfusionMatrix& cm);
double f1(const ConfusionMatrix& cm);

struct WelchResult {
    double t = 0.0;
    double p = 1.0;
    double df = 0.0;
};

/// Welch's unequal-variance t-test, two-sided. Throws std::domain_error for
/// fewer than two values per group or zero combined variance.
WelchResult welch_t(std::span<const double> a, std::span<const double> b);

/// Seeded shuffle of [0, count) cut into k contiguous folds whose sizes differ
/// by at most one (larger folds first). Indices within a fold are sorted.
std::vector<std::vector<std::size_t>> kfold(std::size_t count, int k, std::uint64_t seed);

double mean(std::span<const double> v);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double stddev(std::span<const double> v);

}  // namespace pgdiff
