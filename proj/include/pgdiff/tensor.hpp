#pragma once

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pgdiff {

using Shape = std::vector<int>;

std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles. Images, latents, noises and diffusion
/// states are all rank-3 tensors laid out as channels x height x width.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor chw(int channels, int height, int width, double fill = 0.0) {
        return Tensor({channels, height, width}, fill);
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }
    int rank() const noexcept { return static_cast<int>(shape_.size()); }

    int channels() const;
    int height() const;
    int width() const;

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }
    double* data() noexcept { return values_.data(); }
    const double* data() const noexcept { return values_.data(); }

    double& operator[](std::size_t i) noexcept { return values_[i]; }
    double operator[](std::size_t i) const noexcept { return values_[i]; }

    double& at(int c, int y, int x) {
        return values_[(static_cast<std::size_t>(c) * height() + y) * width() + x];
    }
    double at(int c, int y, int x) const {
        return values_[(static_cast<std::size_t>(c) * height() + y) * width() + x];
    }

    /// View of one channel plane.
    std::span<double> channel(int c);
    std::span<const double> channel(int c) const;

    bool operator==(const Tensor& other) const = default;

private:
    Shape shape_;
    std::vector<double> values_;
};

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

/// Returns a*x + b*y element-wise.
Tensor axpby(double a, const Tensor& x, double b, const Tensor& y);
Tensor scaled(const Tensor& x, double a);

double max_abs_diff(const Tensor& a, const Tensor& b);
double l2_norm(const Tensor& a);
/// ||a - b|| / ||b||.
double relative_l2(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& a);

/// Integer-labeled segmentation map with `classes` classes.
class ClassMask {
public:
    ClassMask() = default;
    ClassMask(int height, int width, int classes, std::uint8_t fill = 0);
    ClassMask(int height, int width, int classes, std::vector<std::uint8_t> labels);

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    int classes() const noexcept { return classes_; }
    std::size_t size() const noexcept { return labels_.size(); }

    std::uint8_t at(int y, int x) const { return labels_[static_cast<std::size_t>(y) * width_ + x]; }
    void set(int y, int x, int label);

    std::span<const std::uint8_t> labels() const noexcept { return labels_; }
    std::span<std::uint8_t> labels() noexcept { return labels_; }

    /// Throws if any label lies outside [0, classes).
    void validate() const;

    bool operator==(const ClassMask& other) const = default;

private:
    int height_ = 0;
    int width_ = 0;
    int classes_ = 0;
    std::vector<std::uint8_t> labels_;
};

}  // namespace pgdiff
