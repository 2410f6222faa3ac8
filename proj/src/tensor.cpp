#include "pgdiff/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pgdiff {

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

std::size_t element_count(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 0) throw std::invalid_argument("negative tensor dimension in " + shape_string(shape));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

}  // namespace

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), values_(element_count(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != element_count(shape_)) {
        throw std::invalid_argument("tensor value count " + std::to_string(values_.size()) +
                                    " does not match shape " + shape_string(shape_));
    }
}

int Tensor::channels() const {
    if (rank() != 3) throw std::logic_error("channels() needs a CHW tensor, got " + shape_string(shape_));
    return shape_[0];
}

int Tensor::height() const {
    if (rank() != 3) throw std::logic_error("height() needs a CHW tensor, got " + shape_string(shape_));
    return shape_[1];
}

int Tensor::width() const {
    if (rank() != 3) throw std::logic_error("width() needs a CHW tensor, got " + shape_string(shape_));
    return shape_[2];
}

std::span<double> Tensor::channel(int c) {
    const std::size_t plane = static_cast<std::size_t>(height()) * width();
    return std::span<double>(values_).subspan(static_cast<std::size_t>(c) * plane, plane);
}

std::span<const double> Tensor::channel(int c) const {
    const std::size_t plane = static_cast<std::size_t>(height()) * width();
    return std::span<const double>(values_).subspan(static_cast<std::size_t>(c) * plane, plane);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_string(a.shape()) +
                                    " vs " + shape_string(b.shape()));
    }
}

Tensor axpby(double a, const Tensor& x, double b, const Tensor& y) {
    require_same_shape(x, y, "axpby");
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = a * x[i] + b * y[i];
    return out;
}

Tensor scaled(const Tensor& x, double a) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = a * x[i];
    return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double l2_norm(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v * v;
    return std::sqrt(s);
}

double relative_l2(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "relative_l2");
    double num = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) num += (a[i] - b[i]) * (a[i] - b[i]);
    const double den = l2_norm(b);
    return den > 0.0 ? std::sqrt(num) / den : std::sqrt(num);
}

bool all_finite(const Tensor& a) {
    return std::all_of(a.values().begin(), a.values().end(), [](double v) { return std::isfinite(v); });
}

ClassMask::ClassMask(int height, int width, int classes, std::uint8_t fill)
    : height_(height), width_(width), classes_(classes),
      labels_(static_cast<std::size_t>(height) * width, fill) {
    if (height <= 0 || width <= 0) throw std::invalid_argument("mask dimensions must be positive");
    if (classes < 1 || classes > 255) throw std::invalid_argument("mask class count must be in [1, 255]");
}

ClassMask::ClassMask(int height, int width, int classes, std::vector<std::uint8_t> labels)
    : height_(height), width_(width), classes_(classes), labels_(std::move(labels)) {
    if (height <= 0 || width <= 0) throw std::invalid_argument("mask dimensions must be positive");
    if (classes < 1 || classes > 255) throw std::invalid_argument("mask class count must be in [1, 255]");
    if (labels_.size() != static_cast<std::size_t>(height) * width) {
        throw std::invalid_argument("mask label count does not match its dimensions");
    }
    validate();
}

void ClassMask::set(int y, int x, int label) {
    if (label < 0 || label >= classes_) {
        throw std::out_of_range("label " + std::to_string(label) + " outside [0, " + std::to_string(classes_) + ")");
    }
    labels_[static_cast<std::size_t>(y) * width_ + x] = static_cast<std::uint8_t>(label);
}

void ClassMask::validate() const {
    for (std::uint8_t v : labels_) {
        if (v >= classes_) {
            throw std::out_of_range("label " + std::to_string(v) + " outside [0, " + std::to_string(classes_) + ")");
        }
    }
}

}  // namespace pgdiff
