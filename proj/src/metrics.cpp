#include "pgdiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include <boost/math/distributions/students_t.hpp>

#include "pgdiff/rng.hpp"

namespace pgdiff {

ConfusionMatrix::ConfusionMatrix(int n) : n_(n), counts_(static_cast<std::size_t>(n) * n, 0) {
    if (n < 0) throw std::invalid_argument("class count must be non-negative");
}

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
    if (other.n_ != n_) throw std::invalid_argument("cannot add confusion matrices of different size");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
    return *this;
}

ConfusionMatrix confusion(const ClassMask& pred, const ClassMask& gt, int n) {
    if (pred.height() != gt.height() || pred.width() != gt.width()) {
        throw std::invalid_argument("prediction and ground truth differ in shape");
    }
    ConfusionMatrix cm(n);
    const auto p = pred.labels();
    const auto g = gt.labels();
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] >= n || g[i] >= n) {
            throw std::out_of_range("label outside [0, " + std::to_string(n) + ") at pixel " + std::to_string(i));
        }
        ++cm.at(g[i], p[i]);
    }
    return cm;
}

namespace {

struct ClassCounts {
    double tp, fp, fn;
};

ClassCounts counts_for(const ConfusionMatrix& cm, int c) {
    double row = 0.0, col = 0.0;
    for (int j = 0; j < cm.classes(); ++j) {
        row += static_cast<double>(cm.at(c, j));
        col += static_cast<double>(cm.at(j, c));
    }
    const double tp = static_cast<double>(cm.at(c, c));
    return {tp, col - tp, row - tp};
}

double macro_mean(const std::vector<double>& per_class) {
    double sum = 0.0;
    int present = 0;
    for (double v : per_class) {
        if (std::isnan(v)) continue;
        sum += v;
        ++present;
    }
    if (present == 0) throw std::invalid_argument("confusion matrix is empty");
    return sum / present;
}

}  // namespace

std::vector<double> per_class_iou(const ConfusionMatrix& cm) {
    std::vector<double> out(static_cast<std::size_t>(cm.classes()));
    for (int c = 0; c < cm.classes(); ++c) {
        const auto k = counts_for(cm, c);
        const double uni = k.tp + k.fp + k.fn;
        out[static_cast<std::size_t>(c)] = uni > 0 ? k.tp / uni : std::numeric_limits<double>::quiet_NaN();
    }
    return out;
}

std::vector<double> per_class_f1(const ConfusionMatrix& cm) {
    std::vector<double> out(static_cast<std::size_t>(cm.classes()));
    for (int c = 0; c < cm.classes(); ++c) {
        const auto k = counts_for(cm, c);
        const double den = 2.0 * k.tp + k.fp + k.fn;
        out[static_cast<std::size_t>(c)] = den > 0 ? 2.0 * k.tp / den : std::numeric_limits<double>::quiet_NaN();
    }
    return out;
}

double miou(const ConfusionMatrix& cm) { return macro_mean(per_class_iou(cm)); }
double f1(const ConfusionMatrix& cm) { return macro_mean(per_class_f1(cm)); }

double mean(std::span<const double> v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

WelchResult welch_t(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) throw std::domain_error("welch_t needs at least two values per group");
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double va = stddev(a) * stddev(a) / na;
    const double vb = stddev(b) * stddev(b) / nb;
    const double se2 = va + vb;
    if (!(se2 > 0.0)) throw std::domain_error("welch_t: both groups have zero variance");
    WelchResult r;
    r.t = (mean(a) - mean(b)) / std::sqrt(se2);
    r.df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    const boost::math::students_t dist(r.df);
    r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
    r.p = std::min(1.0, r.p);
    return r;
}

std::vector<std::vector<std::size_t>> kfold(std::size_t count, int k, std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("kfold needs k >= 2");
    if (count < static_cast<std::size_t>(k)) throw std::invalid_argument("kfold needs at least k items");
    std::vector<std::size_t> idx(count);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(derive_seed(seed, {0xf01d}));
    for (std::size_t i = count; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
    const std::size_t base = count / static_cast<std::size_t>(k);
    const std::size_t extra = count % static_cast<std::size_t>(k);
    std::size_t pos = 0;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        const std::size_t size = base + (f < extra ? 1 : 0);
        folds[f].assign(idx.begin() + static_cast<std::ptrdiff_t>(pos), idx.begin() + static_cast<std::ptrdiff_t>(pos + size));
        std::sort(folds[f].begin(), folds[f].end());
        pos += size;
    }
    return folds;
}

}  // namespace pgdiff
