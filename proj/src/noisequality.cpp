#include "pgdiff/noisequality.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace pgdiff {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014327;

std::vector<double> gaussian_kernel(int window, double sigma) {
    std::vector<double> k(static_cast<std::size_t>(window));
    const int r = window / 2;
    double sum = 0.0;
    for (int i = 0; i < window; ++i) {
        const double d = i - r;
        k[static_cast<std::size_t>(i)] = std::exp(-0.5 * d * d / (sigma * sigma));
        sum += k[static_cast<std::size_t>(i)];
    }
    for (double& v : k) v /= sum;
    return k;
}

// Single plane view of a CHW tensor with one channel (or a rank-2 tensor).
struct Plane {
    const double* data;
    int h;
    int w;
};

Plane plane_of(const Tensor& t) {
    if (t.rank() == 3) {
        if (t.channels() != 1) throw std::invalid_argument("ssim expects single-channel inputs");
        return {t.data(), t.height(), t.width()};
    }
    if (t.rank() == 2) return {t.data(), t.shape()[0], t.shape()[1]};
    throw std::invalid_argument("ssim expects a 2-D image or a 1-channel CHW tensor");
}

double sample_sd(std::span<const double> s) {
    double mean = 0.0;
    for (double v : s) mean += v;
    mean /= static_cast<double>(s.size());
    double ss = 0.0;
    for (double v : s) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(s.size() - 1));
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double percentile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q / 100.0 * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return v[lo] + frac * (v[hi] - v[lo]);
}

// Separable Gaussian blur with mirrored borders.
std::vector<double> blur(const std::vector<double>& img, int h, int w, double sigma) {
    if (sigma <= 0.0) return img;
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    const auto k = gaussian_kernel(2 * r + 1, sigma);
    auto reflect = [](int i, int n) {
        if (n == 1) return 0;
        while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
        return i;
    };
    std::vector<double> tmp(img.size()), out(img.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int d = -r; d <= r; ++d) s += k[static_cast<std::size_t>(d + r)] * img[static_cast<std::size_t>(y * w + reflect(x + d, w))];
            tmp[static_cast<std::size_t>(y * w + x)] = s;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int d = -r; d <= r; ++d) s += k[static_cast<std::size_t>(d + r)] * tmp[static_cast<std::size_t>(reflect(y + d, h) * w + x)];
            out[static_cast<std::size_t>(y * w + x)] = s;
        }
    }
    return out;
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b, int window, double c1, double c2) {
    const Plane pa = plane_of(a);
    const Plane pb = plane_of(b);
    if (pa.h != pb.h || pa.w != pb.w) throw std::invalid_argument("ssim: shape mismatch");
    if (window < 3 || window % 2 == 0) throw std::invalid_argument("ssim window must be odd and >= 3");
    if (window > pa.h || window > pa.w) throw std::invalid_argument("ssim window larger than the image");
    const auto k1 = gaussian_kernel(window, window / 6.0);
    double total = 0.0;
    std::size_t count = 0;
    for (int y0 = 0; y0 + window <= pa.h; ++y0) {
        for (int x0 = 0; x0 + window <= pa.w; ++x0) {
            double ma = 0.0, mb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
            for (int dy = 0; dy < window; ++dy) {
                for (int dx = 0; dx < window; ++dx) {
                    const double wgt = k1[static_cast<std::size_t>(dy)] * k1[static_cast<std::size_t>(dx)];
                    const std::size_t idx = static_cast<std::size_t>(y0 + dy) * pa.w + (x0 + dx);
                    const double va = pa.data[idx];
                    const double vb = pb.data[idx];
                    ma += wgt * va;
                    mb += wgt * vb;
                    saa += wgt * va * va;
                    sbb += wgt * vb * vb;
                    sab += wgt * va * vb;
                }
            }
            const double var_a = saa - ma * ma;
            const double var_b = sbb - mb * mb;
            const double cov = sab - ma * mb;
            const double num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
            const double den = (ma * ma + mb * mb + c1) * (var_a + var_b + c2);
            total += num / den;
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

std::vector<double> kde_pdf(std::span<const double> samples, std::span<const double> grid, double bandwidth) {
    if (samples.empty()) throw std::invalid_argument("kde_pdf: no samples");
    if (!(bandwidth > 0.0)) throw std::invalid_argument("kde_pdf: bandwidth must be positive");
    const double norm = 1.0 / (static_cast<double>(samples.size()) * bandwidth);
    std::vector<double> out(grid.size());
    for (std::size_t g = 0; g < grid.size(); ++g) {
        double s = 0.0;
        for (double x : samples) {
            const double z = (grid[g] - x) / bandwidth;
            s += std::exp(-0.5 * z * z);
        }
        out[g] = s * kInvSqrt2Pi * norm;
    }
    return out;
}

double scott_bandwidth(std::span<const double> samples) {
    if (samples.size() < 2) throw std::invalid_argument("scott_bandwidth needs at least two samples");
    return sample_sd(samples) * std::pow(static_cast<double>(samples.size()), -0.2);
}

KldResult kld_vs_standard_normal(std::span<const double> samples, const KldOptions& opts) {
    if (samples.size() < 100) throw std::invalid_argument("kld_vs_standard_normal needs at least 100 samples");
    if (!(opts.hi > opts.lo) || opts.points < 2) throw std::invalid_argument("invalid KLD integration window");
    KldResult r;
    const double m = static_cast<double>(samples.size());
    r.bandwidth = scott_bandwidth(samples);
    if (!(r.bandwidth > 0.0) || !std::isfinite(r.bandwidth)) {
        r.divergent = true;
        return r;
    }
    const double bw = r.bandwidth;

    double outside = 0.0;
    for (double x : samples) outside += normal_cdf((opts.lo - x) / bw) + normal_cdf((x - opts.hi) / bw);
    r.outside_mass = outside / m;
    if (r.outside_mass > opts.max_outside_mass) {
        r.divergent = true;
        return r;
    }

    // Refine the grid so the kernel is resolved; a kernel too narrow to
    // resolve within max_points means the density is effectively singular.
    const double span = opts.hi - opts.lo;
    long long points = opts.points;
    const double needed = std::ceil(span / (bw / opts.min_points_per_bandwidth)) + 1.0;
    if (needed > static_cast<double>(opts.max_points)) {
        r.divergent = true;
        return r;
    }
    points = std::max<long long>(points, static_cast<long long>(needed));
    r.grid_points = static_cast<int>(points);
    const double step = span / static_cast<double>(points - 1);

    // Kernel sums restricted to +-9 bandwidths (exp(-40.5) is below double
    // resolution relative to the kernel peak).
    std::vector<double> density(static_cast<std::size_t>(points), 0.0);
    const double reach = 9.0 * bw;
    for (double x : samples) {
        const long long first = std::max<long long>(0, static_cast<long long>(std::ceil((x - reach - opts.lo) / step)));
        const long long last =
            std::min<long long>(points - 1, static_cast<long long>(std::floor((x + reach - opts.lo) / step)));
        for (long long g = first; g <= last; ++g) {
            const double z = (opts.lo + static_cast<double>(g) * step - x) / bw;
            density[static_cast<std::size_t>(g)] += std::exp(-0.5 * z * z);
        }
    }
    const double norm = kInvSqrt2Pi / (m * bw);
    double integral = 0.0;
    for (long long g = 0; g < points; ++g) {
        const double xg = opts.lo + static_cast<double>(g) * step;
        const double p = density[static_cast<std::size_t>(g)] * norm;
        double f = 0.0;
        if (p > 0.0) {
            const double log_phi = -0.5 * xg * xg - 0.5 * std::log(2.0 * std::numbers::pi);
            f = p * (std::log(p) - log_phi);
        }
        integral += (g == 0 || g == points - 1) ? 0.5 * f : f;
    }
    integral *= step;
    r.value = std::max(0.0, integral);
    return r;
}

Tensor ssim_preprocess(const Tensor& t, const NoiseQualityOptions& opts) {
    const int C = t.channels(), H = t.height(), W = t.width();
    std::vector<double> img(static_cast<std::size_t>(H) * W, 0.0);
    for (int c = 0; c < C; ++c) {
        const auto p = t.channel(c);
        for (std::size_t i = 0; i < p.size(); ++i) img[i] += p[i];
    }
    if (C > 1) {
        for (double& v : img) v /= C;
    }
    auto rescale = [&img](double lo, double hi) {
        if (!(hi > lo)) {
            std::fill(img.begin(), img.end(), 0.0);
            return;
        }
        for (double& v : img) v = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
    };
    const auto [mn, mx] = std::minmax_element(img.begin(), img.end());
    rescale(*mn, *mx);
    const double lo = percentile(img, opts.clip_low_percentile);
    const double hi = percentile(img, opts.clip_high_percentile);
    if (hi > lo) rescale(lo, hi);
    img = blur(img, H, W, opts.blur_sigma);
    return Tensor({1, H, W}, std::move(img));
}

NoiseQualityReport noise_report(const StartingNoise& noise, const Tensor& source_latent,
                                const NoiseQualityOptions& opts) {
    const Tensor& v = noise.values;
    if (v.rank() != 3 || source_latent.rank() != 3 || v.height() != source_latent.height() ||
        v.width() != source_latent.width()) {
        throw std::invalid_argument("noise " + shape_string(v.shape()) + " and latent " +
                                    shape_string(source_latent.shape()) + " are not spatially compatible");
    }
    NoiseQualityReport r;
    r.provenance = noise.provenance;
    r.ssim = ssim(ssim_preprocess(v, opts), ssim_preprocess(source_latent, opts), opts.ssim_window);
    const KldResult k = kld_vs_standard_normal(v.values(), opts.kld);
    r.kld = k.value;
    r.kld_divergent = k.divergent;
    r.sample_count = v.size();
    r.bandwidth = k.bandwidth;
    std::ostringstream os;
    os << "channel-mean;minmax;clip-p" << opts.clip_low_percentile << "-p" << opts.clip_high_percentile
       << ";blur-sigma" << opts.blur_sigma << ";window" << opts.ssim_window;
    r.preprocessing = os.str();
    return r;
}

}  // namespace pgdiff
