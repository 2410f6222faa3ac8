#include "pgdiff/codec.hpp"

#include <stdexcept>
#include <string>

namespace pgdiff {

void LatentSpec::validate() const {
    if (f < 1 || (f & (f - 1)) != 0) throw std::invalid_argument("down-sampling factor must be a power of two");
    if (latent_channels < 1) throw std::invalid_argument("latent_channels must be >= 1");
}

namespace {

void check_divisible(int h, int w, int f) {
    if (h % f != 0 || w % f != 0) {
        throw std::invalid_argument("image size " + std::to_string(h) + "x" + std::to_string(w) +
                                    " is not divisible by f=" + std::to_string(f));
    }
}

}  // namespace

Tensor encode(const Tensor& image, const LatentSpec& spec) {
    spec.validate();
    const int C = image.channels(), H = image.height(), W = image.width();
    check_divisible(H, W, spec.f);
    const int h = H / spec.f, w = W / spec.f;
    const double inv = 1.0 / (static_cast<double>(spec.f) * spec.f);
    Tensor pooled = Tensor::chw(C, h, w);
    for (int c = 0; c < C; ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double s = 0.0;
                for (int dy = 0; dy < spec.f; ++dy) {
                    for (int dx = 0; dx < spec.f; ++dx) s += image.at(c, y * spec.f + dy, x * spec.f + dx);
                }
                pooled.at(c, y, x) = spec.f == 1 ? s : s * inv;
            }
        }
    }
    if (spec.latent_channels == C) return pooled;
    Tensor out = Tensor::chw(spec.latent_channels, h, w);
    for (int c = 0; c < spec.latent_channels; ++c) {
        const auto src = pooled.channel(c % C);
        std::copy(src.begin(), src.end(), out.channel(c).begin());
    }
    return out;
}

Tensor upsample(const Tensor& latent, int f) {
    if (f < 1) throw std::invalid_argument("upsampling factor must be >= 1");
    if (f == 1) return latent;
    const int C = latent.channels(), h = latent.height(), w = latent.width();
    Tensor out = Tensor::chw(C, h * f, w * f);
    for (int c = 0; c < C; ++c) {
        for (int y = 0; y < h * f; ++y) {
            for (int x = 0; x < w * f; ++x) out.at(c, y, x) = latent.at(c, y / f, x / f);
        }
    }
    return out;
}

Tensor mask_to_target(const ClassMask& mask, int n, const LatentSpec& spec) {
    spec.validate();
    if (n < 1) throw std::invalid_argument("class count must be >= 1");
    check_divisible(mask.height(), mask.width(), spec.f);
    const int h = mask.height() / spec.f, w = mask.width() / spec.f;
    Tensor out = Tensor::chw(n, h, w, -1.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int label = mask.at(y * spec.f, x * spec.f);
            if (label >= n) {
                throw std::out_of_range("mask label " + std::to_string(label) + " outside [0, " + std::to_string(n) +
                                        ")");
            }
            out.at(label, y, x) = 1.0;
        }
    }
    return out;
}

ClassMask target_to_mask(const Tensor& pred, int h, int w) {
    if (pred.rank() != 3) throw std::invalid_argument("prediction must be a CHW tensor");
    const int n = pred.channels();
    if (n < 2) throw std::invalid_argument("prediction needs at least two class channels");
    if (h < 1 || w < 1 || pred.height() < 1 || pred.width() < 1) {
        throw std::invalid_argument("degenerate spatial size in target_to_mask");
    }
    ClassMask mask(h, w, n);
    for (int y = 0; y < h; ++y) {
        const int sy = static_cast<int>(static_cast<long long>(y) * pred.height() / h);
        for (int x = 0; x < w; ++x) {
            const int sx = static_cast<int>(static_cast<long long>(x) * pred.width() / w);
            int best = 0;
            double best_v = pred.at(0, sy, sx);
            for (int c = 1; c < n; ++c) {
                const double v = pred.at(c, sy, sx);
                if (v > best_v) {
                    best_v = v;
                    best = c;
                }
            }
            mask.set(y, x, best);
        }
    }
    return mask;
}

}  // namespace pgdiff
