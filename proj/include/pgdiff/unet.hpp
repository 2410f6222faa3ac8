#pragma once

// Forward and reverse pass of the tiny U-Net behind DenoiserParams. Templated
// on the scalar so training runs in float and gradient checks run in double.

#include <Eigen/Core>

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "pgdiff/denoiser.hpp"

namespace pgdiff::unet {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

/// Sinusoidal embedding: sin(t f_k) for the first half, cos(t f_k) for the
/// second, f_k = 10000^(-k / half). An odd trailing slot stays zero.
template <typename S>
Vec<S> time_embedding(int t, int dim) {
    Vec<S> e = Vec<S>::Zero(dim);
    const int half = dim / 2;
    for (int k = 0; k < half; ++k) {
        const double f = std::exp(-std::log(10000.0) * static_cast<double>(k) / half);
        e[k] = static_cast<S>(std::sin(t * f));
        e[half + k] = static_cast<S>(std::cos(t * f));
    }
    return e;
}

template <typename S>
inline S sigmoid(S x) {
    return S(1) / (S(1) + std::exp(-x));
}

/// out = pre * sigmoid(pre)
template <typename S>
void silu(const Mat<S>& pre, Mat<S>& out) {
    out.resize(pre.rows(), pre.cols());
    out.array() = pre.array() / (S(1) + (-pre.array()).exp());
}

/// grad *= silu'(pre)
template <typename S>
void silu_backward(const Mat<S>& pre, Mat<S>& grad) {
    const auto s = (S(1) / (S(1) + (-pre.array()).exp())).eval();
    grad.array() *= s * (S(1) + pre.array() * (S(1) - s));
}

/// 3x3 zero-padded patches: row c*9 + ky*3 + kx, column y*W + x.
template <typename S>
void im2col(const Mat<S>& in, int H, int W, Mat<S>& col) {
    const int C = static_cast<int>(in.rows());
    col.resize(static_cast<Eigen::Index>(C) * 9, static_cast<Eigen::Index>(H) * W);
    for (int c = 0; c < C; ++c) {
        const S* src = in.row(c).data();
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                S* dst = col.row(c * 9 + ky * 3 + kx).data();
                const int dy = ky - 1;
                const int dx = kx - 1;
                for (int y = 0; y < H; ++y) {
                    const int sy = y + dy;
                    S* row = dst + static_cast<std::ptrdiff_t>(y) * W;
                    if (sy < 0 || sy >= H) {
                        std::fill(row, row + W, S(0));
                        continue;
                    }
                    const S* srow = src + static_cast<std::ptrdiff_t>(sy) * W + dx;
                    const int x0 = dx < 0 ? 1 : 0;
                    const int x1 = dx > 0 ? W - 1 : W;
                    if (x0 > 0) row[0] = S(0);
                    for (int x = x0; x < x1; ++x) row[x] = srow[x];
                    if (x1 < W) row[W - 1] = S(0);
                }
            }
        }
    }
}

/// Adjoint of im2col.
template <typename S>
void col2im(const Mat<S>& col, int C, int H, int W, Mat<S>& out) {
    out.setZero(C, static_cast<Eigen::Index>(H) * W);
    for (int c = 0; c < C; ++c) {
        S* dst = out.row(c).data();
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const S* src = col.row(c * 9 + ky * 3 + kx).data();
                const int dy = ky - 1;
                const int dx = kx - 1;
                for (int y = 0; y < H; ++y) {
                    const int sy = y + dy;
                    if (sy < 0 || sy >= H) continue;
                    const S* row = src + static_cast<std::ptrdiff_t>(y) * W;
                    S* drow = dst + static_cast<std::ptrdiff_t>(sy) * W + dx;
                    const int x0 = dx < 0 ? 1 : 0;
                    const int x1 = dx > 0 ? W - 1 : W;
                    for (int x = x0; x < x1; ++x) drow[x] += row[x];
                }
            }
        }
    }
}

template <typename S>
void avg_pool2(const Mat<S>& in, int H, int W, Mat<S>& out) {
    const int h = H / 2, w = W / 2;
    out.resize(in.rows(), static_cast<Eigen::Index>(h) * w);
    for (Eigen::Index c = 0; c < in.rows(); ++c) {
        const S* s = in.row(c).data();
        S* d = out.row(c).data();
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const S* a = s + static_cast<std::ptrdiff_t>(2 * y) * W + 2 * x;
                d[y * w + x] = (a[0] + a[1] + a[W] + a[W + 1]) * S(0.25);
            }
        }
    }
}

template <typename S>
void avg_pool2_backward(const Mat<S>& dout, int H, int W, Mat<S>& din) {
    const int w = W / 2;
    din.resize(dout.rows(), static_cast<Eigen::Index>(H) * W);
    for (Eigen::Index c = 0; c < dout.rows(); ++c) {
        const S* g = dout.row(c).data();
        S* d = din.row(c).data();
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) d[y * W + x] = g[(y / 2) * w + x / 2] * S(0.25);
        }
    }
}

template <typename S>
void upsample2(const Mat<S>& in, int h, int w, Mat<S>& out) {
    const int H = 2 * h, W = 2 * w;
    out.resize(in.rows(), static_cast<Eigen::Index>(H) * W);
    for (Eigen::Index c = 0; c < in.rows(); ++c) {
        const S* s = in.row(c).data();
        S* d = out.row(c).data();
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) d[y * W + x] = s[(y / 2) * w + x / 2];
        }
    }
}

template <typename S>
void upsample2_backward(const Mat<S>& dout, int h, int w, Mat<S>& din) {
    const int W = 2 * w;
    din.setZero(dout.rows(), static_cast<Eigen::Index>(h) * w);
    for (Eigen::Index c = 0; c < dout.rows(); ++c) {
        const S* g = dout.row(c).data();
        S* d = din.row(c).data();
        for (int y = 0; y < 2 * h; ++y) {
            for (int x = 0; x < W; ++x) d[(y / 2) * w + x / 2] += g[y * W + x];
        }
    }
}

/// Offsets of one 3x3 convolution inside the flat parameter buffer.
struct ConvSlot {
    int in_ch = 0;
    int out_ch = 0;
    std::size_t weight = 0;
    std::size_t bias = 0;
};

struct DenseSlot {
    int in_dim = 0;
    int out_dim = 0;
    std::size_t weight = 0;
    std::size_t bias = 0;
};

/// Resolved slots for a config, in the same order as parameter_layout().
struct Topology {
    int levels = 0;
    int in_total = 0;
    int out_ch = 0;
    int embed = 0;
    ConvSlot input;
    DenseSlot time_fc1;
    DenseSlot time_fc2;
    ConvSlot level0;
    std::vector<ConvSlot> down_a;  // index i-1 for level i >= 1
    std::vector<ConvSlot> down_b;
    ConvSlot mid;
    std::vector<ConvSlot> up;  // index = level
    ConvSlot head;
    std::size_t total = 0;
};

Topology make_topology(const DenoiserConfig& cfg);

/// Per-convolution record kept for the reverse pass.
template <typename S>
struct ConvRecord {
    Mat<S> col;
    Mat<S> pre;
};

/// Activations recorded by forward() plus scratch buffers. Reusing one Cache
/// across calls avoids reallocating every intermediate.
template <typename S>
struct Cache {
    int H = 0;
    int W = 0;
    Vec<S> emb;
    Vec<S> fc1_pre;
    Vec<S> fc1_act;
    ConvRecord<S> input;
    ConvRecord<S> level0;
    std::vector<ConvRecord<S>> down_a, down_b, up;
    ConvRecord<S> mid;
    ConvRecord<S> head;

    std::vector<Mat<S>> skips;
    Mat<S> h, a, pooled, upsampled, cat;
    std::vector<Mat<S>> dskip;
    Mat<S> dh, dcat, dup, dpool, da, dh0, dpre, dcol;
};

template <typename S>
class Network {
public:
    Network(const DenoiserConfig& cfg, std::span<const S> params)
        : topo_(make_topology(cfg)), params_(params) {
        if (params.size() != topo_.total) throw std::invalid_argument("parameter buffer size does not match config");
    }

    const Topology& topology() const { return topo_; }

    /// input: in_total x (H*W). Writes out_ch x (H*W) into `out` and records
    /// everything backward() needs in `c`.
    void forward(const Mat<S>& input, int H, int W, int t, Mat<S>& out, Cache<S>& c) const {
        if (input.rows() != topo_.in_total || input.cols() != static_cast<Eigen::Index>(H) * W) {
            throw std::invalid_argument("network input has wrong channel count or size");
        }
        const int mult = 1 << topo_.levels;
        if (H % mult != 0 || W % mult != 0) {
            throw std::invalid_argument("spatial size must be a multiple of " + std::to_string(mult));
        }
        c.H = H;
        c.W = W;
        c.down_a.resize(topo_.down_a.size());
        c.down_b.resize(topo_.down_b.size());
        c.up.resize(topo_.up.size());

        // Time branch.
        c.emb = time_embedding<S>(t, topo_.embed);
        c.fc1_pre = dense_weight(topo_.time_fc1) * c.emb + dense_bias(topo_.time_fc1);
        c.fc1_act = c.fc1_pre;
        for (Eigen::Index i = 0; i < c.fc1_act.size(); ++i) c.fc1_act[i] = c.fc1_act[i] * sigmoid(c.fc1_act[i]);
        const Vec<S> temb = dense_weight(topo_.time_fc2) * c.fc1_act + dense_bias(topo_.time_fc2);

        Mat<S>& h = c.h;
        conv(topo_.input, input, H, W, c.input, h, true);
        h.colwise() += temb;

        auto& skips = c.skips;
        skips.resize(static_cast<std::size_t>(topo_.levels));
        conv(topo_.level0, h, H, W, c.level0, skips[0], true);
        int curH = H, curW = W;
        for (int i = 1; i < topo_.levels; ++i) {
            avg_pool2(skips[static_cast<std::size_t>(i - 1)], curH, curW, c.pooled);
            curH /= 2;
            curW /= 2;
            conv(topo_.down_a[i - 1], c.pooled, curH, curW, c.down_a[i - 1], c.a, true);
            conv(topo_.down_b[i - 1], c.a, curH, curW, c.down_b[i - 1], skips[static_cast<std::size_t>(i)], true);
        }
        avg_pool2(skips.back(), curH, curW, c.pooled);
        curH /= 2;
        curW /= 2;
        conv(topo_.mid, c.pooled, curH, curW, c.mid, h, true);

        for (int i = topo_.levels - 1; i >= 0; --i) {
            upsample2(h, curH, curW, c.upsampled);
            curH *= 2;
            curW *= 2;
            const Mat<S>& skip = skips[static_cast<std::size_t>(i)];
            c.cat.resize(c.upsampled.rows() + skip.rows(), c.upsampled.cols());
            c.cat.topRows(c.upsampled.rows()) = c.upsampled;
            c.cat.bottomRows(skip.rows()) = skip;
            conv(topo_.up[static_cast<std::size_t>(i)], c.cat, curH, curW, c.up[static_cast<std::size_t>(i)], h, true);
        }
        conv(topo_.head, h, H, W, c.head, out, false);
    }

    /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output).
    void backward(Cache<S>& c, const Mat<S>& dout, std::span<S> grad) const {
        if (grad.size() != topo_.total) throw std::invalid_argument("gradient buffer size does not match config");
        const int H = c.H, W = c.W;
        const int L = topo_.levels;
        Mat<S>& dh = c.dh;
        conv_backward(topo_.head, c.head, dout, H, W, grad, &dh, false, c);

        // Level i runs at H >> i.
        c.dskip.resize(static_cast<std::size_t>(L));
        for (int i = 0; i < L; ++i) {
            const int h = H >> i, w = W >> i;
            conv_backward(topo_.up[static_cast<std::size_t>(i)], c.up[static_cast<std::size_t>(i)], dh, h, w, grad,
                          &c.dcat, true, c);
            const int skip_ch = skip_channels(i);
            const Eigen::Index urows = c.dcat.rows() - skip_ch;
            c.dskip[static_cast<std::size_t>(i)] = c.dcat.bottomRows(skip_ch);
            c.dup = c.dcat.topRows(urows);
            upsample2_backward(c.dup, h / 2, w / 2, dh);
        }
        // dh is now the gradient at the bottleneck output.
        {
            const int h = H >> L, w = W >> L;
            conv_backward(topo_.mid, c.mid, dh, h, w, grad, &c.dpool, true, c);
            avg_pool2_backward(c.dpool, 2 * h, 2 * w, dh);
            dh += c.dskip[static_cast<std::size_t>(L - 1)];
        }
        for (int i = L - 1; i >= 1; --i) {
            const int h = H >> i, w = W >> i;
            conv_backward(topo_.down_b[static_cast<std::size_t>(i - 1)], c.down_b[static_cast<std::size_t>(i - 1)], dh,
                          h, w, grad, &c.da, true, c);
            conv_backward(topo_.down_a[static_cast<std::size_t>(i - 1)], c.down_a[static_cast<std::size_t>(i - 1)],
                          c.da, h, w, grad, &c.dpool, true, c);
            avg_pool2_backward(c.dpool, 2 * h, 2 * w, dh);
            dh += c.dskip[static_cast<std::size_t>(i - 1)];
        }
        conv_backward(topo_.level0, c.level0, dh, H, W, grad, &c.dh0, true, c);

        // Broadcast-added time embedding.
        const Vec<S> dtemb = c.dh0.rowwise().sum();
        conv_backward(topo_.input, c.input, c.dh0, H, W, grad, nullptr, true, c);

        accumulate_dense(topo_.time_fc2, c.fc1_act, dtemb, grad);
        Vec<S> dact = dense_weight(topo_.time_fc2).transpose() * dtemb;
        for (Eigen::Index i = 0; i < dact.size(); ++i) {
            const S p = c.fc1_pre[i];
            const S s = sigmoid(p);
            dact[i] *= s * (S(1) + p * (S(1) - s));
        }
        accumulate_dense(topo_.time_fc1, c.emb, dact, grad);
    }

private:
    using ConstMap = Eigen::Map<const Mat<S>>;
    using ConstVecMap = Eigen::Map<const Vec<S>>;

    int skip_channels(int level) const {
        return level == 0 ? topo_.level0.out_ch : topo_.down_b[static_cast<std::size_t>(level - 1)].out_ch;
    }

    ConstMap conv_weight(const ConvSlot& s) const {
        return ConstMap(params_.data() + s.weight, s.out_ch, static_cast<Eigen::Index>(s.in_ch) * 9);
    }
    ConstVecMap conv_bias(const ConvSlot& s) const { return ConstVecMap(params_.data() + s.bias, s.out_ch); }
    ConstMap dense_weight(const DenseSlot& s) const {
        return ConstMap(params_.data() + s.weight, s.out_dim, s.in_dim);
    }
    ConstVecMap dense_bias(const DenseSlot& s) const { return ConstVecMap(params_.data() + s.bias, s.out_dim); }

    void conv(const ConvSlot& s, const Mat<S>& in, int H, int W, ConvRecord<S>& rec, Mat<S>& out,
              bool activate) const {
        im2col(in, H, W, rec.col);
        out.resize(s.out_ch, static_cast<Eigen::Index>(H) * W);
        out.noalias() = conv_weight(s) * rec.col;
        out.colwise() += conv_bias(s);
        if (activate) {
            rec.pre.swap(out);
            silu(rec.pre, out);
        }
    }

    void conv_backward(const ConvSlot& s, const ConvRecord<S>& rec, const Mat<S>& dout_act, int H, int W,
                       std::span<S> grad, Mat<S>* din, bool activated, Cache<S>& c) const {
        Mat<S>& dout = c.dpre;
        dout = dout_act;
        if (activated) silu_backward(rec.pre, dout);
        Eigen::Map<Mat<S>> gw(grad.data() + s.weight, s.out_ch, static_cast<Eigen::Index>(s.in_ch) * 9);
        Eigen::Map<Vec<S>> gb(grad.data() + s.bias, s.out_ch);
        gw.noalias() += dout * rec.col.transpose();
        gb += dout.rowwise().sum();
        if (din) {
            c.dcol.noalias() = conv_weight(s).transpose() * dout;
            col2im(c.dcol, s.in_ch, H, W, *din);
        }
    }

    void accumulate_dense(const DenseSlot& s, const Vec<S>& in, const Vec<S>& dout, std::span<S> grad) const {
        Eigen::Map<Mat<S>> gw(grad.data() + s.weight, s.out_dim, s.in_dim);
        Eigen::Map<Vec<S>> gb(grad.data() + s.bias, s.out_dim);
        gw.noalias() += dout * in.transpose();
        gb += dout;
    }

    Topology topo_;
    std::span<const S> params_;
};

}  // namespace pgdiff::unet
