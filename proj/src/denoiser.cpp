#include "pgdiff/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "pgdiff/parallel.hpp"
#include "pgdiff/unet.hpp"

namespace pgdiff {

namespace {

// Walks the architecture once, emitting layout entries and the matching slots.
struct LayoutBuilder {
    std::vector<ParamInfo> layout;
    std::size_t offset = 0;

    std::size_t add(std::string name, Shape shape) {
        std::size_t n = 1;
        for (int d : shape) n *= static_cast<std::size_t>(d);
        layout.push_back({std::move(name), std::move(shape), offset, n});
        const std::size_t at = offset;
        offset += n;
        return at;
    }

    unet::ConvSlot conv(const std::string& name, int in_ch, int out_ch) {
        unet::ConvSlot s;
        s.in_ch = in_ch;
        s.out_ch = out_ch;
        s.weight = add(name + ".weight", {out_ch, in_ch, 3, 3});
        s.bias = add(name + ".bias", {out_ch});
        return s;
    }

    unet::DenseSlot dense(const std::string& name, int in_dim, int out_dim) {
        unet::DenseSlot s;
        s.in_dim = in_dim;
        s.out_dim = out_dim;
        s.weight = add(name + ".weight", {out_dim, in_dim});
        s.bias = add(name + ".bias", {out_dim});
        return s;
    }
};

unet::Topology build(const DenoiserConfig& cfg, std::vector<ParamInfo>* layout) {
    cfg.validate();
    LayoutBuilder b;
    unet::Topology t;
    const auto& w = cfg.hidden_widths;
    t.levels = static_cast<int>(w.size());
    t.in_total = cfg.in_channels + cfg.cond_channels;
    t.out_ch = cfg.in_channels;
    t.embed = cfg.time_embed_dim;

    t.input = b.conv("in", t.in_total, w[0]);
    t.time_fc1 = b.dense("time.fc1", cfg.time_embed_dim, cfg.time_embed_dim);
    t.time_fc2 = b.dense("time.fc2", cfg.time_embed_dim, w[0]);
    t.level0 = b.conv("level0", w[0], w[0]);
    for (int i = 1; i < t.levels; ++i) {
        const std::string name = "down" + std::to_string(i);
        t.down_a.push_back(b.conv(name + ".a", w[i - 1], w[i]));
        t.down_b.push_back(b.conv(name + ".b", w[i], w[i]));
    }
    t.mid = b.conv("mid", w.back(), w.back());
    t.up.resize(w.size());
    for (int i = t.levels - 1; i >= 0; --i) {
        const int below = i == t.levels - 1 ? w.back() : w[static_cast<std::size_t>(i + 1)];
        t.up[static_cast<std::size_t>(i)] = b.conv("up" + std::to_string(i), below + w[static_cast<std::size_t>(i)],
                                                   w[static_cast<std::size_t>(i)]);
    }
    t.head = b.conv("out", w[0], cfg.in_channels);
    t.total = b.offset;
    if (layout) *layout = std::move(b.layout);
    return t;
}

template <typename S>
unet::Mat<S> pack_input(const Tensor& x_t, const Tensor* cond) {
    const int H = x_t.height(), W = x_t.width();
    const int cin = x_t.channels();
    const int cc = cond ? cond->channels() : 0;
    unet::Mat<S> m(cin + cc, static_cast<Eigen::Index>(H) * W);
    for (int c = 0; c < cin; ++c) {
        const auto plane = x_t.channel(c);
        for (std::size_t i = 0; i < plane.size(); ++i) m(c, static_cast<Eigen::Index>(i)) = static_cast<S>(plane[i]);
    }
    for (int c = 0; c < cc; ++c) {
        const auto plane = cond->channel(c);
        for (std::size_t i = 0; i < plane.size(); ++i) {
            m(cin + c, static_cast<Eigen::Index>(i)) = static_cast<S>(plane[i]);
        }
    }
    return m;
}

void check_model_inputs(const DenoiserConfig& cfg, const Tensor& x_t, const Tensor* cond) {
    if (x_t.rank() != 3 || x_t.channels() != cfg.in_channels) {
        throw std::invalid_argument("denoiser expects " + std::to_string(cfg.in_channels) + " input channels, got " +
                                    shape_string(x_t.shape()));
    }
    if (cfg.cond_channels > 0) {
        if (!cond) throw std::invalid_argument("conditional denoiser called without conditioning");
        if (cond->rank() != 3 || cond->channels() != cfg.cond_channels || cond->height() != x_t.height() ||
            cond->width() != x_t.width()) {
            throw std::invalid_argument("conditioning shape " + shape_string(cond->shape()) +
                                        " does not match the model / state " + shape_string(x_t.shape()));
        }
    } else if (cond) {
        throw std::invalid_argument("unconditional denoiser called with conditioning");
    }
}

template <typename S>
unet::Cache<S>& scratch() {
    thread_local unet::Cache<S> cache;
    return cache;
}

// Per-item loss and gradient in scalar S. Returns the item's sum of squared errors.
template <typename S>
double item_loss_grad(const unet::Network<S>& net, const Tensor& x0, const Tensor* cond, const NoiseDraw& draw,
                      const NoiseSchedule& sched, double grad_scale, std::span<S> grad) {
    const Tensor x_t = forward_diffuse(x0, draw.t, draw.eps, sched);
    const unet::Mat<S> input = pack_input<S>(x_t, cond);
    unet::Cache<S>& cache = scratch<S>();
    unet::Mat<S> out;
    net.forward(input, x_t.height(), x_t.width(), draw.t, out, cache);
    unet::Mat<S> dout(out.rows(), out.cols());
    double sse = 0.0;
    const auto eps = draw.eps.values();
    S* po = out.data();
    S* pd = dout.data();
    for (std::size_t i = 0; i < eps.size(); ++i) {
        const double diff = static_cast<double>(po[i]) - eps[i];
        sse += diff * diff;
        pd[i] = static_cast<S>(2.0 * diff * grad_scale);
    }
    net.backward(cache, dout, grad);
    return sse;
}

void check_batch(std::span<const Tensor> batch, std::span<const Tensor> cond_batch) {
    if (batch.empty()) throw std::invalid_argument("empty batch");
    if (!cond_batch.empty() && cond_batch.size() != batch.size()) {
        throw std::invalid_argument("conditioning batch is not aligned with the data batch");
    }
}

}  // namespace

namespace unet {
Topology make_topology(const DenoiserConfig& cfg) { return build(cfg, nullptr); }
}  // namespace unet

void DenoiserConfig::validate() const {
    if (in_channels < 1) throw std::invalid_argument("in_channels must be >= 1");
    if (cond_channels < 0) throw std::invalid_argument("cond_channels must be >= 0");
    if (hidden_widths.empty()) throw std::invalid_argument("hidden_widths must not be empty");
    for (int w : hidden_widths) {
        if (w < 1) throw std::invalid_argument("hidden widths must be >= 1");
    }
    if (hidden_widths.size() > 8) throw std::invalid_argument("at most 8 levels are supported");
    if (time_embed_dim < 2) throw std::invalid_argument("time_embed_dim must be >= 2");
}

std::vector<ParamInfo> parameter_layout(const DenoiserConfig& cfg) {
    std::vector<ParamInfo> layout;
    build(cfg, &layout);
    return layout;
}

DenoiserParams::DenoiserParams(DenoiserConfig cfg) : config_(std::move(cfg)), layout_(parameter_layout(config_)) {
    const auto& last = layout_.back();
    values_.assign(last.offset + last.size, 0.0f);
}

const ParamInfo& DenoiserParams::info(std::string_view name) const {
    for (const auto& p : layout_) {
        if (p.name == name) return p;
    }
    throw std::out_of_range("no parameter named " + std::string(name));
}

std::span<float> DenoiserParams::tensor(std::string_view name) {
    const auto& p = info(name);
    return std::span<float>(values_).subspan(p.offset, p.size);
}

std::span<const float> DenoiserParams::tensor(std::string_view name) const {
    const auto& p = info(name);
    return std::span<const float>(values_).subspan(p.offset, p.size);
}

DenoiserParams init_denoiser(const DenoiserConfig& cfg, std::uint64_t seed) {
    DenoiserParams params(cfg);
    Rng rng(derive_seed(seed, {0x1a17}));
    for (const auto& p : params.layout()) {
        if (p.shape.size() < 2) continue;  // biases stay zero
        if (p.name == DenoiserParams::kHeadWeight) continue;
        std::size_t fan_in = 1;
        for (std::size_t d = 1; d < p.shape.size(); ++d) fan_in *= static_cast<std::size_t>(p.shape[d]);
        const double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
        auto dst = params.tensor(p.name);
        for (float& v : dst) v = static_cast<float>(rng.uniform(-bound, bound));
    }
    return params;
}

void randomize_head(DenoiserParams& params, std::uint64_t seed, double scale) {
    Rng rng(derive_seed(seed, {0x4ead}));
    for (auto name : {DenoiserParams::kHeadWeight, DenoiserParams::kHeadBias}) {
        for (float& v : params.tensor(name)) v = static_cast<float>(rng.uniform(-scale, scale));
    }
}

Tensor predict_noise(const DenoiserParams& params, const Tensor& x_t, int t, const Tensor* cond) {
    check_model_inputs(params.config(), x_t, cond);
    const unet::Network<float> net(params.config(), params.values());
    const unet::Mat<float> input = pack_input<float>(x_t, cond);
    unet::Mat<float> out;
    net.forward(input, x_t.height(), x_t.width(), t, out, scratch<float>());
    Tensor result(x_t.shape());
    const float* p = out.data();
    for (std::size_t i = 0; i < result.size(); ++i) result[i] = static_cast<double>(p[i]);
    return result;
}

EpsModel bind_model(const DenoiserParams& params, const Tensor* cond) {
    return [&params, cond](const Tensor& x_t, int t) { return predict_noise(params, x_t, t, cond); };
}

EpsModel oracle_point_denoiser(Tensor x0, const NoiseSchedule& sched) {
    return [x0 = std::move(x0), abar = sched.alpha_bars, T = sched.T](const Tensor& x_t, int t) {
        if (t < 0 || t >= T) throw std::out_of_range("oracle denoiser timestep out of range");
        const double a = abar[static_cast<std::size_t>(t)];
        if (a >= 1.0) throw std::domain_error("oracle denoiser undefined where alpha_bar = 1");
        const double inv = 1.0 / std::sqrt(1.0 - a);
        return axpby(inv, x_t, -std::sqrt(a) * inv, x0);
    };
}

std::vector<NoiseDraw> draw_noise(std::span<const Tensor> batch, const NoiseSchedule& sched, Rng& rng) {
    std::vector<NoiseDraw> draws;
    draws.reserve(batch.size());
    for (const auto& item : batch) {
        NoiseDraw d;
        d.t = static_cast<int>(rng.below(static_cast<std::uint64_t>(sched.T)));
        d.eps = Tensor(item.shape());
        for (double& v : d.eps.values()) v = rng.normal();
        draws.push_back(std::move(d));
    }
    return draws;
}

double diffusion_loss(const CondEpsModel& model, std::span<const Tensor> batch, std::span<const Tensor> cond_batch,
                      std::span<const NoiseDraw> draws, const NoiseSchedule& sched) {
    check_batch(batch, cond_batch);
    if (draws.size() != batch.size()) throw std::invalid_argument("one noise draw per batch item is required");
    double sse = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Tensor x_t = forward_diffuse(batch[i], draws[i].t, draws[i].eps, sched);
        const Tensor pred = model(x_t, draws[i].t, cond_batch.empty() ? nullptr : &cond_batch[i]);
        require_same_shape(pred, draws[i].eps, "diffusion_loss");
        for (std::size_t k = 0; k < pred.size(); ++k) {
            const double d = draws[i].eps[k] - pred[k];
            sse += d * d;
        }
        count += pred.size();
    }
    return sse / static_cast<double>(count);
}

LossEvaluation diffusion_loss(const DenoiserParams& params, std::span<const Tensor> batch,
                              std::span<const Tensor> cond_batch, const NoiseSchedule& sched, Rng& rng) {
    check_batch(batch, cond_batch);
    LossEvaluation ev;
    ev.draws = draw_noise(batch, sched, rng);
    const CondEpsModel model = [&params](const Tensor& x_t, int t, const Tensor* cond) {
        return predict_noise(params, x_t, t, cond);
    };
    ev.loss = diffusion_loss(model, batch, cond_batch, ev.draws, sched);
    return ev;
}

namespace {

template <typename S>
double loss_and_gradient_impl(const DenoiserConfig& cfg, std::span<const S> params, std::span<const Tensor> batch,
                              std::span<const Tensor> cond_batch, std::span<const NoiseDraw> draws,
                              const NoiseSchedule& sched, std::span<S> grad) {
    check_batch(batch, cond_batch);
    if (draws.size() != batch.size()) throw std::invalid_argument("one noise draw per batch item is required");
    const unet::Network<S> net(cfg, params);
    std::fill(grad.begin(), grad.end(), S(0));
    std::size_t count = 0;
    for (const auto& item : batch) count += item.size();
    const double scale = 1.0 / static_cast<double>(count);
    double sse = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Tensor* cond = cond_batch.empty() ? nullptr : &cond_batch[i];
        check_model_inputs(cfg, batch[i], cond);
        sse += item_loss_grad<S>(net, batch[i], cond, draws[i], sched, scale, grad);
    }
    return sse * scale;
}

}  // namespace

double loss_and_gradient(const DenoiserParams& params, std::span<const Tensor> batch,
                         std::span<const Tensor> cond_batch, std::span<const NoiseDraw> draws,
                         const NoiseSchedule& sched, std::span<float> grad) {
    return loss_and_gradient_impl<float>(params.config(), params.values(), batch, cond_batch, draws, sched, grad);
}

double loss_and_gradient_double(const DenoiserConfig& cfg, std::span<const double> params,
                                std::span<const Tensor> batch, std::span<const Tensor> cond_batch,
                                std::span<const NoiseDraw> draws, const NoiseSchedule& sched,
                                std::span<double> grad) {
    return loss_and_gradient_impl<double>(cfg, params, batch, cond_batch, draws, sched, grad);
}

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw std::invalid_argument("learning rate must be finite and non-negative");
    }
    if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    if (epochs < 0) throw std::invalid_argument("epoch count must be >= 0");
    if (grad_clip && !(*grad_clip > 0.0)) throw std::invalid_argument("gradient clip must be positive");
    if (threads < 1) throw std::invalid_argument("thread count must be >= 1");
}

TrainResult train(DenoiserParams params, std::span<const Tensor> dataset, std::span<const Tensor> cond_dataset,
                  const NoiseSchedule& sched, const TrainConfig& cfg, const ItemTransform& transform,
                  const EpochCallback& on_epoch) {
    cfg.validate();
    check_batch(dataset, cond_dataset);
    const DenoiserConfig& mcfg = params.config();
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        check_model_inputs(mcfg, dataset[i], cond_dataset.empty() ? nullptr : &cond_dataset[i]);
    }

    const std::size_t P = params.count();
    std::vector<float> m(P, 0.0f), v(P, 0.0f), grad(P);
    constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    long long step = 0;

    const std::size_t B = static_cast<std::size_t>(cfg.batch_size);
    std::vector<std::vector<float>> item_grads(B, std::vector<float>(P));
    std::vector<double> item_sse(B);

    TrainResult result;
    result.epoch_loss.reserve(static_cast<std::size_t>(cfg.epochs));

    std::vector<std::size_t> order(dataset.size());
    const long long total_steps = static_cast<long long>(cfg.epochs) * static_cast<long long>((dataset.size() + B - 1) / B);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle(derive_seed(cfg.seed, {0x5e1f, static_cast<std::uint64_t>(epoch)}));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

        double epoch_sse = 0.0;
        std::size_t epoch_count = 0;
        for (std::size_t start = 0; start < order.size(); start += B) {
            const std::size_t nb = std::min(B, order.size() - start);
            const std::size_t elems = dataset[order[start]].size();
            const double scale = 1.0 / static_cast<double>(nb * elems);
            const unet::Network<float> net(mcfg, params.values());

            parallel_for(nb, cfg.threads, [&](std::size_t j) {
                const std::size_t idx = order[start + j];
                Rng rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(epoch), start + j}));
                Tensor item = dataset[idx];
                Tensor cond;
                Tensor* cond_ptr = nullptr;
                if (!cond_dataset.empty()) {
                    cond = cond_dataset[idx];
                    cond_ptr = &cond;
                }
                if (cfg.augment && transform) transform(idx, item, cond_ptr, rng);
                std::vector<Tensor> one{item};
                const auto draws = draw_noise(one, sched, rng);
                auto& g = item_grads[j];
                std::fill(g.begin(), g.end(), 0.0f);
                item_sse[j] = item_loss_grad<float>(net, item, cond_ptr, draws[0], sched, scale, g);
            });

            std::fill(grad.begin(), grad.end(), 0.0f);
            double batch_sse = 0.0;
            for (std::size_t j = 0; j < nb; ++j) {
                const auto& g = item_grads[j];
                for (std::size_t k = 0; k < P; ++k) grad[k] += g[k];
                batch_sse += item_sse[j];
            }
            if (!std::isfinite(batch_sse)) {
                throw DivergenceError("loss became non-finite at epoch " + std::to_string(epoch) + ", batch starting at " +
                                      std::to_string(start));
            }
            epoch_sse += batch_sse;
            epoch_count += nb * elems;

            if (cfg.grad_clip) {
                double norm2 = 0.0;
                for (float gk : grad) norm2 += static_cast<double>(gk) * gk;
                const double norm = std::sqrt(norm2);
                if (!std::isfinite(norm)) {
                    throw DivergenceError("gradient became non-finite at epoch " + std::to_string(epoch));
                }
                if (norm > *cfg.grad_clip) {
                    const float s = static_cast<float>(*cfg.grad_clip / norm);
                    for (float& gk : grad) gk *= s;
                }
            }

            ++step;
            const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            double rate = cfg.learning_rate;
            if (cfg.cosine_decay) {
                rate *= 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step - 1) /
                                              static_cast<double>(total_steps)));
            }
            const float lr = static_cast<float>(rate);
            auto w = params.values();
            for (std::size_t k = 0; k < P; ++k) {
                m[k] = static_cast<float>(beta1) * m[k] + static_cast<float>(1.0 - beta1) * grad[k];
                v[k] = static_cast<float>(beta2) * v[k] + static_cast<float>(1.0 - beta2) * grad[k] * grad[k];
                const float mhat = m[k] / static_cast<float>(bc1);
                const float vhat = v[k] / static_cast<float>(bc2);
                w[k] -= lr * mhat / (std::sqrt(vhat) + static_cast<float>(adam_eps));
            }
        }
        const double mean = epoch_sse / static_cast<double>(epoch_count);
        if (!std::isfinite(mean)) throw DivergenceError("loss became non-finite at epoch " + std::to_string(epoch));
        result.epoch_loss.push_back(mean);
        if (on_epoch) on_epoch(epoch, mean, params);
    }
    result.params = std::move(params);
    return result;
}

GradCheckResult grad_check(const DenoiserParams& params, const Tensor& probe_input, const Tensor* probe_cond,
                           const NoiseSchedule& sched, int t, double epsilon_fd, std::uint64_t seed,
                           std::size_t sample_count) {
    sched.check_timestep(t);
    if (!(epsilon_fd > 0.0)) throw std::invalid_argument("finite-difference step must be positive");
    const DenoiserConfig& cfg = params.config();
    check_model_inputs(cfg, probe_input, probe_cond);

    Rng rng(derive_seed(seed, {0x6c4e}));
    std::vector<Tensor> batch{probe_input};
    std::vector<Tensor> cond;
    if (probe_cond) cond.push_back(*probe_cond);
    std::vector<NoiseDraw> draws(1);
    draws[0].t = t;
    draws[0].eps = Tensor(probe_input.shape());
    for (double& e : draws[0].eps.values()) e = rng.normal();

    std::vector<double> theta(params.values().begin(), params.values().end());
    std::vector<double> grad(theta.size());
    loss_and_gradient_double(cfg, theta, batch, cond, draws, sched, grad);

    const std::size_t P = theta.size();
    const std::size_t k = std::min(sample_count, P);
    // Partial Fisher-Yates for distinct indices.
    std::vector<std::size_t> idx(P);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(P - i)]);

    // Finite differences are taken on the loss evaluated in extended
    // precision: in double, roundoff in a loss of order one swamps the
    // loss change produced by gradients near the 1e-8 floor.
    std::vector<long double> theta_ext(theta.begin(), theta.end());
    const Tensor x_t = forward_diffuse(probe_input, t, draws[0].eps, sched);
    const unet::Mat<long double> input = pack_input<long double>(x_t, probe_cond);
    unet::Cache<long double> cache;
    auto loss_at = [&](std::size_t p, long double value) {
        const long double saved = theta_ext[p];
        theta_ext[p] = value;
        const unet::Network<long double> net(cfg, std::span<const long double>(theta_ext));
        unet::Mat<long double> out;
        net.forward(input, x_t.height(), x_t.width(), t, out, cache);
        theta_ext[p] = saved;
        long double sse = 0.0L;
        const auto eps = draws[0].eps.values();
        for (std::size_t i = 0; i < eps.size(); ++i) {
            const long double d = out.data()[i] - static_cast<long double>(eps[i]);
            sse += d * d;
        }
        return sse / static_cast<long double>(eps.size());
    };

    GradCheckResult r;
    r.checked = k;
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t p = idx[i];
        const long double h = epsilon_fd;
        const double fd = static_cast<double>((loss_at(p, theta_ext[p] + h) - loss_at(p, theta_ext[p] - h)) / (2.0L * h));
        const double ad = grad[p];
        const double denom = std::max({std::abs(ad), std::abs(fd), 1e-8});
        const double rel = std::abs(ad - fd) / denom;
        if (rel > r.max_relative_error || i == 0) {
            r.max_relative_error = std::max(r.max_relative_error, rel);
            r.worst_index = p;
            r.worst_analytic = ad;
            r.worst_numeric = fd;
        }
    }
    return r;
}

}  // namespace pgdiff
