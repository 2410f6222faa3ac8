#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pgdiff/rng.hpp"
#include "pgdiff/schedule.hpp"
#include "pgdiff/tensor.hpp"

namespace pgdiff {

/// Shape of the tiny conditional noise-prediction U-Net.
///
/// Level 0 runs at full resolution with width hidden_widths[0]; every further
/// level halves the resolution. With L = hidden_widths.size() the network has
/// L pooling stages below level 0's block plus a bottleneck, and L matching
/// upsampling stages, so input height and width must be multiples of 2^L.
struct DenoiserConfig {
    int in_channels = 1;
    int cond_channels = 0;
    std::vector<int> hidden_widths{16, 32};
    int time_embed_dim = 16;

    void validate() const;
    int spatial_multiple() const { return 1 << hidden_widths.size(); }
    bool operator==(const DenoiserConfig&) const = default;
};

struct ParamInfo {
    std::string name;
    Shape shape;
    std::size_t offset = 0;
    std::size_t size = 0;

    bool operator==(const ParamInfo&) const = default;
};

/// Ordered parameter layout for a config. Offsets index a single flat buffer.
std::vector<ParamInfo> parameter_layout(const DenoiserConfig& cfg);

/// Named, shaped parameter store backed by one contiguous float buffer.
class DenoiserParams {
public:
    DenoiserParams() = default;
    explicit DenoiserParams(DenoiserConfig cfg);

    const DenoiserConfig& config() const noexcept { return config_; }
    const std::vector<ParamInfo>& layout() const noexcept { return layout_; }
    std::size_t count() const noexcept { return values_.size(); }

    std::span<float> values() noexcept { return values_; }
    std::span<const float> values() const noexcept { return values_; }

    const ParamInfo& info(std::string_view name) const;
    std::span<float> tensor(std::string_view name);
    std::span<const float> tensor(std::string_view name) const;

    /// Names of the output head tensors (zero at initialization).
    static constexpr std::string_view kHeadWeight = "out.weight";
    static constexpr std::string_view kHeadBias = "out.bias";

    bool operator==(const DenoiserParams&) const = default;

private:
    DenoiserConfig config_;
    std::vector<ParamInfo> layout_;
    std::vector<float> values_;
};

/// Deterministic initialization: hidden weights uniform in +-sqrt(3 / fan_in),
/// biases zero, output head zero.
DenoiserParams init_denoiser(const DenoiserConfig& cfg, std::uint64_t seed);

/// Fills the output head with small uniform values. Used to give gradient
/// checks a nonzero signal path through the whole network.
void randomize_head(DenoiserParams& params, std::uint64_t seed, double scale = 0.1);

/// eps_theta(x_t, t [, cond]). Conditioning is concatenated after x_t along
/// the channel axis.
Tensor predict_noise(const DenoiserParams& params, const Tensor& x_t, int t, const Tensor* cond = nullptr);

/// Noise predictor as a plain function of (state, timestep).
using EpsModel = std::function<Tensor(const Tensor& x_t, int t)>;

/// Binds a parameter store (and optional conditioning) into an EpsModel. The
/// returned function references `params` and `cond`; both must outlive it.
EpsModel bind_model(const DenoiserParams& params, const Tensor* cond = nullptr);

/// Exact noise predictor for a data distribution concentrated on x0:
/// eps*(x_t, t) = (x_t - sqrt(abar_t) x0) / sqrt(1 - abar_t).
EpsModel oracle_point_denoiser(Tensor x0, const NoiseSchedule& sched);

/// Conditional predictor signature used by the loss: (x_t, t, cond-or-null).
using CondEpsModel = std::function<Tensor(const Tensor& x_t, int t, const Tensor* cond)>;

/// One (t, eps) draw per batch item.
struct NoiseDraw {
    int t = 0;
    Tensor eps;
};

struct LossEvaluation {
    double loss = 0.0;
    std::vector<NoiseDraw> draws;
};

/// Draws t ~ U{0..T-1} and eps ~ N(0, I) for every item, in item order.
std::vector<NoiseDraw> draw_noise(std::span<const Tensor> batch, const NoiseSchedule& sched, Rng& rng);

/// Mean over items and elements of (eps - eps_theta(x_t, t, cond))^2 for fixed draws.
double diffusion_loss(const CondEpsModel& model, std::span<const Tensor> batch,
                      std::span<const Tensor> cond_batch, std::span<const NoiseDraw> draws,
                      const NoiseSchedule& sched);

/// Samples fresh draws from `rng`, evaluates the loss and records the draws.
LossEvaluation diffusion_loss(const DenoiserParams& params, std::span<const Tensor> batch,
                              std::span<const Tensor> cond_batch, const NoiseSchedule& sched, Rng& rng);

/// Loss and its gradient with respect to every parameter, for fixed draws.
/// Computed in float (training precision).
double loss_and_gradient(const DenoiserParams& params, std::span<const Tensor> batch,
                         std::span<const Tensor> cond_batch, std::span<const NoiseDraw> draws,
                         const NoiseSchedule& sched, std::span<float> grad);

/// Same in double precision on a double copy of the parameters.
double loss_and_gradient_double(const DenoiserConfig& cfg, std::span<const double> params,
                                std::span<const Tensor> batch, std::span<const Tensor> cond_batch,
                                std::span<const NoiseDraw> draws, const NoiseSchedule& sched,
                                std::span<double> grad);

struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 8;
    int epochs = 20;
    std::uint64_t seed = 0;
    std::optional<double> grad_clip = 1.0;
    bool augment = false;
    /// Anneal the learning rate to zero over all steps along a half cosine.
    bool cosine_decay = false;
    int threads = 1;

    void validate() const;
};

/// Optional per-item hook run before noise is drawn, used for data
/// augmentation. Receives the dataset index of the item, mutable copies of the
/// item and its conditioning (null when unconditional) and the item's rng.
using ItemTransform = std::function<void(std::size_t index, Tensor& item, Tensor* cond, Rng& rng)>;

/// Called after every epoch with the epoch index, its mean loss and the current parameters.
using EpochCallback = std::function<void(int epoch, double mean_loss, const DenoiserParams& params)>;

struct TrainResult {
    DenoiserParams params;
    std::vector<double> epoch_loss;
};

/// Mini-batch training with Adam (beta1 0.9, beta2 0.999, eps 1e-8). The
/// result is a pure function of the inputs and independent of `threads`.
/// Throws DivergenceError when the loss becomes non-finite.
TrainResult train(DenoiserParams params, std::span<const Tensor> dataset, std::span<const Tensor> cond_dataset,
                  const NoiseSchedule& sched, const TrainConfig& cfg, const ItemTransform& transform = {},
                  const EpochCallback& on_epoch = {});

class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

/// Compares reverse-mode gradients of the loss (fixed (t, eps) draw, double
/// precision) against central differences on `sample_count` random parameters.
GradCheckResult grad_check(const DenoiserParams& params, const Tensor& probe_input, const Tensor* probe_cond,
                           const NoiseSchedule& sched, int t, double epsilon_fd, std::uint64_t seed = 0,
                           std::size_t sample_count = 256);

}  // namespace pgdiff
