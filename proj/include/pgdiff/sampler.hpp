#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

#include "pgdiff/denoiser.hpp"
#include "pgdiff/rng.hpp"
#include "pgdiff/schedule.hpp"
#include "pgdiff/tensor.hpp"

namespace pgdiff {

/// Raised when the model produces non-finite values; carries the timestep.
class SamplingError : public std::runtime_error {
public:
    SamplingError(const std::string& what, int timestep) : std::runtime_error(what), timestep_(timestep) {}
    int timestep() const noexcept { return timestep_; }

private:
    int timestep_;
};

/// Options for one sampling or inversion pass. `grid` is strictly decreasing.
struct SamplerRun {
    std::vector<int> grid;
    /// When > 0, every k-th intermediate state is appended to `trajectory`.
    int record_every = 0;
    std::vector<Tensor>* trajectory = nullptr;

    void validate(const NoiseSchedule& sched) const;
};

SamplerRun make_run(const NoiseSchedule& sched, int steps);

/// Stochastic reverse step. The sigma_t * eps term is dropped at t = 0.
Tensor ddpm_step(const EpsModel& eps_model, const Tensor& x_t, int t, const NoiseSchedule& sched, Rng& rng);

/// Same step with the model output and noise supplied (for testing the arithmetic).
Tensor ddpm_update(const Tensor& x_t, const Tensor& eps_pred, const Tensor& noise, int t, const NoiseSchedule& sched);

/// Deterministic DDIM step from t to t_prev. t_prev = -1 means alpha_bar = 1,
/// in which case the implied clean sample x0_hat is returned.
Tensor ddim_step(const EpsModel& eps_model, const Tensor& x_t, int t, int t_prev, const NoiseSchedule& sched);

/// x0_hat = (x_t - sqrt(1 - abar_t) eps) / sqrt(abar_t).
Tensor implied_x0(const Tensor& x_t, const Tensor& eps_pred, int t, const NoiseSchedule& sched);

/// Folds ddim_step over the grid and finishes with the implied x0_hat at the
/// smallest grid time. Calls the model exactly grid.size() times.
Tensor ddim_sample(const EpsModel& eps_model, const Tensor& x_start, const SamplerRun& run,
                   const NoiseSchedule& sched);

/// Euler-approximated inverse of DDIM sampling. Walks the grid upward from
/// "time -1" (the clean input, abar = 1):
///
///   x_next = sqrt(abar_next / abar_cur) x_cur
///          + sqrt(abar_next) (sqrt(1/abar_next - 1) - sqrt(1/abar_cur - 1)) eps
///
/// with eps = eps_theta(x_cur, max(t_cur, 0)), i.e. the model is evaluated on
/// the current state at the current time (explicit Euler). Calls the model
/// exactly grid.size() times.
Tensor ddim_invert(const EpsModel& eps_model, const Tensor& x0, const SamplerRun& run, const NoiseSchedule& sched);

/// Wraps a model so every call increments `counter`.
EpsModel counting(EpsModel model, std::size_t& counter);

}  // namespace pgdiff
