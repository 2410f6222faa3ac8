#include "pgdiff/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace pgdiff {

namespace {

Tensor checked_eval(const EpsModel& eps_model, const Tensor& x, int t) {
    Tensor eps = eps_model(x, t);
    require_same_shape(eps, x, "model output");
    if (!all_finite(eps)) throw SamplingError("model produced non-finite output at t=" + std::to_string(t), t);
    return eps;
}

void maybe_record(const SamplerRun& run, std::size_t step, const Tensor& x) {
    if (run.record_every > 0 && run.trajectory && step % static_cast<std::size_t>(run.record_every) == 0) {
        run.trajectory->push_back(x);
    }
}

}  // namespace

void SamplerRun::validate(const NoiseSchedule& sched) const {
    if (grid.empty()) throw std::invalid_argument("sampling grid is empty");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        sched.check_timestep(grid[i]);
        if (i > 0 && grid[i] >= grid[i - 1]) throw std::invalid_argument("sampling grid must be strictly decreasing");
    }
}

SamplerRun make_run(const NoiseSchedule& sched, int steps) {
    SamplerRun run;
    run.grid = make_step_grid(sched.T, steps);
    return run;
}

Tensor ddpm_update(const Tensor& x_t, const Tensor& eps_pred, const Tensor& noise, int t, const NoiseSchedule& sched) {
    sched.check_timestep(t);
    require_same_shape(x_t, eps_pred, "ddpm_update");
    const auto ti = static_cast<std::size_t>(t);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alphas[ti]);
    const double coef = sched.betas[ti] / std::sqrt(1.0 - sched.alpha_bars[ti]);
    const double sigma = t == 0 ? 0.0 : sched.sigmas[ti];
    Tensor out(x_t.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = inv_sqrt_alpha * (x_t[i] - coef * eps_pred[i]);
        if (sigma != 0.0) out[i] += sigma * noise[i];
    }
    return out;
}

Tensor ddpm_step(const EpsModel& eps_model, const Tensor& x_t, int t, const NoiseSchedule& sched, Rng& rng) {
    sched.check_timestep(t);
    const Tensor eps = checked_eval(eps_model, x_t, t);
    Tensor noise(x_t.shape());
    for (double& v : noise.values()) v = rng.normal();
    return ddpm_update(x_t, eps, noise, t, sched);
}

Tensor implied_x0(const Tensor& x_t, const Tensor& eps_pred, int t, const NoiseSchedule& sched) {
    const double a = sched.alpha_bar(t);
    return axpby(1.0 / std::sqrt(a), x_t, -std::sqrt(1.0 - a) / std::sqrt(a), eps_pred);
}

Tensor ddim_step(const EpsModel& eps_model, const Tensor& x_t, int t, int t_prev, const NoiseSchedule& sched) {
    sched.check_timestep(t);
    if (t_prev >= t || t_prev < -1) {
        throw std::invalid_argument("ddim_step needs -1 <= t_prev < t, got t=" + std::to_string(t) +
                                    " t_prev=" + std::to_string(t_prev));
    }
    const Tensor eps = checked_eval(eps_model, x_t, t);
    const Tensor x0 = implied_x0(x_t, eps, t, sched);
    if (t_prev == -1) return x0;
    const double ap = sched.alpha_bar(t_prev);
    return axpby(std::sqrt(ap), x0, std::sqrt(1.0 - ap), eps);
}

Tensor ddim_sample(const EpsModel& eps_model, const Tensor& x_start, const SamplerRun& run,
                   const NoiseSchedule& sched) {
    run.validate(sched);
    Tensor x = x_start;
    maybe_record(run, 0, x);
    for (std::size_t i = 0; i < run.grid.size(); ++i) {
        const int t = run.grid[i];
        const int t_prev = i + 1 < run.grid.size() ? run.grid[i + 1] : -1;
        x = ddim_step(eps_model, x, t, t_prev, sched);
        maybe_record(run, i + 1, x);
    }
    return x;
}

Tensor ddim_invert(const EpsModel& eps_model, const Tensor& x0, const SamplerRun& run, const NoiseSchedule& sched) {
    run.validate(sched);
    Tensor x = x0;
    maybe_record(run, 0, x);
    int t_cur = -1;
    std::size_t step = 0;
    for (auto it = run.grid.rbegin(); it != run.grid.rend(); ++it, ++step) {
        const int t_next = *it;
        // Explicit Euler: the model sees the current state at its own time;
        // the clean input is presented at timestep 0.
        const Tensor eps = checked_eval(eps_model, x, std::max(t_cur, 0));
        const double a_cur = sched.alpha_bar(t_cur);
        const double a_next = sched.alpha_bar(t_next);
        const double scale = std::sqrt(a_next / a_cur);
        const double coef = std::sqrt(a_next) * (std::sqrt(1.0 / a_next - 1.0) - std::sqrt(1.0 / a_cur - 1.0));
        x = axpby(scale, x, coef, eps);
        maybe_record(run, step + 1, x);
        t_cur = t_next;
    }
    return x;
}

EpsModel counting(EpsModel model, std::size_t& counter) {
    return [model = std::move(model), &counter](const Tensor& x, int t) {
        ++counter;
        return model(x, t);
    };
}

}  // namespace pgdiff
