#include "pgdiff/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace pgdiff {

double NoiseSchedule::alpha_bar(int t) const {
    if (t == -1) return 1.0;
    check_timestep(t);
    return alpha_bars[static_cast<std::size_t>(t)];
}

void NoiseSchedule::check_timestep(int t) const {
    if (t < 0 || t >= T) {
        throw std::out_of_range("timestep " + std::to_string(t) + " outside [0, " + std::to_string(T) + ")");
    }
}

NoiseSchedule make_schedule_from_betas(std::vector<double> betas) {
    if (betas.empty()) throw std::invalid_argument("schedule needs at least one step");
    NoiseSchedule s;
    s.T = static_cast<int>(betas.size());
    s.betas = std::move(betas);
    s.alphas.resize(s.betas.size());
    s.alpha_bars.resize(s.betas.size());
    s.sigmas.resize(s.betas.size());
    double running = 1.0;
    for (std::size_t t = 0; t < s.betas.size(); ++t) {
        const double b = s.betas[t];
        if (!(b > 0.0 && b < 1.0)) throw std::invalid_argument("beta outside (0, 1) at t=" + std::to_string(t));
        s.alphas[t] = 1.0 - b;
        running *= s.alphas[t];
        s.alpha_bars[t] = running;
        s.sigmas[t] = std::sqrt(b);
    }
    return s;
}

NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end) {
    if (T < 1) throw std::invalid_argument("schedule step count must be positive");
    if (!(beta_start > 0.0 && beta_start < 1.0) || !(beta_end > 0.0 && beta_end < 1.0)) {
        throw std::invalid_argument("beta endpoints must lie in (0, 1)");
    }
    if (beta_start > beta_end) throw std::invalid_argument("beta_start must not exceed beta_end");
    std::vector<double> betas(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
        betas[static_cast<std::size_t>(t)] =
            T == 1 ? beta_start : beta_start + (beta_end - beta_start) * static_cast<double>(t) / (T - 1);
    }
    betas.back() = T == 1 ? beta_start : beta_end;
    return make_schedule_from_betas(std::move(betas));
}

Tensor forward_diffuse(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched) {
    require_same_shape(x0, eps, "forward_diffuse");
    sched.check_timestep(t);
    const double ab = sched.alpha_bars[static_cast<std::size_t>(t)];
    return axpby(std::sqrt(ab), x0, std::sqrt(1.0 - ab), eps);
}

std::vector<int> make_step_grid(int T, int S) {
    if (S < 1 || S > T) {
        throw std::invalid_argument("step count " + std::to_string(S) + " outside [1, " + std::to_string(T) + "]");
    }
    std::vector<int> grid(static_cast<std::size_t>(S));
    for (int i = 0; i < S; ++i) {
        // (i+1)*T/S rounded half-up in integer arithmetic.
        const long long num = 2LL * (i + 1) * T + S;
        const int tau = static_cast<int>(num / (2LL * S)) - 1;
        grid[static_cast<std::size_t>(S - 1 - i)] = tau;
    }
    return grid;
}

}  // namespace pgdiff
