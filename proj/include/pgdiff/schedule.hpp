#pragma once

#include <vector>

#include "pgdiff/tensor.hpp"

namespace pgdiff {

/// Discrete diffusion noise schedule. Immutable once built.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> betas;
    std::vector<double> alphas;
    std::vector<double> alpha_bars;
    std::vector<double> sigmas;

    /// alpha_bar at t, with the convention alpha_bar(-1) = 1.
    double alpha_bar(int t) const;
    void check_timestep(int t) const;
};

NoiseSchedule make_linear_schedule(int T, double beta_start = 1e-4, double beta_end = 0.02);

/// Builds a schedule from explicit betas (used when loading checkpoints and in tests).
NoiseSchedule make_schedule_from_betas(std::vector<double> betas);

/// sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps.
Tensor forward_diffuse(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched);

/// S strictly decreasing timesteps; element i (counting from the smallest) is
/// round((i + 1) * T / S) - 1.
std::vector<int> make_step_grid(int T, int S);

}  // namespace pgdiff
