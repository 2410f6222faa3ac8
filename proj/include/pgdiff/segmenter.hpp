#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pgdiff/codec.hpp"
#include "pgdiff/denoiser.hpp"
#include "pgdiff/prior.hpp"
#include "pgdiff/sampler.hpp"

namespace pgdiff {

/// One sampling pass of the segmentation model: encode the image, run DDIM
/// from `starting` (n x h/f x w/f, already prepared) conditioned on the
/// latent, and decode the prediction at image resolution.
ClassMask segment_single(const Tensor& image, const Tensor& starting, const DenoiserParams& ldm_s,
                         const LatentSpec& spec, const SamplerRun& run, const NoiseSchedule& sched,
                         std::size_t* model_calls = nullptr);

/// Same with an arbitrary conditional predictor.
ClassMask segment_single(const Tensor& image, const Tensor& starting, const CondEpsModel& ldm_s,
                         const LatentSpec& spec, const SamplerRun& run, const NoiseSchedule& sched,
                         std::size_t* model_calls = nullptr);

/// Per-pixel modal label; ties break toward the lowest class index.
ClassMask majority_vote(std::span<const ClassMask> masks);

/// Seed of ensemble member k, split from the ensemble seed.
std::uint64_t ensemble_member_seed(std::uint64_t seed, int member);

/// Random starting noise of member k: n x h x w i.i.d. standard normal.
StartingNoise ensemble_member_noise(std::uint64_t seed, int member, int n, int h, int w);

struct EnsembleResult {
    ClassMask vote;
    std::vector<ClassMask> members;
    std::vector<StartingNoise> noises;
    std::size_t model_calls = 0;
};

/// K independent random-noise samplings fused by majority vote.
EnsembleResult segment_ensemble(const Tensor& image, int K, const DenoiserParams& ldm_s, const LatentSpec& spec,
                                const SamplerRun& run, const NoiseSchedule& sched, std::uint64_t seed);

}  // namespace pgdiff
