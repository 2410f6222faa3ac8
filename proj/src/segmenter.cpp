#include "pgdiff/segmenter.hpp"

#include <stdexcept>
#include <string>

namespace pgdiff {

namespace {

void check_starting(const Tensor& starting, const Tensor& latent, int channels) {
    if (starting.rank() != 3 || starting.channels() != channels || starting.height() != latent.height() ||
        starting.width() != latent.width()) {
        throw std::invalid_argument("starting noise " + shape_string(starting.shape()) +
                                    " does not match the segmentation state space [" + std::to_string(channels) +
                                    "x" + std::to_string(latent.height()) + "x" + std::to_string(latent.width()) +
                                    "]");
    }
}

}  // namespace

ClassMask segment_single(const Tensor& image, const Tensor& starting, const CondEpsModel& ldm_s,
                         const LatentSpec& spec, const SamplerRun& run, const NoiseSchedule& sched,
                         std::size_t* model_calls) {
    const Tensor z = encode(image, spec);
    if (starting.rank() != 3 || starting.height() != z.height() || starting.width() != z.width()) {
        throw std::invalid_argument("starting noise " + shape_string(starting.shape()) +
                                    " does not match the latent " + shape_string(z.shape()));
    }
    std::size_t calls = 0;
    const EpsModel model = [&](const Tensor& y, int t) {
        ++calls;
        return ldm_s(y, t, &z);
    };
    const Tensor pred = ddim_sample(model, starting, run, sched);
    if (model_calls) *model_calls += calls;
    return target_to_mask(pred, image.height(), image.width());
}

ClassMask segment_single(const Tensor& image, const Tensor& starting, const DenoiserParams& ldm_s,
                         const LatentSpec& spec, const SamplerRun& run, const NoiseSchedule& sched,
                         std::size_t* model_calls) {
    const Tensor z = encode(image, spec);
    check_starting(starting, z, ldm_s.config().in_channels);
    if (ldm_s.config().cond_channels != z.channels()) {
        throw std::invalid_argument("segmentation model expects " + std::to_string(ldm_s.config().cond_channels) +
                                    " conditioning channels, latent has " + std::to_string(z.channels()));
    }
    const CondEpsModel model = [&ldm_s](const Tensor& y, int t, const Tensor* cond) {
        return predict_noise(ldm_s, y, t, cond);
    };
    return segment_single(image, starting, model, spec, run, sched, model_calls);
}

ClassMask majority_vote(std::span<const ClassMask> masks) {
    if (masks.empty()) throw std::invalid_argument("majority vote needs at least one mask");
    const ClassMask& first = masks.front();
    for (const auto& m : masks) {
        if (m.height() != first.height() || m.width() != first.width() || m.classes() != first.classes()) {
            throw std::invalid_argument("majority vote inputs differ in shape or class count");
        }
    }
    if (masks.size() == 1) return first;
    const int n = first.classes();
    ClassMask out(first.height(), first.width(), n);
    std::vector<int> votes(static_cast<std::size_t>(n));
    for (std::size_t p = 0; p < first.size(); ++p) {
        std::fill(votes.begin(), votes.end(), 0);
        for (const auto& m : masks) ++votes[m.labels()[p]];
        int best = 0;
        for (int c = 1; c < n; ++c) {
            if (votes[static_cast<std::size_t>(c)] > votes[static_cast<std::size_t>(best)]) best = c;
        }
        out.labels()[p] = static_cast<std::uint8_t>(best);
    }
    return out;
}

std::uint64_t ensemble_member_seed(std::uint64_t seed, int member) {
    return derive_seed(seed, {0xe45e, static_cast<std::uint64_t>(member)});
}

StartingNoise ensemble_member_noise(std::uint64_t seed, int member, int n, int h, int w) {
    Rng rng(ensemble_member_seed(seed, member));
    return random_prior({n, h, w}, rng);
}

EnsembleResult segment_ensemble(const Tensor& image, int K, const DenoiserParams& ldm_s, const LatentSpec& spec,
                                const SamplerRun& run, const NoiseSchedule& sched, std::uint64_t seed) {
    if (K < 1) throw std::invalid_argument("ensemble size must be >= 1");
    spec.validate();
    const int h = image.height() / spec.f, w = image.width() / spec.f;
    const int n = ldm_s.config().in_channels;
    EnsembleResult r;
    for (int k = 0; k < K; ++k) {
        StartingNoise noise = ensemble_member_noise(seed, k, n, h, w);
        try {
            r.members.push_back(segment_single(image, noise.values, ldm_s, spec, run, sched, &r.model_calls));
        } catch (const std::exception& e) {
            throw std::runtime_error("ensemble member " + std::to_string(k) + " failed: " + e.what());
        }
        r.noises.push_back(std::move(noise));
    }
    r.vote = majority_vote(r.members);
    return r;
}

}  // namespace pgdiff
