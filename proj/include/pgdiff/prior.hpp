#pragma once

#include <optional>
#include <string>

#include "pgdiff/codec.hpp"
#include "pgdiff/denoiser.hpp"
#include "pgdiff/rng.hpp"
#include "pgdiff/schedule.hpp"
#include "pgdiff/tensor.hpp"

namespace pgdiff {

/// Where a starting noise came from.
struct Provenance {
    enum class Kind { random, forward_diff, ddim_inversion };
    Kind kind = Kind::random;
    /// k for forward_diff, inversion step count for ddim_inversion, unused for random.
    int parameter = 0;

    static Provenance random() { return {Kind::random, 0}; }
    static Provenance forward_diff(int k) { return {Kind::forward_diff, k}; }
    static Provenance ddim_inversion(int steps) { return {Kind::ddim_inversion, steps}; }

    /// "random", "forward_diff:300", "ddim_inversion:100".
    std::string label() const;
    static Provenance parse(const std::string& label);

    bool operator==(const Provenance&) const = default;
};

struct StartingNoise {
    Tensor values;
    Provenance provenance;
    std::optional<std::string> source_id;
};

StartingNoise random_prior(const Shape& shape, Rng& rng);

/// k = 0 returns the latent itself; otherwise forward-diffuses it to t = k - 1.
StartingNoise forward_diff_prior(const Tensor& latent, int k, const NoiseSchedule& sched, Rng& rng);

/// Encodes the image and DDIM-inverts the latent with the unconditional
/// prior model over an S_inv-step grid.
StartingNoise extract_prior(const Tensor& image, const DenoiserParams& ldm_p, int S_inv, const NoiseSchedule& sched,
                            const LatentSpec& spec);

/// Same with an arbitrary noise predictor (e.g. the point oracle).
StartingNoise extract_prior(const Tensor& image, const EpsModel& ldm_p, int S_inv, const NoiseSchedule& sched,
                            const LatentSpec& spec);

/// Channel average followed by n-fold replication: c x h x w -> n x h x w.
Tensor prepare_starting_noise(const StartingNoise& noise, int n);

}  // namespace pgdiff
