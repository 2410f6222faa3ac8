#include "pgdiff/prior.hpp"

#include <stdexcept>

#include "pgdiff/sampler.hpp"

namespace pgdiff {

std::string Provenance::label() const {
    switch (kind) {
        case Kind::random:
            return "random";
        case Kind::forward_diff:
            return "forward_diff:" + std::to_string(parameter);
        case Kind::ddim_inversion:
            return "ddim_inversion:" + std::to_string(parameter);
    }
    return "unknown";
}

Provenance Provenance::parse(const std::string& label) {
    if (label == "random") return random();
    const auto colon = label.find(':');
    if (colon == std::string::npos) throw std::invalid_argument("unknown provenance '" + label + "'");
    const std::string head = label.substr(0, colon);
    const int value = std::stoi(label.substr(colon + 1));
    if (head == "forward_diff") return forward_diff(value);
    if (head == "ddim_inversion") return ddim_inversion(value);
    throw std::invalid_argument("unknown provenance '" + label + "'");
}

StartingNoise random_prior(const Shape& shape, Rng& rng) {
    StartingNoise n;
    n.values = Tensor(shape);
    for (double& v : n.values.values()) v = rng.normal();
    n.provenance = Provenance::random();
    return n;
}

StartingNoise forward_diff_prior(const Tensor& latent, int k, const NoiseSchedule& sched, Rng& rng) {
    if (k < 0 || k > sched.T) {
        throw std::out_of_range("forward diffusion step " + std::to_string(k) + " outside [0, " +
                                std::to_string(sched.T) + "]");
    }
    StartingNoise n;
    n.provenance = Provenance::forward_diff(k);
    if (k == 0) {
        n.values = latent;
        return n;
    }
    Tensor eps(latent.shape());
    for (double& v : eps.values()) v = rng.normal();
    n.values = forward_diffuse(latent, k - 1, eps, sched);
    return n;
}

StartingNoise extract_prior(const Tensor& image, const EpsModel& ldm_p, int S_inv, const NoiseSchedule& sched,
                            const LatentSpec& spec) {
    const Tensor latent = encode(image, spec);
    StartingNoise n;
    n.values = ddim_invert(ldm_p, latent, make_run(sched, S_inv), sched);
    n.provenance = Provenance::ddim_inversion(S_inv);
    return n;
}

StartingNoise extract_prior(const Tensor& image, const DenoiserParams& ldm_p, int S_inv, const NoiseSchedule& sched,
                            const LatentSpec& spec) {
    if (ldm_p.config().cond_channels != 0) throw std::invalid_argument("the prior model must be unconditional");
    return extract_prior(image, bind_model(ldm_p), S_inv, sched, spec);
}

Tensor prepare_starting_noise(const StartingNoise& noise, int n) {
    const Tensor& v = noise.values;
    if (v.rank() != 3 || v.channels() < 1) throw std::invalid_argument("starting noise has no channel axis");
    if (n < 2) throw std::invalid_argument("replication count (class count) must be >= 2");
    const int C = v.channels(), H = v.height(), W = v.width();
    std::vector<double> mean(static_cast<std::size_t>(H) * W, 0.0);
    for (int c = 0; c < C; ++c) {
        const auto plane = v.channel(c);
        for (std::size_t i = 0; i < plane.size(); ++i) mean[i] += plane[i];
    }
    if (C > 1) {
        for (double& m : mean) m /= C;
    }
    Tensor out = Tensor::chw(n, H, W);
    for (int c = 0; c < n; ++c) std::copy(mean.begin(), mean.end(), out.channel(c).begin());
    return out;
}

}  // namespace pgdiff
