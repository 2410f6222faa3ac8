#include <doctest.h>

#include <cmath>
#include <numbers>

#include "pgdiff/metrics.hpp"
#include "pgdiff/noisequality.hpp"
#include "pgdiff/prior.hpp"
#include "pgdiff/sampler.hpp"

using namespace pgdiff;

namespace {

Tensor uniform_image(Shape shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = rng.uniform();
    return t;
}

}  // namespace

TEST_CASE("random prior statistics") {
    Rng rng(2024);
    const auto n = random_prior({1, 100, 1000}, rng);
    CHECK(n.provenance == Provenance::random());
    const auto v = n.values.values();
    CHECK(std::abs(mean(v)) < 0.01);
    const double sd = stddev(v);
    CHECK(sd >= 0.99);
    CHECK(sd <= 1.01);
    Rng a(5), b(5);
    CHECK(random_prior({3, 16, 16}, a).values == random_prior({3, 16, 16}, b).values);
    Rng c(1);
    CHECK(random_prior({3, 16, 16}, c).values.shape() == Shape{3, 16, 16});
}

TEST_CASE("forward diffusion prior at k = 0 is the latent") {
    const auto s = make_linear_schedule(1000);
    Rng rng(3);
    const Tensor latent = uniform_image({1, 32, 32}, rng);
    const auto n = forward_diff_prior(latent, 0, s, rng);
    CHECK(n.values == latent);
    CHECK(n.provenance.label() == "forward_diff:0");
    const auto rep = noise_report(n, latent);
    CHECK(rep.ssim == doctest::Approx(1.0).epsilon(1e-12));
    // Latent values in [0, 1] keep all KDE mass inside [-5, 5]: the KLD is
    // large but finite under the support rule. KL(U(0,1) || N(0,1)) is
    // ln(2 pi) / 2 + 1/6; kernel smoothing of the edges pulls the estimate down.
    REQUIRE(rep.kld.has_value());
    const double analytic = 0.5 * std::log(2.0 * std::numbers::pi) + 1.0 / 6.0;
    CHECK(*rep.kld > 0.8 * analytic);
    CHECK(*rep.kld < analytic);
}

TEST_CASE("forward diffusion prior at k = T is standard normal") {
    const auto s = make_linear_schedule(1000);
    Rng rng(4);
    const Tensor latent = uniform_image({1, 100, 1000}, rng);
    const auto n = forward_diff_prior(latent, 1000, s, rng);
    const auto k = kld_vs_standard_normal(n.values.values());
    REQUIRE(k.value.has_value());
    CHECK(*k.value < 0.01);
}

TEST_CASE("forward diffusion prior determinism and range") {
    const auto s = make_linear_schedule(1000);
    Rng rng(5);
    const Tensor latent = uniform_image({1, 8, 8}, rng);
    Rng a(9), b(9);
    CHECK(forward_diff_prior(latent, 300, s, a).values == forward_diff_prior(latent, 300, s, b).values);
    CHECK_THROWS_AS(forward_diff_prior(latent, 1001, s, a), std::out_of_range);
    CHECK_THROWS_AS(forward_diff_prior(latent, -1, s, a), std::out_of_range);
    // Uses t = k - 1.
    Rng c(9), d(9);
    Tensor eps(latent.shape());
    for (double& v : eps.values()) v = d.normal();
    CHECK(max_abs_diff(forward_diff_prior(latent, 300, s, c).values, forward_diffuse(latent, 299, eps, s)) < 1e-15);
}

TEST_CASE("prior extraction with the oracle round-trips") {
    const auto s = make_linear_schedule(1000);
    Rng rng(6);
    const Tensor image = uniform_image({1, 16, 16}, rng);
    const LatentSpec spec{2, 1};
    const Tensor latent = encode(image, spec);
    const auto oracle = oracle_point_denoiser(latent, s);
    const auto n = extract_prior(image, oracle, 200, s, spec);
    CHECK(n.provenance == Provenance::ddim_inversion(200));
    CHECK(n.values.shape() == latent.shape());
    const Tensor back = ddim_sample(oracle, n.values, make_run(s, 200), s);
    CHECK(relative_l2(back, latent) < 1e-3);
    CHECK(extract_prior(image, oracle, 200, s, spec).values == n.values);
}

TEST_CASE("prior extraction needs an unconditional model") {
    const auto s = make_linear_schedule(100);
    const auto p = init_denoiser({1, 1, {4}, 4}, 1);
    CHECK_THROWS_AS(extract_prior(Tensor::chw(1, 4, 4), p, 10, s, {1, 1}), std::invalid_argument);
}

TEST_CASE("prepare starting noise") {
    Rng rng(7);
    StartingNoise one{Tensor::chw(1, 3, 3), Provenance::random(), {}};
    for (double& v : one.values.values()) v = rng.normal();
    const Tensor r = prepare_starting_noise(one, 3);
    REQUIRE(r.channels() == 3);
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 9; ++i) CHECK(r.channel(c)[i] == one.values[i]);

    StartingNoise three{Tensor({3, 1, 1}, std::vector<double>{0.3, -0.3, 0.6}), Provenance::random(), {}};
    const Tensor a = prepare_starting_noise(three, 2);
    CHECK(a.at(0, 0, 0) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(a.at(1, 0, 0) == doctest::Approx(0.2).epsilon(1e-15));
    for (int n : {2, 3, 7}) CHECK(prepare_starting_noise(three, n).channels() == n);
    CHECK_THROWS_AS(prepare_starting_noise(three, 1), std::invalid_argument);
}

TEST_CASE("prepare starting noise commutes with spatial permutations") {
    Rng rng(8);
    for (int trial = 0; trial < 25; ++trial) {
        const int c = 1 + static_cast<int>(rng.below(4)), h = 1 + static_cast<int>(rng.below(5)),
                  w = 1 + static_cast<int>(rng.below(5));
        StartingNoise n{Tensor::chw(c, h, w), Provenance::random(), {}};
        for (double& v : n.values.values()) v = rng.normal();
        std::vector<std::size_t> perm(static_cast<std::size_t>(h * w));
        for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
        for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
        StartingNoise permuted = n;
        for (int ch = 0; ch < c; ++ch)
            for (std::size_t i = 0; i < perm.size(); ++i) permuted.values.channel(ch)[i] = n.values.channel(ch)[perm[i]];
        const int reps = 2 + static_cast<int>(rng.below(3));
        const Tensor a = prepare_starting_noise(n, reps);
        const Tensor b = prepare_starting_noise(permuted, reps);
        for (int ch = 0; ch < reps; ++ch)
            for (std::size_t i = 0; i < perm.size(); ++i) CHECK(b.channel(ch)[i] == a.channel(ch)[perm[i]]);
    }
}

TEST_CASE("provenance labels round trip") {
    for (const auto& p : {Provenance::random(), Provenance::forward_diff(300), Provenance::ddim_inversion(100)}) {
        CHECK(Provenance::parse(p.label()) == p);
    }
    CHECK(Provenance::forward_diff(300).label() == "forward_diff:300");
    CHECK_THROWS(Provenance::parse("bogus"));
}
