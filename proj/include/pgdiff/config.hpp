#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pgdiff/codec.hpp"
#include "pgdiff/denoiser.hpp"
#include "pgdiff/noisequality.hpp"
#include "pgdiff/synthdata.hpp"

namespace pgdiff {

using Json = nlohmann::ordered_json;

/// Every problem found while reading or validating a config, one per entry.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<std::string> problems);
    const std::vector<std::string>& problems() const noexcept { return problems_; }

private:
    std::vector<std::string> problems_;
};

struct ScheduleConfig {
    int T = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    bool operator==(const ScheduleConfig&) const = default;
};

struct SamplingConfig {
    int S_inv = 100;
    int S_sample = 200;
    std::vector<int> ensemble{1, 3, 5};
    /// Inversion step counts evaluated as separate prior-guided methods.
    std::vector<int> inversion_steps{50, 100, 200};
    /// Forward-diffusion baselines at k = round(fraction * T).
    std::vector<double> forward_fractions{0.0, 0.3, 0.6};
    bool operator==(const SamplingConfig&) const = default;
};

struct EvaluationConfig {
    int folds = 3;
    std::uint64_t seed = 0;
    bool noise_quality = true;
    NoiseQualityOptions noise;
};

struct ExperimentConfig {
    SceneConfig scene;
    std::uint64_t data_seed = 1;
    ScheduleConfig schedule;
    LatentSpec latent;
    DenoiserConfig prior_model{1, 0, {16, 32}, 16};
    DenoiserConfig seg_model{3, 1, {16, 32}, 16};
    TrainConfig prior_train;
    TrainConfig seg_train;
    SamplingConfig sampling;
    EvaluationConfig evaluation;
    std::string output_dir = "out";

    ExperimentConfig();

    /// Forward-diffusion k values derived from the fractions.
    std::vector<int> forward_ks() const;
    /// Throws ConfigError listing every violated constraint.
    void validate() const;
};

Json to_json(const DenoiserConfig& c);
Json to_json(const SceneConfig& c);
Json to_json(const TrainConfig& c);
Json to_json(const ExperimentConfig& c);

/// Strict readers: unknown keys and wrongly typed values are errors. Missing
/// keys keep their defaults. Problems are appended to `problems`.
DenoiserConfig denoiser_config_from_json(const Json& j, std::vector<std::string>& problems,
                                         const std::string& where, DenoiserConfig defaults = {});
SceneConfig scene_config_from_json(const Json& j, std::vector<std::string>& problems, const std::string& where);

/// Parses, fills defaults and validates. Throws ConfigError.
ExperimentConfig experiment_config_from_json(const Json& j);
ExperimentConfig load_experiment_config(const std::string& path);

}  // namespace pgdiff
