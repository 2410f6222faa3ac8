#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pgdiff/config.hpp"
#include "pgdiff/io.hpp"
#include "pgdiff/metrics.hpp"
#include "pgdiff/prior.hpp"
#include "pgdiff/synthdata.hpp"

namespace pgdiff {

using Logger = std::function<void(const std::string&)>;

/// One evaluated segmentation method.
struct Method {
    enum class Kind { random, forward_diff, inversion };
    Kind kind = Kind::random;
    /// Ensemble size K, forward-diffusion k or inversion step count.
    int parameter = 1;

    /// "random_x3", "forward_diff_300", "inversion_100".
    std::string name() const;
    /// Provenance of the starting noise this method samples from.
    Provenance provenance() const;
    bool operator==(const Method&) const = default;
};

/// Random ensembles, forward-diffusion baselines, then inversion step counts,
/// in config order. The prior-guided method (inversion at S_inv) is always present.
std::vector<Method> experiment_methods(const ExperimentConfig& cfg);
Method prior_method(const ExperimentConfig& cfg);

struct FoldSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Fold i trains on the train split minus kfold(train)[i] and tests on
/// kfold(test)[i], so every test image is scored exactly once.
std::vector<FoldSplit> fold_splits(const ExperimentConfig& cfg);

struct TrainedModels {
    DenoiserParams prior;
    DenoiserParams seg;
    std::vector<double> prior_loss;
    std::vector<double> seg_loss;
};

TrainedModels train_models(const ExperimentConfig& cfg, const std::vector<const Sample*>& samples, int threads,
                           const Logger& log = {});

/// Trains one of the two models; exposed for the train-prior / train-seg commands.
TrainResult train_prior_model(const ExperimentConfig& cfg, const std::vector<const Sample*>& samples, int threads);
TrainResult train_seg_model(const ExperimentConfig& cfg, const std::vector<const Sample*>& samples, int threads);

/// Outcome of one method on one image.
struct MethodOutcome {
    ClassMask mask;
    ConfusionMatrix confusion;
    double miou = 0.0;
    double f1 = 0.0;
    std::optional<double> ssim;
    std::optional<double> kld;
    bool kld_divergent = false;
    double seconds = 0.0;
    std::size_t seg_calls = 0;
    std::size_t prior_calls = 0;
};

struct ImageOutcome {
    std::string id;
    /// Indexed like the method list.
    std::vector<MethodOutcome> methods;
};

/// Runs every method on every image and scores it. When `dir` is set, noises
/// (tensor files) and masks (PGM and PNG) are written under it. `fold` and
/// `seed` select the random streams.
std::vector<ImageOutcome> evaluate_images(const ExperimentConfig& cfg, const TrainedModels& models,
                                          const std::vector<const Sample*>& images, int fold,
                                          const std::optional<fs::path>& dir, int threads, const Logger& log = {});

struct FoldSummary {
    int fold = 0;
    bool ok = false;
    std::string diagnostic;
    std::vector<ImageOutcome> images;
};

struct ResultRow {
    std::string method;
    std::string fold;  // index, "mean" or "sd"
    double miou = 0.0;
    double f1 = 0.0;
    std::optional<double> ssim;
    std::optional<double> kld;
    std::size_t kld_divergent = 0;
    std::size_t seg_calls = 0;
    std::size_t prior_calls = 0;
    std::size_t n_images = 0;
};

struct RuntimeRow {
    std::string method;
    std::string fold;
    double seconds = 0.0;
    double per_image = 0.0;
};

struct WelchRow {
    std::string comparison;
    std::string metric;
    std::string unit;  // "image" or "fold"
    double mean_a = 0.0;
    double mean_b = 0.0;
    std::size_t n_a = 0;
    std::size_t n_b = 0;
    std::optional<WelchResult> test;
};

struct ExperimentResult {
    std::vector<Method> methods;
    std::vector<FoldSummary> folds;
    std::vector<ResultRow> rows;
    std::vector<RuntimeRow> runtime;
    std::vector<WelchRow> welch;
    double total_seconds = 0.0;
};

/// Per-fold and summary rows from completed folds.
std::vector<ResultRow> result_rows(const std::vector<Method>& methods, const std::vector<FoldSummary>& folds);
std::vector<RuntimeRow> runtime_rows(const std::vector<Method>& methods, const std::vector<FoldSummary>& folds);
std::vector<WelchRow> welch_rows(const ExperimentConfig& cfg, const std::vector<Method>& methods,
                                 const std::vector<FoldSummary>& folds);

std::string results_csv(const std::vector<ResultRow>& rows);
std::string runtime_csv(const std::vector<RuntimeRow>& rows);
std::string welch_csv(const std::vector<WelchRow>& rows);
std::string images_csv(const std::vector<Method>& methods, const std::vector<FoldSummary>& folds);

/// The full cross-validated experiment. Writes under cfg.output_dir:
///   config.json, data/, fold_<i>/{ldm_p.ckpt, ldm_s.ckpt, loss_p.csv,
///   loss_s.csv, noises/, masks/, diagnostic.txt on failure},
///   results.csv, images.csv, welch.csv (all deterministic) and runtime.csv.
ExperimentResult run_experiment(const ExperimentConfig& cfg, int threads, const Logger& log = {});

}  // namespace pgdiff
