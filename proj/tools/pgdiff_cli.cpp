// pgdiff: command-line front end for data generation, training, prior
// extraction, segmentation, scoring and the full cross-validated experiment.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "pgdiff/harness.hpp"
#include "pgdiff/noisequality.hpp"
#include "pgdiff/sampler.hpp"
#include "pgdiff/segmenter.hpp"

using namespace pgdiff;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    int threads = 1;
};

std::string one_line(std::string s) {
    for (char& c : s) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    return s;
}

void log_line(const std::string& msg) { std::fprintf(stderr, "pgdiff: %s\n", msg.c_str()); }

ExperimentConfig resolve_config(const Globals& g) {
    ExperimentConfig cfg = g.config.empty() ? ExperimentConfig{} : load_experiment_config(g.config);
    if (g.seed) {
        cfg.data_seed = *g.seed;
        cfg.prior_train.seed = derive_seed(*g.seed, {1});
        cfg.seg_train.seed = derive_seed(*g.seed, {2});
        cfg.evaluation.seed = derive_seed(*g.seed, {3});
    }
    if (!g.out.empty()) cfg.output_dir = g.out;
    cfg.validate();
    return cfg;
}

NoiseSchedule schedule_of(const ExperimentConfig& cfg) {
    return make_linear_schedule(cfg.schedule.T, cfg.schedule.beta_start, cfg.schedule.beta_end);
}

std::vector<const Sample*> pointers(const std::vector<Sample>& v) {
    std::vector<const Sample*> out;
    for (const auto& s : v) out.push_back(&s);
    return out;
}

Dataset dataset_for(const ExperimentConfig& cfg, const std::string& data_dir, int threads) {
    if (data_dir.empty()) return generate_dataset(cfg.scene, cfg.data_seed, threads);
    return load_dataset(data_dir).data;
}

DenoiserParams load_model(const std::string& path, const DenoiserConfig& expect, const char* what) {
    if (path.empty()) throw UsageError(std::string("--") + what + " is required");
    Checkpoint c = load_checkpoint(path);
    const auto& got = c.params.config();
    if (got.in_channels != expect.in_channels || got.cond_channels != expect.cond_channels) {
        throw std::invalid_argument(path + ": model has " + std::to_string(got.in_channels) + " input and " +
                                    std::to_string(got.cond_channels) + " conditioning channels, the " + what +
                                    " needs " + std::to_string(expect.in_channels) + " and " +
                                    std::to_string(expect.cond_channels));
    }
    return std::move(c.params);
}

void write_model(const fs::path& dir, const std::string& stem, const TrainResult& r, const ExperimentConfig& cfg,
                 std::uint64_t seed) {
    fs::create_directories(dir);
    const auto sched = schedule_of(cfg);
    save_checkpoint(dir / (stem + ".ckpt"), r.params,
                    {sched.betas, seed, static_cast<int>(r.epoch_loss.size()),
                     r.epoch_loss.empty() ? 0.0 : r.epoch_loss.back()});
    std::string csv = "epoch,mean_loss\n";
    for (std::size_t e = 0; e < r.epoch_loss.size(); ++e) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%zu,%.6f\n", e + 1, r.epoch_loss[e]);
        csv += buf;
    }
    write_text(dir / ("loss_" + stem + ".csv"), csv);
}

// "random", "forward:300", "inversion" or "inversion:50".
Method parse_prior(const std::string& s, const ExperimentConfig& cfg) {
    auto param = [&](const std::string& prefix) -> std::optional<int> {
        if (s.size() <= prefix.size() + 1 || s.compare(0, prefix.size() + 1, prefix + ":") != 0) return std::nullopt;
        try {
            std::size_t used = 0;
            const int v = std::stoi(s.substr(prefix.size() + 1), &used);
            if (used != s.size() - prefix.size() - 1) throw UsageError("bad number in --prior " + s);
            return v;
        } catch (const std::logic_error&) {
            throw UsageError("bad number in --prior " + s);
        }
    };
    if (s == "random") return {Method::Kind::random, 1};
    if (s == "inversion") return {Method::Kind::inversion, cfg.sampling.S_inv};
    if (auto k = param("forward")) {
        if (*k < 0 || *k > cfg.schedule.T) throw UsageError("forward k must be in [0, T]");
        return {Method::Kind::forward_diff, *k};
    }
    if (auto S = param("inversion")) {
        if (*S < 1 || *S > cfg.schedule.T) throw UsageError("inversion steps must be in [1, T]");
        return {Method::Kind::inversion, *S};
    }
    throw UsageError("--prior must be random, forward:<k>, inversion or inversion:<S>");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Prior-guided diffusion segmentation at desk scale"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config, "experiment config (JSON)");
    app.add_option("--seed", g.seed, "master seed overriding the data, training and evaluation seeds");
    app.add_option("--out", g.out, "output directory or file");
    app.add_option("--threads", g.threads, "worker threads")->check(CLI::PositiveNumber);

    std::string data_dir, image_path, prior_ckpt, seg_ckpt, noise_path, prior_spec = "inversion";
    int steps = 0, ensemble = 1;
    std::uint64_t grad_seed = 0;

    auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
    auto* train_p = app.add_subcommand("train-prior", "train the unconditional prior model on the train split");
    auto* train_s = app.add_subcommand("train-seg", "train the conditional segmentation model on the train split");
    for (auto* sc : {train_p, train_s}) sc->add_option("--data", data_dir, "dataset directory (default: generate)");

    auto* extract = app.add_subcommand("extract-prior", "DDIM-invert one image into its starting noise");
    extract->add_option("--image", image_path, "image tensor file")->required();
    extract->add_option("--prior-model", prior_ckpt, "prior model checkpoint")->required();
    extract->add_option("--steps", steps, "inversion steps (default: sampling.S_inv)");

    auto* segment = app.add_subcommand("segment", "segment one image");
    segment->add_option("--image", image_path, "image tensor file")->required();
    segment->add_option("--seg-model", seg_ckpt, "segmentation model checkpoint")->required();
    segment->add_option("--prior-model", prior_ckpt, "prior model checkpoint (inversion only)");
    segment->add_option("--prior", prior_spec, "random | forward:<k> | inversion[:<S>]");
    segment->add_option("--ensemble", ensemble, "random-noise ensemble size")->check(CLI::PositiveNumber);

    auto* quality = app.add_subcommand("noise-quality", "SSIM and KLD of a starting noise against its image");
    quality->add_option("--noise", noise_path, "noise tensor file")->required();
    quality->add_option("--image", image_path, "image tensor file")->required();

    auto* evaluate = app.add_subcommand("evaluate", "run every method on the test split with trained models");
    evaluate->add_option("--data", data_dir, "dataset directory (default: generate)");
    evaluate->add_option("--prior-model", prior_ckpt, "prior model checkpoint")->required();
    evaluate->add_option("--seg-model", seg_ckpt, "segmentation model checkpoint")->required();

    auto* grad = app.add_subcommand("grad-check", "finite-difference check of both model configs");
    grad->add_option("--probe-seed", grad_seed, "seed of the probe input and parameters");

    auto* reproduce = app.add_subcommand("reproduce", "full cross-validated experiment");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        std::cout << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << app.help();
        std::cerr << "pgdiff: error: usage: " << one_line(e.what()) << "\n";
        return 2;
    }

    try {
        const ExperimentConfig cfg = resolve_config(g);
        const auto sched = schedule_of(cfg);

        if (gen->parsed()) {
            const fs::path dir = g.out.empty() ? fs::path(cfg.output_dir) / "data" : fs::path(g.out);
            save_dataset(dir, generate_dataset(cfg.scene, cfg.data_seed, g.threads), cfg.scene, cfg.data_seed);
            std::cout << dir.string() << "\n";
        } else if (train_p->parsed() || train_s->parsed()) {
            const Dataset d = dataset_for(cfg, data_dir, g.threads);
            const bool prior = train_p->parsed();
            const auto r = prior ? train_prior_model(cfg, pointers(d.train), g.threads)
                                 : train_seg_model(cfg, pointers(d.train), g.threads);
            const fs::path dir = cfg.output_dir;
            write_model(dir, prior ? "ldm_p" : "ldm_s", r, cfg, prior ? cfg.prior_train.seed : cfg.seg_train.seed);
            std::cout << (dir / (prior ? "ldm_p.ckpt" : "ldm_s.ckpt")).string() << "\n";
        } else if (extract->parsed()) {
            const auto model = load_model(prior_ckpt, cfg.prior_model, "prior-model");
            const Tensor image = load_tensor(image_path).tensor;
            const int S = steps > 0 ? steps : cfg.sampling.S_inv;
            StartingNoise noise = extract_prior(image, model, S, sched, cfg.latent);
            noise.values = round_to_float(noise.values);
            const fs::path out = g.out.empty() ? fs::path("prior.tensor") : fs::path(g.out);
            if (out.has_parent_path()) fs::create_directories(out.parent_path());
            save_tensor(out, noise.values, Json{{"provenance", noise.provenance.label()}, {"image", image_path}});
            std::cout << out.string() << "\n";
        } else if (segment->parsed()) {
            const Method method = parse_prior(prior_spec, cfg);
            if (ensemble > 1 && method.kind != Method::Kind::random) {
                throw UsageError("--ensemble applies to --prior random only");
            }
            const auto seg = load_model(seg_ckpt, cfg.seg_model, "seg-model");
            const Tensor image = load_tensor(image_path).tensor;
            const Tensor latent = encode(image, cfg.latent);
            const auto run = make_run(sched, cfg.sampling.S_sample);
            const int n = cfg.seg_model.in_channels;
            ClassMask mask;
            std::size_t seg_calls = 0, prior_calls = 0;
            std::string provenance;
            if (method.kind == Method::Kind::random) {
                const auto e = segment_ensemble(image, ensemble, seg, cfg.latent, run, sched, cfg.evaluation.seed);
                mask = e.vote;
                seg_calls = e.model_calls;
                provenance = Provenance::random().label();
            } else {
                StartingNoise noise;
                if (method.kind == Method::Kind::forward_diff) {
                    Rng rng(derive_seed(cfg.evaluation.seed, {0xfd, static_cast<std::uint64_t>(method.parameter)}));
                    noise = forward_diff_prior(latent, method.parameter, sched, rng);
                } else {
                    const auto prior = load_model(prior_ckpt, cfg.prior_model, "prior-model");
                    const EpsModel eps = counting(bind_model(prior), prior_calls);
                    noise = extract_prior(image, eps, method.parameter, sched, cfg.latent);
                }
                noise.values = round_to_float(noise.values);
                provenance = noise.provenance.label();
                mask = segment_single(image, prepare_starting_noise(noise, n), seg, cfg.latent, run, sched, &seg_calls);
            }
            const fs::path dir = g.out.empty() ? fs::path("segment") : fs::path(g.out);
            fs::create_directories(dir);
            save_pgm(dir / "mask.pgm", mask);
            save_mask_png(dir / "mask.png", mask);
            const Json record{{"image", image_path},
                              {"provenance", provenance},
                              {"ensemble", ensemble},
                              {"S_sample", cfg.sampling.S_sample},
                              {"denoiser_call_count", seg_calls},
                              {"prior_call_count", prior_calls}};
            write_text(dir / "provenance.json", record.dump(2) + "\n");
            std::cout << record.dump() << "\n";
        } else if (quality->parsed()) {
            const auto noise_file = load_tensor(noise_path);
            const Tensor image = load_tensor(image_path).tensor;
            StartingNoise noise{noise_file.tensor, Provenance::random(), std::nullopt};
            if (noise_file.provenance.contains("provenance") && noise_file.provenance["provenance"].is_string()) {
                noise.provenance = Provenance::parse(noise_file.provenance["provenance"].get<std::string>());
            }
            const auto rep = noise_report(noise, encode(image, cfg.latent), cfg.evaluation.noise);
            char buf[256];
            std::snprintf(buf, sizeof(buf), "%s,%.6f,%s,%d,%zu,%.6f\n", rep.provenance.label().c_str(), rep.ssim,
                          rep.kld ? std::to_string(*rep.kld).c_str() : "NA", rep.kld_divergent ? 1 : 0,
                          rep.sample_count, rep.bandwidth);
            std::cout << "provenance,ssim,kld,kld_divergent,samples,bandwidth\n" << buf;
        } else if (evaluate->parsed()) {
            const Dataset d = dataset_for(cfg, data_dir, g.threads);
            TrainedModels models;
            models.prior = load_model(prior_ckpt, cfg.prior_model, "prior-model");
            models.seg = load_model(seg_ckpt, cfg.seg_model, "seg-model");
            const fs::path dir = cfg.output_dir;
            FoldSummary fold;
            fold.images = evaluate_images(cfg, models, pointers(d.test), 0, dir / "eval", g.threads, log_line);
            fold.ok = true;
            const auto methods = experiment_methods(cfg);
            const std::vector<FoldSummary> folds{fold};
            write_text(dir / "results.csv", results_csv(result_rows(methods, folds)));
            write_text(dir / "images.csv", images_csv(methods, folds));
            write_text(dir / "welch.csv", welch_csv(welch_rows(cfg, methods, folds)));
            write_text(dir / "runtime.csv", runtime_csv(runtime_rows(methods, folds)));
            std::cout << results_csv(result_rows(methods, folds));
        } else if (grad->parsed()) {
            int worst = 0;
            for (const auto* mc : {&cfg.prior_model, &cfg.seg_model}) {
                auto p = init_denoiser(*mc, grad_seed);
                randomize_head(p, grad_seed);
                Rng rng(derive_seed(grad_seed, {7}));
                Tensor probe = Tensor::chw(mc->in_channels, 8, 8), cond = Tensor::chw(std::max(1, mc->cond_channels), 8, 8);
                for (double& v : probe.values()) v = rng.normal();
                for (double& v : cond.values()) v = rng.uniform();
                const auto r =
                    grad_check(p, probe, mc->cond_channels ? &cond : nullptr, sched, cfg.schedule.T / 4, 1e-5, grad_seed);
                std::printf("%s,%zu,%.3e\n", mc == &cfg.prior_model ? "prior_model" : "seg_model", r.checked,
                            r.max_relative_error);
                if (!(r.max_relative_error < 1e-4)) worst = 1;
            }
            return worst;
        } else if (reproduce->parsed()) {
            const auto r = run_experiment(cfg, g.threads, log_line);
            std::cout << results_csv(r.rows);
            for (const auto& f : r.folds) {
                if (!f.ok) return 1;
            }
        }
    } catch (const UsageError& e) {
        std::cerr << "pgdiff: error: usage: " << one_line(e.what()) << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "pgdiff: error: config: " << one_line(e.what()) << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "pgdiff: error: runtime: " << one_line(e.what()) << "\n";
        return 1;
    }
    return 0;
}
