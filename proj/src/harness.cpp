#include "pgdiff/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>
#include <stdexcept>

#include "pgdiff/codec.hpp"
#include "pgdiff/noisequality.hpp"
#include "pgdiff/parallel.hpp"
#include "pgdiff/sampler.hpp"
#include "pgdiff/segmenter.hpp"

namespace pgdiff {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v) {
    if (std::isnan(v)) return "NA";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : "NA"; }

std::string fmt_p(double p) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", p);
    return buf;
}

void emit(const Logger& log, const std::string& msg) {
    if (log) log(msg);
}

NoiseSchedule schedule_of(const ExperimentConfig& cfg) {
    return make_linear_schedule(cfg.schedule.T, cfg.schedule.beta_start, cfg.schedule.beta_end);
}

void write_loss_csv(const fs::path& path, const std::vector<double>& loss) {
    std::string s = "epoch,mean_loss\n";
    for (std::size_t e = 0; e < loss.size(); ++e) s += std::to_string(e + 1) + "," + fmt(loss[e]) + "\n";
    write_text(path, s);
}

std::optional<double> mean_of(const std::vector<double>& v) {
    if (v.empty()) return std::nullopt;
    return mean(v);
}

std::optional<double> sd_of(const std::vector<double>& v) {
    if (v.empty()) return std::nullopt;
    return stddev(v);
}

std::size_t method_index(const std::vector<Method>& methods, const Method& m) {
    const auto it = std::find(methods.begin(), methods.end(), m);
    if (it == methods.end()) throw std::invalid_argument("method " + m.name() + " is not configured");
    return static_cast<std::size_t>(it - methods.begin());
}

}  // namespace

std::string Method::name() const {
    switch (kind) {
        case Kind::random: return "random_x" + std::to_string(parameter);
        case Kind::forward_diff: return "forward_diff_" + std::to_string(parameter);
        case Kind::inversion: return "inversion_" + std::to_string(parameter);
    }
    return "?";
}

Provenance Method::provenance() const {
    switch (kind) {
        case Kind::random: return Provenance::random();
        case Kind::forward_diff: return Provenance::forward_diff(parameter);
        case Kind::inversion: return Provenance::ddim_inversion(parameter);
    }
    return {};
}

std::vector<Method> experiment_methods(const ExperimentConfig& cfg) {
    std::vector<Method> out;
    auto add = [&](Method m) {
        if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
    };
    for (int K : cfg.sampling.ensemble) add({Method::Kind::random, K});
    for (int k : cfg.forward_ks()) add({Method::Kind::forward_diff, k});
    for (int S : cfg.sampling.inversion_steps) add({Method::Kind::inversion, S});
    add(prior_method(cfg));
    return out;
}

Method prior_method(const ExperimentConfig& cfg) { return {Method::Kind::inversion, cfg.sampling.S_inv}; }

std::vector<FoldSplit> fold_splits(const ExperimentConfig& cfg) {
    const int k = cfg.evaluation.folds;
    const auto train_folds =
        kfold(static_cast<std::size_t>(cfg.scene.train_size), k, derive_seed(cfg.evaluation.seed, {1}));
    const auto test_folds = kfold(static_cast<std::size_t>(cfg.scene.test_size), k, derive_seed(cfg.evaluation.seed, {2}));
    std::vector<FoldSplit> out(static_cast<std::size_t>(k));
    for (std::size_t f = 0; f < out.size(); ++f) {
        std::vector<bool> held(static_cast<std::size_t>(cfg.scene.train_size), false);
        for (auto i : train_folds[f]) held[i] = true;
        for (std::size_t i = 0; i < held.size(); ++i) {
            if (!held[i]) out[f].train.push_back(i);
        }
        out[f].test = test_folds[f];
    }
    return out;
}

TrainResult train_prior_model(const ExperimentConfig& cfg, const std::vector<const Sample*>& samples, int threads) {
    const auto sched = schedule_of(cfg);
    std::vector<Tensor> items;
    items.reserve(samples.size());
    for (const Sample* s : samples) items.push_back(encode(s->image, cfg.latent));
    TrainConfig tc = cfg.prior_train;
    tc.threads = threads;
    const ItemTransform transform = [](std::size_t, Tensor& item, Tensor*, Rng& rng) {
        const AugmentParams p = draw_augment(rng);
        item = transform_tensor(item, p.rotate90, p.flip_h, p.flip_v);
        apply_photometric(item, p);
    };
    return train(init_denoiser(cfg.prior_model, tc.seed), items, {}, sched, tc, transform);
}

TrainResult train_seg_model(const ExperimentConfig& cfg, const std::vector<const Sample*>& samples, int threads) {
    const auto sched = schedule_of(cfg);
    std::vector<Tensor> items, conds;
    items.reserve(samples.size());
    conds.reserve(samples.size());
    for (const Sample* s : samples) {
        items.push_back(mask_to_target(s->mask, cfg.seg_model.in_channels, cfg.latent));
        conds.push_back(encode(s->image, cfg.latent));
    }
    TrainConfig tc = cfg.seg_train;
    tc.threads = threads;
    const ItemTransform transform = [](std::size_t, Tensor& item, Tensor* cond, Rng& rng) {
        const AugmentParams p = draw_augment(rng);
        item = transform_tensor(item, p.rotate90, p.flip_h, p.flip_v);
        *cond = transform_tensor(*cond, p.rotate90, p.flip_h, p.flip_v);
        apply_photometric(*cond, p);
    };
    return train(init_denoiser(cfg.seg_model, tc.seed), items, conds, sched, tc, transform);
}

TrainedModels train_models(const ExperimentConfig& cfg, const std::vector<const Sample*>& samples, int threads,
                           const Logger& log) {
    TrainedModels m;
    auto start = Clock::now();
    auto p = train_prior_model(cfg, samples, threads);
    emit(log, "trained LDM-P: " + std::to_string(p.epoch_loss.size()) + " epochs, final loss " +
                  (p.epoch_loss.empty() ? std::string("NA") : fmt(p.epoch_loss.back())) + ", " +
                  fmt(seconds_since(start)) + " s");
    start = Clock::now();
    auto s = train_seg_model(cfg, samples, threads);
    emit(log, "trained LDM-S: " + std::to_string(s.epoch_loss.size()) + " epochs, final loss " +
                  (s.epoch_loss.empty() ? std::string("NA") : fmt(s.epoch_loss.back())) + ", " +
                  fmt(seconds_since(start)) + " s");
    m.prior = std::move(p.params);
    m.prior_loss = std::move(p.epoch_loss);
    m.seg = std::move(s.params);
    m.seg_loss = std::move(s.epoch_loss);
    return m;
}

std::vector<ImageOutcome> evaluate_images(const ExperimentConfig& cfg, const TrainedModels& models,
                                          const std::vector<const Sample*>& images, int fold,
                                          const std::optional<fs::path>& dir, int threads, const Logger& log) {
    const auto sched = schedule_of(cfg);
    const auto methods = experiment_methods(cfg);
    const auto run = make_run(sched, cfg.sampling.S_sample);
    const int n = cfg.seg_model.in_channels;
    int members = 0;
    for (const auto& m : methods) {
        if (m.kind == Method::Kind::random) members = std::max(members, m.parameter);
    }
    if (dir) {
        fs::create_directories(*dir / "noises");
        fs::create_directories(*dir / "masks");
    }

    std::vector<ImageOutcome> out(images.size());
    std::mutex log_mutex;
    std::size_t done = 0;

    parallel_for(images.size(), threads, [&](std::size_t i) {
        const Sample& sample = *images[i];
        const std::uint64_t seed =
            derive_seed(cfg.evaluation.seed, {0xe7a1, static_cast<std::uint64_t>(fold), static_cast<std::uint64_t>(i)});
        const Tensor latent = encode(sample.image, cfg.latent);
        const int h = latent.height(), w = latent.width();
        ImageOutcome& res = out[i];
        res.id = sample.id;
        res.methods.resize(methods.size());

        auto save_noise = [&](const StartingNoise& noise, const std::string& tag) {
            if (!dir) return;
            Json prov{{"provenance", noise.provenance.label()},
                      {"image", sample.id},
                      {"fold", fold},
                      {"method", tag}};
            save_tensor(*dir / "noises" / (sample.id + "__" + tag + ".tensor"), noise.values, prov);
        };
        auto save_mask = [&](const ClassMask& mask, const std::string& tag, bool png) {
            if (!dir) return;
            save_pgm(*dir / "masks" / (sample.id + "__" + tag + ".pgm"), mask);
            if (png) save_mask_png(*dir / "masks" / (sample.id + "__" + tag + ".png"), mask);
        };
        auto score = [&](MethodOutcome& o, const StartingNoise& noise) {
            o.confusion = confusion(o.mask, sample.mask, kCellClasses);
            o.miou = miou(o.confusion);
            o.f1 = f1(o.confusion);
            if (cfg.evaluation.noise_quality) {
                const auto rep = noise_report(noise, latent, cfg.evaluation.noise);
                o.ssim = rep.ssim;
                o.kld = rep.kld;
                o.kld_divergent = rep.kld_divergent;
            }
        };

        // Random members are shared by all ensemble sizes.
        std::vector<StartingNoise> member_noise;
        std::vector<ClassMask> member_mask;
        std::vector<double> member_seconds;
        for (int k = 0; k < members; ++k) {
            const auto start = Clock::now();
            StartingNoise noise = ensemble_member_noise(seed, k, n, h, w);
            noise.values = round_to_float(noise.values);
            noise.source_id = sample.id;
            std::size_t calls = 0;
            member_mask.push_back(segment_single(sample.image, noise.values, models.seg, cfg.latent, run, sched, &calls));
            member_seconds.push_back(seconds_since(start));
            if (calls != run.grid.size()) throw std::logic_error("random member used an unexpected number of calls");
            save_noise(noise, "random_m" + std::to_string(k));
            save_mask(member_mask.back(), "random_m" + std::to_string(k), false);
            member_noise.push_back(std::move(noise));
        }

        for (std::size_t mi = 0; mi < methods.size(); ++mi) {
            const Method& m = methods[mi];
            MethodOutcome& o = res.methods[mi];
            if (m.kind == Method::Kind::random) {
                const auto K = static_cast<std::size_t>(m.parameter);
                o.mask = majority_vote(std::span(member_mask.data(), K));
                for (std::size_t k = 0; k < K; ++k) o.seconds += member_seconds[k];
                o.seg_calls = K * run.grid.size();
                score(o, member_noise[0]);
                save_mask(o.mask, m.name(), true);
                continue;
            }
            const auto start = Clock::now();
            StartingNoise noise;
            if (m.kind == Method::Kind::forward_diff) {
                Rng rng(derive_seed(seed, {0xfd, static_cast<std::uint64_t>(m.parameter)}));
                noise = forward_diff_prior(latent, m.parameter, sched, rng);
            } else {
                std::size_t calls = 0;
                const EpsModel prior = counting(bind_model(models.prior), calls);
                noise = extract_prior(sample.image, prior, m.parameter, sched, cfg.latent);
                o.prior_calls = calls;
            }
            noise.values = round_to_float(noise.values);
            noise.source_id = sample.id;
            const Tensor start_noise = prepare_starting_noise(noise, n);
            o.mask = segment_single(sample.image, start_noise, models.seg, cfg.latent, run, sched, &o.seg_calls);
            o.seconds = seconds_since(start);
            score(o, noise);
            save_noise(noise, m.name());
            save_mask(o.mask, m.name(), true);
        }

        if (log) {
            std::lock_guard lock(log_mutex);
            ++done;
            if (done % 10 == 0 || done == images.size()) {
                log("fold " + std::to_string(fold) + ": evaluated " + std::to_string(done) + "/" +
                    std::to_string(images.size()) + " images");
            }
        }
    });
    return out;
}

std::vector<ResultRow> result_rows(const std::vector<Method>& methods, const std::vector<FoldSummary>& folds) {
    std::vector<ResultRow> rows;
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        std::vector<ResultRow> per_fold;
        for (const auto& f : folds) {
            if (!f.ok || f.images.empty()) continue;
            ResultRow r;
            r.method = methods[mi].name();
            r.fold = std::to_string(f.fold);
            ConfusionMatrix cm(kCellClasses);
            std::vector<double> ssim, kld;
            for (const auto& img : f.images) {
                const auto& o = img.methods[mi];
                cm += o.confusion;
                if (o.ssim) ssim.push_back(*o.ssim);
                if (o.kld) kld.push_back(*o.kld);
                if (o.kld_divergent) ++r.kld_divergent;
                r.seg_calls = std::max(r.seg_calls, o.seg_calls);
                r.prior_calls = std::max(r.prior_calls, o.prior_calls);
            }
            r.miou = miou(cm);
            r.f1 = f1(cm);
            r.ssim = mean_of(ssim);
            r.kld = mean_of(kld);
            r.n_images = f.images.size();
            per_fold.push_back(r);
        }
        if (per_fold.empty()) continue;
        std::vector<double> miou_v, f1_v, ssim_v, kld_v;
        ResultRow mean_row, sd_row;
        mean_row.method = sd_row.method = methods[mi].name();
        mean_row.fold = "mean";
        sd_row.fold = "sd";
        for (const auto& r : per_fold) {
            miou_v.push_back(r.miou);
            f1_v.push_back(r.f1);
            if (r.ssim) ssim_v.push_back(*r.ssim);
            if (r.kld) kld_v.push_back(*r.kld);
            mean_row.kld_divergent += r.kld_divergent;
            mean_row.n_images += r.n_images;
            mean_row.seg_calls = std::max(mean_row.seg_calls, r.seg_calls);
            mean_row.prior_calls = std::max(mean_row.prior_calls, r.prior_calls);
        }
        mean_row.miou = mean(miou_v);
        mean_row.f1 = mean(f1_v);
        mean_row.ssim = mean_of(ssim_v);
        mean_row.kld = mean_of(kld_v);
        sd_row.miou = stddev(miou_v);
        sd_row.f1 = stddev(f1_v);
        sd_row.ssim = sd_of(ssim_v);
        sd_row.kld = sd_of(kld_v);
        sd_row.kld_divergent = mean_row.kld_divergent;
        sd_row.n_images = mean_row.n_images;
        sd_row.seg_calls = mean_row.seg_calls;
        sd_row.prior_calls = mean_row.prior_calls;
        rows.insert(rows.end(), per_fold.begin(), per_fold.end());
        rows.push_back(mean_row);
        rows.push_back(sd_row);
    }
    return rows;
}

std::vector<RuntimeRow> runtime_rows(const std::vector<Method>& methods, const std::vector<FoldSummary>& folds) {
    std::vector<RuntimeRow> rows;
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        RuntimeRow total{methods[mi].name(), "all", 0.0, 0.0};
        std::size_t count = 0;
        for (const auto& f : folds) {
            if (!f.ok || f.images.empty()) continue;
            RuntimeRow r{methods[mi].name(), std::to_string(f.fold), 0.0, 0.0};
            for (const auto& img : f.images) r.seconds += img.methods[mi].seconds;
            r.per_image = r.seconds / static_cast<double>(f.images.size());
            total.seconds += r.seconds;
            count += f.images.size();
            rows.push_back(r);
        }
        if (count == 0) continue;
        total.per_image = total.seconds / static_cast<double>(count);
        rows.push_back(total);
    }
    return rows;
}

std::vector<WelchRow> welch_rows(const ExperimentConfig& cfg, const std::vector<Method>& methods,
                                 const std::vector<FoldSummary>& folds) {
    std::vector<WelchRow> rows;
    const std::size_t prior = method_index(methods, prior_method(cfg));
    std::optional<std::size_t> random1;
    std::vector<std::size_t> ensembles, forwards;
    for (std::size_t i = 0; i < methods.size(); ++i) {
        if (methods[i].kind == Method::Kind::random) {
            if (methods[i].parameter == 1) random1 = i;
            else ensembles.push_back(i);
        }
        if (methods[i].kind == Method::Kind::forward_diff && methods[i].parameter > 0) forwards.push_back(i);
    }

    using Getter = std::optional<double> (*)(const MethodOutcome&);
    auto per_image = [&](std::size_t a, std::size_t b, const std::string& metric, Getter get) {
        WelchRow r;
        r.comparison = methods[a].name() + " vs " + methods[b].name();
        r.metric = metric;
        r.unit = "image";
        std::vector<double> va, vb;
        for (const auto& f : folds) {
            if (!f.ok) continue;
            for (const auto& img : f.images) {
                if (auto v = get(img.methods[a])) va.push_back(*v);
                if (auto v = get(img.methods[b])) vb.push_back(*v);
            }
        }
        r.n_a = va.size();
        r.n_b = vb.size();
        r.mean_a = va.empty() ? std::nan("") : mean(va);
        r.mean_b = vb.empty() ? std::nan("") : mean(vb);
        try {
            r.test = welch_t(va, vb);
        } catch (const std::domain_error&) {
        }
        rows.push_back(r);
    };
    auto per_fold = [&](std::size_t a, std::size_t b) {
        WelchRow r;
        r.comparison = methods[a].name() + " vs " + methods[b].name();
        r.metric = "miou";
        r.unit = "fold";
        std::vector<double> va, vb;
        for (const auto& f : folds) {
            if (!f.ok || f.images.empty()) continue;
            ConfusionMatrix ca(kCellClasses), cb(kCellClasses);
            for (const auto& img : f.images) {
                ca += img.methods[a].confusion;
                cb += img.methods[b].confusion;
            }
            va.push_back(miou(ca));
            vb.push_back(miou(cb));
        }
        r.n_a = va.size();
        r.n_b = vb.size();
        r.mean_a = va.empty() ? std::nan("") : mean(va);
        r.mean_b = vb.empty() ? std::nan("") : mean(vb);
        try {
            r.test = welch_t(va, vb);
        } catch (const std::domain_error&) {
        }
        rows.push_back(r);
    };
    const Getter ssim = [](const MethodOutcome& o) { return o.ssim; };
    const Getter kld = [](const MethodOutcome& o) { return o.kld; };
    const Getter image_miou = [](const MethodOutcome& o) { return std::optional<double>(o.miou); };

    if (random1) {
        if (cfg.evaluation.noise_quality) {
            per_image(prior, *random1, "ssim", ssim);
            per_image(prior, *random1, "kld", kld);
        }
        per_image(prior, *random1, "miou", image_miou);
        per_fold(prior, *random1);
        for (std::size_t e : ensembles) per_fold(e, *random1);
    }
    if (cfg.evaluation.noise_quality) {
        for (std::size_t fd : forwards) per_image(fd, prior, "kld", kld);
    }
    return rows;
}

std::string results_csv(const std::vector<ResultRow>& rows) {
    std::string s = "method,fold,mIoU,F1,ssim,kld,kld_divergent,denoiser_call_count,prior_call_count,n_images\n";
    for (const auto& r : rows) {
        s += r.method + "," + r.fold + "," + fmt(r.miou) + "," + fmt(r.f1) + "," + fmt(r.ssim) + "," + fmt(r.kld) + "," +
             std::to_string(r.kld_divergent) + "," + std::to_string(r.seg_calls) + "," + std::to_string(r.prior_calls) +
             "," + std::to_string(r.n_images) + "\n";
    }
    return s;
}

std::string runtime_csv(const std::vector<RuntimeRow>& rows) {
    std::string s = "method,fold,runtime_seconds,seconds_per_image\n";
    for (const auto& r : rows) s += r.method + "," + r.fold + "," + fmt(r.seconds) + "," + fmt(r.per_image) + "\n";
    return s;
}

std::string welch_csv(const std::vector<WelchRow>& rows) {
    std::string s = "comparison,metric,unit,mean_a,mean_b,n_a,n_b,t,df,p\n";
    for (const auto& r : rows) {
        s += r.comparison + "," + r.metric + "," + r.unit + "," + fmt(r.mean_a) + "," + fmt(r.mean_b) + "," +
             std::to_string(r.n_a) + "," + std::to_string(r.n_b) + ",";
        if (r.test) {
            s += fmt(r.test->t) + "," + fmt(r.test->df) + "," + fmt_p(r.test->p) + "\n";
        } else {
            s += "NA,NA,NA\n";
        }
    }
    return s;
}

std::string images_csv(const std::vector<Method>& methods, const std::vector<FoldSummary>& folds) {
    std::string s = "fold,image,method,mIoU,F1,ssim,kld,kld_divergent,denoiser_call_count,prior_call_count\n";
    for (const auto& f : folds) {
        if (!f.ok) continue;
        for (const auto& img : f.images) {
            for (std::size_t mi = 0; mi < methods.size(); ++mi) {
                const auto& o = img.methods[mi];
                s += std::to_string(f.fold) + "," + img.id + "," + methods[mi].name() + "," + fmt(o.miou) + "," +
                     fmt(o.f1) + "," + fmt(o.ssim) + "," + fmt(o.kld) + "," + (o.kld_divergent ? "1" : "0") + "," +
                     std::to_string(o.seg_calls) + "," + std::to_string(o.prior_calls) + "\n";
            }
        }
    }
    return s;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, int threads, const Logger& log) {
    cfg.validate();
    const auto start = Clock::now();
    const fs::path out = cfg.output_dir;
    fs::create_directories(out);
    // saved without output_dir
    Json saved = to_json(cfg);
    saved.erase("output_dir");
    write_text(out / "config.json", saved.dump(2) + "\n");

    const Dataset data = generate_dataset(cfg.scene, cfg.data_seed, threads);
    save_dataset(out / "data", data, cfg.scene, cfg.data_seed);
    emit(log, "dataset: " + std::to_string(data.train.size()) + " train, " + std::to_string(data.test.size()) +
                  " test images");

    ExperimentResult result;
    result.methods = experiment_methods(cfg);
    const auto sched = schedule_of(cfg);
    const auto splits = fold_splits(cfg);
    for (std::size_t f = 0; f < splits.size(); ++f) {
        FoldSummary fold;
        fold.fold = static_cast<int>(f);
        const fs::path dir = out / ("fold_" + std::to_string(f));
        fs::create_directories(dir);
        fs::remove(dir / "diagnostic.txt");
        try {
            ExperimentConfig fc = cfg;
            fc.prior_train.seed = derive_seed(cfg.prior_train.seed, {static_cast<std::uint64_t>(f)});
            fc.seg_train.seed = derive_seed(cfg.seg_train.seed, {static_cast<std::uint64_t>(f)});
            std::vector<const Sample*> train, test;
            for (auto i : splits[f].train) train.push_back(&data.train[i]);
            for (auto i : splits[f].test) test.push_back(&data.test[i]);
            emit(log, "fold " + std::to_string(f) + ": training on " + std::to_string(train.size()) + " images");
            const TrainedModels models = train_models(fc, train, threads, log);
            save_checkpoint(dir / "ldm_p.ckpt", models.prior,
                            {sched.betas, fc.prior_train.seed, fc.prior_train.epochs,
                             models.prior_loss.empty() ? 0.0 : models.prior_loss.back()});
            save_checkpoint(dir / "ldm_s.ckpt", models.seg,
                            {sched.betas, fc.seg_train.seed, fc.seg_train.epochs,
                             models.seg_loss.empty() ? 0.0 : models.seg_loss.back()});
            write_loss_csv(dir / "loss_p.csv", models.prior_loss);
            write_loss_csv(dir / "loss_s.csv", models.seg_loss);
            fold.images = evaluate_images(fc, models, test, fold.fold, dir, threads, log);
            fold.ok = true;
        } catch (const std::exception& e) {
            fold.diagnostic = e.what();
            write_text(dir / "diagnostic.txt", std::string(e.what()) + "\n");
            emit(log, "fold " + std::to_string(f) + " failed: " + e.what());
        }
        result.folds.push_back(std::move(fold));
    }

    result.rows = result_rows(result.methods, result.folds);
    result.runtime = runtime_rows(result.methods, result.folds);
    result.welch = welch_rows(cfg, result.methods, result.folds);
    write_text(out / "results.csv", results_csv(result.rows));
    write_text(out / "images.csv", images_csv(result.methods, result.folds));
    write_text(out / "welch.csv", welch_csv(result.welch));
    result.total_seconds = seconds_since(start);
    auto rt = result.runtime;
    rt.push_back({"experiment_total", "all", result.total_seconds, 0.0});
    write_text(out / "runtime.csv", runtime_csv(rt));
    return result;
}

}  // namespace pgdiff
