#include "pgdiff/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace pgdiff {

namespace {

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += "; ";
        out += items[i];
    }
    return out;
}

// Reads the keys of one JSON object, reporting unknown keys and type errors.
class Reader {
public:
    Reader(const Json& j, std::vector<std::string>& problems, std::string where)
        : j_(j), problems_(problems), where_(std::move(where)) {
        if (!j_.is_object()) problems_.push_back(where_ + ": expected an object");
    }

    ~Reader() {
        if (!j_.is_object()) return;
        for (const auto& [key, _] : j_.items()) {
            if (!seen_.count(key)) problems_.push_back(where_ + "." + key + ": unknown key");
        }
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.is_object() || !j_.contains(key)) return;
        const Json& v = j_.at(key);
        if (!type_ok<T>(v)) {
            problems_.push_back(where_ + "." + key + ": wrong type");
            return;
        }
        try {
            out = v.get<T>();
        } catch (const std::exception&) {
            problems_.push_back(where_ + "." + key + ": wrong type");
        }
    }

    /// Marks a key as handled and returns the sub-object, or null.
    const Json* child(const char* key) {
        seen_.insert(key);
        if (!j_.is_object() || !j_.contains(key)) return nullptr;
        return &j_.at(key);
    }

private:
    template <typename T>
    static bool type_ok(const Json& v) {
        if constexpr (std::is_same_v<T, bool>) {
            return v.is_boolean();
        } else if constexpr (std::is_same_v<T, std::string>) {
            return v.is_string();
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
            return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
        } else if constexpr (std::is_integral_v<T>) {
            return v.is_number_integer();
        } else if constexpr (std::is_floating_point_v<T>) {
            return v.is_number();
        } else if constexpr (std::is_same_v<T, std::vector<int>>) {
            if (!v.is_array()) return false;
            for (const auto& e : v) {
                if (!e.is_number_integer()) return false;
            }
            return true;
        } else if constexpr (std::is_same_v<T, std::vector<double>>) {
            if (!v.is_array()) return false;
            for (const auto& e : v) {
                if (!e.is_number()) return false;
            }
            return true;
        } else {
            return true;
        }
    }

    const Json& j_;
    std::vector<std::string>& problems_;
    std::string where_;
    std::set<std::string> seen_;
};

void collect(std::vector<std::string>& problems, const std::string& where, const std::function<void()>& check) {
    try {
        check();
    } catch (const std::exception& e) {
        problems.push_back(where + ": " + e.what());
    }
}

TrainConfig train_config_from_json(const Json& j, std::vector<std::string>& problems, const std::string& where,
                                   TrainConfig c) {
    Reader r(j, problems, where);
    r.get("learning_rate", c.learning_rate);
    r.get("batch_size", c.batch_size);
    r.get("epochs", c.epochs);
    r.get("seed", c.seed);
    r.get("augment", c.augment);
    r.get("cosine_decay", c.cosine_decay);
    if (const Json* clip = r.child("grad_clip")) {
        if (clip->is_null()) {
            c.grad_clip.reset();
        } else if (clip->is_number()) {
            c.grad_clip = clip->get<double>();
        } else {
            problems.push_back(where + ".grad_clip: expected a number or null");
        }
    }
    return c;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error("invalid config: " + join(problems)), problems_(std::move(problems)) {}

ExperimentConfig::ExperimentConfig() {
    prior_train.epochs = 120;
    prior_train.learning_rate = 5e-3;
    prior_train.seed = 11;
    prior_train.augment = true;
    prior_train.cosine_decay = true;
    seg_train.epochs = 80;
    seg_train.learning_rate = 3e-3;
    seg_train.seed = 12;
    seg_train.augment = false;
    seg_train.cosine_decay = true;
}

std::vector<int> ExperimentConfig::forward_ks() const {
    std::vector<int> ks;
    for (double f : sampling.forward_fractions) ks.push_back(static_cast<int>(std::lround(f * schedule.T)));
    return ks;
}

void ExperimentConfig::validate() const {
    std::vector<std::string> problems;
    collect(problems, "dataset", [&] { scene.validate(); });
    if (schedule.T < 2) problems.emplace_back("schedule.T: must be >= 2");
    collect(problems, "schedule", [&] { make_linear_schedule(schedule.T, schedule.beta_start, schedule.beta_end); });
    collect(problems, "latent", [&] { latent.validate(); });
    collect(problems, "prior_model", [&] { prior_model.validate(); });
    collect(problems, "seg_model", [&] { seg_model.validate(); });
    collect(problems, "prior_train", [&] { prior_train.validate(); });
    collect(problems, "seg_train", [&] { seg_train.validate(); });
    if (prior_model.in_channels != latent.latent_channels) {
        problems.emplace_back("prior_model.in_channels: must equal latent.latent_channels");
    }
    if (prior_model.cond_channels != 0) problems.emplace_back("prior_model.cond_channels: prior model is unconditional");
    if (seg_model.in_channels != kCellClasses) {
        problems.emplace_back("seg_model.in_channels: must equal the class count (" + std::to_string(kCellClasses) + ")");
    }
    if (seg_model.cond_channels != latent.latent_channels) {
        problems.emplace_back("seg_model.cond_channels: must equal latent.latent_channels");
    }
    if (latent.f > 0 && (scene.height % latent.f != 0 || scene.width % latent.f != 0)) {
        problems.emplace_back("latent.f: must divide the image size");
    }
    if (latent.f > 0) {
        const int lh = scene.height / latent.f, lw = scene.width / latent.f;
        for (const auto* m : {&prior_model, &seg_model}) {
            const int mult = m->hidden_widths.empty() || m->hidden_widths.size() > 8 ? 1 : m->spatial_multiple();
            if (lh % mult != 0 || lw % mult != 0) {
                problems.emplace_back(std::string(m == &prior_model ? "prior_model" : "seg_model") +
                                      ".hidden_widths: latent size must be a multiple of " + std::to_string(mult));
            }
        }
    }
    auto steps_ok = [&](int S) { return S >= 1 && S <= schedule.T; };
    if (!steps_ok(sampling.S_inv)) problems.emplace_back("sampling.S_inv: must be in [1, T]");
    if (!steps_ok(sampling.S_sample)) problems.emplace_back("sampling.S_sample: must be in [1, T]");
    if (sampling.ensemble.empty()) problems.emplace_back("sampling.ensemble: must not be empty");
    for (int k : sampling.ensemble) {
        if (k < 1) problems.emplace_back("sampling.ensemble: sizes must be >= 1");
    }
    for (int s : sampling.inversion_steps) {
        if (!steps_ok(s)) problems.emplace_back("sampling.inversion_steps: values must be in [1, T]");
    }
    for (double f : sampling.forward_fractions) {
        if (!(f >= 0.0 && f <= 1.0)) problems.emplace_back("sampling.forward_fractions: values must be in [0, 1]");
    }
    if (evaluation.folds < 2) problems.emplace_back("evaluation.folds: must be >= 2");
    if (evaluation.folds > scene.test_size) problems.emplace_back("evaluation.folds: exceeds the test split size");
    if (evaluation.folds > scene.train_size) problems.emplace_back("evaluation.folds: exceeds the train split size");
    if (evaluation.noise.ssim_window < 1 || evaluation.noise.ssim_window % 2 == 0) {
        problems.emplace_back("evaluation.ssim_window: must be a positive odd number");
    }
    if (!(evaluation.noise.clip_low_percentile >= 0.0 &&
          evaluation.noise.clip_low_percentile < evaluation.noise.clip_high_percentile &&
          evaluation.noise.clip_high_percentile <= 100.0)) {
        problems.emplace_back("evaluation.clip_percentiles: need 0 <= low < high <= 100");
    }
    if (evaluation.noise.blur_sigma < 0.0) problems.emplace_back("evaluation.blur_sigma: must be >= 0");
    if (output_dir.empty()) problems.emplace_back("output_dir: must not be empty");
    if (!problems.empty()) throw ConfigError(problems);
}

Json to_json(const DenoiserConfig& c) {
    return Json{{"in_channels", c.in_channels},
                {"cond_channels", c.cond_channels},
                {"hidden_widths", c.hidden_widths},
                {"time_embed_dim", c.time_embed_dim}};
}

Json to_json(const SceneConfig& c) {
    return Json{{"height", c.height},
                {"width", c.width},
                {"min_cells", c.min_cells},
                {"max_cells", c.max_cells},
                {"min_radius", c.min_radius},
                {"max_radius", c.max_radius},
                {"live_low", c.live_low},
                {"live_high", c.live_high},
                {"live_rim_boost", c.live_rim_boost},
                {"dead_low", c.dead_low},
                {"dead_high", c.dead_high},
                {"dead_speckle", c.dead_speckle},
                {"background", c.background},
                {"noise_sd", c.noise_sd},
                {"live_probability", c.live_probability},
                {"max_overlap", c.max_overlap},
                {"train_size", c.train_size},
                {"val_size", c.val_size},
                {"test_size", c.test_size}};
}

Json to_json(const TrainConfig& c) {
    Json j{{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size}, {"epochs", c.epochs},
           {"seed", c.seed},                   {"augment", c.augment},
           {"cosine_decay", c.cosine_decay}};
    j["grad_clip"] = c.grad_clip ? Json(*c.grad_clip) : Json(nullptr);
    return j;
}

Json to_json(const ExperimentConfig& c) {
    Json dataset = to_json(c.scene);
    dataset["seed"] = c.data_seed;
    return Json{
        {"dataset", dataset},
        {"schedule", {{"T", c.schedule.T}, {"beta_start", c.schedule.beta_start}, {"beta_end", c.schedule.beta_end}}},
        {"latent", {{"f", c.latent.f}, {"latent_channels", c.latent.latent_channels}}},
        {"prior_model", to_json(c.prior_model)},
        {"seg_model", to_json(c.seg_model)},
        {"prior_train", to_json(c.prior_train)},
        {"seg_train", to_json(c.seg_train)},
        {"sampling",
         {{"S_inv", c.sampling.S_inv},
          {"S_sample", c.sampling.S_sample},
          {"ensemble", c.sampling.ensemble},
          {"inversion_steps", c.sampling.inversion_steps},
          {"forward_fractions", c.sampling.forward_fractions}}},
        {"evaluation",
         {{"folds", c.evaluation.folds},
          {"seed", c.evaluation.seed},
          {"noise_quality", c.evaluation.noise_quality},
          {"ssim_window", c.evaluation.noise.ssim_window},
          {"clip_low_percentile", c.evaluation.noise.clip_low_percentile},
          {"clip_high_percentile", c.evaluation.noise.clip_high_percentile},
          {"blur_sigma", c.evaluation.noise.blur_sigma}}},
        {"output_dir", c.output_dir}};
}

DenoiserConfig denoiser_config_from_json(const Json& j, std::vector<std::string>& problems, const std::string& where,
                                         DenoiserConfig c) {
    Reader r(j, problems, where);
    r.get("in_channels", c.in_channels);
    r.get("cond_channels", c.cond_channels);
    r.get("hidden_widths", c.hidden_widths);
    r.get("time_embed_dim", c.time_embed_dim);
    return c;
}

SceneConfig scene_config_from_json(const Json& j, std::vector<std::string>& problems, const std::string& where) {
    SceneConfig c;
    Reader r(j, problems, where);
    r.get("height", c.height);
    r.get("width", c.width);
    r.get("min_cells", c.min_cells);
    r.get("max_cells", c.max_cells);
    r.get("min_radius", c.min_radius);
    r.get("max_radius", c.max_radius);
    r.get("live_low", c.live_low);
    r.get("live_high", c.live_high);
    r.get("live_rim_boost", c.live_rim_boost);
    r.get("dead_low", c.dead_low);
    r.get("dead_high", c.dead_high);
    r.get("dead_speckle", c.dead_speckle);
    r.get("background", c.background);
    r.get("noise_sd", c.noise_sd);
    r.get("live_probability", c.live_probability);
    r.get("max_overlap", c.max_overlap);
    r.get("train_size", c.train_size);
    r.get("val_size", c.val_size);
    r.get("test_size", c.test_size);
    return c;
}

ExperimentConfig experiment_config_from_json(const Json& j) {
    ExperimentConfig c;
    std::vector<std::string> problems;
    {
        Reader r(j, problems, "config");
        if (const Json* d = r.child("dataset")) {
            Json scene = *d;
            if (scene.is_object() && scene.contains("seed")) {
                const Json seed{{"seed", scene["seed"]}};
                Reader seed_reader(seed, problems, "dataset");
                seed_reader.get("seed", c.data_seed);
                scene.erase("seed");
            }
            c.scene = scene_config_from_json(scene, problems, "dataset");
        }
        if (const Json* s = r.child("schedule")) {
            Reader sr(*s, problems, "schedule");
            sr.get("T", c.schedule.T);
            sr.get("beta_start", c.schedule.beta_start);
            sr.get("beta_end", c.schedule.beta_end);
        }
        if (const Json* l = r.child("latent")) {
            Reader lr(*l, problems, "latent");
            lr.get("f", c.latent.f);
            lr.get("latent_channels", c.latent.latent_channels);
        }
        if (const Json* m = r.child("prior_model")) {
            c.prior_model = denoiser_config_from_json(*m, problems, "prior_model", c.prior_model);
        }
        if (const Json* m = r.child("seg_model")) {
            c.seg_model = denoiser_config_from_json(*m, problems, "seg_model", c.seg_model);
        }
        if (const Json* t = r.child("prior_train")) {
            c.prior_train = train_config_from_json(*t, problems, "prior_train", c.prior_train);
        }
        if (const Json* t = r.child("seg_train")) {
            c.seg_train = train_config_from_json(*t, problems, "seg_train", c.seg_train);
        }
        if (const Json* s = r.child("sampling")) {
            Reader sr(*s, problems, "sampling");
            sr.get("S_inv", c.sampling.S_inv);
            sr.get("S_sample", c.sampling.S_sample);
            sr.get("ensemble", c.sampling.ensemble);
            sr.get("inversion_steps", c.sampling.inversion_steps);
            sr.get("forward_fractions", c.sampling.forward_fractions);
        }
        if (const Json* e = r.child("evaluation")) {
            Reader er(*e, problems, "evaluation");
            er.get("folds", c.evaluation.folds);
            er.get("seed", c.evaluation.seed);
            er.get("noise_quality", c.evaluation.noise_quality);
            er.get("ssim_window", c.evaluation.noise.ssim_window);
            er.get("clip_low_percentile", c.evaluation.noise.clip_low_percentile);
            er.get("clip_high_percentile", c.evaluation.noise.clip_high_percentile);
            er.get("blur_sigma", c.evaluation.noise.blur_sigma);
        }
        r.get("output_dir", c.output_dir);
    }
    if (!problems.empty()) throw ConfigError(problems);
    c.validate();
    return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError({"cannot open config file " + path});
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError({std::string("config is not valid JSON: ") + e.what()});
    }
    return experiment_config_from_json(j);
}

}  // namespace pgdiff
