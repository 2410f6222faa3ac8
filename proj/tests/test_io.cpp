#include <doctest.h>

#include <cstdlib>
#include <filesystem>

#include "pgdiff/io.hpp"

using namespace pgdiff;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("pgdiff_test_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

CheckpointMeta meta_for(const NoiseSchedule& s) { return {s.betas, 11, 40, 0.0312}; }

}  // namespace

TEST_CASE("checkpoint round trip") {
    const auto s = make_linear_schedule(1000);
    auto p = init_denoiser({3, 1, {16, 32}, 16}, 5);
    randomize_head(p, 5);
    const auto bytes = serialize_checkpoint(p, meta_for(s));
    const auto c = deserialize_checkpoint(bytes);
    CHECK(c.params == p);
    CHECK(c.meta.betas == s.betas);
    CHECK(c.meta.seed == 11);
    CHECK(c.meta.epoch == 40);
    CHECK(c.meta.loss == 0.0312);
    CHECK(serialize_checkpoint(c.params, c.meta) == bytes);

    const auto dir = scratch_dir("ckpt");
    save_checkpoint(dir / "m.ckpt", p, meta_for(s));
    CHECK(load_checkpoint(dir / "m.ckpt").params == p);
    CHECK(read_bytes(dir / "m.ckpt") == bytes);
    fs::remove_all(dir);
}

TEST_CASE("checkpoint corruption is detected") {
    const auto s = make_linear_schedule(10);
    const auto p = init_denoiser({1, 0, {4, 8}, 4}, 1);
    const auto bytes = serialize_checkpoint(p, meta_for(s));

    auto truncated = bytes;
    truncated.resize(bytes.size() - 7);
    CHECK_THROWS_AS(deserialize_checkpoint(truncated), CheckpointTruncatedError);
    CHECK_THROWS_AS(deserialize_checkpoint(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 10)),
                    CheckpointTruncatedError);

    auto versioned = bytes;
    versioned[4] = 9;
    CHECK_THROWS_AS(deserialize_checkpoint(versioned), CheckpointVersionError);

    auto padded = bytes;
    padded.push_back(0);
    CHECK_THROWS_AS(deserialize_checkpoint(padded), CheckpointLengthError);

    // Shrink the declared payload length by one float.
    auto shortened = bytes;
    std::uint64_t header_len = 0;
    for (int i = 0; i < 8; ++i) header_len |= static_cast<std::uint64_t>(bytes[8 + i]) << (8 * i);
    const std::size_t at = 16 + header_len;
    std::uint64_t payload_len = 0;
    for (int i = 0; i < 8; ++i) payload_len |= static_cast<std::uint64_t>(bytes[at + i]) << (8 * i);
    payload_len -= 4;
    for (int i = 0; i < 8; ++i) shortened[at + i] = static_cast<std::uint8_t>(payload_len >> (8 * i));
    shortened.resize(shortened.size() - 4);
    CHECK_THROWS_AS(deserialize_checkpoint(shortened), CheckpointLengthError);

    auto magic = bytes;
    magic[0] = 'X';
    CHECK_THROWS_AS(deserialize_checkpoint(magic), CheckpointError);
}

TEST_CASE("tensor and mask files") {
    const auto dir = scratch_dir("tensor");
    Rng rng(1);
    Tensor t = Tensor::chw(2, 3, 5);
    for (double& v : t.values()) v = rng.normal();
    save_tensor(dir / "a.tensor", t, Json{{"kind", "random"}});
    const auto l = load_tensor(dir / "a.tensor");
    CHECK(l.tensor == round_to_float(t));
    CHECK(l.provenance["kind"] == "random");
    CHECK(max_abs_diff(l.tensor, t) < 1e-6);
    CHECK(round_to_float(l.tensor) == l.tensor);

    ClassMask m(4, 6, 3);
    for (auto& v : m.labels()) v = static_cast<std::uint8_t>(rng.below(3));
    save_pgm(dir / "m.pgm", m);
    CHECK(load_pgm(dir / "m.pgm", 3) == m);
    CHECK_THROWS(load_pgm(dir / "m.pgm", 2));
    save_mask_png(dir / "m.png", m);
    CHECK(fs::file_size(dir / "m.png") > 8);
    CHECK_THROWS_AS(load_tensor(dir / "missing.tensor"), IoError);

    write_text(dir / "bad.tensor", "{\"shape\":[1,2,2],\"dtype\":\"float32\"}\nabc");
    CHECK_THROWS_AS(load_tensor(dir / "bad.tensor"), IoError);
    fs::remove_all(dir);
}

TEST_CASE("dataset directory round trip") {
    const auto dir = scratch_dir("data");
    SceneConfig cfg;
    cfg.train_size = 3;
    cfg.val_size = 1;
    cfg.test_size = 2;
    const auto d = generate_dataset(cfg, 4);
    save_dataset(dir, d, cfg, 4);
    const auto s = load_dataset(dir);
    CHECK(s.config == cfg);
    CHECK(s.seed == 4);
    REQUIRE(s.data.test.size() == 2);
    CHECK(s.data.test[1].id == d.test[1].id);
    CHECK(s.data.test[1].image == d.test[1].image);
    CHECK(s.data.train[2].mask == d.train[2].mask);
    fs::remove_all(dir);
}

TEST_CASE("experiment config json") {
    const ExperimentConfig def;
    CHECK_NOTHROW(def.validate());
    const auto back = experiment_config_from_json(to_json(def));
    CHECK(to_json(back) == to_json(def));
    CHECK(def.forward_ks() == std::vector<int>{0, 300, 600});

    Json j = to_json(def);
    j["sampling"]["S_sample"] = 250;
    CHECK(experiment_config_from_json(j).sampling.S_sample == 250);

    Json unknown = to_json(def);
    unknown["sampling"]["S_smaple"] = 5;
    CHECK_THROWS_AS(experiment_config_from_json(unknown), ConfigError);

    Json wrong = to_json(def);
    wrong["schedule"]["T"] = "many";
    wrong["sampling"]["S_inv"] = "all";
    try {
        experiment_config_from_json(wrong);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.problems().size() >= 2);
    }

    Json partial = Json::object();
    partial["sampling"] = {{"S_inv", 50}};
    const auto p = experiment_config_from_json(partial);
    CHECK(p.sampling.S_inv == 50);
    CHECK(p.sampling.S_sample == def.sampling.S_sample);
}

TEST_CASE("experiment config validation") {
    ExperimentConfig c;
    c.sampling.S_sample = 2000;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.seg_model.in_channels = 2;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.evaluation.folds = 1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.latent.f = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}
