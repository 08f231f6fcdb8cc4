#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "deproj/config.hpp"
#include "deproj/tensor.hpp"

using namespace deproj;

TEST_CASE("an empty config yields the documented defaults") {
    RunConfig cfg = parse_config("");
    CHECK(cfg.data_clips == 16);
    CHECK(cfg.data_digits == 1);
    CHECK(cfg.data_frames == 8);
    CHECK(cfg.data_height == 32);
    CHECK(cfg.data_width == 32);
    CHECK(cfg.data_min_speed == 1);
    CHECK(cfg.data_max_speed == 3);
    CHECK(cfg.data_noise_sigma == 0.0);
    CHECK(cfg.data_translate == 0);
    CHECK(cfg.data_val_ratio == doctest::Approx(0.1));
    CHECK(cfg.data_test_ratio == doctest::Approx(0.1));
    CHECK(cfg.data_source == "synth");
    CHECK(cfg.data_idx_path.empty());
    CHECK(cfg.model_axis == 1);
    CHECK(cfg.model_latent_dim == 10);
    CHECK(cfg.model_enc_channels == std::vector<int>{16, 32});
    CHECK(cfg.model_dec_channels == std::vector<int>{32, 16});
    CHECK(cfg.model_expand_features == 4);
    CHECK(cfg.model_leaky_slope == doctest::Approx(0.2));
    CHECK(cfg.model_beta == 1.0);
    CHECK(cfg.model_latent == 1);
    CHECK(cfg.train_batch_size == 16);
    CHECK(cfg.train_epochs == 30);
    CHECK(cfg.train_lr == doctest::Approx(1e-4));
    CHECK(cfg.train_max_steps == 0);
    CHECK(cfg.train_probe_steps == 200);
    CHECK(cfg.train_band_lo == 5.0);
    CHECK(cfg.train_band_hi == 15.0);
    CHECK(cfg.eval_k_list == std::vector<int>{1, 2, 5, 10});
    CHECK(cfg.eval_method == "cvae");
    CHECK(cfg.eval_montage_examples == 4);
    CHECK(cfg.eval_ridge == doctest::Approx(1e-6));
}

TEST_CASE("values are parsed per their schema type") {
    RunConfig cfg = parse_config(
        "model.latent_dim=10\n"
        "train.lr=3e-2\n"
        "eval.k_list=1, 3 ,7\n"
        "data.source=idx\n"
        "data.idx_path=images.idx\n"
        "model.enc_channels=2,4\n");
    CHECK(cfg.model_latent_dim == 10);
    CHECK(cfg.train_lr == doctest::Approx(3e-2));
    CHECK(cfg.eval_k_list == std::vector<int>{1, 3, 7});
    CHECK(cfg.data_source == "idx");
    CHECK(cfg.data_idx_path == "images.idx");
    CHECK(cfg.model_enc_channels == std::vector<int>{2, 4});
}

TEST_CASE("comments, blank lines and whitespace are ignored") {
    RunConfig cfg = parse_config(
        "# a full-line comment\n"
        "\n"
        "  train.epochs = 5   # trailing comment\n"
        "\t model.beta =\t0.25 \r\n");
    CHECK(cfg.train_epochs == 5);
    CHECK(cfg.model_beta == 0.25);
}

TEST_CASE("unknown keys are rejected with their line number") {
    CHECK_THROWS_WITH_AS(parse_config("bogus.key=1\n"),
                         "config line 1: unknown key 'bogus.key'", Error);
    CHECK_THROWS_WITH_AS(
        parse_config("model.beta=1\n\ndata.speed=2\n"),
        "config line 3: unknown key 'data.speed'", Error);
}

TEST_CASE("duplicate keys are rejected") {
    CHECK_THROWS_WITH_AS(
        parse_config("train.lr=1e-3\ntrain.lr=1e-2\n"),
        "config line 2: duplicate key 'train.lr'", Error);
}

TEST_CASE("type errors name the key and the offending value") {
    CHECK_THROWS_WITH_AS(
        parse_config("train.epochs=many\n"),
        "config line 1: key 'train.epochs' expects an integer, got 'many'",
        Error);
    CHECK_THROWS_WITH_AS(
        parse_config("model.beta=fast\n"),
        "config line 1: key 'model.beta' expects a number, got 'fast'",
        Error);
    CHECK_THROWS_WITH_AS(
        parse_config("eval.k_list=1,two\n"),
        "config line 1: key 'eval.k_list' expects a comma-separated integer "
        "list, got '1,two'",
        Error);
    CHECK_THROWS_WITH_AS(
        parse_config("train.epochs=\n"),
        "config line 1: key 'train.epochs' expects an integer, got ''", Error);
    // Trailing garbage after a valid prefix is still a type error.
    CHECK_THROWS_WITH_AS(
        parse_config("train.epochs=5x\n"),
        "config line 1: key 'train.epochs' expects an integer, got '5x'",
        Error);
}

TEST_CASE("lines without '=' are rejected") {
    CHECK_THROWS_WITH_AS(parse_config("just words\n"),
                         "config line 1: expected key=value, got 'just words'",
                         Error);
}

TEST_CASE("the dump covers every key and round-trips") {
    RunConfig cfg = parse_config("train.lr=0.05\neval.method=knn\n");
    std::string dump = config_dump(cfg);
    // One line per schema key, each of the four sections present.
    CHECK(dump.find("train.lr=0.05\n") != std::string::npos);
    CHECK(dump.find("eval.method=knn\n") != std::string::npos);
    CHECK(dump.find("data.clips=16\n") != std::string::npos);
    CHECK(dump.find("model.latent_dim=10\n") != std::string::npos);
    RunConfig back = parse_config(dump);
    CHECK(config_dump(back) == dump);
    // Sorted by key.
    std::size_t a = dump.find("data.clips");
    std::size_t b = dump.find("model.axis");
    std::size_t c = dump.find("train.band_hi");
    REQUIRE(a != std::string::npos);
    REQUIRE(b != std::string::npos);
    REQUIRE(c != std::string::npos);
    CHECK(a < b);
    CHECK(b < c);
}

TEST_CASE("reordered lines hash identically; changed values do not") {
    std::string fwd = "train.lr=0.01\nmodel.beta=0.5\ndata.clips=8\n";
    std::string rev = "data.clips=8\nmodel.beta=0.5\ntrain.lr=0.01\n";
    CHECK(config_hash(parse_config(fwd)) == config_hash(parse_config(rev)));
    CHECK(config_hash(parse_config(fwd)) !=
          config_hash(parse_config("train.lr=0.02\nmodel.beta=0.5\n"
                                   "data.clips=8\n")));
    // Defaults written explicitly hash the same as defaults left implicit.
    CHECK(config_hash(parse_config("train.epochs=30\n")) ==
          config_hash(parse_config("")));
    // 16 lowercase hex digits.
    std::string h = config_hash(RunConfig{});
    CHECK(h.size() == 16);
    CHECK(h.find_first_not_of("0123456789abcdef") == std::string::npos);
}

TEST_CASE("config files load from disk and missing files are reported") {
    const char* path = "test_config_tmp.cfg";
    {
        std::ofstream out(path, std::ios::binary);
        out << "# toy\ntrain.epochs=3\n";
    }
    RunConfig cfg = load_config(path);
    CHECK(cfg.train_epochs == 3);
    std::remove(path);
    CHECK_THROWS_WITH_AS(load_config("no_such_file.cfg"),
                         "cannot read config 'no_such_file.cfg'", Error);
}
