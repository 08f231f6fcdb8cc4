#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "deproj/checkpoint.hpp"
#include "deproj/data.hpp"
#include "deproj/projection.hpp"
#include "deproj/tensor.hpp"

using deproj::ClipDataset;
using deproj::PairSet;
using deproj::ProjectionSpec;
using deproj::SynthConfig;
using deproj::Tensor;

namespace {

std::vector<unsigned char> idx_fixture() {
    return {0x00, 0x00, 0x08, 0x02, 0x00, 0x00, 0x00, 0x02,
            0x00, 0x00, 0x00, 0x02, 0x00, 0x7F, 0xFF, 0x00};
}

bool same_clips(const ClipDataset& a, const ClipDataset& b) {
    if (a.clips.size() != b.clips.size()) return false;
    for (std::size_t i = 0; i < a.clips.size(); ++i)
        if (a.clips[i].shape() != b.clips[i].shape() ||
            a.clips[i].vec() != b.clips[i].vec())
            return false;
    return true;
}

} // namespace

TEST_CASE("read_idx parses the reference fixture") {
    Tensor t = deproj::read_idx(idx_fixture());
    REQUIRE(t.shape() == std::vector<int>{2, 2});
    CHECK(t[0] == 0.0f);
    CHECK(t[1] == 127.0f / 255.0f);
    CHECK(t[2] == 1.0f);
    CHECK(t[3] == 0.0f);
}

TEST_CASE("read_idx rejects malformed streams distinctly") {
    auto bad_magic = idx_fixture();
    bad_magic[0] = 0x01;
    CHECK_THROWS_WITH_AS(deproj::read_idx(bad_magic), doctest::Contains("magic"),
                         deproj::Error);

    auto bad_type = idx_fixture();
    bad_type[2] = 0x0D;
    CHECK_THROWS_WITH_AS(deproj::read_idx(bad_type), doctest::Contains("unsupported"),
                         deproj::Error);

    auto short_payload = idx_fixture();
    short_payload.pop_back();
    CHECK_THROWS_WITH_AS(deproj::read_idx(short_payload), doctest::Contains("truncated"),
                         deproj::Error);

    auto long_payload = idx_fixture();
    long_payload.push_back(0x33);
    CHECK_THROWS_WITH_AS(deproj::read_idx(long_payload), doctest::Contains("trailing"),
                         deproj::Error);

    CHECK_THROWS_WITH_AS(deproj::read_idx({0x00, 0x00}), doctest::Contains("truncated"),
                         deproj::Error);
    CHECK_THROWS_WITH_AS(deproj::read_idx({0x00, 0x00, 0x08, 0x02, 0x00, 0x00}),
                         doctest::Contains("truncated"), deproj::Error);

    CHECK_THROWS_AS(deproj::read_idx_file("no_such_file.idx"), deproj::Error);
}

TEST_CASE("builtin glyphs are binary, distinct, nonempty") {
    Tensor g = deproj::builtin_glyphs();
    REQUIRE(g.shape() == std::vector<int>{10, 8, 8});
    for (std::int64_t i = 0; i < g.size(); ++i)
        CHECK((g[i] == 0.0f || g[i] == 1.0f));
    for (int d = 0; d < 10; ++d) {
        float sum = 0;
        for (int i = 0; i < 64; ++i) sum += g[d * 64 + i];
        CHECK(sum > 4.0f);
    }
    for (int a = 0; a < 10; ++a)
        for (int b = a + 1; b < 10; ++b) {
            bool differ = false;
            for (int i = 0; i < 64 && !differ; ++i)
                differ = g[a * 64 + i] != g[b * 64 + i];
            CHECK(differ);
        }
}

TEST_CASE("bounce fold reflects position and flips velocity") {
    int pos = -1, vel = -1;
    deproj::reflect_bounce(pos, vel, 5);
    CHECK(pos == 1);
    CHECK(vel == 1);

    pos = 7, vel = 2;
    deproj::reflect_bounce(pos, vel, 5);
    CHECK(pos == 3);
    CHECK(vel == -2);

    pos = 3, vel = 1;
    deproj::reflect_bounce(pos, vel, 5);
    CHECK(pos == 3);
    CHECK(vel == 1);

    pos = 4, vel = 2;
    deproj::reflect_bounce(pos, vel, 0);
    CHECK(pos == 0);

    // large excursions still fold into range
    for (int p = -40; p <= 40; ++p) {
        int q = p, v = 3;
        deproj::reflect_bounce(q, v, 6);
        CHECK(q >= 0);
        CHECK(q <= 6);
    }
}

TEST_CASE("synthesis is deterministic, in range, correctly shaped") {
    Tensor glyphs = deproj::builtin_glyphs();
    SynthConfig cfg;
    cfg.clip_count = 6;
    cfg.digits = 2;
    cfg.frames = 8;
    cfg.height = 32;
    cfg.width = 32;
    cfg.seed = 99;
    ClipDataset a = deproj::synth_moving_digits(glyphs, cfg);
    ClipDataset b = deproj::synth_moving_digits(glyphs, cfg);
    REQUIRE(a.clips.size() == 6);
    CHECK(same_clips(a, b));
    CHECK(a.config_hash == b.config_hash);
    CHECK(a.seed == 99);

    for (const Tensor& clip : a.clips) {
        CHECK(clip.shape() == std::vector<int>{1, 8, 32, 32});
        float mx = 0;
        for (std::int64_t i = 0; i < clip.size(); ++i) {
            CHECK(clip[i] >= 0.0f);
            CHECK(clip[i] <= 1.0f);
            mx = std::max(mx, clip[i]);
        }
        CHECK(mx == 1.0f); // digits actually drawn
    }

    SynthConfig cfg2 = cfg;
    cfg2.seed = 100;
    CHECK_FALSE(same_clips(a, deproj::synth_moving_digits(glyphs, cfg2)));

    SynthConfig tiny = cfg;
    tiny.height = 4;
    CHECK_THROWS_WITH_AS(deproj::synth_moving_digits(glyphs, tiny),
                         doctest::Contains("exceeds canvas"), deproj::Error);
}

TEST_CASE("static digits make temporal averaging exact") {
    Tensor glyphs = deproj::builtin_glyphs();
    SynthConfig cfg;
    cfg.clip_count = 3;
    cfg.digits = 1;
    cfg.frames = 8;
    cfg.height = 16;
    cfg.width = 16;
    cfg.min_speed = 0;
    cfg.max_speed = 0;
    cfg.seed = 5;
    ClipDataset ds = deproj::synth_moving_digits(glyphs, cfg);
    ProjectionSpec spec;
    spec.axis = 1; // collapse T of [1, T, H, W]
    for (const Tensor& clip : ds.clips) {
        for (int fr = 1; fr < 8; ++fr)
            for (int i = 0; i < 16 * 16; ++i)
                CHECK(clip[fr * 16 * 16 + i] == clip[i]);
        Tensor x = deproj::project(clip, spec);
        REQUIRE(x.shape() == std::vector<int>{1, 16, 16});
        for (int i = 0; i < 16 * 16; ++i) CHECK(x[i] == clip[i]);
    }
}

TEST_CASE("pairs satisfy the projection identity") {
    Tensor glyphs = deproj::builtin_glyphs();
    SynthConfig cfg;
    cfg.clip_count = 10;
    cfg.seed = 7;
    ClipDataset ds = deproj::synth_moving_digits(glyphs, cfg);
    ProjectionSpec spec;
    spec.axis = 1;

    PairSet ps = deproj::make_pairs(ds, spec, 0.0f, 1);
    REQUIRE(ps.pairs.size() == 10);
    for (const auto& p : ps.pairs) {
        Tensor re = deproj::project(p.y, ps.spec);
        CHECK(re.vec() == p.x.vec());
    }

    // one-hot weights select a single frame exactly
    ProjectionSpec onehot;
    onehot.axis = 1;
    onehot.weights.assign(8, 0.0f);
    onehot.weights[3] = 1.0f;
    PairSet sel = deproj::make_pairs(ds, onehot, 0.0f, 1);
    for (std::size_t i = 0; i < sel.pairs.size(); ++i) {
        const Tensor& y = sel.pairs[i].y;
        const Tensor& x = sel.pairs[i].x;
        for (int j = 0; j < 32 * 32; ++j) CHECK(x[j] == y[3 * 32 * 32 + j]);
    }

    // translation augmentation preserves the identity and the value range
    PairSet tp = deproj::make_pairs(ds, spec, 0.0f, 2, true);
    PairSet tp2 = deproj::make_pairs(ds, spec, 0.0f, 2, true);
    bool moved = false;
    for (std::size_t i = 0; i < tp.pairs.size(); ++i) {
        const auto& p = tp.pairs[i];
        CHECK(deproj::project(p.y, spec).vec() == p.x.vec());
        CHECK(tp2.pairs[i].y.vec() == p.y.vec());
        for (std::int64_t j = 0; j < p.y.size(); ++j) {
            CHECK(p.y[j] >= 0.0f);
            CHECK(p.y[j] <= 1.0f);
        }
        moved = moved || p.y.vec() != ds.clips[i].vec();
    }
    CHECK(moved);
}

TEST_CASE("pair noise magnitude matches the half-normal mean") {
    Tensor glyphs = deproj::builtin_glyphs();
    SynthConfig cfg;
    cfg.clip_count = 10;
    cfg.seed = 11;
    ClipDataset ds = deproj::synth_moving_digits(glyphs, cfg);
    ProjectionSpec spec;
    spec.axis = 1;
    PairSet clean = deproj::make_pairs(ds, spec, 0.0f, 3);
    PairSet noisy = deproj::make_pairs(ds, spec, 0.1f, 3);

    double sum_abs = 0.0;
    std::int64_t n = 0;
    for (std::size_t i = 0; i < clean.pairs.size(); ++i) {
        const Tensor& a = clean.pairs[i].x;
        const Tensor& b = noisy.pairs[i].x;
        for (std::int64_t j = 0; j < a.size(); ++j) {
            sum_abs += std::abs(static_cast<double>(b[j]) - static_cast<double>(a[j]));
            ++n;
        }
    }
    REQUIRE(n >= 1000);
    double mean_abs = sum_abs / static_cast<double>(n);
    double expected = 0.1 * std::sqrt(2.0 / 3.14159265358979323846);
    double se = 0.1 * std::sqrt(1.0 - 2.0 / 3.14159265358979323846) /
                std::sqrt(static_cast<double>(n));
    CHECK(std::abs(mean_abs - expected) < 3.0 * se);

    CHECK_THROWS_AS(deproj::make_pairs(ds, spec, -0.5f, 3), deproj::Error);
}

TEST_CASE("split is deterministic, proportional, and partitions the set") {
    Tensor glyphs = deproj::builtin_glyphs();
    SynthConfig cfg;
    cfg.clip_count = 10;
    cfg.seed = 21;
    ClipDataset ds = deproj::synth_moving_digits(glyphs, cfg);

    deproj::SplitResult s = deproj::split(ds, 0.8, 0.1, 0.1, 17);
    CHECK(s.train.clips.size() == 8);
    CHECK(s.val.clips.size() == 1);
    CHECK(s.test.clips.size() == 1);

    deproj::SplitResult s2 = deproj::split(ds, 0.8, 0.1, 0.1, 17);
    CHECK(same_clips(s.train, s2.train));
    CHECK(same_clips(s.val, s2.val));
    CHECK(same_clips(s.test, s2.test));

    // union of parts is the original multiset
    std::vector<std::vector<float>> orig, parts;
    for (const auto& c : ds.clips) orig.push_back(c.vec());
    for (const auto& c : s.train.clips) parts.push_back(c.vec());
    for (const auto& c : s.val.clips) parts.push_back(c.vec());
    for (const auto& c : s.test.clips) parts.push_back(c.vec());
    std::sort(orig.begin(), orig.end());
    std::sort(parts.begin(), parts.end());
    CHECK(orig == parts);

    CHECK_THROWS_AS(deproj::split(ds, 0.5, 0.2, 0.2, 1), deproj::Error);
    CHECK_THROWS_AS(deproj::split(ds, 1.0, -0.5, 0.5, 1), deproj::Error);
    SynthConfig small = cfg;
    small.clip_count = 5;
    ClipDataset five = deproj::synth_moving_digits(glyphs, small);
    CHECK_THROWS_WITH_AS(deproj::split(five, 0.9, 0.05, 0.05, 1),
                         doctest::Contains("empty"), deproj::Error);
}

TEST_CASE("dataset persistence round-trips") {
    Tensor glyphs = deproj::builtin_glyphs();
    SynthConfig cfg;
    cfg.clip_count = 4;
    cfg.frames = 3;
    cfg.height = 16;
    cfg.width = 16;
    cfg.seed = 31;
    ClipDataset ds = deproj::synth_moving_digits(glyphs, cfg);
    const std::string path = "data_test_dataset.dpjk";
    deproj::save_dataset(ds, path);
    ClipDataset back = deproj::load_dataset(path);
    CHECK(same_clips(ds, back));
    CHECK(back.seed == ds.seed);
    CHECK(back.config_hash == ds.config_hash);

    deproj::Checkpoint c;
    c.add("t", Tensor({1}, {1}));
    deproj::save_checkpoint(c, "data_test_notadataset.dpjk");
    CHECK_THROWS_AS(deproj::load_dataset("data_test_notadataset.dpjk"), deproj::Error);
}
