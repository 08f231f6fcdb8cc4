#include "deproj/data.hpp"

#include <cstdio>
#include <fstream>

#include "deproj/checkpoint.hpp"
#include "deproj/hash.hpp"
#include "deproj/rng.hpp"

namespace deproj {

namespace {

// clang-format off
const char* const kGlyphRows[10][8] = {
    {"..####..", ".#....#.", ".#....#.", ".#....#.", ".#....#.", ".#....#.", ".#....#.", "..####.."},
    {"...##...", "..###...", "...##...", "...##...", "...##...", "...##...", "...##...", "..####.."},
    {"..####..", ".#....#.", "......#.", ".....#..", "....#...", "...#....", "..#.....", ".######."},
    {"..####..", ".#....#.", "......#.", "...###..", "......#.", "......#.", ".#....#.", "..####.."},
    {".....#..", "....##..", "...#.#..", "..#..#..", ".#...#..", ".######.", ".....#..", ".....#.."},
    {".######.", ".#......", ".#......", ".#####..", "......#.", "......#.", ".#....#.", "..####.."},
    {"..####..", ".#......", ".#......", ".#####..", ".#....#.", ".#....#.", ".#....#.", "..####.."},
    {".######.", "......#.", ".....#..", "....#...", "...#....", "...#....", "...#....", "...#...."},
    {"..####..", ".#....#.", ".#....#.", "..####..", ".#....#.", ".#....#.", ".#....#.", "..####.."},
    {"..####..", ".#....#.", ".#....#.", "..#####.", "......#.", "......#.", "......#.", "..####.."},
};
// clang-format on

std::string hex_byte(unsigned char b) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "0x%02x", b);
    return buf;
}

} // namespace

std::string SynthConfig::canonical() const {
    return "clips=" + std::to_string(clip_count) + ",digits=" + std::to_string(digits) +
           ",frames=" + std::to_string(frames) + ",height=" + std::to_string(height) +
           ",width=" + std::to_string(width) + ",min_speed=" + std::to_string(min_speed) +
           ",max_speed=" + std::to_string(max_speed) + ",seed=" + std::to_string(seed);
}

Tensor read_idx(const std::vector<unsigned char>& bytes) {
    if (bytes.size() < 4) throw Error("truncated IDX stream: header needs 4 bytes");
    if (bytes[0] != 0 || bytes[1] != 0)
        throw Error("bad IDX magic: leading bytes " + hex_byte(bytes[0]) + " " +
                    hex_byte(bytes[1]) + " (expected zeros)");
    if (bytes[2] != 0x08)
        throw Error("unsupported IDX type byte " + hex_byte(bytes[2]) +
                    " (only 0x08 unsigned byte data is supported)");
    int rank = bytes[3];
    if (rank < 1 || rank > kMaxRank)
        throw Error("unsupported IDX rank " + std::to_string(rank));
    std::size_t pos = 4;
    std::vector<int> shape;
    std::int64_t total = 1;
    for (int d = 0; d < rank; ++d) {
        if (pos + 4 > bytes.size()) throw Error("truncated IDX stream: missing extents");
        std::uint32_t e = (static_cast<std::uint32_t>(bytes[pos]) << 24) |
                          (static_cast<std::uint32_t>(bytes[pos + 1]) << 16) |
                          (static_cast<std::uint32_t>(bytes[pos + 2]) << 8) |
                          static_cast<std::uint32_t>(bytes[pos + 3]);
        pos += 4;
        shape.push_back(static_cast<int>(e));
        total *= e;
    }
    if (static_cast<std::int64_t>(bytes.size() - pos) < total)
        throw Error("truncated IDX payload: declared " + std::to_string(total) +
                    " values, got " + std::to_string(bytes.size() - pos) + " bytes");
    if (static_cast<std::int64_t>(bytes.size() - pos) > total)
        throw Error("IDX stream has trailing bytes after payload");
    Tensor t(shape);
    for (std::int64_t i = 0; i < total; ++i)
        t[i] = static_cast<float>(bytes[pos + static_cast<std::size_t>(i)]) / 255.0f;
    return t;
}

Tensor read_idx_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
    return read_idx(bytes);
}

Tensor builtin_glyphs() {
    Tensor g({10, 8, 8});
    for (int d = 0; d < 10; ++d)
        for (int r = 0; r < 8; ++r)
            for (int c = 0; c < 8; ++c)
                g[(d * 8 + r) * 8 + c] = kGlyphRows[d][r][c] == '#' ? 1.0f : 0.0f;
    return g;
}

void reflect_bounce(int& pos, int& vel, int limit) {
    if (limit <= 0) {
        pos = 0;
        return;
    }
    while (pos < 0 || pos > limit) {
        if (pos < 0) {
            pos = -pos;
            vel = -vel;
        } else {
            pos = 2 * limit - pos;
            vel = -vel;
        }
    }
}

ClipDataset synth_moving_digits(const Tensor& glyphs, const SynthConfig& cfg) {
    if (glyphs.rank() != 3)
        throw Error("glyphs must have shape [count, h, w], got " + shape_str(glyphs.shape()));
    int ng = glyphs.extent(0), gh = glyphs.extent(1), gw = glyphs.extent(2);
    if (gh > cfg.height || gw > cfg.width)
        throw Error("glyph " + std::to_string(gh) + "x" + std::to_string(gw) +
                    " exceeds canvas " + std::to_string(cfg.height) + "x" +
                    std::to_string(cfg.width));
    if (cfg.frames < 1) throw Error("frames must be >= 1");
    if (cfg.digits < 1) throw Error("digits per clip must be >= 1");
    if (cfg.clip_count < 1) throw Error("clip count must be >= 1");
    if (cfg.min_speed < 0 || cfg.max_speed < cfg.min_speed)
        throw Error("speed range must satisfy 0 <= min <= max");
    for (std::int64_t i = 0; i < glyphs.size(); ++i)
        if (glyphs[i] < 0.0f || glyphs[i] > 1.0f)
            throw Error("glyph values must lie in [0,1]");

    ClipDataset ds;
    ds.seed = cfg.seed;
    ds.config_hash = hex64(fnv1a64(cfg.canonical()));
    ds.clips.reserve(static_cast<std::size_t>(cfg.clip_count));
    int limit_y = cfg.height - gh, limit_x = cfg.width - gw;

    for (int ci = 0; ci < cfg.clip_count; ++ci) {
        Rng rng = stream_rng(cfg.seed, Stream::data, static_cast<std::uint64_t>(ci));
        struct Digit {
            int glyph, py, px, vy, vx;
        };
        std::vector<Digit> digits;
        // fixed draw order per digit: glyph, y, x, speed_y, sign_y, speed_x, sign_x
        for (int d = 0; d < cfg.digits; ++d) {
            Digit dg;
            dg.glyph = rng.next_int(0, ng - 1);
            dg.py = rng.next_int(0, limit_y);
            dg.px = rng.next_int(0, limit_x);
            int sy = rng.next_int(cfg.min_speed, cfg.max_speed);
            dg.vy = rng.next_int(0, 1) ? sy : -sy;
            int sx = rng.next_int(cfg.min_speed, cfg.max_speed);
            dg.vx = rng.next_int(0, 1) ? sx : -sx;
            digits.push_back(dg);
        }
        Tensor clip({1, cfg.frames, cfg.height, cfg.width});
        for (int fr = 0; fr < cfg.frames; ++fr) {
            float* frame = clip.data() +
                           static_cast<std::int64_t>(fr) * cfg.height * cfg.width;
            for (const Digit& dg : digits) {
                const float* gsrc = glyphs.data() + static_cast<std::int64_t>(dg.glyph) * gh * gw;
                for (int r = 0; r < gh; ++r) {
                    float* row = frame + static_cast<std::int64_t>(dg.py + r) * cfg.width + dg.px;
                    for (int c = 0; c < gw; ++c)
                        if (gsrc[r * gw + c] > row[c]) row[c] = gsrc[r * gw + c];
                }
            }
            for (Digit& dg : digits) {
                dg.py += dg.vy;
                reflect_bounce(dg.py, dg.vy, limit_y);
                dg.px += dg.vx;
                reflect_bounce(dg.px, dg.vx, limit_x);
            }
        }
        ds.clips.push_back(std::move(clip));
    }
    return ds;
}

namespace {

Tensor shift_image_axes(const Tensor& y, int dy, int dx) {
    const auto& s = y.shape();
    int r = y.rank();
    if (r < 3) throw Error("clip must have rank >= 3 to shift, got " + shape_str(s));
    int H = s[static_cast<std::size_t>(r - 2)], W = s[static_cast<std::size_t>(r - 1)];
    std::int64_t outer = y.size() / (static_cast<std::int64_t>(H) * W);
    Tensor out(s);
    for (std::int64_t o = 0; o < outer; ++o) {
        const float* src = y.data() + o * H * W;
        float* dst = out.data() + o * H * W;
        for (int row = 0; row < H; ++row) {
            int sr = row - dy;
            if (sr < 0 || sr >= H) continue;
            for (int col = 0; col < W; ++col) {
                int sc = col - dx;
                if (sc < 0 || sc >= W) continue;
                dst[row * W + col] = src[sr * W + sc];
            }
        }
    }
    return out;
}

} // namespace

PairSet make_pairs(const ClipDataset& ds, const ProjectionSpec& spec, float noise_sigma,
                   std::uint64_t seed, bool translate) {
    if (noise_sigma < 0.0f) throw Error("noise sigma must be >= 0");
    PairSet ps;
    ps.spec = spec;
    ps.pairs.reserve(ds.clips.size());
    for (std::size_t i = 0; i < ds.clips.size(); ++i) {
        Rng rng = stream_rng(seed, Stream::pairs, i);
        Pair p;
        p.y = ds.clips[i];
        if (translate) {
            int dy = rng.next_int(-2, 2);
            int dx = rng.next_int(-2, 2);
            p.y = shift_image_axes(p.y, dy, dx);
        }
        p.x = project(p.y, spec);
        if (noise_sigma > 0.0f)
            for (std::int64_t j = 0; j < p.x.size(); ++j)
                p.x[j] += static_cast<float>(noise_sigma * rng.next_gaussian());
        ps.pairs.push_back(std::move(p));
    }
    return ps;
}

SplitResult split(const ClipDataset& ds, double train_ratio, double val_ratio,
                  double test_ratio, std::uint64_t seed) {
    if (train_ratio <= 0 || val_ratio <= 0 || test_ratio <= 0)
        throw Error("split ratios must be positive");
    double sum = train_ratio + val_ratio + test_ratio;
    if (sum < 1.0 - 1e-9 || sum > 1.0 + 1e-9)
        throw Error("split ratios must sum to 1, got " + std::to_string(sum));
    std::size_t n = ds.clips.size();
    auto n_val = static_cast<std::size_t>(val_ratio * static_cast<double>(n));
    auto n_test = static_cast<std::size_t>(test_ratio * static_cast<double>(n));
    if (n_val + n_test > n) throw Error("split sizes exceed dataset size");
    std::size_t n_train = n - n_val - n_test;
    if (n_train == 0 || n_val == 0 || n_test == 0)
        throw Error("split of " + std::to_string(n) + " clips leaves a part empty (" +
                    std::to_string(n_train) + "/" + std::to_string(n_val) + "/" +
                    std::to_string(n_test) + ")");

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng = stream_rng(seed, Stream::shuffle);
    for (std::size_t i = n - 1; i > 0; --i) {
        auto j = static_cast<std::size_t>(rng.next_int(0, static_cast<int>(i)));
        std::swap(order[i], order[j]);
    }

    SplitResult out;
    auto fill = [&](ClipDataset& part, std::size_t from, std::size_t count) {
        part.seed = ds.seed;
        part.config_hash = ds.config_hash;
        part.clips.reserve(count);
        for (std::size_t i = 0; i < count; ++i) part.clips.push_back(ds.clips[order[from + i]]);
    };
    fill(out.train, 0, n_train);
    fill(out.val, n_train, n_val);
    fill(out.test, n_train + n_val, n_test);
    return out;
}

void save_dataset(const ClipDataset& ds, const std::string& path) {
    Checkpoint c;
    c.set_meta("kind", "dataset");
    c.set_meta("count", std::to_string(ds.clips.size()));
    c.set_meta("seed", std::to_string(ds.seed));
    c.set_meta("config_hash", ds.config_hash);
    for (std::size_t i = 0; i < ds.clips.size(); ++i)
        c.add("clip/" + std::to_string(i), ds.clips[i]);
    save_checkpoint(c, path);
}

ClipDataset load_dataset(const std::string& path) {
    Checkpoint c = load_checkpoint(path);
    if (!c.has_meta("kind") || c.meta("kind") != "dataset")
        throw Error(path + " is not a dataset file");
    ClipDataset ds;
    ds.seed = std::stoull(c.meta("seed"));
    ds.config_hash = c.meta("config_hash");
    std::size_t count = std::stoull(c.meta("count"));
    ds.clips.reserve(count);
    for (std::size_t i = 0; i < count; ++i) ds.clips.push_back(c.at("clip/" + std::to_string(i)));
    return ds;
}

} // namespace deproj
