#include "deproj/config.hpp"

#include <algorithm>
#include <climits>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <variant>

#include "deproj/hash.hpp"
#include "deproj/tensor.hpp"

namespace deproj {
namespace {

using IntField = int RunConfig::*;
using FloatField = double RunConfig::*;
using StringField = std::string RunConfig::*;
using ListField = std::vector<int> RunConfig::*;
using Field = std::variant<IntField, FloatField, StringField, ListField>;

struct SchemaEntry {
    const char* key;
    Field field;
};

// The published schema: every recognized key with its type and storage.
// Kept sorted by key so the canonical dump can walk it directly.
const SchemaEntry kSchema[] = {
    {"data.clips", &RunConfig::data_clips},
    {"data.digits", &RunConfig::data_digits},
    {"data.frames", &RunConfig::data_frames},
    {"data.height", &RunConfig::data_height},
    {"data.idx_path", &RunConfig::data_idx_path},
    {"data.max_speed", &RunConfig::data_max_speed},
    {"data.min_speed", &RunConfig::data_min_speed},
    {"data.noise_sigma", &RunConfig::data_noise_sigma},
    {"data.source", &RunConfig::data_source},
    {"data.test_ratio", &RunConfig::data_test_ratio},
    {"data.translate", &RunConfig::data_translate},
    {"data.val_ratio", &RunConfig::data_val_ratio},
    {"data.width", &RunConfig::data_width},
    {"eval.k_list", &RunConfig::eval_k_list},
    {"eval.method", &RunConfig::eval_method},
    {"eval.montage_examples", &RunConfig::eval_montage_examples},
    {"eval.ridge", &RunConfig::eval_ridge},
    {"model.axis", &RunConfig::model_axis},
    {"model.beta", &RunConfig::model_beta},
    {"model.dec_channels", &RunConfig::model_dec_channels},
    {"model.enc_channels", &RunConfig::model_enc_channels},
    {"model.expand_features", &RunConfig::model_expand_features},
    {"model.latent", &RunConfig::model_latent},
    {"model.latent_dim", &RunConfig::model_latent_dim},
    {"model.leaky_slope", &RunConfig::model_leaky_slope},
    {"train.band_hi", &RunConfig::train_band_hi},
    {"train.band_lo", &RunConfig::train_band_lo},
    {"train.batch_size", &RunConfig::train_batch_size},
    {"train.epochs", &RunConfig::train_epochs},
    {"train.lr", &RunConfig::train_lr},
    {"train.max_steps", &RunConfig::train_max_steps},
    {"train.probe_steps", &RunConfig::train_probe_steps},
};

const SchemaEntry* find_entry(const std::string& key) {
    for (const SchemaEntry& e : kSchema)
        if (key == e.key) return &e;
    return nullptr;
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool parse_int(const std::string& v, int& out) {
    if (v.empty()) return false;
    char* end = nullptr;
    long n = std::strtol(v.c_str(), &end, 10);
    if (end != v.c_str() + v.size()) return false;
    if (n < INT_MIN || n > INT_MAX) return false;
    out = static_cast<int>(n);
    return true;
}

bool parse_float(const std::string& v, double& out) {
    if (v.empty()) return false;
    char* end = nullptr;
    double d = std::strtod(v.c_str(), &end);
    if (end != v.c_str() + v.size()) return false;
    out = d;
    return true;
}

bool parse_list(const std::string& v, std::vector<int>& out) {
    std::vector<int> vals;
    std::size_t pos = 0;
    while (true) {
        std::size_t comma = v.find(',', pos);
        std::string item = trim(v.substr(pos, comma - pos));
        int n;
        if (!parse_int(item, n)) return false;
        vals.push_back(n);
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    out = std::move(vals);
    return true;
}

[[noreturn]] void bad_value(int line, const std::string& key, const char* want,
                            const std::string& got) {
    throw Error("config line " + std::to_string(line) + ": key '" + key +
                "' expects " + want + ", got '" + got + "'");
}

void assign(RunConfig& cfg, const SchemaEntry& e, const std::string& value,
            int line) {
    if (const IntField* f = std::get_if<IntField>(&e.field)) {
        if (!parse_int(value, cfg.**f))
            bad_value(line, e.key, "an integer", value);
    } else if (const FloatField* f = std::get_if<FloatField>(&e.field)) {
        if (!parse_float(value, cfg.**f))
            bad_value(line, e.key, "a number", value);
    } else if (const ListField* f = std::get_if<ListField>(&e.field)) {
        if (!parse_list(value, cfg.**f))
            bad_value(line, e.key, "a comma-separated integer list", value);
    } else {
        cfg.*std::get<StringField>(e.field) = value;
    }
}

std::string format(const RunConfig& cfg, const SchemaEntry& e) {
    if (const IntField* f = std::get_if<IntField>(&e.field))
        return std::to_string(cfg.**f);
    if (const FloatField* f = std::get_if<FloatField>(&e.field)) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.9g", cfg.**f);
        return buf;
    }
    if (const ListField* f = std::get_if<ListField>(&e.field)) {
        std::string s;
        for (std::size_t i = 0; i < (cfg.**f).size(); ++i) {
            if (i) s += ',';
            s += std::to_string((cfg.**f)[i]);
        }
        return s;
    }
    return cfg.*std::get<StringField>(e.field);
}

}  // namespace

RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::size_t hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        std::string body = trim(raw);
        if (body.empty()) continue;
        std::size_t eq = body.find('=');
        if (eq == std::string::npos)
            throw Error("config line " + std::to_string(line) +
                        ": expected key=value, got '" + body + "'");
        std::string key = trim(body.substr(0, eq));
        std::string value = trim(body.substr(eq + 1));
        const SchemaEntry* entry = find_entry(key);
        if (!entry)
            throw Error("config line " + std::to_string(line) +
                        ": unknown key '" + key + "'");
        if (!seen.insert(key).second)
            throw Error("config line " + std::to_string(line) +
                        ": duplicate key '" + key + "'");
        assign(cfg, *entry, value, line);
    }
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read config '" + path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str());
}

std::string config_dump(const RunConfig& cfg) {
    std::string out;
    for (const SchemaEntry& e : kSchema) {
        out += e.key;
        out += '=';
        out += format(cfg, e);
        out += '\n';
    }
    return out;
}

std::string config_hash(const RunConfig& cfg) {
    return hex64(fnv1a64(config_dump(cfg)));
}

}  // namespace deproj
