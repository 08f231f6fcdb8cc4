#include "deproj/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace deproj {

namespace {

constexpr char kMagic[4] = {'D', 'P', 'J', 'K'};
constexpr unsigned char kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

struct Reader {
    const unsigned char* p;
    std::size_t n;
    std::size_t pos = 0;

    void need(std::size_t k, const char* what) {
        if (pos + k > n)
            throw Error(std::string("truncated checkpoint: expected ") + what);
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = static_cast<std::uint32_t>(p[pos]) |
                          (static_cast<std::uint32_t>(p[pos + 1]) << 8) |
                          (static_cast<std::uint32_t>(p[pos + 2]) << 16) |
                          (static_cast<std::uint32_t>(p[pos + 3]) << 24);
        pos += 4;
        return v;
    }
    std::string str(std::size_t k, const char* what) {
        need(k, what);
        std::string s(reinterpret_cast<const char*>(p + pos), k);
        pos += k;
        return s;
    }
};

} // namespace

void Checkpoint::add(std::string name, Tensor t) {
    if (name.empty()) throw Error("checkpoint tensor name must be non-empty");
    if (has(name)) throw Error("duplicate checkpoint tensor name: " + name);
    tensors_.emplace_back(std::move(name), std::move(t));
}

bool Checkpoint::has(const std::string& name) const {
    for (const auto& [n, t] : tensors_)
        if (n == name) return true;
    return false;
}

const Tensor& Checkpoint::at(const std::string& name) const {
    for (const auto& [n, t] : tensors_)
        if (n == name) return t;
    throw Error("checkpoint has no tensor named " + name);
}

Tensor& Checkpoint::at(const std::string& name) {
    for (auto& [n, t] : tensors_)
        if (n == name) return t;
    throw Error("checkpoint has no tensor named " + name);
}

void Checkpoint::set_meta(const std::string& key, std::string value) {
    if (key.empty() || key.find('=') != std::string::npos ||
        key.find('\n') != std::string::npos)
        throw Error("invalid metadata key: " + key);
    if (value.find('\n') != std::string::npos)
        throw Error("metadata value for " + key + " must not contain newlines");
    for (auto& [k, v] : meta_)
        if (k == key) {
            v = std::move(value);
            return;
        }
    meta_.emplace_back(key, std::move(value));
}

bool Checkpoint::has_meta(const std::string& key) const {
    for (const auto& [k, v] : meta_)
        if (k == key) return true;
    return false;
}

const std::string& Checkpoint::meta(const std::string& key) const {
    for (const auto& [k, v] : meta_)
        if (k == key) return v;
    throw Error("checkpoint has no metadata key " + key);
}

void save_checkpoint(const Checkpoint& c, const std::string& path) {
    std::string out;
    out.append(kMagic, 4);
    out.push_back(static_cast<char>(kVersion));
    put_u32(out, static_cast<std::uint32_t>(c.tensors().size()));
    for (const auto& [name, t] : c.tensors()) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.append(name);
        put_u32(out, static_cast<std::uint32_t>(t.rank()));
        for (int e : t.shape()) put_u32(out, static_cast<std::uint32_t>(e));
        for (std::int64_t i = 0; i < t.size(); ++i) {
            std::uint32_t bits;
            float v = t[i];
            std::memcpy(&bits, &v, 4);
            put_u32(out, bits);
        }
    }
    std::string meta;
    for (const auto& [k, v] : c.metadata()) {
        meta += k;
        meta += '=';
        meta += v;
        meta += '\n';
    }
    put_u32(out, static_cast<std::uint32_t>(meta.size()));
    out.append(meta);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot open " + path + " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw Error("failed while writing " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Reader r{reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()};

    r.need(4, "magic");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw Error(path + " is not a checkpoint file (bad magic)");
    r.pos = 4;
    r.need(1, "version");
    unsigned char version = r.p[r.pos++];
    if (version != kVersion)
        throw Error("unsupported checkpoint version " + std::to_string(version));

    Checkpoint c;
    std::uint32_t count = r.u32("tensor count");
    for (std::uint32_t i = 0; i < count; ++i) {
        std::uint32_t name_len = r.u32("name length");
        std::string name = r.str(name_len, "tensor name");
        std::uint32_t rank = r.u32("rank");
        if (rank < 1 || rank > static_cast<std::uint32_t>(kMaxRank))
            throw Error("checkpoint tensor " + name + " has invalid rank " +
                        std::to_string(rank));
        std::vector<int> shape;
        std::int64_t total = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            std::uint32_t e = r.u32("extent");
            shape.push_back(static_cast<int>(e));
            total *= e;
        }
        Tensor t(shape);
        for (std::int64_t j = 0; j < total; ++j) {
            std::uint32_t bits = r.u32("tensor data");
            float v;
            std::memcpy(&v, &bits, 4);
            t[j] = v;
        }
        c.add(std::move(name), std::move(t));
    }
    std::uint32_t meta_len = r.u32("metadata length");
    std::string meta = r.str(meta_len, "metadata");
    if (r.pos != r.n)
        throw Error(path + " has trailing bytes after checkpoint payload");
    std::size_t start = 0;
    while (start < meta.size()) {
        std::size_t nl = meta.find('\n', start);
        if (nl == std::string::npos)
            throw Error("checkpoint metadata is not newline-terminated");
        std::string line = meta.substr(start, nl - start);
        std::size_t eq = line.find('=');
        if (eq == std::string::npos || eq == 0)
            throw Error("malformed checkpoint metadata line: " + line);
        c.set_meta(line.substr(0, eq), line.substr(eq + 1));
        start = nl + 1;
    }
    return c;
}

} // namespace deproj
