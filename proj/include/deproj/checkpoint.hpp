#pragma once

#include <string>
#include <utility>
#include <vector>

#include "deproj/tensor.hpp"

// Binary container for named float tensors plus string metadata. Layout
// (all integers little-endian): magic "DPJK", version byte 1, tensor count
// (u32); per tensor: name length (u32), UTF-8 name, rank (u32), extents
// (u32 each), raw IEEE-754 32-bit values; then metadata byte length (u32)
// followed by UTF-8 "key=value\n" lines. Save/load round-trips bitwise.

namespace deproj {

class Checkpoint {
public:
    void add(std::string name, Tensor t);
    bool has(const std::string& name) const;
    const Tensor& at(const std::string& name) const;
    Tensor& at(const std::string& name);

    void set_meta(const std::string& key, std::string value);
    bool has_meta(const std::string& key) const;
    const std::string& meta(const std::string& key) const;

    const std::vector<std::pair<std::string, Tensor>>& tensors() const { return tensors_; }
    const std::vector<std::pair<std::string, std::string>>& metadata() const {
        return meta_;
    }

private:
    std::vector<std::pair<std::string, Tensor>> tensors_;
    std::vector<std::pair<std::string, std::string>> meta_;
};

void save_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

} // namespace deproj
