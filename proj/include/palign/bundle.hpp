#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "palign/tensor.hpp"

namespace palign::numcore {

/// On-disk container shared by checkpoints, corpora and cache banks: a
/// UTF-8 text manifest (meta key/value lines plus per-tensor name, offset,
/// byte size and dims) followed by a blob section of concatenated PBT1
/// records. Entry order is preserved, so identical content saves to
/// identical bytes.
///
///   PALN1
///   meta <key> <value…>
///   tensor <name> <offset> <nbytes> <ndim> <d0> <d1> …
///   blob <blob_bytes>
///   <binary blob section>
struct Bundle {
    std::vector<std::pair<std::string, std::string>> meta;
    std::vector<std::pair<std::string, Tensor>> tensors;

    void set_meta(const std::string& key, const std::string& value);
    std::optional<std::string> find_meta(const std::string& key) const;
    /// FormatError if the key is absent.
    const std::string& meta_at(const std::string& key) const;
    std::uint64_t meta_u64(const std::string& key) const;
    double meta_f64(const std::string& key) const;

    void add(const std::string& name, Tensor t);
    bool has(const std::string& name) const;
    /// FormatError if the tensor is absent.
    const Tensor& tensor_at(const std::string& name) const;

    void save(const std::filesystem::path& path) const;
    static Bundle load(const std::filesystem::path& path);
};

} // namespace palign::numcore
