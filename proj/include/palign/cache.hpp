#pragma once

#include <cstddef>
#include <filesystem>
#include <utility>
#include <vector>

#include "palign/tensor.hpp"

namespace palign::cache {

using numcore::Tensor;

/// Training-free key/value feature bank. Keys are unit rows; values are the
/// bank features as given (identical to the keys when the bank is built
/// from normalized embeddings).
struct CacheModel {
    Tensor keys;   // M x C, unit rows
    Tensor values; // M x C
    std::size_t k = 3;
    double beta = 5.0;
    double gamma = 0.5;

    std::size_t size() const { return keys.ndim() == 2 ? keys.dims[0] : 0; }
    void validate() const;
};

/// Stores the features as both keys (normalized) and values; no fitting.
CacheModel build_cache(const Tensor& features, std::size_t k, double beta, double gamma);

/// The k highest-similarity (index, cosine) pairs for a unit query, ties
/// resolved toward the lower index, ordered by the same rule.
std::vector<std::pair<std::size_t, double>> topk_keys(const CacheModel& cache, const Tensor& query);

/// Softmax(beta * cos) over the top-k retrieved values, added back onto the
/// query with residual weight gamma, then renormalized. gamma = 0 returns
/// the query unchanged.
Tensor enhance(const CacheModel& cache, const Tensor& query);

void save_cache(const CacheModel& cache, const std::filesystem::path& path);
CacheModel load_cache(const std::filesystem::path& path);

} // namespace palign::cache
