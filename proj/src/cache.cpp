#include "palign/cache.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "palign/bundle.hpp"
#include "palign/errors.hpp"

namespace palign::cache {

using numcore::Bundle;

void CacheModel::validate() const {
    if (keys.ndim() != 2) throw EmptyBank("cache: no keys");
    if (!values.same_dims(keys)) throw DimMismatch("cache: keys and values must share shape");
    if (k < 1 || k > keys.dims[0]) throw BadK("cache: k must lie in [1, bank size]");
    if (beta <= 0.0) throw ConfigInvalid("cache: beta must be positive");
    if (gamma < 0.0) throw ConfigInvalid("cache: gamma must be non-negative");
    for (std::size_t i = 0; i < keys.dims[0]; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < keys.dims[1]; ++j) s += keys.at(i, j) * keys.at(i, j);
        if (std::abs(std::sqrt(s) - 1.0) > 1e-6)
            throw NotNormalized("cache: key row " + std::to_string(i));
    }
}

CacheModel build_cache(const Tensor& features, std::size_t k, double beta, double gamma) {
    if (features.ndim() != 2 || features.dims[0] == 0)
        throw EmptyBank("build_cache: features must be a non-empty M x C matrix");
    if (!features.all_finite()) throw DimMismatch("build_cache: non-finite features");
    if (k < 1 || k > features.dims[0])
        throw BadK("build_cache: k=" + std::to_string(k) + " outside [1, " +
                   std::to_string(features.dims[0]) + "]");
    if (beta <= 0.0) throw ConfigInvalid("build_cache: beta must be positive");
    if (gamma < 0.0) throw ConfigInvalid("build_cache: gamma must be non-negative");

    CacheModel cache;
    cache.k = k;
    cache.beta = beta;
    cache.gamma = gamma;
    cache.values = features;
    cache.keys = Tensor({features.dims[0], features.dims[1]});
    for (std::size_t i = 0; i < features.dims[0]; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < features.dims[1]; ++j) s += features.at(i, j) * features.at(i, j);
        double n = std::sqrt(s);
        if (n <= 1e-12) throw NearZeroNorm("build_cache: feature row " + std::to_string(i));
        for (std::size_t j = 0; j < features.dims[1]; ++j)
            cache.keys.at(i, j) = features.at(i, j) / n;
    }
    return cache;
}

namespace {

void require_unit_query(const CacheModel& cache, const Tensor& query) {
    if (query.ndim() != 1 || query.dims[0] != cache.keys.dims[1])
        throw DimMismatch("cache query length must match key dim");
    double n = numcore::l2_norm(query);
    if (std::abs(n - 1.0) > 1e-6) throw NotNormalized("cache query");
}

} // namespace

std::vector<std::pair<std::size_t, double>> topk_keys(const CacheModel& cache, const Tensor& query) {
    cache.validate();
    require_unit_query(cache, query);
    std::size_t m = cache.size();
    std::vector<double> sims(m);
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < query.dims[0]; ++j) s += query.data[j] * cache.keys.at(i, j);
        sims[i] = s;
    }
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return sims[a] > sims[b]; });
    std::vector<std::pair<std::size_t, double>> out;
    out.reserve(cache.k);
    for (std::size_t i = 0; i < cache.k; ++i) out.emplace_back(order[i], sims[order[i]]);
    return out;
}

Tensor enhance(const CacheModel& cache, const Tensor& query) {
    cache.validate();
    require_unit_query(cache, query);
    if (cache.gamma == 0.0) return query;

    auto selected = topk_keys(cache, query);
    double max_logit = -std::numeric_limits<double>::infinity();
    for (const auto& [idx, sim] : selected) max_logit = std::max(max_logit, cache.beta * sim);
    double denom = 0.0;
    std::vector<double> weights(selected.size());
    for (std::size_t i = 0; i < selected.size(); ++i) {
        weights[i] = std::exp(cache.beta * selected[i].second - max_logit);
        denom += weights[i];
    }
    std::size_t c = query.dims[0];
    Tensor out({c});
    for (std::size_t j = 0; j < c; ++j) out.data[j] = query.data[j];
    for (std::size_t i = 0; i < selected.size(); ++i) {
        double w = weights[i] / denom;
        std::size_t row = selected[i].first;
        for (std::size_t j = 0; j < c; ++j) out.data[j] += cache.gamma * w * cache.values.at(row, j);
    }
    return numcore::l2_normalize(out);
}

void save_cache(const CacheModel& cache, const std::filesystem::path& path) {
    cache.validate();
    Bundle b;
    b.set_meta("format", "cache-v1");
    b.set_meta("k", std::to_string(cache.k));
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", cache.beta);
    b.set_meta("beta", buf);
    std::snprintf(buf, sizeof(buf), "%.17g", cache.gamma);
    b.set_meta("gamma", buf);
    b.add("cache.keys", cache.keys);
    b.add("cache.values", cache.values);
    b.save(path);
}

CacheModel load_cache(const std::filesystem::path& path) {
    Bundle b = Bundle::load(path);
    if (b.find_meta("format") != std::optional<std::string>("cache-v1"))
        throw FormatError("not a cache file: " + path.string());
    CacheModel cache;
    cache.k = b.meta_u64("k");
    cache.beta = b.meta_f64("beta");
    cache.gamma = b.meta_f64("gamma");
    cache.keys = b.tensor_at("cache.keys");
    cache.values = b.tensor_at("cache.values");
    cache.validate();
    return cache;
}

} // namespace palign::cache
