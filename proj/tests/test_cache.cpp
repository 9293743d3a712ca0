#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "palign/cache.hpp"
#include "palign/errors.hpp"
#include "palign/rng.hpp"

using namespace palign;
using namespace palign::cache;
using numcore::SplitRng;
using numcore::Tensor;

namespace {

Tensor random_unit_rows(std::size_t n, std::size_t c, SplitRng& rng) {
    Tensor t({n, c});
    for (std::size_t i = 0; i < n; ++i) {
        double norm = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            t.at(i, j) = rng.normal();
            norm += t.at(i, j) * t.at(i, j);
        }
        norm = std::sqrt(norm);
        for (std::size_t j = 0; j < c; ++j) t.at(i, j) /= norm;
    }
    return t;
}

} // namespace

TEST_SUITE_BEGIN("cache");

TEST_CASE("build_cache normalizes keys and keeps values as given") {
    SplitRng rng(401);
    Tensor feats({5, 6});
    for (double& v : feats.data) v = 2.0 * rng.normal();
    CacheModel cache = build_cache(feats, 3, 5.0, 0.5);
    CHECK(cache.values == feats);
    for (std::size_t i = 0; i < 5; ++i) {
        double norm = 0.0;
        for (std::size_t j = 0; j < 6; ++j) norm += cache.keys.at(i, j) * cache.keys.at(i, j);
        CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-12));
    }
    CacheModel again = build_cache(feats, 3, 5.0, 0.5);
    CHECK(again.keys == cache.keys);
    CHECK(again.values == cache.values);
}

TEST_CASE("bank-size and k boundaries") {
    SplitRng rng(409);
    Tensor one = random_unit_rows(1, 4, rng);
    CacheModel m1 = build_cache(one, 1, 5.0, 0.5);
    CHECK(m1.size() == 1);
    CHECK_THROWS_AS(build_cache(one, 2, 5.0, 0.5), BadK);
    CHECK_THROWS_AS(build_cache(one, 0, 5.0, 0.5), BadK);
    Tensor bank = random_unit_rows(6, 4, rng);
    CacheModel all = build_cache(bank, 6, 5.0, 0.5); // k = M boundary
    Tensor q = random_unit_rows(1, 4, rng).row(0);
    CHECK(topk_keys(all, q).size() == 6);
    CHECK_THROWS_AS(build_cache(bank, 3, 0.0, 0.5), ConfigInvalid);
    CHECK_THROWS_AS(build_cache(bank, 3, 5.0, -0.1), ConfigInvalid);
    Tensor not_matrix({4});
    CHECK_THROWS_AS(build_cache(not_matrix, 1, 5.0, 0.5), EmptyBank);
}

TEST_CASE("gamma = 0 returns the query exactly") {
    SplitRng rng(419);
    Tensor bank = random_unit_rows(8, 5, rng);
    CacheModel cache = build_cache(bank, 3, 5.0, 0.0);
    Tensor q = random_unit_rows(1, 5, rng).row(0);
    CHECK(enhance(cache, q) == q);
}

TEST_CASE("k=1 self-query is a fixed point") {
    SplitRng rng(421);
    Tensor bank = random_unit_rows(8, 5, rng);
    CacheModel cache = build_cache(bank, 1, 5.0, 0.7);
    Tensor q = bank.row(2);
    Tensor out = enhance(cache, q);
    for (std::size_t j = 0; j < 5; ++j) CHECK(std::abs(out[j] - q[j]) <= 1e-12);
}

TEST_CASE("equidistant pair weights are exactly half each") {
    // Keys symmetric about the query; values chosen so the hand result is
    // normalize(q + gamma * (v0 + v1) / 2).
    Tensor feats({2, 3});
    feats.at(0, 0) = 1.0;
    feats.at(1, 1) = 1.0;
    double gamma = 0.8;
    CacheModel cache = build_cache(feats, 2, 5.0, gamma);
    Tensor q = numcore::l2_normalize(Tensor::vector({1.0, 1.0, 0.0}));
    auto top = topk_keys(cache, q);
    REQUIRE(top.size() == 2);
    CHECK(top[0].first == 0); // tie -> lower index first
    CHECK(top[0].second == doctest::Approx(top[1].second).epsilon(1e-15));

    Tensor out = enhance(cache, q);
    Tensor expect = Tensor::vector({q[0] + gamma * 0.5, q[1] + gamma * 0.5, 0.0});
    expect = numcore::l2_normalize(expect);
    for (std::size_t j = 0; j < 3; ++j) CHECK(out[j] == doctest::Approx(expect[j]).epsilon(1e-12));
}

TEST_CASE("top-k selection is monotone in k") {
    SplitRng rng(431);
    Tensor bank = random_unit_rows(12, 6, rng);
    Tensor q = random_unit_rows(1, 6, rng).row(0);
    std::vector<std::size_t> prev;
    for (std::size_t k = 1; k <= 12; ++k) {
        CacheModel cache = build_cache(bank, k, 5.0, 0.5);
        auto top = topk_keys(cache, q);
        REQUIRE(top.size() == k);
        for (std::size_t i = 0; i < prev.size(); ++i) CHECK(top[i].first == prev[i]);
        for (std::size_t i = 1; i < top.size(); ++i) {
            bool ordered = top[i - 1].second > top[i].second ||
                           (top[i - 1].second == top[i].second && top[i - 1].first < top[i].first);
            CHECK(ordered);
        }
        prev.clear();
        for (const auto& [idx, sim] : top) prev.push_back(idx);
    }
}

TEST_CASE("aggregation weights form a probability vector") {
    SplitRng rng(433);
    Tensor bank = random_unit_rows(10, 6, rng);
    CacheModel cache = build_cache(bank, 4, 5.0, 0.5);
    Tensor q = random_unit_rows(1, 6, rng).row(0);
    auto top = topk_keys(cache, q);
    double max_logit = -1e300;
    for (const auto& [idx, sim] : top) max_logit = std::max(max_logit, cache.beta * sim);
    double denom = 0.0;
    std::vector<double> w;
    for (const auto& [idx, sim] : top) {
        w.push_back(std::exp(cache.beta * sim - max_logit));
        denom += w.back();
    }
    double sum = 0.0;
    for (double& wi : w) {
        wi /= denom;
        CHECK(wi >= 0.0);
        sum += wi;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
}

TEST_CASE("enhancement closes the gap to perturbed bank entries") {
    // 3D-side embeddings modeled as perturbed copies of image-bank rows;
    // pulling in retrieved values should not hurt the mean cosine to the
    // paired feature.
    SplitRng rng(439);
    Tensor bank = random_unit_rows(30, 8, rng);
    CacheModel cache = build_cache(bank, 3, 5.0, 0.5);
    double before = 0.0, after = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < 30; i += 2) {
        Tensor noisy({8});
        for (std::size_t j = 0; j < 8; ++j) noisy.data[j] = bank.at(i, j) + 0.25 * rng.normal();
        Tensor q = numcore::l2_normalize(noisy);
        Tensor enhanced = enhance(cache, q);
        before += numcore::dot(q, bank.row(i));
        after += numcore::dot(enhanced, bank.row(i));
        ++n;
    }
    CHECK(after / n >= before / n);
}

TEST_CASE("enhance validates the query") {
    SplitRng rng(443);
    Tensor bank = random_unit_rows(5, 4, rng);
    CacheModel cache = build_cache(bank, 2, 5.0, 0.5);
    Tensor bad = Tensor::vector({0.5, 0.5, 0.0, 0.0});
    CHECK_THROWS_AS(enhance(cache, bad), NotNormalized);
    Tensor wrong_len = numcore::l2_normalize(Tensor::vector({1.0, 1.0, 1.0}));
    CHECK_THROWS_AS(enhance(cache, wrong_len), DimMismatch);
}

TEST_CASE("cache bank round-trips through its file") {
    SplitRng rng(449);
    Tensor bank = random_unit_rows(7, 5, rng);
    CacheModel cache = build_cache(bank, 3, 4.0, 0.25);
    auto path = std::filesystem::temp_directory_path() / "palign_cache_rt.paln";
    save_cache(cache, path);
    CacheModel back = load_cache(path);
    CHECK(back.keys == cache.keys);
    CHECK(back.values == cache.values);
    CHECK(back.k == cache.k);
    CHECK(back.beta == cache.beta);
    CHECK(back.gamma == cache.gamma);
}

TEST_SUITE_END();
