#include <doctest.h>

#include <cmath>

#include "palign/alignment.hpp"
#include "palign/errors.hpp"
#include "palign/retrieval.hpp"
#include "palign/rng.hpp"

using namespace palign;
using namespace palign::retrieval;
using alignment::ContrastiveConfig;
using dataset::CorpusConfig;
using dataset::PairedCorpus;
using encoders::AlignmentModel;
using encoders::ModelConfig;
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

// Loop-based mAP oracle, independent of eval_retrieval's code path.
double oracle_map(const Tensor& queries, const Tensor& gallery,
                  const std::vector<std::size_t>& qlabels,
                  const std::vector<std::size_t>& glabels, bool exclude_self) {
    double ap_sum = 0.0;
    for (std::size_t q = 0; q < queries.dims[0]; ++q) {
        std::vector<std::pair<double, std::size_t>> scored;
        for (std::size_t g = 0; g < gallery.dims[0]; ++g) {
            if (exclude_self && g == q) continue;
            double s = 0.0;
            for (std::size_t k = 0; k < queries.dims[1]; ++k)
                s += queries.at(q, k) * gallery.at(g, k);
            scored.emplace_back(s, g);
        }
        std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        std::size_t relevant = 0, hits = 0;
        for (const auto& [s, g] : scored) relevant += (glabels[g] == qlabels[q]);
        double ap = 0.0;
        for (std::size_t k = 0; k < scored.size(); ++k) {
            if (glabels[scored[k].second] == qlabels[q]) {
                ++hits;
                ap += static_cast<double>(hits) / static_cast<double>(k + 1);
            }
        }
        ap_sum += ap / static_cast<double>(relevant);
    }
    return ap_sum / static_cast<double>(queries.dims[0]);
}

CorpusConfig tiny_corpus_config() {
    CorpusConfig cfg;
    cfg.categories = 4;
    cfg.audio_categories = 2;
    cfg.train_per_category = 8;
    cfg.test_per_category = 4;
    cfg.points = 24;
    cfg.latent_dim = 6;
    cfg.image_dim = 10;
    cfg.text_dim = 10;
    cfg.audio_dim = 10;
    cfg.templates = 8;
    return cfg;
}

AlignmentModel tiny_model(const CorpusConfig& c, std::uint64_t corpus_seed,
                          std::uint64_t model_seed) {
    ModelConfig m;
    m.hidden = 16;
    m.raw_dim = 16;
    m.embed_dim = 12;
    return AlignmentModel::init(m, c.latent_dim, c.image_dim, c.text_dim, c.audio_dim, corpus_seed,
                                model_seed);
}

} // namespace

TEST_SUITE_BEGIN("retrieval");

TEST_CASE("cosine_sim_matrix on basis rows is the identity") {
    Tensor basis({3, 3});
    for (int i = 0; i < 3; ++i) basis.at(i, i) = 1.0;
    Tensor s = cosine_sim_matrix(basis, basis);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(s.at(i, j) == (i == j ? 1.0 : 0.0));
}

TEST_CASE("cosine_sim_matrix matches a loop oracle") {
    SplitRng rng(307);
    Tensor q = random_unit_rows(5, 7, rng);
    Tensor g = random_unit_rows(9, 7, rng);
    Tensor s = cosine_sim_matrix(q, g);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(s.at(i, 0) <= 1.0 + 1e-12);
        for (std::size_t j = 0; j < 9; ++j) {
            double expect = 0.0;
            for (std::size_t k = 0; k < 7; ++k) expect += q.at(i, k) * g.at(j, k);
            CHECK(std::abs(s.at(i, j) - expect) <= 1e-12);
        }
    }
    CHECK(cosine_sim_matrix(q, q).at(2, 2) == doctest::Approx(1.0).epsilon(1e-12));
    Tensor bad = q;
    bad.at(0, 0) += 0.5;
    CHECK_THROWS_AS(cosine_sim_matrix(bad, g), NotNormalized);
}

TEST_CASE("rank_scores ordering and tie-breaks") {
    std::vector<double> a{0.1, 0.9, 0.5};
    CHECK(rank_scores(a) == std::vector<std::size_t>{1, 2, 0});
    std::vector<double> equal{0.3, 0.3, 0.3, 0.3};
    CHECK(rank_scores(equal) == std::vector<std::size_t>{0, 1, 2, 3});
    std::vector<double> tie{0.9, 0.1, 0.9};
    CHECK(rank_scores(tie) == std::vector<std::size_t>{0, 2, 1});
}

TEST_CASE("average_precision hand values") {
    CHECK(average_precision({1, 1, 0}) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(average_precision({1, 0, 1, 1}) ==
          doctest::Approx((1.0 + 2.0 / 3.0 + 3.0 / 4.0) / 3.0).epsilon(1e-15));
    CHECK(average_precision({0, 0, 1}) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK_THROWS_AS(average_precision({0, 0, 0}), NoRelevantItems);
}

TEST_CASE("average_precision is 1 iff relevant items lead") {
    CHECK(average_precision({1, 1, 1, 0, 0}) == 1.0);
    CHECK(average_precision({1, 0, 1}) < 1.0);
}

TEST_CASE("zero_shot_classify") {
    Tensor heads({3, 4});
    heads.at(0, 0) = 1.0;
    heads.at(1, 1) = 1.0;
    heads.at(2, 2) = 1.0;

    SUBCASE("argmax over similarities") {
        Tensor q = numcore::l2_normalize(Tensor::vector({0.2, 0.9, 0.5, 0.0}));
        CHECK(zero_shot_classify(q, heads) == 1);
    }
    SUBCASE("query equal to a head picks that head") {
        CHECK(zero_shot_classify(heads.row(2), heads) == 2);
    }
    SUBCASE("prediction invariant to positive rescaling before normalization") {
        Tensor raw = Tensor::vector({0.3, 0.1, 0.8, 0.2});
        std::size_t base = zero_shot_classify(numcore::l2_normalize(raw), heads);
        for (double alpha : {0.01, 3.0, 1000.0}) {
            Tensor scaled = raw;
            for (double& v : scaled.data) v *= alpha;
            CHECK(zero_shot_classify(numcore::l2_normalize(scaled), heads) == base);
        }
    }
    SUBCASE("ties resolve to the lowest class index") {
        Tensor q = numcore::l2_normalize(Tensor::vector({1.0, 1.0, 0.0, 0.0}));
        CHECK(zero_shot_classify(q, heads) == 0);
    }
    SUBCASE("validation") {
        Tensor unnorm = Tensor::vector({0.2, 0.9, 0.5, 0.0});
        CHECK_THROWS_AS(zero_shot_classify(unnorm, heads), NotNormalized);
        Tensor one_head({1, 4});
        one_head.at(0, 0) = 1.0;
        CHECK_THROWS_AS(zero_shot_classify(heads.row(0), one_head), ConfigInvalid);
    }
}

TEST_CASE("compose_embeddings") {
    Tensor e1 = Tensor::vector({1, 0, 0, 0});
    Tensor e2 = Tensor::vector({0, 1, 0, 0});
    Tensor c = compose_embeddings(e1, e2);
    CHECK(c[0] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
    CHECK(c[1] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
    CHECK(c[2] == 0.0);

    SUBCASE("composing with itself keeps the direction") {
        Tensor cc = compose_embeddings(e1, e1);
        for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(cc[i] - e1[i]) <= 1e-12);
    }
    SUBCASE("commutative") {
        SplitRng rng(311);
        Tensor a = random_unit_rows(1, 6, rng).row(0);
        Tensor b = random_unit_rows(1, 6, rng).row(0);
        CHECK(compose_embeddings(a, b) == compose_embeddings(b, a));
    }
    SUBCASE("cancellation") {
        Tensor neg = e1;
        for (double& v : neg.data) v = -v;
        CHECK_THROWS_AS(compose_embeddings(e1, neg), NearZeroNorm);
    }
}

TEST_CASE("eval_retrieval equals the loop oracle on random galleries") {
    SplitRng rng(313);
    CorpusConfig ccfg = tiny_corpus_config();
    PairedCorpus corpus = generate_corpus(ccfg, 41);
    AlignmentModel model = tiny_model(ccfg, 41, 2);

    TestEmbeddings emb = embed_test_split(model, corpus);
    for (Direction d : kAllDirections) {
        RetrievalResult r = eval_retrieval(model, corpus, d);
        const Tensor* q = nullptr;
        const Tensor* g = nullptr;
        bool self = false;
        switch (d) {
            case Direction::ThreeDToThreeD: q = &emb.points; g = &emb.points; self = true; break;
            case Direction::TwoDToThreeD: q = &emb.images; g = &emb.points; break;
            case Direction::ThreeDToTwoD: q = &emb.points; g = &emb.images; break;
            case Direction::TextToThreeD: q = &emb.text; g = &emb.points; break;
        }
        double expect = oracle_map(*q, *g, emb.labels, emb.labels, self);
        CHECK(std::abs(r.map - expect) <= 1e-12);
        CHECK(r.map >= 0.0);
        CHECK(r.map <= 1.0);
        for (const auto& scores : r.scores)
            for (std::size_t k = 1; k < scores.size(); ++k) CHECK(scores[k - 1] >= scores[k]);
    }
}

TEST_CASE("untrained cross-modal retrieval sits near chance") {
    // Only the cross-modal directions: untrained 3d->3d clusters by raw
    // geometry alone and lands far above the class prior.
    CorpusConfig ccfg = tiny_corpus_config();
    ccfg.categories = 8;
    ccfg.audio_categories = 4;
    ccfg.test_per_category = 8;
    PairedCorpus corpus = generate_corpus(ccfg, 7);
    AlignmentModel model = tiny_model(ccfg, 7, 9);
    for (Direction d : {Direction::TwoDToThreeD, Direction::ThreeDToTwoD, Direction::TextToThreeD}) {
        double chance = analytic_chance_map(corpus, d);
        RetrievalResult r = eval_retrieval(model, corpus, d);
        CHECK(std::abs(r.map - chance) <= 0.1);
    }
}

TEST_CASE("noiseless corpus with a converged model retrieves perfectly") {
    // The degenerate limit: zero modality noise, zero jitter, and one
    // canonical cloud per category, so every sample of a category is
    // bit-identical and embeddings collapse to one point per category.
    CorpusConfig ccfg = tiny_corpus_config();
    ccfg.noise_sigma = 0.0;
    ccfg.point_jitter_sigma = 0.0;
    PairedCorpus corpus = generate_corpus(ccfg, 47);
    for (auto& sample : corpus.samples) {
        std::size_t canonical = sample.category * (ccfg.train_per_category + ccfg.test_per_category);
        sample.points = corpus.samples[canonical].points;
    }
    AlignmentModel model = tiny_model(ccfg, 47, 5);
    ContrastiveConfig tcfg;
    tcfg.epochs = 300;
    tcfg.batch_size = 8;
    tcfg.optimizer.lr = 0.01;
    tcfg.optimizer.weight_decay = 0.0;
    alignment::train(corpus, model, tcfg, 3);

    for (Direction d : kAllDirections) {
        RetrievalResult r = eval_retrieval(model, corpus, d);
        CHECK(r.map == doctest::Approx(1.0).epsilon(1e-9));
    }
    ZeroShotResult zs = eval_zero_shot(model, corpus, ccfg.templates);
    CHECK(zs.accuracy == 1.0);
}

TEST_CASE("analytic chance matches balanced label counts") {
    CorpusConfig ccfg = tiny_corpus_config();
    PairedCorpus corpus = generate_corpus(ccfg, 53);
    // 4 categories x 4 test items: R/M = 4/16 cross-modal, 3/15 self-excluded.
    CHECK(analytic_chance_map(corpus, Direction::TwoDToThreeD) == doctest::Approx(0.25));
    CHECK(analytic_chance_map(corpus, Direction::ThreeDToThreeD) == doctest::Approx(3.0 / 15.0));
}

TEST_SUITE_END();
