#include "palign/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "palign/errors.hpp"

namespace palign::retrieval {

using encoders::Modality;
using numcore::SplitRng;

const char* direction_name(Direction d) {
    switch (d) {
        case Direction::ThreeDToThreeD: return "3d->3d";
        case Direction::TwoDToThreeD: return "2d->3d";
        case Direction::ThreeDToTwoD: return "3d->2d";
        case Direction::TextToThreeD: return "text->3d";
    }
    return "?";
}

Direction direction_from_name(const std::string& name) {
    for (Direction d : kAllDirections)
        if (name == direction_name(d)) return d;
    throw ConfigInvalid("unknown retrieval direction '" + name + "'");
}

namespace {

void require_unit_rows(const Tensor& m, const char* who) {
    if (m.ndim() != 2) throw DimMismatch(std::string(who) + ": expected a 2-D matrix");
    for (std::size_t i = 0; i < m.dims[0]; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < m.dims[1]; ++j) s += m.at(i, j) * m.at(i, j);
        if (std::abs(std::sqrt(s) - 1.0) > 1e-6)
            throw NotNormalized(std::string(who) + ": row " + std::to_string(i));
    }
}

} // namespace

void Gallery::validate() const {
    require_unit_rows(embeddings, "gallery");
    if (labels.size() != embeddings.dims[0])
        throw DimMismatch("gallery: labels length must equal row count");
}

Tensor cosine_sim_matrix(const Tensor& queries, const Tensor& gallery) {
    require_unit_rows(queries, "cosine_sim_matrix queries");
    require_unit_rows(gallery, "cosine_sim_matrix gallery");
    if (queries.dims[1] != gallery.dims[1])
        throw DimMismatch("cosine_sim_matrix: embedding dims disagree");
    Tensor out({queries.dims[0], gallery.dims[0]});
    for (std::size_t i = 0; i < queries.dims[0]; ++i)
        for (std::size_t j = 0; j < gallery.dims[0]; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < queries.dims[1]; ++k)
                s += queries.at(i, k) * gallery.at(j, k);
            out.at(i, j) = s;
        }
    return out;
}

std::vector<std::size_t> rank_scores(std::span<const double> scores) {
    for (double s : scores)
        if (!std::isfinite(s)) throw DimMismatch("rank_scores: non-finite score");
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return idx;
}

double average_precision(const std::vector<int>& ranked_relevance) {
    std::size_t relevant = 0;
    for (int r : ranked_relevance) relevant += (r != 0);
    if (relevant == 0) throw NoRelevantItems("average_precision: no relevant items in the list");
    double sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t k = 0; k < ranked_relevance.size(); ++k) {
        if (ranked_relevance[k] != 0) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(k + 1);
        }
    }
    return sum / static_cast<double>(relevant);
}

TestEmbeddings embed_test_split(const AlignmentModel& model, const PairedCorpus& corpus) {
    if (corpus.test_idx.empty()) throw EmptySplit("corpus has no test split");
    TestEmbeddings out;
    std::size_t t = corpus.test_idx.size();
    std::size_t c = model.embed_dim;

    std::vector<const Tensor*> clouds(t);
    for (std::size_t i = 0; i < t; ++i) clouds[i] = &corpus.samples[corpus.test_idx[i]].points;
    Tensor stacked = encoders::stack_clouds(clouds);
    out.points = encoders::embed_point_batch(model, stacked, corpus.config.points);

    alignment::AnchorBank bank = alignment::compute_anchor_bank(model, corpus);
    out.images = Tensor({t, c});
    out.text = Tensor({t, c});
    out.labels.resize(t);
    for (std::size_t i = 0; i < t; ++i) {
        std::size_t sample = corpus.test_idx[i];
        std::size_t cat = corpus.samples[sample].category;
        out.labels[i] = cat;
        for (std::size_t j = 0; j < c; ++j) {
            out.images.at(i, j) = bank.image.at(sample, j);
            out.text.at(i, j) = bank.text_by_category.at(cat, j);
        }
    }
    return out;
}

RetrievalResult eval_retrieval(const AlignmentModel& model, const PairedCorpus& corpus,
                               Direction direction) {
    TestEmbeddings emb = embed_test_split(model, corpus);
    const Tensor* queries = nullptr;
    const Tensor* gallery = nullptr;
    bool exclude_self = false;
    switch (direction) {
        case Direction::ThreeDToThreeD:
            queries = &emb.points;
            gallery = &emb.points;
            exclude_self = true;
            break;
        case Direction::TwoDToThreeD:
            queries = &emb.images;
            gallery = &emb.points;
            break;
        case Direction::ThreeDToTwoD:
            queries = &emb.points;
            gallery = &emb.images;
            break;
        case Direction::TextToThreeD:
            queries = &emb.text;
            gallery = &emb.points;
            break;
    }
    Tensor sims = cosine_sim_matrix(*queries, *gallery);

    RetrievalResult result;
    std::size_t q_count = sims.dims[0];
    result.rankings.reserve(q_count);
    result.scores.reserve(q_count);
    result.ap.reserve(q_count);
    double ap_sum = 0.0;
    for (std::size_t q = 0; q < q_count; ++q) {
        std::vector<double> row;
        std::vector<std::size_t> gallery_ids;
        row.reserve(sims.dims[1]);
        gallery_ids.reserve(sims.dims[1]);
        for (std::size_t g = 0; g < sims.dims[1]; ++g) {
            if (exclude_self && g == q) continue;
            row.push_back(sims.at(q, g));
            gallery_ids.push_back(g);
        }
        std::vector<std::size_t> order = rank_scores(row);
        std::vector<std::size_t> ranked_ids(order.size());
        std::vector<double> ranked_scores(order.size());
        std::vector<int> relevance(order.size());
        for (std::size_t k = 0; k < order.size(); ++k) {
            ranked_ids[k] = gallery_ids[order[k]];
            ranked_scores[k] = row[order[k]];
            relevance[k] = emb.labels[ranked_ids[k]] == emb.labels[q] ? 1 : 0;
        }
        double ap = average_precision(relevance);
        ap_sum += ap;
        result.rankings.push_back(std::move(ranked_ids));
        result.scores.push_back(std::move(ranked_scores));
        result.ap.push_back(ap);
    }
    result.map = ap_sum / static_cast<double>(q_count);
    return result;
}

double analytic_chance_map(const PairedCorpus& corpus, Direction direction) {
    if (corpus.test_idx.empty()) throw EmptySplit("corpus has no test split");
    std::vector<std::size_t> counts(corpus.categories.size(), 0);
    for (std::size_t i : corpus.test_idx) counts[corpus.samples[i].category] += 1;
    double total = static_cast<double>(corpus.test_idx.size());
    bool exclude_self = direction == Direction::ThreeDToThreeD;
    double sum = 0.0;
    for (std::size_t i : corpus.test_idx) {
        double relevant = static_cast<double>(counts[corpus.samples[i].category]);
        double gallery = total;
        if (exclude_self) {
            relevant -= 1.0;
            gallery -= 1.0;
        }
        sum += relevant / gallery;
    }
    return sum / total;
}

std::size_t zero_shot_classify(const Tensor& f3d, const Tensor& class_heads) {
    if (f3d.ndim() != 1) throw DimMismatch("zero_shot_classify: query must be a vector");
    require_unit_rows(class_heads, "zero_shot_classify heads");
    if (class_heads.dims[0] < 2) throw ConfigInvalid("zero_shot_classify: need at least 2 classes");
    if (class_heads.dims[1] != f3d.dims[0])
        throw DimMismatch("zero_shot_classify: head dim disagrees with query");
    double n = numcore::l2_norm(f3d);
    if (std::abs(n - 1.0) > 1e-6) throw NotNormalized("zero_shot_classify: query");
    std::size_t best = 0;
    double best_score = -2.0;
    for (std::size_t k = 0; k < class_heads.dims[0]; ++k) {
        double s = 0.0;
        for (std::size_t j = 0; j < f3d.dims[0]; ++j) s += f3d.data[j] * class_heads.at(k, j);
        if (s > best_score) {
            best_score = s;
            best = k;
        }
    }
    return best;
}

Tensor class_heads(const AlignmentModel& model, const PairedCorpus& corpus, std::size_t s_count) {
    Tensor heads({corpus.categories.size(), model.embed_dim});
    for (std::size_t cat = 0; cat < corpus.categories.size(); ++cat) {
        Tensor templates = dataset::expand_templates(corpus, cat, s_count);
        encoders::Embedding e = encoders::encode_text_templates(model.text_anchor, templates);
        for (std::size_t j = 0; j < model.embed_dim; ++j) heads.at(cat, j) = e.v[j];
    }
    return heads;
}

ZeroShotResult eval_zero_shot(const AlignmentModel& model, const PairedCorpus& corpus,
                              std::size_t s_count) {
    TestEmbeddings emb = embed_test_split(model, corpus);
    Tensor heads = class_heads(model, corpus, s_count);
    ZeroShotResult result;
    std::vector<std::size_t> correct(corpus.categories.size(), 0);
    std::vector<std::size_t> total(corpus.categories.size(), 0);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < emb.labels.size(); ++i) {
        std::size_t predicted = zero_shot_classify(emb.points.row(i), heads);
        total[emb.labels[i]] += 1;
        if (predicted == emb.labels[i]) {
            hits += 1;
            correct[emb.labels[i]] += 1;
        }
    }
    result.accuracy = static_cast<double>(hits) / static_cast<double>(emb.labels.size());
    result.per_category.resize(corpus.categories.size(), 0.0);
    for (std::size_t c = 0; c < corpus.categories.size(); ++c)
        if (total[c] > 0)
            result.per_category[c] = static_cast<double>(correct[c]) / static_cast<double>(total[c]);
    return result;
}

Tensor compose_embeddings(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 1 || b.ndim() != 1 || a.dims[0] != b.dims[0])
        throw DimMismatch("compose_embeddings: vectors must share length");
    Tensor sum({a.dims[0]});
    for (std::size_t i = 0; i < a.dims[0]; ++i) sum.data[i] = a.data[i] + b.data[i];
    return numcore::l2_normalize(sum);
}

double composition_success_rate(const AlignmentModel& model, const PairedCorpus& corpus,
                                std::uint64_t seed, std::size_t trials) {
    if (trials == 0) throw ConfigInvalid("composition_success_rate: need at least one trial");
    TestEmbeddings emb = embed_test_split(model, corpus);

    std::vector<std::size_t> audio_cats;
    std::vector<std::vector<std::size_t>> test_by_cat(corpus.categories.size());
    for (std::size_t i = 0; i < corpus.test_idx.size(); ++i)
        test_by_cat[emb.labels[i]].push_back(i); // indices into the test split
    for (const auto& cat : corpus.categories)
        if (cat.audio_capable) audio_cats.push_back(cat.id);
    if (audio_cats.empty())
        throw ConfigInvalid("composition_success_rate: corpus has no audio-capable category");
    if (corpus.categories.size() < 2)
        throw ConfigInvalid("composition_success_rate: need at least two categories");

    alignment::AnchorBank bank = alignment::compute_anchor_bank(model, corpus);
    std::size_t c = model.embed_dim;
    SplitRng root = SplitRng(seed).split("composition");
    std::size_t successes = 0;

    for (std::size_t t = 0; t < trials; ++t) {
        SplitRng rng = root.split(t);
        std::size_t c1 = rng.next_below(corpus.categories.size());
        std::size_t c2 = c1;
        while (c2 == c1) c2 = audio_cats[rng.next_below(audio_cats.size())];

        auto pick = [&](std::size_t cat) {
            const auto& pool = test_by_cat[cat];
            return pool[rng.next_below(pool.size())];
        };
        std::size_t q3d = pick(c1);
        std::size_t qaud_test = pick(c2);
        std::size_t qaud_sample = corpus.test_idx[qaud_test];

        Tensor query = compose_embeddings(emb.points.row(q3d), bank.audio[qaud_sample]);

        // Gallery: the joint image first, then one single-category image
        // per category as distractors.
        std::vector<Tensor> gallery;
        gallery.push_back(
            compose_embeddings(emb.images.row(pick(c1)), emb.images.row(pick(c2))));
        for (std::size_t cat = 0; cat < corpus.categories.size(); ++cat)
            gallery.push_back(emb.images.row(pick(cat)));

        double best = -2.0;
        std::size_t best_idx = 0;
        for (std::size_t g = 0; g < gallery.size(); ++g) {
            double s = 0.0;
            for (std::size_t j = 0; j < c; ++j) s += query.data[j] * gallery[g].data[j];
            if (s > best) {
                best = s;
                best_idx = g;
            }
        }
        if (best_idx == 0) ++successes;
    }
    return static_cast<double>(successes) / static_cast<double>(trials);
}

} // namespace palign::retrieval
