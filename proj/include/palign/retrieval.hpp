#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "palign/alignment.hpp"

namespace palign::retrieval {

using alignment::AlignmentModel;
using dataset::PairedCorpus;
using numcore::Tensor;

enum class Direction { ThreeDToThreeD, TwoDToThreeD, ThreeDToTwoD, TextToThreeD };

constexpr Direction kAllDirections[] = {Direction::ThreeDToThreeD, Direction::TwoDToThreeD,
                                        Direction::ThreeDToTwoD, Direction::TextToThreeD};

const char* direction_name(Direction d); // "3d->3d", "2d->3d", "3d->2d", "text->3d"
Direction direction_from_name(const std::string& name);

/// Normalized embeddings with same-category relevance labels.
struct Gallery {
    Tensor embeddings; // M x C, unit rows
    std::vector<std::size_t> labels;

    void validate() const;
};

struct RetrievalResult {
    std::vector<std::vector<std::size_t>> rankings; // per query, gallery permutation
    std::vector<std::vector<double>> scores;        // per query, non-increasing
    std::vector<double> ap;
    double map = 0.0;
};

/// S[i][j] = dot(Q_i, G_j); rows of both sides must be unit length.
Tensor cosine_sim_matrix(const Tensor& queries, const Tensor& gallery);

/// Indices sorted by score descending, ties broken by ascending index.
std::vector<std::size_t> rank_scores(std::span<const double> scores);

/// AP over a ranked 0/1 relevance list, normalized by the total number of
/// relevant items; NoRelevantItems when the list has none.
double average_precision(const std::vector<int>& ranked_relevance);

/// Test-split retrieval for one direction; relevance is same-category and
/// 3d->3d excludes the query from its own gallery.
RetrievalResult eval_retrieval(const AlignmentModel& model, const PairedCorpus& corpus,
                               Direction direction);

/// Expected AP of uninformative rankings: mean over queries of R_q / M_q.
double analytic_chance_map(const PairedCorpus& corpus, Direction direction);

/// Argmax cosine against K >= 2 class heads; ties go to the lowest index.
std::size_t zero_shot_classify(const Tensor& f3d, const Tensor& class_heads);

/// Per-category text heads via template aggregation (s_count templates).
Tensor class_heads(const AlignmentModel& model, const PairedCorpus& corpus, std::size_t s_count);

struct ZeroShotResult {
    double accuracy = 0.0;
    std::vector<double> per_category;
};

ZeroShotResult eval_zero_shot(const AlignmentModel& model, const PairedCorpus& corpus,
                              std::size_t s_count);

/// normalize(a + b); NearZeroNorm when the inputs cancel.
Tensor compose_embeddings(const Tensor& a, const Tensor& b);

/// Normalized C-dim embeddings of the test split's point clouds, row i for
/// test sample i, plus the matching image rows and per-sample labels.
struct TestEmbeddings {
    Tensor points;  // T x C
    Tensor images;  // T x C
    Tensor text;    // T x C (category head per sample)
    std::vector<std::size_t> labels;
};

TestEmbeddings embed_test_split(const AlignmentModel& model, const PairedCorpus& corpus);

/// Composed 3D+audio queries against a joint-image gallery with
/// single-category distractors; returns the fraction of trials whose joint
/// item ranks first.
double composition_success_rate(const AlignmentModel& model, const PairedCorpus& corpus,
                                std::uint64_t seed, std::size_t trials);

} // namespace palign::retrieval
