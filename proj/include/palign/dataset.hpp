#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "palign/rng.hpp"
#include "palign/tensor.hpp"

namespace palign::dataset {

using numcore::SplitRng;
using numcore::Tensor;

enum class ShapeFamily { Sphere, Box, Torus, Cylinder, Cone };

const char* shape_family_name(ShapeFamily f);
ShapeFamily shape_family_from_name(const std::string& name);

struct CategorySpec {
    std::size_t id = 0;
    Tensor prototype;     // latent z_c, unit length
    ShapeFamily family = ShapeFamily::Sphere;
    Tensor deform;        // [sx, sy, sz, rot_z]
    bool audio_capable = false;
};

struct PairedSample {
    Tensor points; // N x 3
    Tensor image;  // d_img
    Tensor audio;  // d_aud; empty when the category is silent
    std::size_t category = 0;

    bool has_audio() const { return !audio.data.empty(); }
};

struct CorpusConfig {
    std::size_t categories = 10;
    std::size_t audio_categories = 6;
    std::size_t train_per_category = 100;
    std::size_t test_per_category = 20;
    std::size_t points = 256;
    std::size_t latent_dim = 16;
    std::size_t image_dim = 24;
    std::size_t text_dim = 24;
    std::size_t audio_dim = 24;
    std::size_t templates = 64;
    double noise_sigma = 0.05;
    double template_offset_sigma = 0.05;
    double point_jitter_sigma = 0.01;

    void validate() const;
};

struct PairedCorpus {
    CorpusConfig config;
    std::uint64_t seed = 0;
    std::vector<CategorySpec> categories;
    std::vector<PairedSample> samples;
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> test_idx;
    Tensor template_offsets; // S x d_txt; row 0 is all zeros

    /// Per-modality latent->raw view (orthonormal rows), shared with the
    /// anchor encoders via the corpus seed.
    Tensor image_view, text_view, audio_view;

    void validate() const;
};

/// Deterministic synthetic 3D-image-text-audio corpus.
PairedCorpus generate_corpus(const CorpusConfig& config, std::uint64_t seed);

/// The S raw text vectors of a category: its text-view prototype plus the
/// corpus-wide offset bank (offset 0 is zero, so s_count=1 is the
/// prototype view alone).
Tensor expand_templates(const PairedCorpus& corpus, std::size_t category_id, std::size_t s_count);

struct TrainingPair {
    std::size_t sample;
    bool audio;
};

/// Epoch iterator over the train split with per-sample audio masks.
/// reshuffle() rebuilds a category-balanced order: within-category order is
/// shuffled and categories are interleaved round-robin, so every batch sees
/// an even category mix.
class PairStream {
public:
    explicit PairStream(const PairedCorpus& corpus);

    void reshuffle(SplitRng& rng);
    const std::vector<TrainingPair>& order() const { return order_; }

private:
    const PairedCorpus* corpus_;
    std::vector<std::vector<std::size_t>> by_category_;
    std::vector<TrainingPair> order_;
};

void save_corpus(const PairedCorpus& corpus, const std::filesystem::path& path);
PairedCorpus load_corpus(const std::filesystem::path& path);

/// One parametric-surface cloud: family surface, per-category deformation,
/// per-point jitter.
Tensor sample_cloud(ShapeFamily family, const Tensor& deform, std::size_t n_points,
                    double jitter_sigma, SplitRng& rng);

} // namespace palign::dataset
