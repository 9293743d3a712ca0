#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "palign/autograd.hpp"
#include "palign/rng.hpp"
#include "palign/tensor.hpp"

namespace palign::encoders {

using numcore::SplitRng;
using numcore::Tape;
using numcore::Tensor;
using numcore::Var;

constexpr std::size_t kMinPoints = 8;

/// N x 3 coordinate set, roughly centered in [-1,1]^3.
struct PointCloud {
    Tensor points;

    std::size_t size() const { return points.dims.empty() ? 0 : points.dims[0]; }
    /// TooFewPoints / DimMismatch / non-finite checks.
    void validate() const;
};

/// One `x y z` triple per line; '#' starts a comment.
PointCloud read_xyz(const std::filesystem::path& path);

struct LinearParams {
    Tensor w; // in x out
    Tensor b; // out
};

struct LayerNormParams {
    Tensor gamma;
    Tensor beta;
};

/// Shared per-point MLP (3 -> h -> h), coordinate-wise max pool over the
/// cloud, then a pooled MLP (h -> h -> c_raw).
struct PointEncoderParams {
    LinearParams mlp1, mlp2;
    LinearParams post1, post2;
    std::size_t hidden = 64;
    std::size_t raw_dim = 64;

    static PointEncoderParams init(std::size_t hidden, std::size_t raw_dim, SplitRng rng);
    void validate() const;
};

/// Projection head with `depth` linear layers and a LayerNorm between each
/// consecutive pair. Depth 2 is linear -> LayerNorm -> linear.
struct ProjectionParams {
    std::vector<LinearParams> linears;
    std::vector<LayerNormParams> norms;
    int depth = 2;
    std::size_t in_dim = 64;
    std::size_t out_dim = 32;
    double ln_eps = 1e-5;

    static ProjectionParams init(std::size_t in_dim, std::size_t out_dim, int depth,
                                 double ln_eps, SplitRng rng);
    void validate() const;
};

enum class Modality { Image, Text, Audio };

const char* modality_name(Modality m);

/// Joint-space embedding vector of length C.
struct Embedding {
    Tensor v;
    bool normalized = false;
};

/// Frozen affine map from a raw modality vector into the joint space.
/// The map has orthonormal rows under the row-vector convention (it
/// preserves dot products), and all modality maps of one corpus send the
/// latent view subspaces to a single shared image, so embeddings of the
/// same underlying latent agree across modalities.
struct AnchorEncoder {
    Modality tag = Modality::Image;
    Tensor w; // d_in x C
    Tensor b; // C

    std::size_t input_dim() const { return w.dims[0]; }
    std::size_t output_dim() const { return w.dims[1]; }
};

/// Gram-Schmidt rows: `count` unit rows of length `dim`, orthogonal to each
/// other and to every row of `fixed` (pass an empty vector for none).
Tensor orthonormal_rows(const std::vector<const Tensor*>& fixed, std::size_t count,
                        std::size_t dim, SplitRng& rng);

/// The fixed latent->raw view of one modality (latent x d, orthonormal
/// rows), derived from the corpus seed. The dataset generator and the
/// anchor builder share this map.
Tensor modality_view(Modality m, std::size_t latent_dim, std::size_t raw_dim,
                     std::uint64_t corpus_seed);

AnchorEncoder make_anchor_encoder(Modality m, std::size_t latent_dim, std::size_t raw_dim,
                                  std::size_t embed_dim, std::uint64_t corpus_seed);

// --- single-input operations ---------------------------------------------

/// Raw c_raw feature of one cloud; exactly invariant to point order.
Tensor encode_points(const PointEncoderParams& params, const PointCloud& cloud);

/// Unnormalized length-C embedding of a raw feature.
Tensor project(const ProjectionParams& params, const Tensor& feat);

Embedding anchor_encode(const AnchorEncoder& enc, const Tensor& raw);

/// Template aggregation: normalized mean of the per-template anchor
/// embeddings. Row order does not matter.
Embedding encode_text_templates(const AnchorEncoder& enc, const Tensor& templates);
Embedding encode_text_templates(const AnchorEncoder& enc, const std::vector<Tensor>& templates);

// --- model ----------------------------------------------------------------

struct ModelConfig {
    std::size_t hidden = 64;
    std::size_t raw_dim = 64;
    std::size_t embed_dim = 32;
    int projection_depth = 2;
    double ln_eps = 1e-5;

    void validate() const;
};

/// Trainable point encoder + projection plus the frozen anchor encoders.
struct AlignmentModel {
    PointEncoderParams encoder;
    ProjectionParams projection;
    AnchorEncoder image_anchor;
    AnchorEncoder text_anchor;
    AnchorEncoder audio_anchor;
    std::size_t embed_dim = 32;

    const AnchorEncoder& anchor(Modality m) const;

    static AlignmentModel init(const ModelConfig& cfg, std::size_t latent_dim,
                               std::size_t image_dim, std::size_t text_dim,
                               std::size_t audio_dim, std::uint64_t corpus_seed,
                               std::uint64_t model_seed);
};

// --- tape forward ----------------------------------------------------------

/// Trainable parameters registered on a tape, in checkpoint order.
struct TrainableVars {
    std::vector<std::pair<std::string, Var>> named;
    Var w1, b1, w2, b2, w3, b3, w4, b4;
    std::vector<Var> proj_w, proj_b;
    std::vector<Var> norm_gamma, norm_beta;
    int proj_depth = 2;
    double ln_eps = 1e-5;
};

TrainableVars register_trainable(Tape& tape, const AlignmentModel& model);

/// Batched raw features for clouds stacked as a (batch*points) x 3 matrix.
Var encode_clouds(Tape& tape, const TrainableVars& vars, const Tensor& stacked_points,
                  std::size_t points_per_cloud);

Var project_features(Tape& tape, const TrainableVars& vars, Var feats);

/// Stacks equally sized clouds into one (batch*points) x 3 matrix.
Tensor stack_clouds(const std::vector<const Tensor*>& clouds);

/// Normalized B x C embeddings for a stacked batch; no gradients recorded.
Tensor embed_point_batch(const AlignmentModel& model, const Tensor& stacked_points,
                         std::size_t points_per_cloud);

/// The list of trainable tensors in checkpoint order (encoder then
/// projection); anchors are deliberately absent.
std::vector<std::pair<std::string, Tensor*>> trainable_tensors(AlignmentModel& model);
std::vector<std::pair<std::string, const Tensor*>> trainable_tensors(const AlignmentModel& model);

} // namespace palign::encoders
