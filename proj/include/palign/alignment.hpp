#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "palign/autograd.hpp"
#include "palign/dataset.hpp"
#include "palign/encoders.hpp"
#include "palign/optim.hpp"

namespace palign::alignment {

using dataset::PairedCorpus;
using encoders::AlignmentModel;
using numcore::AdamWConfig;
using numcore::Tape;
using numcore::Tensor;
using numcore::Var;

struct ContrastiveConfig {
    double temperature = 0.07;
    std::size_t batch_size = 64;
    std::size_t epochs = 200;
    AdamWConfig optimizer{};
    double weight_image = 1.0;
    double weight_text = 1.0;
    double weight_audio = 1.0;
    bool symmetric = true;
    bool learnable_tau = false; // reserved; rejected when set

    void validate() const;
};

/// Symmetric in-batch InfoNCE over matched rows of two n x C matrices.
/// Rows must be unit-normalized (NotNormalized beyond 1e-6). With
/// symmetric=false only the a->b direction is used.
Var info_nce(Tape& tape, Var a, Var b, double tau, bool symmetric = true);

/// Convenience evaluation without keeping a tape around.
double info_nce_value(const Tensor& a, const Tensor& b, double tau, bool symmetric = true);

struct LossTerms {
    double total = 0.0;
    double image = 0.0;
    double text = 0.0;
    double audio = 0.0;
};

/// L_total = w_img L(F3D,F2D) + w_txt L(F3D,FT) + w_aud L(F3D|audio, FA|audio),
/// where the audio term is computed on the masked-in rows only and is
/// exactly zero (no graph) when the mask is all false. FA rows for
/// mask-false samples are ignored.
Var total_loss(Tape& tape, Var f3d, Var f2d, Var ftxt, Var faud,
               const std::vector<bool>& audio_mask, const ContrastiveConfig& cfg,
               LossTerms* terms = nullptr);

struct EpochLoss {
    double total = 0.0;
    double image = 0.0;
    double text = 0.0;
    double audio = 0.0;
};

struct TrainReport {
    std::vector<EpochLoss> trace; // one entry per epoch
    std::uint64_t seed = 0;
    double wall_seconds = 0.0;
    std::string checkpoint; // filled by callers that persist the model
};

/// Trains the point encoder and projection against the frozen anchors.
/// Deterministic given (corpus, model, cfg, seed); anchors are never
/// touched. NonFiniteLoss aborts with the offending epoch/batch.
TrainReport train(const PairedCorpus& corpus, AlignmentModel& model,
                  const ContrastiveConfig& cfg, std::uint64_t seed);

void save_checkpoint(const AlignmentModel& model, const std::filesystem::path& path);
AlignmentModel load_checkpoint(const std::filesystem::path& path);

/// Precomputed frozen-anchor embeddings for a corpus: per-sample image and
/// audio rows plus per-category aggregated text rows.
struct AnchorBank {
    Tensor image;                 // n_samples x C
    Tensor text_by_category;      // n_categories x C
    std::vector<Tensor> audio;    // per sample; empty tensor when absent
};

AnchorBank compute_anchor_bank(const AlignmentModel& model, const PairedCorpus& corpus);

/// SHA-256 over the serialized anchor parameters, for freeze checks.
std::string anchor_digest(const AlignmentModel& model);

} // namespace palign::alignment
