#include "palign/alignment.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "palign/bundle.hpp"
#include "palign/errors.hpp"
#include "palign/sha256.hpp"

namespace palign::alignment {

using dataset::PairStream;
using encoders::Embedding;
using encoders::Modality;
using encoders::TrainableVars;
using numcore::Bundle;
using numcore::SplitRng;

void ContrastiveConfig::validate() const {
    if (temperature <= 0.0) throw ConfigInvalid("train.temperature must be positive");
    if (batch_size < 2) throw ConfigInvalid("train.batch_size must be at least 2");
    if (weight_image < 0.0 || weight_text < 0.0 || weight_audio < 0.0)
        throw ConfigInvalid("train loss weights must be non-negative");
    if (learnable_tau) throw ConfigInvalid("train.learnable_tau is reserved and must stay false");
    if (optimizer.lr <= 0.0) throw ConfigInvalid("train.lr must be positive");
    if (optimizer.beta1 < 0.0 || optimizer.beta1 >= 1.0 || optimizer.beta2 < 0.0 ||
        optimizer.beta2 >= 1.0)
        throw ConfigInvalid("train betas must lie in [0, 1)");
    if (optimizer.eps <= 0.0) throw ConfigInvalid("train.adam_eps must be positive");
    if (optimizer.weight_decay < 0.0) throw ConfigInvalid("train.weight_decay must be non-negative");
}

namespace {

void require_normalized_rows(const Tensor& m, const char* who) {
    for (std::size_t i = 0; i < m.dims[0]; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < m.dims[1]; ++j) s += m.at(i, j) * m.at(i, j);
        if (std::abs(std::sqrt(s) - 1.0) > 1e-6)
            throw NotNormalized(std::string(who) + ": row " + std::to_string(i) +
                                " is not unit length");
    }
}

} // namespace

Var info_nce(Tape& tape, Var a, Var b, double tau, bool symmetric) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.ndim() != 2 || bv.ndim() != 2 || !av.same_dims(bv))
        throw DimMismatch("info_nce: expected matching n x C matrices");
    if (tau <= 0.0) throw ConfigInvalid("info_nce: temperature must be positive");
    require_normalized_rows(av, "info_nce lhs");
    require_normalized_rows(bv, "info_nce rhs");
    Var logits_ab = tape.scale(tape.matmul_nt(a, b), 1.0 / tau);
    Var loss_ab = tape.cross_entropy_diag(logits_ab);
    if (!symmetric) return loss_ab;
    Var logits_ba = tape.scale(tape.matmul_nt(b, a), 1.0 / tau);
    Var loss_ba = tape.cross_entropy_diag(logits_ba);
    return tape.add_weighted({{0.5, loss_ab}, {0.5, loss_ba}});
}

double info_nce_value(const Tensor& a, const Tensor& b, double tau, bool symmetric) {
    Tape tape;
    return info_nce(tape, tape.constant(a), tape.constant(b), tau, symmetric).value()[0];
}

Var total_loss(Tape& tape, Var f3d, Var f2d, Var ftxt, Var faud,
               const std::vector<bool>& audio_mask, const ContrastiveConfig& cfg,
               LossTerms* terms) {
    cfg.validate();
    const Tensor& f3v = f3d.value();
    if (audio_mask.size() != f3v.dims[0])
        throw DimMismatch("total_loss: audio mask length must equal batch rows");

    Var image_term = info_nce(tape, f3d, f2d, cfg.temperature, cfg.symmetric);
    Var text_term = info_nce(tape, f3d, ftxt, cfg.temperature, cfg.symmetric);

    std::vector<std::size_t> audio_rows;
    for (std::size_t i = 0; i < audio_mask.size(); ++i)
        if (audio_mask[i]) audio_rows.push_back(i);

    std::vector<std::pair<double, Var>> parts = {{cfg.weight_image, image_term},
                                                 {cfg.weight_text, text_term}};
    double audio_value = 0.0;
    if (!audio_rows.empty()) {
        Var f3d_masked = tape.gather_rows(f3d, audio_rows);
        Var faud_masked = tape.gather_rows(faud, audio_rows);
        Var audio_term = info_nce(tape, f3d_masked, faud_masked, cfg.temperature, cfg.symmetric);
        parts.emplace_back(cfg.weight_audio, audio_term);
        audio_value = audio_term.value()[0];
    }
    Var total = tape.add_weighted(parts);
    if (terms) {
        terms->image = image_term.value()[0];
        terms->text = text_term.value()[0];
        terms->audio = audio_value;
        terms->total = total.value()[0];
    }
    return total;
}

AnchorBank compute_anchor_bank(const AlignmentModel& model, const PairedCorpus& corpus) {
    AnchorBank bank;
    std::size_t n = corpus.samples.size();
    std::size_t c = model.embed_dim;
    bank.image = Tensor({n, c});
    bank.audio.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        Embedding img = encoders::anchor_encode(model.image_anchor, corpus.samples[i].image);
        for (std::size_t j = 0; j < c; ++j) bank.image.at(i, j) = img.v[j];
        if (corpus.samples[i].has_audio())
            bank.audio[i] = encoders::anchor_encode(model.audio_anchor, corpus.samples[i].audio).v;
    }
    bank.text_by_category = Tensor({corpus.categories.size(), c});
    for (std::size_t cat = 0; cat < corpus.categories.size(); ++cat) {
        Tensor templates = dataset::expand_templates(corpus, cat, corpus.config.templates);
        Embedding t = encoders::encode_text_templates(model.text_anchor, templates);
        for (std::size_t j = 0; j < c; ++j) bank.text_by_category.at(cat, j) = t.v[j];
    }
    return bank;
}

TrainReport train(const PairedCorpus& corpus, AlignmentModel& model,
                  const ContrastiveConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    corpus.validate();
    if (model.image_anchor.input_dim() != corpus.config.image_dim ||
        model.text_anchor.input_dim() != corpus.config.text_dim ||
        model.audio_anchor.input_dim() != corpus.config.audio_dim)
        throw ShapeError("train: model anchor dims (" +
                         std::to_string(model.image_anchor.input_dim()) + "/" +
                         std::to_string(model.text_anchor.input_dim()) + "/" +
                         std::to_string(model.audio_anchor.input_dim()) +
                         ") disagree with corpus dims (" + std::to_string(corpus.config.image_dim) +
                         "/" + std::to_string(corpus.config.text_dim) + "/" +
                         std::to_string(corpus.config.audio_dim) + ")");

    auto t0 = std::chrono::steady_clock::now();
    TrainReport report;
    report.seed = seed;

    AnchorBank bank = compute_anchor_bank(model, corpus);
    PairStream stream(corpus);
    SplitRng shuffle_rng = SplitRng(seed).split("shuffle");

    numcore::AdamWState opt;
    opt.hyper = cfg.optimizer;

    std::size_t n_pts = corpus.config.points;
    std::size_t c = model.embed_dim;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        stream.reshuffle(shuffle_rng);
        const auto& order = stream.order();
        EpochLoss acc;
        std::size_t n_seen = 0;
        for (std::size_t start = 0, batch_no = 0; start < order.size();
             start += cfg.batch_size, ++batch_no) {
            std::size_t bsz = std::min(cfg.batch_size, order.size() - start);
            std::vector<const Tensor*> clouds(bsz);
            Tensor f2d({bsz, c});
            Tensor ftxt({bsz, c});
            Tensor faud({bsz, c});
            std::vector<bool> mask(bsz);
            for (std::size_t i = 0; i < bsz; ++i) {
                const auto& pair = order[start + i];
                const auto& sample = corpus.samples[pair.sample];
                clouds[i] = &sample.points;
                mask[i] = pair.audio;
                for (std::size_t j = 0; j < c; ++j) {
                    f2d.at(i, j) = bank.image.at(pair.sample, j);
                    ftxt.at(i, j) = bank.text_by_category.at(sample.category, j);
                    faud.at(i, j) = pair.audio ? bank.audio[pair.sample][j] : 0.0;
                }
            }
            Tensor stacked = encoders::stack_clouds(clouds);

            Tape tape;
            TrainableVars vars = encoders::register_trainable(tape, model);
            Var feats = encoders::encode_clouds(tape, vars, stacked, n_pts);
            Var projected = encoders::project_features(tape, vars, feats);
            Var f3d = tape.l2_normalize_rows(projected);
            LossTerms terms;
            Var loss = total_loss(tape, f3d, tape.constant(std::move(f2d)),
                                  tape.constant(std::move(ftxt)), tape.constant(std::move(faud)),
                                  mask, cfg, &terms);
            if (!std::isfinite(terms.total))
                throw NonFiniteLoss("epoch " + std::to_string(epoch) + " batch " +
                                    std::to_string(batch_no) + ": loss is not finite");
            tape.backward(loss);

            auto tensors = encoders::trainable_tensors(model);
            std::vector<Tensor*> params;
            std::vector<const Tensor*> grads;
            params.reserve(tensors.size());
            grads.reserve(tensors.size());
            for (std::size_t p = 0; p < tensors.size(); ++p) {
                params.push_back(tensors[p].second);
                grads.push_back(&vars.named[p].second.grad());
            }
            numcore::adamw_step(params, grads, opt);

            acc.total += terms.total * static_cast<double>(bsz);
            acc.image += terms.image * static_cast<double>(bsz);
            acc.text += terms.text * static_cast<double>(bsz);
            acc.audio += terms.audio * static_cast<double>(bsz);
            n_seen += bsz;
        }
        double inv = 1.0 / static_cast<double>(n_seen);
        report.trace.push_back({acc.total * inv, acc.image * inv, acc.text * inv, acc.audio * inv});
    }

    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

namespace {

void add_anchor(Bundle& b, const char* name, const encoders::AnchorEncoder& enc) {
    b.add(std::string("anchor.") + name + ".w", enc.w);
    b.add(std::string("anchor.") + name + ".b", enc.b);
}

encoders::AnchorEncoder read_anchor(const Bundle& b, Modality m) {
    encoders::AnchorEncoder enc;
    enc.tag = m;
    enc.w = b.tensor_at(std::string("anchor.") + encoders::modality_name(m) + ".w");
    enc.b = b.tensor_at(std::string("anchor.") + encoders::modality_name(m) + ".b");
    if (enc.w.ndim() != 2 || enc.b.ndim() != 1 || enc.b.dims[0] != enc.w.dims[1])
        throw ShapeError(std::string("checkpoint: anchor.") + encoders::modality_name(m) +
                         " shapes disagree");
    return enc;
}

} // namespace

void save_checkpoint(const AlignmentModel& model, const std::filesystem::path& path) {
    model.encoder.validate();
    model.projection.validate();
    Bundle b;
    b.set_meta("format", "checkpoint-v1");
    b.set_meta("hidden", std::to_string(model.encoder.hidden));
    b.set_meta("raw_dim", std::to_string(model.encoder.raw_dim));
    b.set_meta("embed_dim", std::to_string(model.embed_dim));
    b.set_meta("projection_depth", std::to_string(model.projection.depth));
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", model.projection.ln_eps);
    b.set_meta("ln_eps", buf);
    for (const auto& [name, t] : encoders::trainable_tensors(model)) b.add(name, *t);
    add_anchor(b, "image", model.image_anchor);
    add_anchor(b, "text", model.text_anchor);
    add_anchor(b, "audio", model.audio_anchor);
    b.save(path);
}

AlignmentModel load_checkpoint(const std::filesystem::path& path) {
    Bundle b = Bundle::load(path);
    if (b.find_meta("format") != std::optional<std::string>("checkpoint-v1"))
        throw FormatError("not a checkpoint file: " + path.string());
    AlignmentModel m;
    m.embed_dim = b.meta_u64("embed_dim");
    m.encoder.hidden = b.meta_u64("hidden");
    m.encoder.raw_dim = b.meta_u64("raw_dim");
    m.encoder.mlp1 = {b.tensor_at("point_encoder.mlp1.w"), b.tensor_at("point_encoder.mlp1.b")};
    m.encoder.mlp2 = {b.tensor_at("point_encoder.mlp2.w"), b.tensor_at("point_encoder.mlp2.b")};
    m.encoder.post1 = {b.tensor_at("point_encoder.post1.w"), b.tensor_at("point_encoder.post1.b")};
    m.encoder.post2 = {b.tensor_at("point_encoder.post2.w"), b.tensor_at("point_encoder.post2.b")};
    m.projection.depth = static_cast<int>(b.meta_u64("projection_depth"));
    m.projection.in_dim = m.encoder.raw_dim;
    m.projection.out_dim = m.embed_dim;
    m.projection.ln_eps = b.meta_f64("ln_eps");
    for (int d = 0; d < m.projection.depth; ++d) {
        std::string base = "proj.linear" + std::to_string(d + 1);
        m.projection.linears.push_back({b.tensor_at(base + ".w"), b.tensor_at(base + ".b")});
        if (d + 1 < m.projection.depth) {
            std::string nbase = "proj.norm" + std::to_string(d + 1);
            m.projection.norms.push_back(
                {b.tensor_at(nbase + ".gamma"), b.tensor_at(nbase + ".beta")});
        }
    }
    m.image_anchor = read_anchor(b, Modality::Image);
    m.text_anchor = read_anchor(b, Modality::Text);
    m.audio_anchor = read_anchor(b, Modality::Audio);
    try {
        m.encoder.validate();
        m.projection.validate();
    } catch (const Error& e) {
        throw ShapeError(std::string("checkpoint: ") + e.what());
    }
    if (m.image_anchor.output_dim() != m.embed_dim || m.text_anchor.output_dim() != m.embed_dim ||
        m.audio_anchor.output_dim() != m.embed_dim)
        throw ShapeError("checkpoint: anchor output dims disagree with embed_dim");
    return m;
}

std::string anchor_digest(const AlignmentModel& model) {
    std::ostringstream blob(std::ios::binary);
    for (const encoders::AnchorEncoder* enc :
         {&model.image_anchor, &model.text_anchor, &model.audio_anchor}) {
        numcore::write_pbt1(blob, enc->w);
        numcore::write_pbt1(blob, enc->b);
    }
    return numcore::sha256_hex(blob.str());
}

} // namespace palign::alignment
