// palign: desk-scale multi-modal alignment engine.
//
// Subcommands: gen-data, train, eval, compose, cache-demo. All randomness
// flows from --seed; artifacts are byte-identical across reruns of the same
// (config, seed). Exit codes: 0 success, 2 usage/config/format error,
// 3 numerical failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "palign/alignment.hpp"
#include "palign/cache.hpp"
#include "palign/config.hpp"
#include "palign/dataset.hpp"
#include "palign/errors.hpp"
#include "palign/retrieval.hpp"
#include "palign/sha256.hpp"

namespace {

using namespace palign;

struct CommonOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
};

cli::RunConfig resolve_config(const CommonOpts& opts) {
    cli::RunConfig cfg;
    if (!opts.config_path.empty()) cfg = cli::load_run_config(opts.config_path);
    if (opts.seed) cfg.seed = *opts.seed; // flag wins over file
    return cfg;
}

dataset::PairedCorpus corpus_for(const cli::RunConfig& cfg, const std::string& corpus_path) {
    if (!corpus_path.empty()) return dataset::load_corpus(corpus_path);
    // No file: re-derive the corpus from (config, seed).
    return dataset::generate_corpus(cfg.corpus, cfg.corpus_seed());
}

void print_category_table(const dataset::PairedCorpus& corpus) {
    std::printf("%-4s %-10s %-6s %-6s %-6s\n", "id", "family", "audio", "train", "test");
    for (const auto& cat : corpus.categories) {
        std::printf("%-4zu %-10s %-6s %-6zu %-6zu\n", cat.id,
                    dataset::shape_family_name(cat.family), cat.audio_capable ? "yes" : "no",
                    corpus.config.train_per_category, corpus.config.test_per_category);
    }
    std::printf("splits: train=%zu test=%zu\n", corpus.train_idx.size(), corpus.test_idx.size());
}

int cmd_eval(const CommonOpts& common, const std::string& checkpoint_path,
             const std::string& corpus_path, const std::vector<std::string>& direction_names,
             const std::string& out_path) {
    cli::RunConfig cfg = resolve_config(common);
    if (!direction_names.empty()) {
        cfg.eval.directions.clear();
        for (const std::string& n : direction_names)
            cfg.eval.directions.push_back(retrieval::direction_from_name(n));
    }
    dataset::PairedCorpus corpus = corpus_for(cfg, corpus_path);
    encoders::AlignmentModel model = alignment::load_checkpoint(checkpoint_path);
    if (model.image_anchor.input_dim() != corpus.config.image_dim)
        throw ShapeError("eval: checkpoint image dim " +
                         std::to_string(model.image_anchor.input_dim()) + " vs corpus " +
                         std::to_string(corpus.config.image_dim));

    cli::EvalSummary summary;
    summary.checkpoint_sha256 = numcore::sha256_file(checkpoint_path);
    std::printf("%-10s %s\n", "direction", "mAP");
    for (retrieval::Direction d : cfg.eval.directions) {
        retrieval::RetrievalResult r = retrieval::eval_retrieval(model, corpus, d);
        summary.map_by_direction.emplace_back(retrieval::direction_name(d), r.map);
        std::printf("%-10s %.6f\n", retrieval::direction_name(d), r.map);
    }
    retrieval::ZeroShotResult zs =
        retrieval::eval_zero_shot(model, corpus, cfg.eval.class_head_templates);
    summary.zero_shot_accuracy = zs.accuracy;
    summary.per_category_accuracy = zs.per_category;
    std::printf("zero-shot  %.6f\n", zs.accuracy);
    if (!out_path.empty()) cli::write_json(cli::eval_summary_to_json(summary, cfg), out_path);
    return 0;
}

struct ComposeSide {
    std::string modality;
    std::int64_t sample = -1;
    std::string xyz;
};

numcore::Tensor side_embedding(const cli::RunConfig& cfg, const encoders::AlignmentModel& model,
                               const dataset::PairedCorpus& corpus, const ComposeSide& side) {
    if (!side.xyz.empty()) {
        if (side.modality != "3d")
            throw ConfigInvalid("--xyz files are only valid with modality 3d");
        encoders::PointCloud cloud = encoders::read_xyz(side.xyz);
        return encoders::embed_point_batch(model, cloud.points, cloud.size()).row(0);
    }
    if (side.sample < 0 || static_cast<std::size_t>(side.sample) >= corpus.samples.size())
        throw UnknownSample("sample id " + std::to_string(side.sample) + " outside [0, " +
                            std::to_string(corpus.samples.size()) + ")");
    const dataset::PairedSample& sample = corpus.samples[static_cast<std::size_t>(side.sample)];
    if (side.modality == "3d") {
        return encoders::embed_point_batch(model, sample.points, corpus.config.points).row(0);
    } else if (side.modality == "image") {
        return encoders::anchor_encode(model.image_anchor, sample.image).v;
    } else if (side.modality == "text") {
        return encoders::encode_text_templates(
                   model.text_anchor,
                   dataset::expand_templates(corpus, sample.category, cfg.eval.class_head_templates))
            .v;
    } else if (side.modality == "audio") {
        if (!sample.has_audio())
            throw ConfigInvalid("sample " + std::to_string(side.sample) +
                                " belongs to a silent category; no audio available");
        return encoders::anchor_encode(model.audio_anchor, sample.audio).v;
    }
    throw ConfigInvalid("unknown modality '" + side.modality + "' (want 3d|image|text|audio)");
}

int cmd_compose(const CommonOpts& common, const std::string& checkpoint_path,
                const std::string& corpus_path, const ComposeSide& a, const ComposeSide& b) {
    cli::RunConfig cfg = resolve_config(common);
    dataset::PairedCorpus corpus = corpus_for(cfg, corpus_path);
    encoders::AlignmentModel model = alignment::load_checkpoint(checkpoint_path);

    numcore::Tensor ea = side_embedding(cfg, model, corpus, a);
    numcore::Tensor eb = side_embedding(cfg, model, corpus, b);
    numcore::Tensor query = retrieval::compose_embeddings(ea, eb);

    // Gallery: per-category image prototypes plus every pairwise joint
    // prototype, so composed semantics have a matching target.
    alignment::AnchorBank bank = alignment::compute_anchor_bank(model, corpus);
    std::size_t k = corpus.categories.size();
    std::size_t c = model.embed_dim;
    std::vector<std::pair<std::string, numcore::Tensor>> gallery;
    std::vector<numcore::Tensor> protos(k);
    for (std::size_t cat = 0; cat < k; ++cat) {
        numcore::Tensor mean({c});
        std::size_t count = 0;
        for (std::size_t i : corpus.test_idx) {
            if (corpus.samples[i].category != cat) continue;
            for (std::size_t j = 0; j < c; ++j) mean.data[j] += bank.image.at(i, j);
            ++count;
        }
        for (double& v : mean.data) v /= static_cast<double>(count);
        protos[cat] = numcore::l2_normalize(mean);
        gallery.emplace_back("image:cat" + std::to_string(cat), protos[cat]);
    }
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i + 1; j < k; ++j)
            gallery.emplace_back("image:cat" + std::to_string(i) + "+cat" + std::to_string(j),
                                 retrieval::compose_embeddings(protos[i], protos[j]));

    std::vector<double> scores(gallery.size());
    for (std::size_t g = 0; g < gallery.size(); ++g)
        scores[g] = numcore::dot(query, gallery[g].second);
    std::vector<std::size_t> order = retrieval::rank_scores(scores);
    std::printf("%-5s %-24s %s\n", "rank", "item", "score");
    for (std::size_t r = 0; r < std::min<std::size_t>(10, order.size()); ++r)
        std::printf("%-5zu %-24s %.6f\n", r + 1, gallery[order[r]].first.c_str(),
                    scores[order[r]]);
    return 0;
}

int cmd_cache_demo(const CommonOpts& common, const std::string& checkpoint_path,
                   const std::string& corpus_path, std::size_t k, double beta, double gamma) {
    cli::RunConfig cfg = resolve_config(common);
    dataset::PairedCorpus corpus = corpus_for(cfg, corpus_path);
    encoders::AlignmentModel model = alignment::load_checkpoint(checkpoint_path);

    alignment::AnchorBank bank = alignment::compute_anchor_bank(model, corpus);
    std::size_t c = model.embed_dim;
    numcore::Tensor train_images({corpus.train_idx.size(), c});
    for (std::size_t i = 0; i < corpus.train_idx.size(); ++i)
        for (std::size_t j = 0; j < c; ++j)
            train_images.at(i, j) = bank.image.at(corpus.train_idx[i], j);
    cache::CacheModel bank_cache = cache::build_cache(train_images, k, beta, gamma);

    retrieval::TestEmbeddings emb = retrieval::embed_test_split(model, corpus);
    double before = 0.0, after = 0.0;
    std::size_t t = corpus.test_idx.size();
    for (std::size_t i = 0; i < t; ++i) {
        numcore::Tensor f3d = emb.points.row(i);
        numcore::Tensor paired = emb.images.row(i);
        numcore::Tensor enhanced = cache::enhance(bank_cache, f3d);
        before += numcore::dot(f3d, paired);
        after += numcore::dot(enhanced, paired);
    }
    before /= static_cast<double>(t);
    after /= static_cast<double>(t);
    std::printf("cache: bank=%zu k=%zu beta=%.3f gamma=%.3f\n", bank_cache.size(), k, beta, gamma);
    std::printf("mean cos(3d, paired image): before=%.6f after=%.6f\n", before, after);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "desk-scale point-cloud / multi-modal alignment engine\n"
        "Every config field has a default (empty config = default run): corpus 10 categories\n"
        "(6 audio-capable), 100 train + 20 test per category, 256 points, dims 24/24/24,\n"
        "64 templates, noise 0.05; model h=64, c_raw=64, C=32, projection depth 2;\n"
        "train 200 epochs, batch 64, AdamW lr 0.003 (0.9, 0.999, wd 0.01), temperature 0.07.\n"
        "Flags override config-file values; all randomness derives from --seed (default 0)."};
    app.require_subcommand(1);

    CommonOpts common;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "JSON run config (defaults apply when absent)");
        sub->add_option("--seed", common.seed, "master seed; labeled splits derive subsystem seeds");
    };

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic paired corpus");
    std::string gen_out = "corpus.paln";
    add_common(gen);
    gen->add_option("--out", gen_out, "output corpus file")->capture_default_str();
    std::optional<std::uint64_t> opt_categories, opt_audio_categories, opt_train_per_cat,
        opt_test_per_cat, opt_points;
    std::optional<double> opt_noise;
    gen->add_option("--categories", opt_categories, "number of categories");
    gen->add_option("--audio-categories", opt_audio_categories, "number of audio-capable categories");
    gen->add_option("--train-per-category", opt_train_per_cat, "train samples per category");
    gen->add_option("--test-per-category", opt_test_per_cat, "test samples per category");
    gen->add_option("--points", opt_points, "points per cloud");
    gen->add_option("--noise-sigma", opt_noise, "modality noise sigma");

    // train
    auto* train_cmd = app.add_subcommand("train", "contrastively align the 3D encoder");
    std::string train_corpus, train_out = "model.paln", train_report;
    add_common(train_cmd);
    train_cmd->add_option("--corpus", train_corpus, "corpus file (re-derived from config when absent)");
    train_cmd->add_option("--out", train_out, "output checkpoint file")->capture_default_str();
    train_cmd->add_option("--report", train_report, "loss-trace report (JSON)");
    std::optional<std::uint64_t> opt_epochs, opt_batch;
    std::optional<double> opt_lr;
    train_cmd->add_option("--epochs", opt_epochs, "training epochs");
    train_cmd->add_option("--batch-size", opt_batch, "batch size");
    train_cmd->add_option("--lr", opt_lr, "learning rate");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "cross-modal retrieval + zero-shot evaluation");
    std::string eval_ckpt, eval_corpus, eval_out;
    std::vector<std::string> eval_dirs;
    add_common(eval_cmd);
    eval_cmd->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
    eval_cmd->add_option("--corpus", eval_corpus, "corpus file (re-derived from config when absent)");
    eval_cmd->add_option("--directions", eval_dirs,
                         "retrieval directions (3d->3d 2d->3d 3d->2d text->3d)");
    eval_cmd->add_option("--out", eval_out, "evaluation report (JSON)");

    // compose
    auto* compose_cmd = app.add_subcommand("compose", "embedding-space arithmetic demo");
    std::string compose_ckpt, compose_corpus;
    ComposeSide side_a, side_b;
    add_common(compose_cmd);
    compose_cmd->add_option("--checkpoint", compose_ckpt, "model checkpoint")->required();
    compose_cmd->add_option("--corpus", compose_corpus, "corpus file");
    compose_cmd->add_option("--sample-a", side_a.sample, "corpus sample id for side A");
    compose_cmd->add_option("--modality-a", side_a.modality, "3d|image|text|audio")->required();
    compose_cmd->add_option("--xyz-a", side_a.xyz, "XYZ point file for side A (modality 3d)");
    compose_cmd->add_option("--sample-b", side_b.sample, "corpus sample id for side B");
    compose_cmd->add_option("--modality-b", side_b.modality, "3d|image|text|audio")->required();
    compose_cmd->add_option("--xyz-b", side_b.xyz, "XYZ point file for side B (modality 3d)");

    // cache-demo
    auto* cache_cmd = app.add_subcommand("cache-demo", "training-free cache enhancement demo");
    std::string cache_ckpt, cache_corpus;
    std::size_t cache_k = 3;
    double cache_beta = 5.0, cache_gamma = 0.5;
    add_common(cache_cmd);
    cache_cmd->add_option("--checkpoint", cache_ckpt, "model checkpoint")->required();
    cache_cmd->add_option("--corpus", cache_corpus, "corpus file");
    cache_cmd->add_option("--k", cache_k, "top-k retrieved keys")->capture_default_str();
    cache_cmd->add_option("--beta", cache_beta, "softmax sharpness")->capture_default_str();
    cache_cmd->add_option("--gamma", cache_gamma, "residual weight")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) {
            cli::RunConfig cfg = resolve_config(common);
            if (opt_categories) cfg.corpus.categories = *opt_categories;
            if (opt_audio_categories) cfg.corpus.audio_categories = *opt_audio_categories;
            if (opt_train_per_cat) cfg.corpus.train_per_category = *opt_train_per_cat;
            if (opt_test_per_cat) cfg.corpus.test_per_category = *opt_test_per_cat;
            if (opt_points) cfg.corpus.points = *opt_points;
            if (opt_noise) cfg.corpus.noise_sigma = *opt_noise;
            dataset::PairedCorpus corpus = dataset::generate_corpus(cfg.corpus, cfg.corpus_seed());
            dataset::save_corpus(corpus, gen_out);
            print_category_table(corpus);
            std::printf("wrote %s\n", gen_out.c_str());
            return 0;
        }
        if (train_cmd->parsed()) {
            CommonOpts opts = common;
            cli::RunConfig cfg = resolve_config(opts);
            if (opt_epochs) cfg.train.epochs = *opt_epochs;
            if (opt_batch) cfg.train.batch_size = *opt_batch;
            if (opt_lr) cfg.train.optimizer.lr = *opt_lr;
            dataset::PairedCorpus corpus = corpus_for(cfg, train_corpus);
            encoders::AlignmentModel model = encoders::AlignmentModel::init(
                cfg.model, corpus.config.latent_dim, corpus.config.image_dim,
                corpus.config.text_dim, corpus.config.audio_dim, corpus.seed, cfg.model_seed());
            alignment::TrainReport report =
                alignment::train(corpus, model, cfg.train, cfg.train_seed());
            report.checkpoint = train_out;
            alignment::save_checkpoint(model, train_out);
            if (!train_report.empty())
                cli::write_json(cli::train_report_to_json(report, cfg), train_report);
            if (!report.trace.empty())
                std::printf("loss: initial=%.6f final=%.6f\n", report.trace.front().total,
                            report.trace.back().total);
            std::printf("epochs=%zu wall=%.1fs checkpoint=%s\n", report.trace.size(),
                        report.wall_seconds, train_out.c_str());
            return 0;
        }
        if (eval_cmd->parsed())
            return cmd_eval(common, eval_ckpt, eval_corpus, eval_dirs, eval_out);
        if (compose_cmd->parsed())
            return cmd_compose(common, compose_ckpt, compose_corpus, side_a, side_b);
        if (cache_cmd->parsed())
            return cmd_cache_demo(common, cache_ckpt, cache_corpus, cache_k, cache_beta,
                                  cache_gamma);
    } catch (const NonFiniteLoss& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
