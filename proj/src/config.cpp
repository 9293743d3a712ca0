#include "palign/config.hpp"

#include <fstream>

#include "palign/errors.hpp"
#include "palign/rng.hpp"

namespace palign::cli {

using nlohmann::json;
using nlohmann::ordered_json;

std::uint64_t RunConfig::corpus_seed() const {
    return numcore::SplitRng(seed).split("corpus").key();
}

std::uint64_t RunConfig::model_seed() const {
    return numcore::SplitRng(seed).split("model").key();
}

std::uint64_t RunConfig::train_seed() const {
    return numcore::SplitRng(seed).split("train").key();
}

namespace {

class StrictObject {
public:
    StrictObject(const json& doc, std::string section) : doc_(doc), section_(std::move(section)) {
        if (!doc.is_object())
            throw ConfigInvalid(section_.empty() ? "config root must be an object"
                                                 : section_ + " must be an object");
    }

    ~StrictObject() = default;

    template <typename T>
    void read(const char* key, T& out) {
        seen_.push_back(key);
        auto it = doc_.find(key);
        if (it == doc_.end()) return;
        try {
            out = it->get<T>();
        } catch (const json::exception&) {
            throw ConfigInvalid("bad value for " + qualified(key));
        }
    }

    const json* subobject(const char* key) {
        seen_.push_back(key);
        auto it = doc_.find(key);
        return it == doc_.end() ? nullptr : &*it;
    }

    void finish() const {
        for (auto it = doc_.begin(); it != doc_.end(); ++it) {
            bool known = false;
            for (const char* k : seen_)
                if (it.key() == k) known = true;
            if (!known) throw ConfigInvalid("unknown key " + qualified(it.key().c_str()));
        }
    }

private:
    std::string qualified(const char* key) const {
        return section_.empty() ? std::string(key) : section_ + "." + key;
    }

    const json& doc_;
    std::string section_;
    std::vector<const char*> seen_;
};

} // namespace

RunConfig parse_run_config(const json& doc) {
    RunConfig cfg;
    StrictObject root(doc, "");
    root.read("seed", cfg.seed);

    if (const json* c = root.subobject("corpus")) {
        StrictObject o(*c, "corpus");
        o.read("categories", cfg.corpus.categories);
        o.read("audio_categories", cfg.corpus.audio_categories);
        o.read("train_per_category", cfg.corpus.train_per_category);
        o.read("test_per_category", cfg.corpus.test_per_category);
        o.read("points", cfg.corpus.points);
        o.read("latent_dim", cfg.corpus.latent_dim);
        o.read("image_dim", cfg.corpus.image_dim);
        o.read("text_dim", cfg.corpus.text_dim);
        o.read("audio_dim", cfg.corpus.audio_dim);
        o.read("templates", cfg.corpus.templates);
        o.read("noise_sigma", cfg.corpus.noise_sigma);
        o.read("template_offset_sigma", cfg.corpus.template_offset_sigma);
        o.read("point_jitter_sigma", cfg.corpus.point_jitter_sigma);
        o.finish();
    }
    if (const json* m = root.subobject("model")) {
        StrictObject o(*m, "model");
        o.read("hidden", cfg.model.hidden);
        o.read("raw_dim", cfg.model.raw_dim);
        o.read("embed_dim", cfg.model.embed_dim);
        o.read("projection_depth", cfg.model.projection_depth);
        o.read("ln_eps", cfg.model.ln_eps);
        o.finish();
    }
    if (const json* t = root.subobject("train")) {
        StrictObject o(*t, "train");
        o.read("temperature", cfg.train.temperature);
        o.read("batch_size", cfg.train.batch_size);
        o.read("epochs", cfg.train.epochs);
        o.read("lr", cfg.train.optimizer.lr);
        o.read("beta1", cfg.train.optimizer.beta1);
        o.read("beta2", cfg.train.optimizer.beta2);
        o.read("adam_eps", cfg.train.optimizer.eps);
        o.read("weight_decay", cfg.train.optimizer.weight_decay);
        o.read("weight_image", cfg.train.weight_image);
        o.read("weight_text", cfg.train.weight_text);
        o.read("weight_audio", cfg.train.weight_audio);
        o.read("symmetric", cfg.train.symmetric);
        o.read("learnable_tau", cfg.train.learnable_tau);
        o.finish();
    }
    if (const json* e = root.subobject("eval")) {
        StrictObject o(*e, "eval");
        std::vector<std::string> names;
        o.read("directions", names);
        if (!names.empty()) {
            cfg.eval.directions.clear();
            for (const std::string& n : names)
                cfg.eval.directions.push_back(retrieval::direction_from_name(n));
        }
        o.read("class_head_templates", cfg.eval.class_head_templates);
        o.finish();
    }
    if (const json* p = root.subobject("paths")) {
        StrictObject o(*p, "paths");
        o.read("corpus", cfg.paths.corpus);
        o.read("checkpoint", cfg.paths.checkpoint);
        o.read("report", cfg.paths.report);
        o.finish();
    }
    root.finish();
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw FormatError("config " + path.string() + ": " + e.what());
    }
    return parse_run_config(doc);
}

ordered_json run_config_to_json(const RunConfig& cfg) {
    ordered_json doc;
    doc["seed"] = cfg.seed;
    doc["corpus"] = {{"categories", cfg.corpus.categories},
                     {"audio_categories", cfg.corpus.audio_categories},
                     {"train_per_category", cfg.corpus.train_per_category},
                     {"test_per_category", cfg.corpus.test_per_category},
                     {"points", cfg.corpus.points},
                     {"latent_dim", cfg.corpus.latent_dim},
                     {"image_dim", cfg.corpus.image_dim},
                     {"text_dim", cfg.corpus.text_dim},
                     {"audio_dim", cfg.corpus.audio_dim},
                     {"templates", cfg.corpus.templates},
                     {"noise_sigma", cfg.corpus.noise_sigma},
                     {"template_offset_sigma", cfg.corpus.template_offset_sigma},
                     {"point_jitter_sigma", cfg.corpus.point_jitter_sigma}};
    doc["model"] = {{"hidden", cfg.model.hidden},
                    {"raw_dim", cfg.model.raw_dim},
                    {"embed_dim", cfg.model.embed_dim},
                    {"projection_depth", cfg.model.projection_depth},
                    {"ln_eps", cfg.model.ln_eps}};
    doc["train"] = {{"temperature", cfg.train.temperature},
                    {"batch_size", cfg.train.batch_size},
                    {"epochs", cfg.train.epochs},
                    {"lr", cfg.train.optimizer.lr},
                    {"beta1", cfg.train.optimizer.beta1},
                    {"beta2", cfg.train.optimizer.beta2},
                    {"adam_eps", cfg.train.optimizer.eps},
                    {"weight_decay", cfg.train.optimizer.weight_decay},
                    {"weight_image", cfg.train.weight_image},
                    {"weight_text", cfg.train.weight_text},
                    {"weight_audio", cfg.train.weight_audio},
                    {"symmetric", cfg.train.symmetric},
                    {"learnable_tau", cfg.train.learnable_tau}};
    std::vector<std::string> dir_names;
    for (retrieval::Direction d : cfg.eval.directions)
        dir_names.emplace_back(retrieval::direction_name(d));
    doc["eval"] = {{"directions", dir_names},
                   {"class_head_templates", cfg.eval.class_head_templates}};
    doc["paths"] = {{"corpus", cfg.paths.corpus},
                    {"checkpoint", cfg.paths.checkpoint},
                    {"report", cfg.paths.report}};
    return doc;
}

ordered_json train_report_to_json(const alignment::TrainReport& report, const RunConfig& cfg) {
    ordered_json doc;
    doc["kind"] = "train-report";
    doc["seed"] = report.seed;
    doc["epochs"] = report.trace.size();
    doc["checkpoint"] = report.checkpoint;
    if (!report.trace.empty()) {
        doc["initial_loss"] = report.trace.front().total;
        doc["final_loss"] = report.trace.back().total;
    }
    ordered_json trace = ordered_json::array();
    for (std::size_t e = 0; e < report.trace.size(); ++e) {
        const auto& t = report.trace[e];
        trace.push_back({{"epoch", e},
                         {"total", t.total},
                         {"image", t.image},
                         {"text", t.text},
                         {"audio", t.audio}});
    }
    doc["trace"] = std::move(trace);
    doc["config"] = run_config_to_json(cfg);
    return doc;
}

ordered_json eval_summary_to_json(const EvalSummary& summary, const RunConfig& cfg) {
    ordered_json doc;
    doc["kind"] = "eval-report";
    doc["seed"] = cfg.seed;
    doc["checkpoint_sha256"] = summary.checkpoint_sha256;
    ordered_json dirs;
    for (const auto& [name, map] : summary.map_by_direction) dirs[name] = map;
    doc["map"] = std::move(dirs);
    doc["zero_shot_accuracy"] = summary.zero_shot_accuracy;
    doc["per_category_accuracy"] = summary.per_category_accuracy;
    doc["config"] = run_config_to_json(cfg);
    return doc;
}

void write_json(const ordered_json& doc, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << doc.dump(2) << "\n";
    if (!out) throw IoError("write failed for " + path.string());
}

} // namespace palign::cli
