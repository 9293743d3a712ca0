#include "palign/dataset.hpp"

#include <cmath>
#include <cstdio>

#include "palign/bundle.hpp"
#include "palign/encoders.hpp"
#include "palign/errors.hpp"

namespace palign::dataset {

using numcore::Bundle;

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr ShapeFamily kFamilies[] = {ShapeFamily::Sphere, ShapeFamily::Box, ShapeFamily::Torus,
                                     ShapeFamily::Cylinder, ShapeFamily::Cone};

double cosine(const Tensor& a, const Tensor& b) {
    return numcore::dot(a, b) / (numcore::l2_norm(a) * numcore::l2_norm(b));
}

/// raw = z . view + sigma * noise, with view rows orthonormal.
Tensor raw_view(const Tensor& z, const Tensor& view, double sigma, SplitRng& rng) {
    std::size_t d = view.dims[1];
    Tensor out({d});
    for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t l = 0; l < view.dims[0]; ++l) s += z.data[l] * view.at(l, j);
        out.data[j] = s;
    }
    if (sigma > 0.0)
        for (double& x : out.data) x += sigma * rng.normal();
    return out;
}

} // namespace

const char* shape_family_name(ShapeFamily f) {
    switch (f) {
        case ShapeFamily::Sphere: return "sphere";
        case ShapeFamily::Box: return "box";
        case ShapeFamily::Torus: return "torus";
        case ShapeFamily::Cylinder: return "cylinder";
        case ShapeFamily::Cone: return "cone";
    }
    return "?";
}

ShapeFamily shape_family_from_name(const std::string& name) {
    for (ShapeFamily f : kFamilies)
        if (name == shape_family_name(f)) return f;
    throw FormatError("unknown shape family '" + name + "'");
}

void CorpusConfig::validate() const {
    if (categories < 2) throw ConfigInvalid("corpus.categories: need at least 2");
    if (audio_categories > categories)
        throw ConfigInvalid("corpus.audio_categories: cannot exceed corpus.categories");
    if (train_per_category < 4) throw ConfigInvalid("corpus.train_per_category: need at least 4");
    if (test_per_category < 1) throw ConfigInvalid("corpus.test_per_category: need at least 1");
    if (points < encoders::kMinPoints)
        throw ConfigInvalid("corpus.points: need at least " + std::to_string(encoders::kMinPoints));
    if (latent_dim == 0) throw ConfigInvalid("corpus.latent_dim: must be positive");
    if (image_dim < latent_dim || text_dim < latent_dim || audio_dim < latent_dim)
        throw ConfigInvalid("corpus modality dims must be >= corpus.latent_dim");
    if (templates == 0) throw ConfigInvalid("corpus.templates: need at least 1");
    if (noise_sigma < 0.0 || template_offset_sigma < 0.0 || point_jitter_sigma < 0.0)
        throw ConfigInvalid("corpus noise parameters must be non-negative");
}

Tensor sample_cloud(ShapeFamily family, const Tensor& deform, std::size_t n_points,
                    double jitter_sigma, SplitRng& rng) {
    if (deform.numel() != 4) throw DimMismatch("sample_cloud: deform must be [sx, sy, sz, rot]");
    Tensor out({n_points, 3});
    double sx = deform[0], sy = deform[1], sz = deform[2], rot = deform[3];
    double cr = std::cos(rot), sr = std::sin(rot);
    for (std::size_t i = 0; i < n_points; ++i) {
        double x = 0, y = 0, z = 0;
        switch (family) {
            case ShapeFamily::Sphere: {
                double gx = rng.normal(), gy = rng.normal(), gz = rng.normal();
                double n = std::sqrt(gx * gx + gy * gy + gz * gz);
                if (n < 1e-9) n = 1e-9;
                x = gx / n, y = gy / n, z = gz / n;
                break;
            }
            case ShapeFamily::Box: {
                // face of the cube [-0.7, 0.7]^3
                std::uint64_t face = rng.next_below(6);
                double u = rng.uniform(-0.7, 0.7), v = rng.uniform(-0.7, 0.7);
                double w = (face % 2 == 0) ? 0.7 : -0.7;
                if (face / 2 == 0) x = w, y = u, z = v;
                else if (face / 2 == 1) x = u, y = w, z = v;
                else x = u, y = v, z = w;
                break;
            }
            case ShapeFamily::Torus: {
                double theta = rng.uniform(0.0, 2.0 * kPi);
                double phi = rng.uniform(0.0, 2.0 * kPi);
                double ring = 0.7 + 0.25 * std::cos(phi);
                x = ring * std::cos(theta);
                y = ring * std::sin(theta);
                z = 0.25 * std::sin(phi);
                break;
            }
            case ShapeFamily::Cylinder: {
                double theta = rng.uniform(0.0, 2.0 * kPi);
                x = 0.5 * std::cos(theta);
                y = 0.5 * std::sin(theta);
                z = rng.uniform(-0.7, 0.7);
                break;
            }
            case ShapeFamily::Cone: {
                double t = std::sqrt(rng.uniform());
                double theta = rng.uniform(0.0, 2.0 * kPi);
                x = 0.6 * t * std::cos(theta);
                y = 0.6 * t * std::sin(theta);
                z = 0.7 - 1.4 * t;
                break;
            }
        }
        double dx = sx * x, dy = sy * y, dz = sz * z;
        out.at(i, 0) = cr * dx - sr * dy + jitter_sigma * rng.normal();
        out.at(i, 1) = sr * dx + cr * dy + jitter_sigma * rng.normal();
        out.at(i, 2) = dz + jitter_sigma * rng.normal();
    }
    return out;
}

PairedCorpus generate_corpus(const CorpusConfig& config, std::uint64_t seed) {
    config.validate();
    PairedCorpus corpus;
    corpus.config = config;
    corpus.seed = seed;
    SplitRng root(seed);

    corpus.image_view =
        encoders::modality_view(encoders::Modality::Image, config.latent_dim, config.image_dim, seed);
    corpus.text_view =
        encoders::modality_view(encoders::Modality::Text, config.latent_dim, config.text_dim, seed);
    corpus.audio_view =
        encoders::modality_view(encoders::Modality::Audio, config.latent_dim, config.audio_dim, seed);

    // Category prototypes: unit latents with pairwise cosine < 0.5;
    // offending draws are regenerated.
    SplitRng proto_rng = root.split("prototypes");
    for (std::size_t c = 0; c < config.categories; ++c) {
        CategorySpec cat;
        cat.id = c;
        for (int attempt = 0;; ++attempt) {
            Tensor z({config.latent_dim});
            for (double& v : z.data) v = proto_rng.normal();
            z = numcore::l2_normalize(z);
            bool ok = true;
            for (const CategorySpec& prev : corpus.categories)
                if (cosine(z, prev.prototype) >= 0.5) ok = false;
            if (ok) {
                cat.prototype = std::move(z);
                break;
            }
            if (attempt > 1000)
                throw ConfigInvalid("generate_corpus: cannot separate prototypes; lower the "
                                    "category count or raise latent_dim");
        }
        cat.family = kFamilies[c % 5];
        cat.audio_capable = c < config.audio_categories;
        corpus.categories.push_back(std::move(cat));
    }

    // Deformations; same-family categories are pushed apart so geometry
    // alone identifies the category.
    SplitRng deform_rng = root.split("deformations");
    for (std::size_t c = 0; c < config.categories; ++c) {
        CategorySpec& cat = corpus.categories[c];
        for (int attempt = 0;; ++attempt) {
            Tensor d = Tensor::vector({deform_rng.uniform(0.6, 1.4), deform_rng.uniform(0.6, 1.4),
                                       deform_rng.uniform(0.6, 1.4), deform_rng.uniform(0.0, kPi)});
            bool ok = true;
            for (std::size_t p = 0; p < c; ++p) {
                const CategorySpec& prev = corpus.categories[p];
                if (prev.family != cat.family) continue;
                double dist = 0.0;
                for (int k = 0; k < 3; ++k) {
                    double diff = d[k] - prev.deform[k];
                    dist += diff * diff;
                }
                if (std::sqrt(dist) < 0.35 && std::abs(d[3] - prev.deform[3]) < 0.4) ok = false;
            }
            if (ok || attempt > 200) {
                cat.deform = std::move(d);
                break;
            }
        }
    }

    // Template offset bank, shared across categories; offset 0 is zero so
    // S=1 reduces to the prototype view.
    SplitRng offset_rng = root.split("template-offsets");
    corpus.template_offsets = Tensor({config.templates, config.text_dim});
    for (std::size_t s = 1; s < config.templates; ++s)
        for (std::size_t j = 0; j < config.text_dim; ++j)
            corpus.template_offsets.at(s, j) = config.template_offset_sigma * offset_rng.normal();

    // Samples: per category, train then test, contiguous global ids.
    SplitRng cloud_rng = root.split("clouds");
    SplitRng mod_rng = root.split("modalities");
    std::size_t per_cat = config.train_per_category + config.test_per_category;
    for (std::size_t c = 0; c < config.categories; ++c) {
        const CategorySpec& cat = corpus.categories[c];
        for (std::size_t j = 0; j < per_cat; ++j) {
            PairedSample s;
            s.category = c;
            s.points = sample_cloud(cat.family, cat.deform, config.points,
                                    config.point_jitter_sigma, cloud_rng);
            s.image = raw_view(cat.prototype, corpus.image_view, config.noise_sigma, mod_rng);
            if (cat.audio_capable)
                s.audio = raw_view(cat.prototype, corpus.audio_view, config.noise_sigma, mod_rng);
            std::size_t id = corpus.samples.size();
            if (j < config.train_per_category) corpus.train_idx.push_back(id);
            else corpus.test_idx.push_back(id);
            corpus.samples.push_back(std::move(s));
        }
    }
    corpus.validate();
    return corpus;
}

void PairedCorpus::validate() const {
    config.validate();
    if (categories.size() != config.categories)
        throw ShapeError("corpus: category table size mismatch");
    std::size_t per_cat = config.train_per_category + config.test_per_category;
    if (samples.size() != per_cat * config.categories)
        throw ShapeError("corpus: sample count mismatch");
    if (train_idx.size() != config.train_per_category * config.categories ||
        test_idx.size() != config.test_per_category * config.categories)
        throw ShapeError("corpus: split sizes do not match the config");
    std::vector<bool> seen(samples.size(), false);
    for (std::size_t i : train_idx) {
        if (i >= samples.size() || seen[i]) throw ShapeError("corpus: bad train split");
        seen[i] = true;
    }
    for (std::size_t i : test_idx) {
        if (i >= samples.size() || seen[i]) throw ShapeError("corpus: train/test splits overlap");
        seen[i] = true;
    }
    for (const PairedSample& s : samples) {
        if (s.category >= categories.size()) throw ShapeError("corpus: sample category out of range");
        if (s.has_audio() != categories[s.category].audio_capable)
            throw ShapeError("corpus: audio presence disagrees with category");
        if (!s.points.all_finite() || !s.image.all_finite())
            throw ShapeError("corpus: non-finite sample data");
    }
}

Tensor expand_templates(const PairedCorpus& corpus, std::size_t category_id, std::size_t s_count) {
    if (category_id >= corpus.categories.size())
        throw UnknownSample("expand_templates: category " + std::to_string(category_id));
    if (s_count < 1) throw ConfigInvalid("expand_templates: need at least one template");
    if (s_count > corpus.template_offsets.dims[0])
        throw ConfigInvalid("expand_templates: offset bank holds only " +
                            std::to_string(corpus.template_offsets.dims[0]) + " templates");
    const CategorySpec& cat = corpus.categories[category_id];
    std::size_t d = corpus.config.text_dim;
    Tensor out({s_count, d});
    for (std::size_t j = 0; j < d; ++j) {
        double base = 0.0;
        for (std::size_t l = 0; l < corpus.config.latent_dim; ++l)
            base += cat.prototype.data[l] * corpus.text_view.at(l, j);
        for (std::size_t s = 0; s < s_count; ++s)
            out.at(s, j) = base + corpus.template_offsets.at(s, j);
    }
    return out;
}

PairStream::PairStream(const PairedCorpus& corpus) : corpus_(&corpus) {
    by_category_.resize(corpus.categories.size());
    for (std::size_t i : corpus.train_idx) by_category_[corpus.samples[i].category].push_back(i);
    order_.reserve(corpus.train_idx.size());
    for (std::size_t i : corpus.train_idx)
        order_.push_back({i, corpus.samples[i].has_audio()});
}

void PairStream::reshuffle(SplitRng& rng) {
    std::vector<std::vector<std::size_t>> pools = by_category_;
    for (auto& pool : pools) rng.shuffle(pool);
    std::vector<std::size_t> cat_order(pools.size());
    for (std::size_t c = 0; c < pools.size(); ++c) cat_order[c] = c;

    order_.clear();
    std::size_t remaining = corpus_->train_idx.size();
    std::size_t round = 0;
    while (remaining > 0) {
        rng.shuffle(cat_order);
        for (std::size_t c : cat_order) {
            if (round < pools[c].size()) {
                std::size_t idx = pools[c][round];
                order_.push_back({idx, corpus_->samples[idx].has_audio()});
                --remaining;
            }
        }
        ++round;
    }
}

void save_corpus(const PairedCorpus& corpus, const std::filesystem::path& path) {
    corpus.validate();
    Bundle b;
    const CorpusConfig& c = corpus.config;
    b.set_meta("format", "corpus-v1");
    b.set_meta("seed", std::to_string(corpus.seed));
    b.set_meta("categories", std::to_string(c.categories));
    b.set_meta("audio_categories", std::to_string(c.audio_categories));
    b.set_meta("train_per_category", std::to_string(c.train_per_category));
    b.set_meta("test_per_category", std::to_string(c.test_per_category));
    b.set_meta("points", std::to_string(c.points));
    b.set_meta("latent_dim", std::to_string(c.latent_dim));
    b.set_meta("image_dim", std::to_string(c.image_dim));
    b.set_meta("text_dim", std::to_string(c.text_dim));
    b.set_meta("audio_dim", std::to_string(c.audio_dim));
    b.set_meta("templates", std::to_string(c.templates));
    char buf[64];
    auto fmt = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    b.set_meta("noise_sigma", fmt(c.noise_sigma));
    b.set_meta("template_offset_sigma", fmt(c.template_offset_sigma));
    b.set_meta("point_jitter_sigma", fmt(c.point_jitter_sigma));
    for (const CategorySpec& cat : corpus.categories) {
        std::string key = "category." + std::to_string(cat.id);
        b.set_meta(key, std::string(shape_family_name(cat.family)) + " audio=" +
                            (cat.audio_capable ? "1" : "0"));
        b.add(key + ".prototype", cat.prototype);
        b.add(key + ".deform", cat.deform);
    }
    b.add("templates.offsets", corpus.template_offsets);
    b.add("view.image", corpus.image_view);
    b.add("view.text", corpus.text_view);
    b.add("view.audio", corpus.audio_view);

    auto idx_tensor = [](const std::vector<std::size_t>& idx) {
        Tensor t({idx.size()});
        for (std::size_t i = 0; i < idx.size(); ++i) t.data[i] = static_cast<double>(idx[i]);
        return t;
    };
    b.add("split.train", idx_tensor(corpus.train_idx));
    b.add("split.test", idx_tensor(corpus.test_idx));
    Tensor cats({corpus.samples.size()});
    for (std::size_t i = 0; i < corpus.samples.size(); ++i)
        cats.data[i] = static_cast<double>(corpus.samples[i].category);
    b.add("sample.categories", cats);
    for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
        std::string key = "sample." + std::to_string(i);
        b.add(key + ".points", corpus.samples[i].points);
        b.add(key + ".image", corpus.samples[i].image);
        if (corpus.samples[i].has_audio()) b.add(key + ".audio", corpus.samples[i].audio);
    }
    b.save(path);
}

PairedCorpus load_corpus(const std::filesystem::path& path) {
    Bundle b = Bundle::load(path);
    if (b.find_meta("format") != std::optional<std::string>("corpus-v1"))
        throw FormatError("not a corpus file: " + path.string());
    PairedCorpus corpus;
    CorpusConfig& c = corpus.config;
    corpus.seed = b.meta_u64("seed");
    c.categories = b.meta_u64("categories");
    c.audio_categories = b.meta_u64("audio_categories");
    c.train_per_category = b.meta_u64("train_per_category");
    c.test_per_category = b.meta_u64("test_per_category");
    c.points = b.meta_u64("points");
    c.latent_dim = b.meta_u64("latent_dim");
    c.image_dim = b.meta_u64("image_dim");
    c.text_dim = b.meta_u64("text_dim");
    c.audio_dim = b.meta_u64("audio_dim");
    c.templates = b.meta_u64("templates");
    c.noise_sigma = b.meta_f64("noise_sigma");
    c.template_offset_sigma = b.meta_f64("template_offset_sigma");
    c.point_jitter_sigma = b.meta_f64("point_jitter_sigma");

    for (std::size_t i = 0; i < c.categories; ++i) {
        std::string key = "category." + std::to_string(i);
        std::string desc = b.meta_at(key);
        auto ap = desc.find(" audio=");
        if (ap == std::string::npos || ap + 8 != desc.size())
            throw FormatError("corpus: malformed category entry " + key);
        CategorySpec cat;
        cat.id = i;
        cat.family = shape_family_from_name(desc.substr(0, ap));
        cat.audio_capable = desc.substr(ap + 7) == "1";
        cat.prototype = b.tensor_at(key + ".prototype");
        cat.deform = b.tensor_at(key + ".deform");
        corpus.categories.push_back(std::move(cat));
    }
    corpus.template_offsets = b.tensor_at("templates.offsets");
    corpus.image_view = b.tensor_at("view.image");
    corpus.text_view = b.tensor_at("view.text");
    corpus.audio_view = b.tensor_at("view.audio");

    auto idx_list = [&](const std::string& name) {
        const Tensor& t = b.tensor_at(name);
        std::vector<std::size_t> out(t.numel());
        for (std::size_t i = 0; i < t.numel(); ++i) out[i] = static_cast<std::size_t>(t.data[i]);
        return out;
    };
    corpus.train_idx = idx_list("split.train");
    corpus.test_idx = idx_list("split.test");
    const Tensor& cats = b.tensor_at("sample.categories");
    for (std::size_t i = 0; i < cats.numel(); ++i) {
        std::string key = "sample." + std::to_string(i);
        PairedSample s;
        s.category = static_cast<std::size_t>(cats.data[i]);
        s.points = b.tensor_at(key + ".points");
        s.image = b.tensor_at(key + ".image");
        if (b.has(key + ".audio")) s.audio = b.tensor_at(key + ".audio");
        corpus.samples.push_back(std::move(s));
    }
    try {
        corpus.validate();
    } catch (const ShapeError&) {
        throw;
    } catch (const Error& e) {
        throw FormatError(std::string("corpus: ") + e.what());
    }
    return corpus;
}

} // namespace palign::dataset
