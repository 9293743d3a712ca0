#include "palign/encoders.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "palign/errors.hpp"

namespace palign::encoders {

using numcore::l2_normalize;

void PointCloud::validate() const {
    if (points.ndim() != 2 || points.dims[1] != 3)
        throw DimMismatch("point cloud must be N x 3");
    if (points.dims[0] < kMinPoints)
        throw TooFewPoints("point cloud has " + std::to_string(points.dims[0]) +
                           " points, need at least " + std::to_string(kMinPoints));
    if (!points.all_finite()) throw DimMismatch("point cloud has non-finite coordinates");
}

PointCloud read_xyz(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<double> coords;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ss(line);
        double x, y, z;
        if (!(ss >> x)) continue; // blank line
        if (!(ss >> y >> z))
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected `x y z`");
        std::string extra;
        if (ss >> extra)
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": trailing tokens");
        coords.push_back(x);
        coords.push_back(y);
        coords.push_back(z);
    }
    if (coords.empty()) throw FormatError(path.string() + ": no points");
    std::size_t n_points = coords.size() / 3;
    PointCloud cloud{Tensor::matrix(n_points, 3, std::move(coords))};
    cloud.validate();
    return cloud;
}

namespace {

Tensor init_linear_weight(std::size_t fan_in, std::size_t fan_out, SplitRng& rng) {
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor w({fan_in, fan_out});
    for (double& v : w.data) v = rng.uniform(-bound, bound);
    return w;
}

void check_linear(const LinearParams& lin, std::size_t in, std::size_t out, const char* name) {
    if (lin.w.ndim() != 2 || lin.w.dims[0] != in || lin.w.dims[1] != out)
        throw DimMismatch(std::string(name) + ": weight shape mismatch");
    if (lin.b.ndim() != 1 || lin.b.dims[0] != out)
        throw DimMismatch(std::string(name) + ": bias shape mismatch");
    if (!lin.w.all_finite() || !lin.b.all_finite())
        throw DimMismatch(std::string(name) + ": non-finite parameters");
}

} // namespace

PointEncoderParams PointEncoderParams::init(std::size_t hidden, std::size_t raw_dim, SplitRng rng) {
    if (hidden == 0 || raw_dim == 0) throw ConfigInvalid("point encoder dims must be positive");
    PointEncoderParams p;
    p.hidden = hidden;
    p.raw_dim = raw_dim;
    p.mlp1 = {init_linear_weight(3, hidden, rng), Tensor::zeros({hidden})};
    p.mlp2 = {init_linear_weight(hidden, hidden, rng), Tensor::zeros({hidden})};
    p.post1 = {init_linear_weight(hidden, hidden, rng), Tensor::zeros({hidden})};
    p.post2 = {init_linear_weight(hidden, raw_dim, rng), Tensor::zeros({raw_dim})};
    return p;
}

void PointEncoderParams::validate() const {
    check_linear(mlp1, 3, hidden, "mlp1");
    check_linear(mlp2, hidden, hidden, "mlp2");
    check_linear(post1, hidden, hidden, "post1");
    check_linear(post2, hidden, raw_dim, "post2");
}

ProjectionParams ProjectionParams::init(std::size_t in_dim, std::size_t out_dim, int depth,
                                        double ln_eps, SplitRng rng) {
    if (depth < 1 || depth > 3) throw ConfigInvalid("projection depth must be 1, 2 or 3");
    if (in_dim == 0 || out_dim == 0) throw ConfigInvalid("projection dims must be positive");
    if (ln_eps <= 0.0) throw ConfigInvalid("projection ln_eps must be positive");
    ProjectionParams p;
    p.depth = depth;
    p.in_dim = in_dim;
    p.out_dim = out_dim;
    p.ln_eps = ln_eps;
    std::size_t cur = in_dim;
    for (int d = 0; d < depth; ++d) {
        p.linears.push_back({init_linear_weight(cur, out_dim, rng), Tensor::zeros({out_dim})});
        cur = out_dim;
        if (d + 1 < depth)
            p.norms.push_back({Tensor::full({out_dim}, 1.0), Tensor::zeros({out_dim})});
    }
    return p;
}

void ProjectionParams::validate() const {
    if (depth < 1 || depth > 3) throw ConfigInvalid("projection depth must be 1, 2 or 3");
    if (linears.size() != static_cast<std::size_t>(depth))
        throw DimMismatch("projection: stored layer list does not match depth");
    if (norms.size() != static_cast<std::size_t>(depth - 1))
        throw DimMismatch("projection: stored norm list does not match depth");
    std::size_t cur = in_dim;
    for (int d = 0; d < depth; ++d) {
        check_linear(linears[d], cur, out_dim, "projection linear");
        cur = out_dim;
    }
    for (const auto& n : norms) {
        if (n.gamma.ndim() != 1 || n.gamma.dims[0] != out_dim || n.beta.ndim() != 1 ||
            n.beta.dims[0] != out_dim)
            throw DimMismatch("projection: LayerNorm shape mismatch");
    }
}

const char* modality_name(Modality m) {
    switch (m) {
        case Modality::Image: return "image";
        case Modality::Text: return "text";
        case Modality::Audio: return "audio";
    }
    return "?";
}

Tensor orthonormal_rows(const std::vector<const Tensor*>& fixed, std::size_t count,
                        std::size_t dim, SplitRng& rng) {
    std::size_t n_fixed = 0;
    for (const Tensor* f : fixed) {
        if (f->ndim() != 2 || f->dims[1] != dim)
            throw DimMismatch("orthonormal_rows: fixed rows have wrong width");
        n_fixed += f->dims[0];
    }
    if (count == 0) throw ConfigInvalid("orthonormal_rows: need at least one row");
    if (n_fixed + count > dim)
        throw ConfigInvalid("orthonormal_rows: more rows requested than the dimension admits");

    Tensor out({count, dim});
    auto project_out = [dim](const double* basis, double* v) {
        double d = 0.0;
        for (std::size_t j = 0; j < dim; ++j) d += basis[j] * v[j];
        for (std::size_t j = 0; j < dim; ++j) v[j] -= d * basis[j];
    };
    for (std::size_t i = 0; i < count; ++i) {
        double* row = out.data.data() + i * dim;
        for (int attempt = 0;; ++attempt) {
            for (std::size_t j = 0; j < dim; ++j) row[j] = rng.normal();
            for (const Tensor* f : fixed)
                for (std::size_t r = 0; r < f->dims[0]; ++r)
                    project_out(f->data.data() + r * dim, row);
            for (std::size_t r = 0; r < i; ++r) project_out(out.data.data() + r * dim, row);
            double norm = 0.0;
            for (std::size_t j = 0; j < dim; ++j) norm += row[j] * row[j];
            norm = std::sqrt(norm);
            if (norm > 1e-6) {
                for (std::size_t j = 0; j < dim; ++j) row[j] /= norm;
                break;
            }
            if (attempt > 64) throw ConfigInvalid("orthonormal_rows: degenerate draw");
        }
    }
    return out;
}

Tensor modality_view(Modality m, std::size_t latent_dim, std::size_t raw_dim,
                     std::uint64_t corpus_seed) {
    if (latent_dim == 0 || raw_dim < latent_dim)
        throw ConfigInvalid("modality view needs raw dim >= latent dim >= 1");
    SplitRng rng = SplitRng(corpus_seed).split(std::string("view.") + modality_name(m));
    return orthonormal_rows({}, latent_dim, raw_dim, rng);
}

AnchorEncoder make_anchor_encoder(Modality m, std::size_t latent_dim, std::size_t raw_dim,
                                  std::size_t embed_dim, std::uint64_t corpus_seed) {
    if (embed_dim < raw_dim)
        throw ConfigInvalid("anchor encoder needs embed dim >= raw modality dim (got " +
                            std::to_string(embed_dim) + " < " + std::to_string(raw_dim) + ")");
    // Shared action on the latent subspace: every modality sends its view
    // of a latent z to the same joint-space point. The complement of the
    // view subspace goes to per-modality directions orthogonal to that
    // shared image, so the whole map keeps orthonormal rows and preserves
    // dot products of arbitrary raw inputs.
    SplitRng common_rng = SplitRng(corpus_seed).split("anchor.common");
    Tensor shared = orthonormal_rows({}, latent_dim, embed_dim, common_rng); // L x C
    Tensor view = modality_view(m, latent_dim, raw_dim, corpus_seed);        // L x D

    std::size_t extra = raw_dim - latent_dim;
    Tensor w({raw_dim, embed_dim});
    // w = view^T . shared  (+ complement^T . range for the residual part)
    for (std::size_t d = 0; d < raw_dim; ++d)
        for (std::size_t c = 0; c < embed_dim; ++c) {
            double s = 0.0;
            for (std::size_t l = 0; l < latent_dim; ++l)
                s += view.at(l, d) * shared.at(l, c);
            w.at(d, c) = s;
        }
    if (extra > 0) {
        SplitRng comp_rng =
            SplitRng(corpus_seed).split(std::string("anchor.") + modality_name(m) + ".complement");
        Tensor complement = orthonormal_rows({&view}, extra, raw_dim, comp_rng); // extra x D
        SplitRng range_rng =
            SplitRng(corpus_seed).split(std::string("anchor.") + modality_name(m) + ".range");
        Tensor range = orthonormal_rows({&shared}, extra, embed_dim, range_rng); // extra x C
        for (std::size_t d = 0; d < raw_dim; ++d)
            for (std::size_t c = 0; c < embed_dim; ++c) {
                double s = 0.0;
                for (std::size_t e = 0; e < extra; ++e)
                    s += complement.at(e, d) * range.at(e, c);
                w.at(d, c) += s;
            }
    }
    AnchorEncoder enc;
    enc.tag = m;
    enc.w = std::move(w);
    enc.b = Tensor::zeros({embed_dim});
    return enc;
}

// --- single-input operations ---------------------------------------------

Tensor encode_points(const PointEncoderParams& params, const PointCloud& cloud) {
    cloud.validate();
    params.validate();
    Tape tape;
    TrainableVars vars;
    vars.w1 = tape.constant(params.mlp1.w);
    vars.b1 = tape.constant(params.mlp1.b);
    vars.w2 = tape.constant(params.mlp2.w);
    vars.b2 = tape.constant(params.mlp2.b);
    vars.w3 = tape.constant(params.post1.w);
    vars.b3 = tape.constant(params.post1.b);
    vars.w4 = tape.constant(params.post2.w);
    vars.b4 = tape.constant(params.post2.b);
    Var feat = encode_clouds(tape, vars, cloud.points, cloud.size());
    return feat.value().row(0);
}

Tensor project(const ProjectionParams& params, const Tensor& feat) {
    params.validate();
    if (feat.ndim() != 1 || feat.dims[0] != params.in_dim)
        throw DimMismatch("project: feature length must be " + std::to_string(params.in_dim));
    Tape tape;
    TrainableVars vars;
    vars.proj_depth = params.depth;
    vars.ln_eps = params.ln_eps;
    for (const auto& lin : params.linears) {
        vars.proj_w.push_back(tape.constant(lin.w));
        vars.proj_b.push_back(tape.constant(lin.b));
    }
    for (const auto& n : params.norms) {
        vars.norm_gamma.push_back(tape.constant(n.gamma));
        vars.norm_beta.push_back(tape.constant(n.beta));
    }
    Tensor as_row = Tensor::matrix(1, feat.dims[0], feat.data);
    Var out = project_features(tape, vars, tape.constant(as_row));
    return out.value().row(0);
}

Embedding anchor_encode(const AnchorEncoder& enc, const Tensor& raw) {
    if (raw.ndim() != 1 || raw.dims[0] != enc.input_dim())
        throw DimMismatch("anchor_encode: raw vector length must be " +
                          std::to_string(enc.input_dim()));
    std::size_t c = enc.output_dim();
    Tensor out({c});
    for (std::size_t j = 0; j < c; ++j) {
        double s = enc.b.data[j];
        for (std::size_t d = 0; d < raw.dims[0]; ++d) s += raw.data[d] * enc.w.at(d, j);
        out.data[j] = s;
    }
    return Embedding{l2_normalize(out), true};
}

Embedding encode_text_templates(const AnchorEncoder& enc, const Tensor& templates) {
    if (templates.ndim() != 2) throw DimMismatch("encode_text_templates: expected S x D matrix");
    std::size_t s_count = templates.dims[0];
    std::size_t c = enc.output_dim();
    Tensor mean({c});
    for (std::size_t s = 0; s < s_count; ++s) {
        Embedding e = anchor_encode(enc, templates.row(s));
        for (std::size_t j = 0; j < c; ++j) mean.data[j] += e.v.data[j];
    }
    for (double& x : mean.data) x /= static_cast<double>(s_count);
    return Embedding{l2_normalize(mean), true};
}

Embedding encode_text_templates(const AnchorEncoder& enc, const std::vector<Tensor>& templates) {
    if (templates.empty()) throw EmptyTemplateSet("encode_text_templates: no templates");
    Tensor mat({templates.size(), enc.input_dim()});
    for (std::size_t s = 0; s < templates.size(); ++s) {
        if (templates[s].ndim() != 1 || templates[s].dims[0] != enc.input_dim())
            throw DimMismatch("encode_text_templates: template length mismatch");
        for (std::size_t d = 0; d < enc.input_dim(); ++d) mat.at(s, d) = templates[s].data[d];
    }
    return encode_text_templates(enc, mat);
}

// --- model ----------------------------------------------------------------

void ModelConfig::validate() const {
    if (hidden == 0 || raw_dim == 0 || embed_dim == 0)
        throw ConfigInvalid("model dims must be positive");
    if (projection_depth < 1 || projection_depth > 3)
        throw ConfigInvalid("model.projection_depth must be 1, 2 or 3");
    if (ln_eps <= 0.0) throw ConfigInvalid("model.ln_eps must be positive");
}

const AnchorEncoder& AlignmentModel::anchor(Modality m) const {
    switch (m) {
        case Modality::Image: return image_anchor;
        case Modality::Text: return text_anchor;
        case Modality::Audio: return audio_anchor;
    }
    throw ConfigInvalid("unknown modality");
}

AlignmentModel AlignmentModel::init(const ModelConfig& cfg, std::size_t latent_dim,
                                    std::size_t image_dim, std::size_t text_dim,
                                    std::size_t audio_dim, std::uint64_t corpus_seed,
                                    std::uint64_t model_seed) {
    cfg.validate();
    SplitRng rng(model_seed);
    AlignmentModel m;
    m.embed_dim = cfg.embed_dim;
    m.encoder = PointEncoderParams::init(cfg.hidden, cfg.raw_dim, rng.split("encoder"));
    m.projection = ProjectionParams::init(cfg.raw_dim, cfg.embed_dim, cfg.projection_depth,
                                          cfg.ln_eps, rng.split("projection"));
    m.image_anchor =
        make_anchor_encoder(Modality::Image, latent_dim, image_dim, cfg.embed_dim, corpus_seed);
    m.text_anchor =
        make_anchor_encoder(Modality::Text, latent_dim, text_dim, cfg.embed_dim, corpus_seed);
    m.audio_anchor =
        make_anchor_encoder(Modality::Audio, latent_dim, audio_dim, cfg.embed_dim, corpus_seed);
    return m;
}

// --- tape forward ----------------------------------------------------------

TrainableVars register_trainable(Tape& tape, const AlignmentModel& model) {
    model.encoder.validate();
    model.projection.validate();
    TrainableVars v;
    v.proj_depth = model.projection.depth;
    v.ln_eps = model.projection.ln_eps;
    auto reg = [&](const std::string& name, const Tensor& t) {
        Var var = tape.param(t);
        v.named.emplace_back(name, var);
        return var;
    };
    v.w1 = reg("point_encoder.mlp1.w", model.encoder.mlp1.w);
    v.b1 = reg("point_encoder.mlp1.b", model.encoder.mlp1.b);
    v.w2 = reg("point_encoder.mlp2.w", model.encoder.mlp2.w);
    v.b2 = reg("point_encoder.mlp2.b", model.encoder.mlp2.b);
    v.w3 = reg("point_encoder.post1.w", model.encoder.post1.w);
    v.b3 = reg("point_encoder.post1.b", model.encoder.post1.b);
    v.w4 = reg("point_encoder.post2.w", model.encoder.post2.w);
    v.b4 = reg("point_encoder.post2.b", model.encoder.post2.b);
    for (std::size_t d = 0; d < model.projection.linears.size(); ++d) {
        std::string base = "proj.linear" + std::to_string(d + 1);
        v.proj_w.push_back(reg(base + ".w", model.projection.linears[d].w));
        v.proj_b.push_back(reg(base + ".b", model.projection.linears[d].b));
    }
    for (std::size_t d = 0; d < model.projection.norms.size(); ++d) {
        std::string base = "proj.norm" + std::to_string(d + 1);
        v.norm_gamma.push_back(reg(base + ".gamma", model.projection.norms[d].gamma));
        v.norm_beta.push_back(reg(base + ".beta", model.projection.norms[d].beta));
    }
    return v;
}

Var encode_clouds(Tape& tape, const TrainableVars& vars, const Tensor& stacked_points,
                  std::size_t points_per_cloud) {
    if (stacked_points.ndim() != 2 || stacked_points.dims[1] != 3)
        throw DimMismatch("encode_clouds: stacked points must be (B*N) x 3");
    if (points_per_cloud < kMinPoints)
        throw TooFewPoints("encode_clouds: " + std::to_string(points_per_cloud) +
                           " points per cloud, need at least " + std::to_string(kMinPoints));
    if (stacked_points.dims[0] % points_per_cloud != 0)
        throw DimMismatch("encode_clouds: row count not a multiple of points per cloud");
    Var x = tape.constant(stacked_points);
    Var h1 = tape.affine_relu(x, vars.w1, vars.b1);
    Var h2 = tape.affine_relu(h1, vars.w2, vars.b2);
    Var pooled = tape.group_max_rows(h2, points_per_cloud);
    Var p1 = tape.affine_relu(pooled, vars.w3, vars.b3);
    return tape.affine(p1, vars.w4, vars.b4);
}

Var project_features(Tape& tape, const TrainableVars& vars, Var feats) {
    Var cur = feats;
    for (std::size_t d = 0; d < vars.proj_w.size(); ++d) {
        cur = tape.affine(cur, vars.proj_w[d], vars.proj_b[d]);
        if (d + 1 < vars.proj_w.size())
            cur = tape.layer_norm_rows(cur, vars.norm_gamma[d], vars.norm_beta[d], vars.ln_eps);
    }
    return cur;
}

Tensor stack_clouds(const std::vector<const Tensor*>& clouds) {
    if (clouds.empty()) throw DimMismatch("stack_clouds: no clouds");
    std::size_t n = clouds.front()->dims[0];
    Tensor out({clouds.size() * n, 3});
    std::size_t row = 0;
    for (const Tensor* c : clouds) {
        if (c->ndim() != 2 || c->dims[1] != 3 || c->dims[0] != n)
            throw DimMismatch("stack_clouds: all clouds must be the same N x 3 shape");
        for (std::size_t i = 0; i < n * 3; ++i) out.data[row * 3 + i] = c->data[i];
        row += n;
    }
    return out;
}

Tensor embed_point_batch(const AlignmentModel& model, const Tensor& stacked_points,
                         std::size_t points_per_cloud) {
    Tape tape;
    TrainableVars vars;
    vars.proj_depth = model.projection.depth;
    vars.ln_eps = model.projection.ln_eps;
    vars.w1 = tape.constant(model.encoder.mlp1.w);
    vars.b1 = tape.constant(model.encoder.mlp1.b);
    vars.w2 = tape.constant(model.encoder.mlp2.w);
    vars.b2 = tape.constant(model.encoder.mlp2.b);
    vars.w3 = tape.constant(model.encoder.post1.w);
    vars.b3 = tape.constant(model.encoder.post1.b);
    vars.w4 = tape.constant(model.encoder.post2.w);
    vars.b4 = tape.constant(model.encoder.post2.b);
    for (const auto& lin : model.projection.linears) {
        vars.proj_w.push_back(tape.constant(lin.w));
        vars.proj_b.push_back(tape.constant(lin.b));
    }
    for (const auto& n : model.projection.norms) {
        vars.norm_gamma.push_back(tape.constant(n.gamma));
        vars.norm_beta.push_back(tape.constant(n.beta));
    }
    Var feats = encode_clouds(tape, vars, stacked_points, points_per_cloud);
    Var projected = project_features(tape, vars, feats);
    Var normalized = tape.l2_normalize_rows(projected);
    return normalized.value();
}

std::vector<std::pair<std::string, Tensor*>> trainable_tensors(AlignmentModel& model) {
    std::vector<std::pair<std::string, Tensor*>> out;
    out.emplace_back("point_encoder.mlp1.w", &model.encoder.mlp1.w);
    out.emplace_back("point_encoder.mlp1.b", &model.encoder.mlp1.b);
    out.emplace_back("point_encoder.mlp2.w", &model.encoder.mlp2.w);
    out.emplace_back("point_encoder.mlp2.b", &model.encoder.mlp2.b);
    out.emplace_back("point_encoder.post1.w", &model.encoder.post1.w);
    out.emplace_back("point_encoder.post1.b", &model.encoder.post1.b);
    out.emplace_back("point_encoder.post2.w", &model.encoder.post2.w);
    out.emplace_back("point_encoder.post2.b", &model.encoder.post2.b);
    for (std::size_t d = 0; d < model.projection.linears.size(); ++d) {
        std::string base = "proj.linear" + std::to_string(d + 1);
        out.emplace_back(base + ".w", &model.projection.linears[d].w);
        out.emplace_back(base + ".b", &model.projection.linears[d].b);
    }
    for (std::size_t d = 0; d < model.projection.norms.size(); ++d) {
        std::string base = "proj.norm" + std::to_string(d + 1);
        out.emplace_back(base + ".gamma", &model.projection.norms[d].gamma);
        out.emplace_back(base + ".beta", &model.projection.norms[d].beta);
    }
    return out;
}

std::vector<std::pair<std::string, const Tensor*>> trainable_tensors(const AlignmentModel& model) {
    auto mut = trainable_tensors(const_cast<AlignmentModel&>(model));
    std::vector<std::pair<std::string, const Tensor*>> out;
    out.reserve(mut.size());
    for (auto& [name, ptr] : mut) out.emplace_back(name, ptr);
    return out;
}

} // namespace palign::encoders
