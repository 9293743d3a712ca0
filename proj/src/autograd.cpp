#include "palign/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <utility>

#include "palign/errors.hpp"

namespace palign::numcore {

const Tensor& Var::value() const { return tape_->value_of(id_); }

const Tensor& Var::grad() const { return tape_->grad_buffer(id_); }

bool Var::requires_grad() const { return tape_->needs_grad(id_); }

Var Tape::make_leaf(Tensor value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Tape::make_node(Tensor value, bool requires_grad, std::function<void(Tape&)> backprop) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.numel() == 0) n.grad = Tensor::zeros(n.value.dims);
    return n.grad;
}

void Tape::clear() { nodes_.clear(); }

// --- kernels --------------------------------------------------------------

void mm_nn_acc(const Tensor& a, const Tensor& b, Tensor& c) {
    std::size_t r = a.dims[0], k = a.dims[1], m = b.dims[1];
    const double* pa = a.data.data();
    const double* pb = b.data.data();
    double* pc = c.data.data();
    // Row-parallel is safe for bit-reproducibility: every output element is
    // accumulated by exactly one thread in k-ascending order, so the result
    // does not depend on the thread count or schedule.
    std::int64_t rows = static_cast<std::int64_t>(r);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (r * k * m > 1u << 18)
#endif
    for (std::int64_t i = 0; i < rows; ++i) {
        double* crow = pc + static_cast<std::size_t>(i) * m;
        const double* arow = pa + static_cast<std::size_t>(i) * k;
        for (std::size_t kk = 0; kk < k; ++kk) {
            double av = arow[kk];
            const double* brow = pb + kk * m;
            for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
}

void mm_nt_acc(const Tensor& a, const Tensor& b, Tensor& c) {
    std::size_t r = a.dims[0], k = a.dims[1], m = b.dims[0];
    const double* pa = a.data.data();
    const double* pb = b.data.data();
    double* pc = c.data.data();
    for (std::size_t i = 0; i < r; ++i) {
        const double* arow = pa + i * k;
        double* crow = pc + i * m;
        for (std::size_t j = 0; j < m; ++j) {
            const double* brow = pb + j * k;
            double s = 0.0;
            for (std::size_t kk = 0; kk < k; ++kk) s += arow[kk] * brow[kk];
            crow[j] += s;
        }
    }
}

void mm_tn_acc(const Tensor& a, const Tensor& b, Tensor& c) {
    std::size_t r = a.dims[0], k = a.dims[1], m = b.dims[1];
    const double* pa = a.data.data();
    const double* pb = b.data.data();
    double* pc = c.data.data();
    for (std::size_t i = 0; i < r; ++i) {
        const double* arow = pa + i * k;
        const double* brow = pb + i * m;
        for (std::size_t kk = 0; kk < k; ++kk) {
            double av = arow[kk];
            double* crow = pc + kk * m;
            for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
}

Tensor transposed(const Tensor& m) {
    if (m.ndim() != 2) throw DimMismatch("transposed: expected a 2-D tensor");
    Tensor out({m.dims[1], m.dims[0]});
    for (std::size_t i = 0; i < m.dims[0]; ++i)
        for (std::size_t j = 0; j < m.dims[1]; ++j) out.at(j, i) = m.at(i, j);
    return out;
}

// --- ops ------------------------------------------------------------------

namespace {

void require_2d(const Tensor& t, const char* op) {
    if (t.ndim() != 2) throw DimMismatch(std::string(op) + ": expected a 2-D tensor");
}

} // namespace

Var Tape::matmul(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_2d(av, "matmul");
    require_2d(bv, "matmul");
    if (av.dims[1] != bv.dims[0]) throw DimMismatch("matmul: inner dimensions disagree");
    Tensor out({av.dims[0], bv.dims[1]});
    mm_nn_acc(av, bv, out);
    bool rg = a.requires_grad() || b.requires_grad();
    std::size_t ia = a.id(), ib = b.id(), self = nodes_.size();
    return make_node(std::move(out), rg, [ia, ib, self](Tape& t) {
        const Tensor& g = t.grad_buffer(self);
        // da = g . b^T via an explicit transpose; the saxpy kernel is much
        // faster than the dot-product form when g is tall.
        if (t.needs_grad(ia)) {
            Tensor bt = transposed(t.value_of(ib));
            mm_nn_acc(g, bt, t.grad_buffer(ia));
        }
        if (t.needs_grad(ib)) mm_tn_acc(t.value_of(ia), g, t.grad_buffer(ib));
    });
}

Var Tape::matmul_nt(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_2d(av, "matmul_nt");
    require_2d(bv, "matmul_nt");
    if (av.dims[1] != bv.dims[1]) throw DimMismatch("matmul_nt: inner dimensions disagree");
    Tensor out({av.dims[0], bv.dims[0]});
    mm_nt_acc(av, bv, out);
    bool rg = a.requires_grad() || b.requires_grad();
    std::size_t ia = a.id(), ib = b.id(), self = nodes_.size();
    return make_node(std::move(out), rg, [ia, ib, self](Tape& t) {
        const Tensor& g = t.grad_buffer(self); // r x m
        if (t.needs_grad(ia)) mm_nn_acc(g, t.value_of(ib), t.grad_buffer(ia));
        // db = g^T . a
        if (t.needs_grad(ib)) mm_tn_acc(g, t.value_of(ia), t.grad_buffer(ib));
    });
}

Var Tape::add_rowvec(Var x, Var v) {
    const Tensor& xv = x.value();
    const Tensor& vv = v.value();
    require_2d(xv, "add_rowvec");
    if (vv.ndim() != 1 || vv.dims[0] != xv.dims[1])
        throw DimMismatch("add_rowvec: vector length must equal column count");
    Tensor out = xv;
    std::size_t r = xv.dims[0], c = xv.dims[1];
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] += vv.data[j];
    bool rg = x.requires_grad() || v.requires_grad();
    std::size_t ix = x.id(), iv = v.id(), self = nodes_.size();
    return make_node(std::move(out), rg, [ix, iv, self, r, c](Tape& t) {
        const Tensor& g = t.grad_buffer(self);
        if (t.needs_grad(ix)) {
            Tensor& gx = t.grad_buffer(ix);
            for (std::size_t i = 0; i < g.numel(); ++i) gx.data[i] += g.data[i];
        }
        if (t.needs_grad(iv)) {
            Tensor& gv = t.grad_buffer(iv);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) gv.data[j] += g.data[i * c + j];
        }
    });
}

Var Tape::affine(Var x, Var w, Var bias) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    const Tensor& bv = bias.value();
    require_2d(xv, "affine");
    require_2d(wv, "affine");
    if (xv.dims[1] != wv.dims[0]) throw DimMismatch("affine: inner dimensions disagree");
    if (bv.ndim() != 1 || bv.dims[0] != wv.dims[1])
        throw DimMismatch("affine: bias length must equal output width");
    std::size_t r = xv.dims[0], m = wv.dims[1];
    Tensor out({r, m});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < m; ++j) out.data[i * m + j] = bv.data[j];
    mm_nn_acc(xv, wv, out);
    bool rg = x.requires_grad() || w.requires_grad() || bias.requires_grad();
    std::size_t ix = x.id(), iw = w.id(), ib = bias.id(), self = nodes_.size();
    return make_node(std::move(out), rg, [ix, iw, ib, self, r, m](Tape& t) {
        const Tensor& g = t.grad_buffer(self);
        if (t.needs_grad(ix)) {
            Tensor wt = transposed(t.value_of(iw));
            mm_nn_acc(g, wt, t.grad_buffer(ix));
        }
        if (t.needs_grad(iw)) mm_tn_acc(t.value_of(ix), g, t.grad_buffer(iw));
        if (t.needs_grad(ib)) {
            Tensor& gb = t.grad_buffer(ib);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < m; ++j) gb.data[j] += g.data[i * m + j];
        }
    });
}

Var Tape::affine_relu(Var x, Var w, Var bias) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    const Tensor& bv = bias.value();
    require_2d(xv, "affine_relu");
    require_2d(wv, "affine_relu");
    if (xv.dims[1] != wv.dims[0]) throw DimMismatch("affine_relu: inner dimensions disagree");
    if (bv.ndim() != 1 || bv.dims[0] != wv.dims[1])
        throw DimMismatch("affine_relu: bias length must equal output width");
    std::size_t r = xv.dims[0], m = wv.dims[1];
    Tensor out({r, m});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < m; ++j) out.data[i * m + j] = bv.data[j];
    mm_nn_acc(xv, wv, out);
    for (double& v : out.data)
        if (v < 0.0) v = 0.0;
    bool rg = x.requires_grad() || w.requires_grad() || bias.requires_grad();
    std::size_t ix = x.id(), iw = w.id(), ib = bias.id(), self = nodes_.size();
    return make_node(std::move(out), rg, [ix, iw, ib, self, r, m](Tape& t) {
        const Tensor& g = t.grad_buffer(self);
        const Tensor& y = t.value_of(self);
        // Zero entries of the output mark clamped activations (pre <= 0).
        Tensor gm({r, m});
        for (std::size_t i = 0; i < r * m; ++i) gm.data[i] = y.data[i] > 0.0 ? g.data[i] : 0.0;
        if (t.needs_grad(ix)) {
            Tensor wt = transposed(t.value_of(iw));
            mm_nn_acc(gm, wt, t.grad_buffer(ix));
        }
        if (t.needs_grad(iw)) mm_tn_acc(t.value_of(ix), gm, t.grad_buffer(iw));
        if (t.needs_grad(ib)) {
            Tensor& gb = t.grad_buffer(ib);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < m; ++j) gb.data[j] += gm.data[i * m + j];
        }
    });
}

Var Tape::add(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (!av.same_dims(bv)) throw DimMismatch("add: shape mismatch");
    Tensor out = av;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += bv.data[i];
    bool rg = a.requires_grad() || b.requires_grad();
    std::size_t ia = a.id(), ib = b.id(), self = nodes_.size();
    return make_node(std::move(out), rg, [ia, ib, self](Tape& t) {
        const Tensor& g = t.grad_buffer(self);
        for (std::size_t which : {ia, ib}) {
            if (!t.needs_grad(which)) continue;
            Tensor& gi = t.grad_buffer(which);
            for (std::size_t i = 0; i < g.numel(); ++i) gi.data[i] += g.data[i];
        }
    });
}

Var Tape::sub(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (!av.same_dims(bv)) throw DimMismatch("sub: shape mismatch");
    Tensor out = av;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] -= bv.data[i];
    bool rg = a.requires_grad() || b.requires_grad();
    std::size_t ia = a.id(), ib = b.id(), self = nodes_.size();
    return make_node(std::move(out), rg, [ia, ib, self](Tape& t) {
        const Tensor& g = t.grad_buffer(self);
        if (t.needs_grad(ia)) {
            Tensor& ga = t.grad_buffer(ia);
            for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i];
        }
        if (t.needs_grad(ib)) {
            Tensor& gb = t.grad_buffer(ib);
            for (std::size_t i = 0; i < g.numel(); ++i) gb.data[i] -= g.data[i];
        }
    });
}

Var Tape::mul(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (!av.same_dims(bv)) throw DimMismatch("mul: shape mismatch");
    Tensor out = av;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] *= bv.data[i];
    bool rg = a.requires_grad() || b.requires_grad();
    std::size_t ia = a.id(), ib = b.id(), self = nodes_.size();
    return make_node(std::move(out), rg, [ia, ib, self](Tape& t) {
        const Tensor& g = t.grad_buffer(self);
        if (t.needs_grad(ia)) {
            Tensor& ga = t.grad_buffer(ia);
            const Tensor& bval = t.value_of(ib);
            for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i] * bval.data[i];
        }
        if (t.needs_grad(ib)) {
            Tensor& gb = t.grad_buffer(ib);
            const Tensor& aval = t.value_of(ia);
            for (std::size_t i = 0; i < g.numel(); ++i) gb.data[i] += g.data[i] * aval.data[i];
        }
    });
}

Var Tape::scale(Var x, double s) {
    Tensor out = x.value();
    for (double& v : out.data) v *= s;
    std::size_t ix = x.id(), self = nodes_.size();
    return make_node(std::move(out), x.requires_grad(), [ix, self, s](Tape& t) {
        if (!t.needs_grad(ix)) return;
        const Tensor& g = t.grad_buffer(self);
        Tensor& gx = t.grad_buffer(ix);
        for (std::size_t i = 0; i < g.numel(); ++i) gx.data[i] += s * g.data[i];
    });
}

Var Tape::relu(Var x) {
    Tensor out = x.value();
    for (double& v : out.data)
        if (v < 0.0) v = 0.0;
    std::size_t ix = x.id(), self = nodes_.size();
    return make_node(std::move(out), x.requires_grad(), [ix, self](Tape& t) {
        if (!t.needs_grad(ix)) return;
        const Tensor& g = t.grad_buffer(self);
        const Tensor& xv = t.value_of(ix);
        Tensor& gx = t.grad_buffer(ix);
        for (std::size_t i = 0; i < g.numel(); ++i)
            if (xv.data[i] > 0.0) gx.data[i] += g.data[i];
    });
}

Var Tape::group_max_rows(Var x, std::size_t group_size) {
    const Tensor& xv = x.value();
    require_2d(xv, "group_max_rows");
    if (group_size == 0 || xv.dims[0] % group_size != 0)
        throw DimMismatch("group_max_rows: row count not divisible by group size");
    std::size_t groups = xv.dims[0] / group_size;
    std::size_t c = xv.dims[1];
    Tensor out({groups, c});
    auto argmax = std::make_shared<std::vector<std::uint32_t>>(groups * c);
    for (std::size_t gix = 0; gix < groups; ++gix) {
        std::size_t base = gix * group_size;
        for (std::size_t j = 0; j < c; ++j) {
            double best = xv.data[base * c + j];
            std::uint32_t best_row = static_cast<std::uint32_t>(base);
            for (std::size_t rr = 1; rr < group_size; ++rr) {
                double v = xv.data[(base + rr) * c + j];
                if (v > best) {
                    best = v;
                    best_row = static_cast<std::uint32_t>(base + rr);
                }
            }
            out.data[gix * c + j] = best;
            (*argmax)[gix * c + j] = best_row;
        }
    }
    std::size_t ix = x.id(), self = nodes_.size();
    return make_node(std::move(out), x.requires_grad(), [ix, self, argmax, groups, c](Tape& t) {
        if (!t.needs_grad(ix)) return;
        const Tensor& g = t.grad_buffer(self);
        Tensor& gx = t.grad_buffer(ix);
        for (std::size_t gix = 0; gix < groups; ++gix)
            for (std::size_t j = 0; j < c; ++j)
                gx.data[(*argmax)[gix * c + j] * c + j] += g.data[gix * c + j];
    });
}

Var Tape::layer_norm_rows(Var x, Var gamma, Var beta, double eps) {
    const Tensor& xv = x.value();
    require_2d(xv, "layer_norm_rows");
    std::size_t r = xv.dims[0], c = xv.dims[1];
    const Tensor& gv = gamma.value();
    const Tensor& bv = beta.value();
    if (gv.ndim() != 1 || bv.ndim() != 1 || gv.dims[0] != c || bv.dims[0] != c)
        throw DimMismatch("layer_norm_rows: gamma/beta length must equal column count");
    if (eps < 0.0) throw ConfigInvalid("layer_norm_rows: eps must be >= 0");

    Tensor out({r, c});
    auto xhat = std::make_shared<Tensor>(Tensor({r, c}));
    auto inv_std = std::make_shared<Tensor>(Tensor({r}));
    for (std::size_t i = 0; i < r; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < c; ++j) mean += xv.data[i * c + j];
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            double d = xv.data[i * c + j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(c);
        double istd = 1.0 / std::sqrt(var + eps);
        inv_std->data[i] = istd;
        for (std::size_t j = 0; j < c; ++j) {
            double xh = (xv.data[i * c + j] - mean) * istd;
            xhat->data[i * c + j] = xh;
            out.data[i * c + j] = gv.data[j] * xh + bv.data[j];
        }
    }
    bool rg = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
    std::size_t ix = x.id(), ig = gamma.id(), ib = beta.id(), self = nodes_.size();
    return make_node(std::move(out), rg, [ix, ig, ib, self, xhat, inv_std, r, c](Tape& t) {
        const Tensor& g = t.grad_buffer(self);
        if (t.needs_grad(ig)) {
            Tensor& gg = t.grad_buffer(ig);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) gg.data[j] += g.data[i * c + j] * xhat->data[i * c + j];
        }
        if (t.needs_grad(ib)) {
            Tensor& gb = t.grad_buffer(ib);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) gb.data[j] += g.data[i * c + j];
        }
        if (t.needs_grad(ix)) {
            Tensor& gx = t.grad_buffer(ix);
            const Tensor& gv2 = t.value_of(ig);
            for (std::size_t i = 0; i < r; ++i) {
                double mean_gy = 0.0, mean_gyxh = 0.0;
                for (std::size_t j = 0; j < c; ++j) {
                    double gy = g.data[i * c + j] * gv2.data[j];
                    mean_gy += gy;
                    mean_gyxh += gy * xhat->data[i * c + j];
                }
                mean_gy /= static_cast<double>(c);
                mean_gyxh /= static_cast<double>(c);
                double istd = inv_std->data[i];
                for (std::size_t j = 0; j < c; ++j) {
                    double gy = g.data[i * c + j] * gv2.data[j];
                    gx.data[i * c + j] += istd * (gy - mean_gy - xhat->data[i * c + j] * mean_gyxh);
                }
            }
        }
    });
}

Var Tape::l2_normalize_rows(Var x) {
    const Tensor& xv = x.value();
    require_2d(xv, "l2_normalize_rows");
    std::size_t r = xv.dims[0], c = xv.dims[1];
    Tensor out({r, c});
    auto norms = std::make_shared<std::vector<double>>(r);
    for (std::size_t i = 0; i < r; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            double v = xv.data[i * c + j];
            s += v * v;
        }
        double n = std::sqrt(s);
        if (n <= 1e-12) throw NearZeroNorm("l2_normalize_rows: row " + std::to_string(i));
        (*norms)[i] = n;
        for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] = xv.data[i * c + j] / n;
    }
    std::size_t ix = x.id(), self = nodes_.size();
    return make_node(std::move(out), x.requires_grad(), [ix, self, norms, r, c](Tape& t) {
        if (!t.needs_grad(ix)) return;
        const Tensor& g = t.grad_buffer(self);
        const Tensor& z = t.value_of(self);
        Tensor& gx = t.grad_buffer(ix);
        for (std::size_t i = 0; i < r; ++i) {
            double zg = 0.0;
            for (std::size_t j = 0; j < c; ++j) zg += z.data[i * c + j] * g.data[i * c + j];
            double inv_n = 1.0 / (*norms)[i];
            for (std::size_t j = 0; j < c; ++j)
                gx.data[i * c + j] += (g.data[i * c + j] - z.data[i * c + j] * zg) * inv_n;
        }
    });
}

Var Tape::gather_rows(Var x, std::vector<std::size_t> indices) {
    const Tensor& xv = x.value();
    require_2d(xv, "gather_rows");
    if (indices.empty()) throw DimMismatch("gather_rows: empty index set");
    std::size_t c = xv.dims[1];
    for (std::size_t idx : indices)
        if (idx >= xv.dims[0]) throw DimMismatch("gather_rows: index out of range");
    Tensor out({indices.size(), c});
    for (std::size_t i = 0; i < indices.size(); ++i)
        for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] = xv.data[indices[i] * c + j];
    auto idx = std::make_shared<std::vector<std::size_t>>(std::move(indices));
    std::size_t ix = x.id(), self = nodes_.size();
    return make_node(std::move(out), x.requires_grad(), [ix, self, idx, c](Tape& t) {
        if (!t.needs_grad(ix)) return;
        const Tensor& g = t.grad_buffer(self);
        Tensor& gx = t.grad_buffer(ix);
        for (std::size_t i = 0; i < idx->size(); ++i)
            for (std::size_t j = 0; j < c; ++j) gx.data[(*idx)[i] * c + j] += g.data[i * c + j];
    });
}

Var Tape::cross_entropy_diag(Var logits) {
    const Tensor& lv = logits.value();
    require_2d(lv, "cross_entropy_diag");
    if (lv.dims[0] != lv.dims[1]) throw DimMismatch("cross_entropy_diag: logits must be square");
    std::size_t n = lv.dims[0];
    auto probs = std::make_shared<Tensor>(Tensor({n, n}));
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double mx = lv.data[i * n];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, lv.data[i * n + j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < n; ++j) denom += std::exp(lv.data[i * n + j] - mx);
        double lse = mx + std::log(denom);
        total += lse - lv.data[i * n + i];
        for (std::size_t j = 0; j < n; ++j)
            probs->data[i * n + j] = std::exp(lv.data[i * n + j] - lse);
    }
    Tensor out = Tensor::scalar(total / static_cast<double>(n));
    std::size_t il = logits.id(), self = nodes_.size();
    return make_node(std::move(out), logits.requires_grad(), [il, self, probs, n](Tape& t) {
        if (!t.needs_grad(il)) return;
        double go = t.grad_buffer(self).data[0];
        Tensor& gl = t.grad_buffer(il);
        double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double p = probs->data[i * n + j];
                gl.data[i * n + j] += go * inv_n * (p - (i == j ? 1.0 : 0.0));
            }
    });
}

Var Tape::sum(Var x) {
    const Tensor& xv = x.value();
    double s = 0.0;
    for (double v : xv.data) s += v;
    std::size_t ix = x.id(), self = nodes_.size();
    return make_node(Tensor::scalar(s), x.requires_grad(), [ix, self](Tape& t) {
        if (!t.needs_grad(ix)) return;
        double go = t.grad_buffer(self).data[0];
        Tensor& gx = t.grad_buffer(ix);
        for (double& v : gx.data) v += go;
    });
}

Var Tape::mean(Var x) {
    const Tensor& xv = x.value();
    double s = 0.0;
    for (double v : xv.data) s += v;
    double inv = 1.0 / static_cast<double>(xv.numel());
    std::size_t ix = x.id(), self = nodes_.size();
    return make_node(Tensor::scalar(s * inv), x.requires_grad(), [ix, self, inv](Tape& t) {
        if (!t.needs_grad(ix)) return;
        double go = t.grad_buffer(self).data[0] * inv;
        Tensor& gx = t.grad_buffer(ix);
        for (double& v : gx.data) v += go;
    });
}

Var Tape::add_weighted(const std::vector<std::pair<double, Var>>& terms) {
    if (terms.empty()) throw DimMismatch("add_weighted: no terms");
    const Tensor& first = terms.front().second.value();
    for (const auto& [w, v] : terms)
        if (!v.value().same_dims(first)) throw DimMismatch("add_weighted: shape mismatch");
    Tensor out = Tensor::zeros(first.dims);
    bool rg = false;
    std::vector<std::pair<double, std::size_t>> captured;
    captured.reserve(terms.size());
    for (const auto& [w, v] : terms) {
        const Tensor& tv = v.value();
        for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += w * tv.data[i];
        rg = rg || v.requires_grad();
        captured.emplace_back(w, v.id());
    }
    std::size_t self = nodes_.size();
    return make_node(std::move(out), rg, [captured, self](Tape& t) {
        const Tensor& g = t.grad_buffer(self);
        for (const auto& [w, id] : captured) {
            if (!t.needs_grad(id)) continue;
            Tensor& gi = t.grad_buffer(id);
            for (std::size_t i = 0; i < g.numel(); ++i) gi.data[i] += w * g.data[i];
        }
    });
}

void Tape::backward(Var loss) {
    if (loss.value().numel() != 1)
        throw NonScalarLoss("backward: loss must be a single element");
    for (Node& n : nodes_) n.grad = Tensor();
    grad_buffer(loss.id()).data[0] = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        Node& n = nodes_[i];
        if (n.requires_grad && n.backprop && n.grad.numel() != 0) n.backprop(*this);
    }
    // Untouched differentiable leaves still answer grad() with zeros.
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& at, double h) {
    if (h <= 0.0) throw ConfigInvalid("finite_diff_grad: h must be positive");
    Tensor x = at;
    Tensor g = Tensor::zeros(at.dims);
    for (std::size_t i = 0; i < x.numel(); ++i) {
        double orig = x.data[i];
        x.data[i] = orig + h;
        double fp = f(x);
        x.data[i] = orig - h;
        double fm = f(x);
        x.data[i] = orig;
        g.data[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

} // namespace palign::numcore
