#pragma once

#include <functional>
#include <vector>

#include "palign/tensor.hpp"

namespace palign::numcore {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid until the tape is
/// cleared or destroyed.
class Var {
public:
    Var() = default;

    const Tensor& value() const;
    /// Gradient of the last backward() target w.r.t. this node. Zero
    /// tensor if the node was never touched.
    const Tensor& grad() const;
    bool requires_grad() const;
    std::size_t id() const { return id_; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Reverse-mode gradient tape over dense f64 tensors. Nodes are recorded
/// in creation order, which is a topological order; backward() replays
/// them in reverse and accumulates gradients additively at fan-out.
/// All reductions are sequential and index-ascending, so results are
/// bit-reproducible.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value) { return make_leaf(std::move(value), false); }
    Var param(Tensor value) { return make_leaf(std::move(value), true); }

    /// (r x k) . (k x c)
    Var matmul(Var a, Var b);
    /// a . b^T for a (r x k), b (c x k); the similarity-matrix shape.
    Var matmul_nt(Var a, Var b);
    /// Adds a length-c row vector to every row of an (r x c) matrix.
    Var add_rowvec(Var x, Var v);
    /// x . w + bias in one node; the workhorse of the batched encoders.
    Var affine(Var x, Var w, Var bias);
    /// relu(x . w + bias) fused, saving the intermediate activations.
    Var affine_relu(Var x, Var w, Var bias);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var x, double s);
    Var relu(Var x);
    /// Collapses consecutive groups of `group_size` rows to their
    /// column-wise maximum; ties resolve to the lowest row index.
    Var group_max_rows(Var x, std::size_t group_size);
    Var layer_norm_rows(Var x, Var gamma, Var beta, double eps);
    Var l2_normalize_rows(Var x);
    Var gather_rows(Var x, std::vector<std::size_t> indices);
    /// Mean over rows of the cross-entropy of softmax(row i) against
    /// target class i; logits must be square.
    Var cross_entropy_diag(Var logits);
    Var sum(Var x);
    Var mean(Var x);
    /// Weighted sum of same-shaped values: sum_i w_i * x_i.
    Var add_weighted(const std::vector<std::pair<double, Var>>& terms);

    /// Runs reverse-mode accumulation from a scalar loss node.
    void backward(Var loss);

    void clear();
    std::size_t size() const { return nodes_.size(); }

private:
    friend class Var;
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        std::function<void(Tape&)> backprop; // empty for leaves/constants
    };

    Var make_leaf(Tensor value, bool requires_grad);
    Var make_node(Tensor value, bool requires_grad, std::function<void(Tape&)> backprop);
    Tensor& grad_buffer(std::size_t id);
    const Tensor& value_of(std::size_t id) const { return nodes_[id].value; }
    bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }

    std::vector<Node> nodes_;
};

/// Central-difference gradient oracle: (f(x + h e_i) - f(x - h e_i)) / 2h.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& at, double h);

// Raw accumulate kernels used by forward ops and backward closures.
// C += A.B, C += A.B^T, C += A^T.B with fixed index-ascending reduction.
void mm_nn_acc(const Tensor& a, const Tensor& b, Tensor& c);
void mm_nt_acc(const Tensor& a, const Tensor& b, Tensor& c);
void mm_tn_acc(const Tensor& a, const Tensor& b, Tensor& c);
Tensor transposed(const Tensor& m);

} // namespace palign::numcore
