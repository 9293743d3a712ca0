#include "palign/optim.hpp"

#include <cmath>

#include "palign/errors.hpp"

namespace palign::numcore {

void adamw_step(const std::vector<Tensor*>& params,
                const std::vector<const Tensor*>& grads,
                AdamWState& state) {
    if (params.size() != grads.size())
        throw DimMismatch("adamw_step: params/grads count mismatch");
    if (state.m.empty()) {
        state.m.reserve(params.size());
        state.v.reserve(params.size());
        for (const Tensor* p : params) {
            state.m.push_back(Tensor::zeros(p->dims));
            state.v.push_back(Tensor::zeros(p->dims));
        }
    }
    if (state.m.size() != params.size())
        throw DimMismatch("adamw_step: state sized for a different parameter list");

    const AdamWConfig& h = state.hyper;
    state.step_count += 1;
    double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step_count));
    double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step_count));

    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& w = *params[p];
        const Tensor& g = *grads[p];
        Tensor& m = state.m[p];
        Tensor& v = state.v[p];
        if (!w.same_dims(g) || !w.same_dims(m) || !w.same_dims(v))
            throw DimMismatch("adamw_step: parameter " + std::to_string(p) + " shape mismatch");
        for (std::size_t i = 0; i < w.numel(); ++i) {
            double gi = g.data[i];
            m.data[i] = h.beta1 * m.data[i] + (1.0 - h.beta1) * gi;
            v.data[i] = h.beta2 * v.data[i] + (1.0 - h.beta2) * gi * gi;
            double mhat = m.data[i] / bc1;
            double vhat = v.data[i] / bc2;
            w.data[i] -= h.lr * (mhat / (std::sqrt(vhat) + h.eps) + h.weight_decay * w.data[i]);
        }
    }
}

} // namespace palign::numcore
