#pragma once

#include <cstdint>
#include <vector>

#include "palign/tensor.hpp"

namespace palign::numcore {

struct AdamWConfig {
    double lr = 0.003;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

/// Per-parameter-list optimizer state. Moments are allocated on the first
/// step and must keep the parameter shapes afterwards.
struct AdamWState {
    AdamWConfig hyper;
    std::uint64_t step_count = 0;
    std::vector<Tensor> m;
    std::vector<Tensor> v;
};

/// One decoupled-weight-decay Adam update over a fixed parameter list.
/// Deterministic; DimMismatch if params/grads/moments disagree.
void adamw_step(const std::vector<Tensor*>& params,
                const std::vector<const Tensor*>& grads,
                AdamWState& state);

} // namespace palign::numcore
