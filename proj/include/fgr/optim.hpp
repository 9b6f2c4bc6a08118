#pragma once

#include <map>
#include <set>
#include <string>

#include "fgr/nn.hpp"
#include "fgr/tensor.hpp"

namespace fgr {

enum class OptKind { SgdMomentum, Adam };

struct OptimizerState {
    OptKind kind = OptKind::SgdMomentum;
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 0.0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long step_count = 0;
    std::map<std::string, Tensor> m;  // momentum / first moment
    std::map<std::string, Tensor> v;  // second moment (adam)
};

/// One optimizer update. Parameters named in `frozen` are left untouched.
/// Throws on non-finite gradients.
void optimizer_step(OptimizerState& opt, ModelParams& params,
                    const std::map<std::string, Tensor>& grads,
                    const std::set<std::string>* frozen = nullptr);

}  // namespace fgr
